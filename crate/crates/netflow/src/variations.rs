//! First and second variation of length over a minimal base, spectra of the
//! constrained quadratic form, and the gradient-inequality diagnostics.
//!
//! Normal fields live in the constrained space: per junction the signed sum
//! of boundary values vanishes, per endpoint the boundary value is zero. The
//! energy of a field is the chord-sum length of the reconstructed network
//! with adapted tangential components, so the assembled quadratic form is the
//! exact Hessian of the discrete energy and matches finite differences of it
//! to roundoff.

use crate::flow::TrajectoryLog;
use crate::geom::Vec2;
use crate::graphrep::{adapted_tangents_with_maps, base_maps, junction_normal_sums};
use crate::junction_maps::JunctionMaps;
use crate::network::{geometry, GeometryCache, Network};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VariationError {
    #[error("field violates the constrained-space conditions: {0}")]
    ConstraintViolation(String),
    #[error("no positive energy gap on the analysis window")]
    GapNonPositive,
}

/// Orthonormal basis (discrete `L^2(ds)` of the base) of the space of
/// per-edge grid functions with vanishing signed junction sums and vanishing
/// endpoint values.
pub struct VSpaceBasis {
    pub base: Network,
    pub cache: GeometryCache,
    pub maps: Vec<JunctionMaps>,
    /// Stacked dof layout: edge-major, `dof = edge * (m + 1) + sample`.
    pub matrix: DMatrix<f64>,
    pub m: usize,
}

impl VSpaceBasis {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn build(base: &Network) -> Self {
        let cache = geometry(base).expect("valid base network");
        let maps = base_maps(base);
        let topo = base.topology();
        let m = base.m();
        let ne = topo.edge_count();
        let stride = m + 1;
        let total = ne * stride;
        let weight = |e: usize, q: usize| cache.edge(e).ds[q];

        let mut constrained = vec![false; total];
        for ep in topo.endpoints() {
            let idx = if ep.end == 0 { 0 } else { m };
            constrained[ep.edge * stride + idx] = true;
        }
        let mut clusters = Vec::new();
        for junction in topo.junctions() {
            let mut dofs = [(0usize, 0.0_f64); 3];
            for (slot, ee) in junction.ends.iter().enumerate() {
                let idx = if ee.end == 0 { 0 } else { m };
                let dof = ee.edge * stride + idx;
                constrained[dof] = true;
                let sign = if ee.end == 0 { 1.0 } else { -1.0 };
                dofs[slot] = (dof, sign);
            }
            clusters.push(dofs);
        }

        let dim = total - topo.endpoints().len() - topo.junctions().len();
        let mut matrix = DMatrix::zeros(total, dim);
        let mut col = 0;
        for dof in 0..total {
            if constrained[dof] {
                continue;
            }
            let (e, q) = (dof / stride, dof % stride);
            matrix[(dof, col)] = 1.0 / weight(e, q).sqrt();
            col += 1;
        }
        for dofs in clusters {
            let c = [dofs[0].1, dofs[1].1, dofs[2].1];
            let w: Vec<f64> = dofs
                .iter()
                .map(|&(dof, _)| weight(dof / stride, dof % stride))
                .collect();
            // Two independent directions in the constraint plane, weighted
            // Gram-Schmidt.
            let u1 = [c[1], -c[0], 0.0];
            let u2 = [0.0, c[2], -c[1]];
            let dot = |a: &[f64; 3], b: &[f64; 3]| {
                a.iter().zip(b).zip(&w).map(|((x, y), wi)| x * y * wi).sum::<f64>()
            };
            let n1 = dot(&u1, &u1).sqrt();
            let v1 = [u1[0] / n1, u1[1] / n1, u1[2] / n1];
            let p = dot(&u2, &v1);
            let mut v2 = [u2[0] - p * v1[0], u2[1] - p * v1[1], u2[2] - p * v1[2]];
            let n2 = dot(&v2, &v2).sqrt();
            for v in &mut v2 {
                *v /= n2;
            }
            for (slot, &(dof, _)) in dofs.iter().enumerate() {
                matrix[(dof, col)] = v1[slot];
                matrix[(dof, col + 1)] = v2[slot];
            }
            col += 2;
        }
        debug_assert_eq!(col, dim);
        Self { base: base.clone(), cache, maps, matrix, m }
    }

    /// Per-edge arrays of basis coordinates `coords`.
    pub fn field(&self, coords: &DVector<f64>) -> Vec<Vec<f64>> {
        let stacked = &self.matrix * coords;
        self.unstack(stacked.as_slice())
    }

    pub fn unstack(&self, stacked: &[f64]) -> Vec<Vec<f64>> {
        let stride = self.m + 1;
        (0..self.base.topology().edge_count())
            .map(|e| stacked[e * stride..(e + 1) * stride].to_vec())
            .collect()
    }

    /// Discrete `L^2(ds)` inner product of stacked fields.
    pub fn l2_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let stride = self.m + 1;
        let mut acc = 0.0;
        for e in 0..self.base.topology().edge_count() {
            let g = self.cache.edge(e);
            for q in 0..stride {
                acc += a[e * stride + q] * b[e * stride + q] * g.ds[q];
            }
        }
        acc
    }

    /// Largest junction/endpoint constraint residual of a basis column.
    pub fn constraint_residual(&self, col: usize) -> f64 {
        let stacked: Vec<f64> = self.matrix.column(col).iter().copied().collect();
        let fields = self.unstack(&stacked);
        let topo = self.base.topology();
        let mut worst: f64 = 0.0;
        for s in junction_normal_sums(topo, &fields, self.m) {
            worst = worst.max(s.abs());
        }
        for ep in topo.endpoints() {
            let idx = if ep.end == 0 { 0 } else { self.m };
            worst = worst.max(fields[ep.edge][idx].abs());
        }
        worst
    }
}

/// Energy of a normal field over the base: chord-sum length of the
/// reconstructed curves with adapted tangential components.
pub fn energy(basis: &VSpaceBasis, n: &[Vec<f64>]) -> f64 {
    let t = adapted_tangents_with_maps(basis.base.topology(), n, &basis.maps);
    let mut total = 0.0;
    for (e, curve) in basis.base.curves().iter().enumerate() {
        let g = basis.cache.edge(e);
        let mut prev: Option<Vec2> = None;
        for (q, p) in curve.samples().iter().enumerate() {
            let pt = p + g.nu[q] * n[e][q] + g.tau[q] * t[e][q];
            if let Some(pp) = prev {
                total += (pt - pp).norm();
            }
            prev = Some(pt);
        }
    }
    total
}

fn check_v_membership(basis: &VSpaceBasis, fields: &[Vec<f64>]) -> Result<(), VariationError> {
    let topo = basis.base.topology();
    for (jm, s) in junction_normal_sums(topo, fields, basis.m).iter().enumerate() {
        if s.abs() > 1e-10 {
            return Err(VariationError::ConstraintViolation(format!(
                "junction {jm} signed sum {s:.3e}"
            )));
        }
    }
    for ep in topo.endpoints() {
        let idx = if ep.end == 0 { 0 } else { basis.m };
        let v = fields[ep.edge][idx];
        if v.abs() > 1e-10 {
            return Err(VariationError::ConstraintViolation(format!(
                "endpoint value {v:.3e} on edge {}",
                ep.edge
            )));
        }
    }
    Ok(())
}

/// Variation displacement field `Y = X ν* + 𝒯[X] τ*` per sample.
fn displacement_field(basis: &VSpaceBasis, x: &[Vec<f64>]) -> Vec<Vec<Vec2>> {
    let t = adapted_tangents_with_maps(basis.base.topology(), x, &basis.maps);
    basis
        .base
        .curves()
        .iter()
        .enumerate()
        .map(|(e, curve)| {
            let g = basis.cache.edge(e);
            (0..curve.samples().len())
                .map(|q| g.nu[q] * x[e][q] + g.tau[q] * t[e][q])
                .collect()
        })
        .collect()
}

/// Exact directional derivative of the discrete energy at the state `n` in
/// the direction `x`; both fields must satisfy the constrained-space
/// conditions. At a minimal base with `n = 0` this vanishes for every
/// direction.
pub fn first_variation(
    basis: &VSpaceBasis,
    n: &[Vec<f64>],
    x: &[Vec<f64>],
) -> Result<f64, VariationError> {
    check_v_membership(basis, n)?;
    check_v_membership(basis, x)?;
    let t = adapted_tangents_with_maps(basis.base.topology(), n, &basis.maps);
    let y = displacement_field(basis, x);
    let mut acc = 0.0;
    for (e, curve) in basis.base.curves().iter().enumerate() {
        let g = basis.cache.edge(e);
        let pts: Vec<Vec2> = curve
            .samples()
            .iter()
            .enumerate()
            .map(|(q, p)| p + g.nu[q] * n[e][q] + g.tau[q] * t[e][q])
            .collect();
        for q in 0..pts.len() - 1 {
            let chord = pts[q + 1] - pts[q];
            let dy = y[e][q + 1] - y[e][q];
            acc += chord.dot(&dy) / chord.norm();
        }
    }
    Ok(acc)
}

/// The discrete constrained second-variation form at the base, expressed in
/// the orthonormal basis so that its eigenvalues approximate the operator
/// spectrum with respect to `L^2(ds)`.
pub struct SecondVariationForm {
    pub q: DMatrix<f64>,
}

/// Assembles the quadratic form `Q` with `θ^T Q θ` equal to the second
/// derivative of the energy along the basis field of `θ`: per chord of the
/// base, the normal part of the difference quotient of the displacement
/// field, `Σ (|ΔY|^2 - <u, ΔY>^2) / |ΔP|`.
pub fn assemble_q(basis: &VSpaceBasis) -> SecondVariationForm {
    let ne = basis.base.topology().edge_count();
    let m = basis.m;
    let rows = 2 * ne * m;
    let dim = basis.dim();
    let mut g_mat = DMatrix::zeros(rows, dim);
    for col in 0..dim {
        let coords = DVector::from_fn(dim, |i, _| if i == col { 1.0 } else { 0.0 });
        let fields = basis.field(&coords);
        let y = displacement_field(basis, &fields);
        let mut row = 0;
        for (e, curve) in basis.base.curves().iter().enumerate() {
            let s = curve.samples();
            for q in 0..m {
                let chord = s[q + 1] - s[q];
                let len = chord.norm();
                let u = chord / len;
                let dy = y[e][q + 1] - y[e][q];
                let perp = dy - u * u.dot(&dy);
                let scale = 1.0 / len.sqrt();
                g_mat[(row, col)] = perp.x * scale;
                g_mat[(row + 1, col)] = perp.y * scale;
                row += 2;
            }
        }
    }
    let q = g_mat.transpose() * &g_mat;
    SecondVariationForm { q }
}

/// Second variation of the energy along an arbitrary constrained field,
/// evaluated directly from the chord formula (no basis needed).
pub fn second_variation_of(basis: &VSpaceBasis, x: &[Vec<f64>]) -> Result<f64, VariationError> {
    check_v_membership(basis, x)?;
    let y = displacement_field(basis, x);
    let mut acc = 0.0;
    for (e, curve) in basis.base.curves().iter().enumerate() {
        let s = curve.samples();
        for q in 0..s.len() - 1 {
            let chord = s[q + 1] - s[q];
            let len = chord.norm();
            let u = chord / len;
            let dy = y[e][q + 1] - y[e][q];
            acc += (dy.norm_squared() - u.dot(&dy).powi(2)) / len;
        }
    }
    Ok(acc)
}

/// Lowest `count` eigenvalues of the symmetric form, ascending.
pub fn spectrum(form: &SecondVariationForm, count: usize) -> Vec<f64> {
    let sym = nalgebra::SymmetricEigen::new(form.q.clone());
    let mut ev: Vec<f64> = sym.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev.truncate(count);
    ev
}

/// Gradient-inequality report for a logged trajectory against a base length.
#[derive(Debug, Clone)]
pub struct LSReport {
    /// Exponent in `(0, 1/2]`: supplied or fitted from the tail.
    pub theta: f64,
    /// Smallest constant making `gap^{1-θ} <= C ||k||` on the window.
    pub c_ls: f64,
    /// `(t, gap, ||k||)` over the retained window.
    pub series: Vec<(f64, f64, f64)>,
    /// `H(t) = gap^θ` over the retained window.
    pub h: Vec<f64>,
    /// Samples violating the inequality with the reported pair.
    pub violations: usize,
    /// Steps where `H` increases by more than `1e-10`.
    pub h_non_monotone_steps: usize,
}

/// Fits or checks the gradient inequality `gap^{1-θ} <= C ||k||_{L^2(ds)}`
/// on the tail of a trajectory.
///
/// The window keeps samples with `gap > 1e-12` and fits on their last half;
/// the fitted exponent is the slope of `log ||k||` against `log gap`,
/// reflected to `θ = 1 - slope` and clamped to `(0, 1/2]`.
pub fn ls_check(
    log: &TrajectoryLog,
    base_length: f64,
    theta: Option<f64>,
) -> Result<LSReport, VariationError> {
    let samples: Vec<(f64, f64, f64)> = log
        .rows
        .iter()
        .filter_map(|r| {
            let gap = r.total_length - base_length;
            if gap > 1e-12 && r.int_k2 > 0.0 {
                Some((r.t, gap, r.int_k2.sqrt()))
            } else {
                None
            }
        })
        .collect();
    if samples.is_empty() {
        return Err(VariationError::GapNonPositive);
    }
    let window = samples[samples.len() / 2..].to_vec();
    let theta = match theta {
        Some(t) => t,
        None => {
            let pts: Vec<(f64, f64)> = window
                .iter()
                .map(|&(_, gap, k)| (gap.ln(), k.ln()))
                .collect();
            let n = pts.len() as f64;
            let sx: f64 = pts.iter().map(|p| p.0).sum();
            let sy: f64 = pts.iter().map(|p| p.1).sum();
            let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
            let denom = n * sxx - sx * sx;
            if denom.abs() < 1e-30 {
                0.5
            } else {
                let slope = (n * sxy - sx * sy) / denom;
                (1.0 - slope).clamp(1e-6, 0.5)
            }
        }
    };
    let c_ls = window
        .iter()
        .map(|&(_, gap, k)| gap.powf(1.0 - theta) / k)
        .fold(0.0_f64, f64::max);
    let violations = window
        .iter()
        .filter(|&&(_, gap, k)| gap.powf(1.0 - theta) > c_ls * k * (1.0 + 1e-12))
        .count();
    let h: Vec<f64> = window.iter().map(|&(_, gap, _)| gap.powf(theta)).collect();
    let h_non_monotone_steps = h.windows(2).filter(|w| w[1] > w[0] + 1e-10).count();
    Ok(LSReport {
        theta,
        c_ls,
        series: window,
        h,
        violations,
        h_non_monotone_steps,
    })
}
