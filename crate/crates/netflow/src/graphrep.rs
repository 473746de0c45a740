//! Normal/tangential graph parametrization of a network over a minimal one.
//!
//! A network near a minimal base is written per edge as
//! `γ(φ(x)) = γ*(x) + N(x) ν*(x) + T(x) τ*(x)` where the tangential
//! components are not free: near each junction they are forced by the cutoff
//! and the junction linear maps applied to the normal components of the two
//! lowest-indexed edges, and they vanish on the far half of endpoint edges.
//! The solve is a Newton continuation in the grid parameter, seeded by the
//! exact junction values and marching into the edge interiors; target curves
//! are evaluated off-grid with monotone cubics.

use crate::cutoff::chi;
use crate::geom::Vec2;
use crate::interp::CurveInterpolant;
use crate::junction_maps::{junction_coeffs, JunctionMaps};
use crate::network::{geometry, GeometryCache, Network};
use crate::topology::NetworkTopology;
use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphRepError {
    #[error("junction {junction}: signed normal sum {residual:.3e} violates the constraint")]
    ConstraintViolation { junction: usize, residual: f64 },
    #[error("target outside the trust region: {0}")]
    OutOfTrustRegion(String),
    #[error("target and base disagree: {0}")]
    TopologyMismatch(String),
}

/// Per-edge arrays representing a network as a graph over a minimal base.
#[derive(Debug, Clone)]
pub struct NormalGraphRep {
    pub n: Vec<Vec<f64>>,
    pub t: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    /// Sup norm of the reconstruction error over all samples.
    pub residual: f64,
}

/// Signed sum of normal boundary values at each junction.
pub fn junction_normal_sums(topology: &NetworkTopology, n: &[Vec<f64>], m: usize) -> Vec<f64> {
    topology
        .junctions()
        .iter()
        .map(|junction| {
            junction
                .ends
                .iter()
                .map(|ee| {
                    let idx = if ee.end == 0 { 0 } else { m };
                    let sign = if ee.end == 0 { 1.0 } else { -1.0 };
                    sign * n[ee.edge][idx]
                })
                .sum::<f64>()
        })
        .collect()
}

/// Builds the tangential components adapted to the given normal components:
/// near each junction `T_ℓ(|e_ℓ - x|) = χ(x) L_ℓ(N_i(|e_i - x|), N_j(|e_j - x|))`
/// for the two lowest-indexed edges `i < j`, zero elsewhere. Uses the
/// counterclockwise junction convention; see [`adapted_tangents_for`] when a
/// concrete base network fixes the winding.
pub fn adapted_tangents(
    topology: &NetworkTopology,
    n: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, GraphRepError> {
    let maps: Vec<JunctionMaps> = (0..topology.junctions().len())
        .map(|jm| junction_coeffs(topology, jm))
        .collect();
    check_normal_sums(topology, n)?;
    Ok(adapted_tangents_with_maps(topology, n, &maps))
}

/// Adapted tangential components with junction maps matching the actual
/// winding of each junction of `base`.
pub fn adapted_tangents_for(
    base: &Network,
    n: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, GraphRepError> {
    let topology = base.topology();
    check_normal_sums(topology, n)?;
    Ok(adapted_tangents_with_maps(topology, n, &base_maps(base)))
}

pub(crate) fn base_maps(base: &Network) -> Vec<JunctionMaps> {
    (0..base.topology().junctions().len())
        .map(|jm| crate::junction_maps::junction_coeffs_for(base, jm))
        .collect()
}

fn check_normal_sums(topology: &NetworkTopology, n: &[Vec<f64>]) -> Result<(), GraphRepError> {
    let m = n[0].len() - 1;
    let sums = junction_normal_sums(topology, n, m);
    for (jm, s) in sums.iter().enumerate() {
        if s.abs() > 1e-10 {
            return Err(GraphRepError::ConstraintViolation { junction: jm, residual: s.abs() });
        }
    }
    Ok(())
}

pub(crate) fn adapted_tangents_with_maps(
    topology: &NetworkTopology,
    n: &[Vec<f64>],
    maps: &[JunctionMaps],
) -> Vec<Vec<f64>> {
    let m = n[0].len() - 1;
    let mut t = vec![vec![0.0; m + 1]; n.len()];
    for jm in 0..topology.junctions().len() {
        let maps = &maps[jm];
        let grid_index = |slot: usize, q: usize| -> usize {
            if maps.ends[slot] == 0 {
                q
            } else {
                m - q
            }
        };
        for q in 0..=m / 2 {
            let x = q as f64 / m as f64;
            let c = chi(x);
            let a = n[maps.edges[0]][grid_index(0, q)];
            let b = n[maps.edges[1]][grid_index(1, q)];
            for slot in 0..3 {
                t[maps.edges[slot]][grid_index(slot, q)] = c * maps.apply(slot, a, b);
            }
        }
    }
    t
}

/// Samples of the network `γ* + N ν* + T τ*` over the base.
pub fn reconstruct(
    base: &Network,
    cache: &GeometryCache,
    n: &[Vec<f64>],
    t: &[Vec<f64>],
) -> Vec<Vec<Vec2>> {
    base.curves()
        .iter()
        .enumerate()
        .map(|(e, curve)| {
            let g = cache.edge(e);
            curve
                .samples()
                .iter()
                .enumerate()
                .map(|(q, p)| p + g.nu[q] * n[e][q] + g.tau[q] * t[e][q])
                .collect()
        })
        .collect()
}

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX: usize = 40;

struct EdgeSolve<'a> {
    interp: &'a CurveInterpolant,
    base_pt: Vec2,
    nu: Vec2,
    tau: Vec2,
}

impl EdgeSolve<'_> {
    fn residual(&self, n: f64, t_val: f64, y: f64) -> Vec2 {
        self.base_pt + self.nu * n + self.tau * t_val - self.interp.eval(y)
    }
}

/// Newton solve of the decoupled 2x2 system for one edge sample with a fixed
/// tangential value.
fn solve_pointwise(
    es: &EdgeSolve,
    t_val: f64,
    seed: (f64, f64),
) -> Result<(f64, f64), GraphRepError> {
    let (mut n, mut y) = seed;
    for _ in 0..NEWTON_MAX {
        let f = es.residual(n, t_val, y);
        if f.norm() <= NEWTON_TOL {
            return Ok((n, y));
        }
        let dy = es.interp.derivative(y);
        let jac = Matrix2::new(es.nu.x, -dy.x, es.nu.y, -dy.y);
        let Some(inv) = jac.try_inverse() else {
            return Err(GraphRepError::OutOfTrustRegion("singular pointwise system".into()));
        };
        let delta = inv * Vector2::new(f.x, f.y);
        n -= delta[0];
        y -= delta[1];
    }
    Err(GraphRepError::OutOfTrustRegion(
        "pointwise Newton did not converge".into(),
    ))
}

/// Solves the coupled system for the two lowest-indexed edges of a junction
/// at cutoff value `c`.
#[allow(clippy::too_many_arguments)]
fn solve_coupled(
    es_i: &EdgeSolve,
    es_j: &EdgeSolve,
    maps: &JunctionMaps,
    c: f64,
    seed: (f64, f64, f64, f64),
) -> Result<(f64, f64, f64, f64), GraphRepError> {
    let (mut ni, mut yi, mut nj, mut yj) = seed;
    let (lia, lib) = (maps.l_coeffs[0][0], maps.l_coeffs[0][1]);
    let (lja, ljb) = (maps.l_coeffs[1][0], maps.l_coeffs[1][1]);
    for _ in 0..NEWTON_MAX {
        let ti = c * (lia * ni + lib * nj);
        let tj = c * (lja * ni + ljb * nj);
        let fi = es_i.residual(ni, ti, yi);
        let fj = es_j.residual(nj, tj, yj);
        if fi.norm().max(fj.norm()) <= NEWTON_TOL {
            return Ok((ni, yi, nj, yj));
        }
        let di = es_i.interp.derivative(yi);
        let dj = es_j.interp.derivative(yj);
        // Rows: F_i.x, F_i.y, F_j.x, F_j.y; columns: n_i, y_i, n_j, y_j.
        let jac = Matrix4::new(
            es_i.nu.x + c * lia * es_i.tau.x,
            -di.x,
            c * lib * es_i.tau.x,
            0.0,
            es_i.nu.y + c * lia * es_i.tau.y,
            -di.y,
            c * lib * es_i.tau.y,
            0.0,
            c * lja * es_j.tau.x,
            0.0,
            es_j.nu.x + c * ljb * es_j.tau.x,
            -dj.x,
            c * lja * es_j.tau.y,
            0.0,
            es_j.nu.y + c * ljb * es_j.tau.y,
            -dj.y,
        );
        let Some(inv) = jac.try_inverse() else {
            return Err(GraphRepError::OutOfTrustRegion("singular coupled system".into()));
        };
        let delta = inv * Vector4::new(fi.x, fi.y, fj.x, fj.y);
        ni -= delta[0];
        yi -= delta[1];
        nj -= delta[2];
        yj -= delta[3];
    }
    Err(GraphRepError::OutOfTrustRegion(
        "coupled Newton did not converge".into(),
    ))
}

/// Solves the graph representation of `target` over the minimal `base`.
pub fn solve_graph_rep(target: &Network, base: &Network) -> Result<NormalGraphRep, GraphRepError> {
    let topo = base.topology();
    if target.topology() != topo {
        return Err(GraphRepError::TopologyMismatch("different topologies".into()));
    }
    let m = base.m();
    if target.m() != m {
        return Err(GraphRepError::TopologyMismatch(format!(
            "sample counts differ: target M = {}, base M = {m}",
            target.m()
        )));
    }
    for ep in topo.endpoints() {
        let pb = base.boundary_sample(ep.edge, ep.end);
        let pt = target.boundary_sample(ep.edge, ep.end);
        if (pb - pt).norm() > 1e-9 {
            return Err(GraphRepError::TopologyMismatch(format!(
                "endpoint {} moved by {:.3e}",
                ep.vertex,
                (pb - pt).norm()
            )));
        }
    }
    let cache = geometry(base).map_err(|e| GraphRepError::TopologyMismatch(e.to_string()))?;
    let interps: Vec<CurveInterpolant> = target
        .curves()
        .iter()
        .map(|c| CurveInterpolant::new(c.samples()))
        .collect();

    let ne = topo.edge_count();
    let mut n = vec![vec![f64::NAN; m + 1]; ne];
    let mut t = vec![vec![f64::NAN; m + 1]; ne];
    let mut phi = vec![vec![f64::NAN; m + 1]; ne];

    let edge_solve = |e: usize, u: usize| -> EdgeSolve<'_> {
        EdgeSolve {
            interp: &interps[e],
            base_pt: base.curve(e).sample(u),
            nu: cache.edge(e).nu[u],
            tau: cache.edge(e).tau[u],
        }
    };

    // Junction marches: exact frame solve at x = 0, then continuation.
    for jm in 0..topo.junctions().len() {
        let maps = crate::junction_maps::junction_coeffs_for(base, jm);
        let grid_index = |slot: usize, q: usize| -> usize {
            if maps.ends[slot] == 0 {
                q
            } else {
                m - q
            }
        };
        // Exact junction values per edge: decompose the target junction
        // point in the base frame.
        let mut seeds = [0.0_f64; 3];
        for slot in 0..3 {
            let e = maps.edges[slot];
            let u = grid_index(slot, 0);
            let delta = target.curve(e).sample(if maps.ends[slot] == 0 { 0 } else { m })
                - base.curve(e).sample(u);
            let nv = delta.dot(&cache.edge(e).nu[u]);
            let tv = delta.dot(&cache.edge(e).tau[u]);
            n[e][u] = nv;
            t[e][u] = tv;
            phi[e][u] = if maps.ends[slot] == 0 { 0.0 } else { 1.0 };
            seeds[slot] = nv;
        }
        // March the coupled pair and the third edge.
        let mut seed_ij = (
            seeds[0],
            phi[maps.edges[0]][grid_index(0, 0)],
            seeds[1],
            phi[maps.edges[1]][grid_index(1, 0)],
        );
        let mut seed_k = (seeds[2], phi[maps.edges[2]][grid_index(2, 0)]);
        for q in 1..=m / 2 {
            let x = q as f64 / m as f64;
            let c = chi(x);
            let ui = grid_index(0, q);
            let uj = grid_index(1, q);
            let uk = grid_index(2, q);
            // Seed the parameter guesses one grid cell further along.
            let step = 1.0 / m as f64;
            let dir = |end: u8| if end == 0 { step } else { -step };
            seed_ij.1 += dir(maps.ends[0]);
            seed_ij.3 += dir(maps.ends[1]);
            seed_k.1 += dir(maps.ends[2]);
            let es_i = edge_solve(maps.edges[0], ui);
            let es_j = edge_solve(maps.edges[1], uj);
            let sol = solve_coupled(&es_i, &es_j, &maps, c, seed_ij)?;
            seed_ij = sol;
            let (ni, yi, nj, yj) = sol;
            n[maps.edges[0]][ui] = ni;
            phi[maps.edges[0]][ui] = yi;
            t[maps.edges[0]][ui] = c * maps.apply(0, ni, nj);
            n[maps.edges[1]][uj] = nj;
            phi[maps.edges[1]][uj] = yj;
            t[maps.edges[1]][uj] = c * maps.apply(1, ni, nj);
            let tk = c * maps.apply(2, ni, nj);
            let es_k = edge_solve(maps.edges[2], uk);
            let solk = solve_pointwise(&es_k, tk, seed_k)?;
            seed_k = solk;
            n[maps.edges[2]][uk] = solk.0;
            phi[maps.edges[2]][uk] = solk.1;
            t[maps.edges[2]][uk] = tk;
        }
    }

    // Endpoint marches: tangential component vanishes on the far half.
    // Here q walks from the middle of the edge toward the endpoint, so
    // u = q when the endpoint sits at parameter 1 and u = m - q otherwise.
    for ep in topo.endpoints() {
        let e = ep.edge;
        let endpoint_u = if ep.end == 0 { 0 } else { m };
        let u_of = |q: usize| if ep.end == 1 { q } else { m - q };
        // March from the middle of the edge toward the endpoint, seeded by
        // the junction march value at m/2 when present, else the endpoint.
        let mut seed = if phi[e][u_of(m / 2)].is_nan() {
            (0.0, if ep.end == 0 { 0.0 } else { 1.0 })
        } else {
            (n[e][u_of(m / 2)], phi[e][u_of(m / 2)])
        };
        let mut qs: Vec<usize> = ((m / 2 + 1)..=m).collect();
        if m % 2 == 1 {
            qs.insert(0, m / 2);
        }
        for q in qs {
            let uu = u_of(q);
            let step = 1.0 / m as f64;
            seed.1 += if ep.end == 1 { step } else { -step };
            let es = edge_solve(e, uu);
            let sol = solve_pointwise(&es, 0.0, seed)?;
            seed = sol;
            n[e][uu] = sol.0;
            phi[e][uu] = sol.1;
            t[e][uu] = 0.0;
        }
        // The endpoint itself is shared exactly.
        n[e][endpoint_u] = 0.0;
        t[e][endpoint_u] = 0.0;
        phi[e][endpoint_u] = if ep.end == 0 { 0.0 } else { 1.0 };
    }

    // Monotonicity of the reparametrizations.
    for (e, p) in phi.iter().enumerate() {
        for q in 0..m {
            if p[q + 1] <= p[q] {
                return Err(GraphRepError::OutOfTrustRegion(format!(
                    "phi not strictly increasing on edge {e} at sample {q}"
                )));
            }
        }
    }

    // Reconstruction residual against the interpolated target.
    let mut residual: f64 = 0.0;
    for e in 0..ne {
        let g = cache.edge(e);
        for q in 0..=m {
            let lhs = interps[e].eval(phi[e][q]);
            let rhs = base.curve(e).sample(q) + g.nu[q] * n[e][q] + g.tau[q] * t[e][q];
            residual = residual.max((lhs - rhs).norm());
        }
    }
    Ok(NormalGraphRep { n, t, phi, residual })
}

/// Quantitative implicit-function radius: `min(ρ / (2 S N), ρ / 2)` from the
/// inverse-derivative bound `S`, the half-contraction radius `ρ`, and the
/// partial-derivative bound `N`.
pub fn ift_radius(rho: f64, s: f64, n_bound: f64) -> f64 {
    assert!(rho > 0.0 && s > 0.0 && n_bound > 0.0);
    (rho / (2.0 * s * n_bound)).min(rho / 2.0)
}
