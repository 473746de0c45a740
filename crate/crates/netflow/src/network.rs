//! Sampled networks and their pointwise geometry.
//!
//! Every edge carries `M + 1` planar samples on the uniform parameter grid
//! `x_j = j / M`, `M >= 4`, and all edges of a network share the same `M`.
//! Derivatives use second-order central stencils at interior samples and
//! second-order one-sided stencils at boundary samples, so junction tangents
//! are accurate enough to drive the angle condition.

use crate::geom::{rot_ccw, shoelace_area, Vec2};
use crate::topology::{ModelError, NetworkTopology};

pub const DEFAULT_CONCURRENCY_TOL: f64 = 1e-10;

/// One sampled curve on the uniform grid over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve {
    samples: Vec<Vec2>,
}

impl DiscreteCurve {
    pub fn new(samples: Vec<Vec2>) -> Result<Self, ModelError> {
        if samples.len() < 5 {
            return Err(ModelError::Topology(format!(
                "curve needs at least 5 samples (M >= 4), got {}",
                samples.len()
            )));
        }
        Ok(Self { samples })
    }

    /// Uniform sampling of the straight segment from `a` to `b`.
    pub fn segment(a: Vec2, b: Vec2, m: usize) -> Result<Self, ModelError> {
        let samples = (0..=m)
            .map(|j| {
                let t = j as f64 / m as f64;
                a + (b - a) * t
            })
            .collect();
        Self::new(samples)
    }

    /// Segment count `M`.
    pub fn m(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn samples(&self) -> &[Vec2] {
        &self.samples
    }

    pub fn sample(&self, j: usize) -> Vec2 {
        self.samples[j]
    }

    /// Sample index of the end at parameter `end` (0 or 1).
    pub fn boundary_index(&self, end: u8) -> usize {
        if end == 0 {
            0
        } else {
            self.m()
        }
    }

    pub fn chord_length(&self) -> f64 {
        self.samples.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// Topology plus one sampled curve per edge; the central simulation state.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    topology: NetworkTopology,
    curves: Vec<DiscreteCurve>,
    endpoint_positions: Vec<(usize, Vec2)>,
}

impl Network {
    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn curves(&self) -> &[DiscreteCurve] {
        &self.curves
    }

    pub fn curve(&self, e: usize) -> &DiscreteCurve {
        &self.curves[e]
    }

    pub fn m(&self) -> usize {
        self.curves[0].m()
    }

    /// Fixed position of an endpoint vertex.
    pub fn endpoint_position(&self, vertex: usize) -> Option<Vec2> {
        self.endpoint_positions
            .iter()
            .find(|(v, _)| *v == vertex)
            .map(|(_, p)| *p)
    }

    /// Boundary sample of edge `e` at parameter-end `end`.
    pub fn boundary_sample(&self, e: usize, end: u8) -> Vec2 {
        let c = &self.curves[e];
        c.sample(c.boundary_index(end))
    }

    /// Replaces all curves at once. Callers guarantee the invariants; used by
    /// the flow stepper which maintains them by construction.
    pub(crate) fn with_curves(&self, curves: Vec<DiscreteCurve>) -> Network {
        Network {
            topology: self.topology.clone(),
            curves,
            endpoint_positions: self.endpoint_positions.clone(),
        }
    }
}

/// Validates curves against a topology and assembles the network.
///
/// Junction concurrency is checked against `DEFAULT_CONCURRENCY_TOL`; use
/// [`build_network_with_tol`] to override. Endpoint positions are read off the
/// boundary samples.
pub fn build_network(
    topology: NetworkTopology,
    curves: Vec<DiscreteCurve>,
) -> Result<Network, ModelError> {
    build_network_with_tol(topology, curves, DEFAULT_CONCURRENCY_TOL)
}

pub fn build_network_with_tol(
    topology: NetworkTopology,
    curves: Vec<DiscreteCurve>,
    concurrency_tol: f64,
) -> Result<Network, ModelError> {
    if curves.len() != topology.edge_count() {
        return Err(ModelError::Topology(format!(
            "{} curves for {} edges",
            curves.len(),
            topology.edge_count()
        )));
    }
    let m = curves[0].m();
    for (e, c) in curves.iter().enumerate() {
        if c.m() != m {
            return Err(ModelError::Topology(format!(
                "edge {e} has M = {}, expected the shared M = {m}",
                c.m()
            )));
        }
        for (j, w) in c.samples().windows(2).enumerate() {
            if (w[1] - w[0]).norm() == 0.0 {
                return Err(ModelError::DegenerateSegment { edge: e, at: j });
            }
        }
    }
    for (jidx, junction) in topology.junctions().iter().enumerate() {
        let pts: Vec<Vec2> = junction
            .ends
            .iter()
            .map(|ee| {
                let c = &curves[ee.edge];
                c.sample(c.boundary_index(ee.end))
            })
            .collect();
        let gap = (pts[0] - pts[1])
            .norm()
            .max((pts[0] - pts[2]).norm())
            .max((pts[1] - pts[2]).norm());
        if gap > concurrency_tol {
            return Err(ModelError::ConcurrencyViolation {
                junction: jidx,
                gap,
                tol: concurrency_tol,
            });
        }
    }
    let endpoint_positions = topology
        .endpoints()
        .iter()
        .map(|ep| {
            let c = &curves[ep.edge];
            (ep.vertex, c.sample(c.boundary_index(ep.end)))
        })
        .collect();
    Ok(Network { topology, curves, endpoint_positions })
}

/// Pointwise geometry of one edge.
#[derive(Debug, Clone)]
pub struct EdgeGeometry {
    /// Unit tangent at every sample.
    pub tau: Vec<Vec2>,
    /// Unit normal, the quarter rotation of `tau`.
    pub nu: Vec<Vec2>,
    /// Discrete speed `|dγ/dx|`.
    pub speed: Vec<f64>,
    /// Arclength quadrature weights built from chord lengths.
    pub ds: Vec<f64>,
    /// Curvature vector.
    pub k: Vec<Vec2>,
    /// Oriented curvature `<k, nu>`.
    pub k_oriented: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GeometryCache {
    pub edges: Vec<EdgeGeometry>,
}

impl GeometryCache {
    pub fn edge(&self, e: usize) -> &EdgeGeometry {
        &self.edges[e]
    }

    /// Trapezoidal quadrature of `|k~|^2 ds` along one edge.
    pub fn curvature_l2_squared(&self, e: usize) -> f64 {
        let g = &self.edges[e];
        g.k_oriented
            .iter()
            .zip(&g.ds)
            .map(|(k, w)| k * k * w)
            .sum()
    }

    pub fn sup_k_oriented(&self, e: usize) -> f64 {
        self.edges[e]
            .k_oriented
            .iter()
            .fold(0.0_f64, |a, k| a.max(k.abs()))
    }
}

/// First derivative samples of a curve, second order everywhere.
pub fn derivative_samples(samples: &[Vec2]) -> Vec<Vec2> {
    let m = samples.len() - 1;
    let h = 1.0 / m as f64;
    let mut d = Vec::with_capacity(m + 1);
    d.push((-3.0 * samples[0] + 4.0 * samples[1] - samples[2]) / (2.0 * h));
    for j in 1..m {
        d.push((samples[j + 1] - samples[j - 1]) / (2.0 * h));
    }
    d.push((3.0 * samples[m] - 4.0 * samples[m - 1] + samples[m - 2]) / (2.0 * h));
    d
}

/// Second derivative samples, second order everywhere (4-point one-sided at
/// the boundary).
pub fn second_derivative_samples(samples: &[Vec2]) -> Vec<Vec2> {
    let m = samples.len() - 1;
    let h2 = 1.0 / (m as f64 * m as f64);
    let mut d = Vec::with_capacity(m + 1);
    d.push((2.0 * samples[0] - 5.0 * samples[1] + 4.0 * samples[2] - samples[3]) / h2);
    for j in 1..m {
        d.push((samples[j + 1] - 2.0 * samples[j] + samples[j - 1]) / h2);
    }
    d.push((2.0 * samples[m] - 5.0 * samples[m - 1] + 4.0 * samples[m - 2] - samples[m - 3]) / h2);
    d
}

/// Computes tangents, normals, arclength weights and curvature for every edge.
pub fn geometry(network: &Network) -> Result<GeometryCache, ModelError> {
    let mut edges = Vec::with_capacity(network.curves().len());
    for (e, curve) in network.curves().iter().enumerate() {
        let samples = curve.samples();
        let m = curve.m();
        let d1 = derivative_samples(samples);
        let d2 = second_derivative_samples(samples);
        let mut tau = Vec::with_capacity(m + 1);
        let mut nu = Vec::with_capacity(m + 1);
        let mut speed = Vec::with_capacity(m + 1);
        let mut k = Vec::with_capacity(m + 1);
        let mut k_oriented = Vec::with_capacity(m + 1);
        for j in 0..=m {
            let s = d1[j].norm();
            if s == 0.0 {
                return Err(ModelError::DegenerateSegment { edge: e, at: j });
            }
            let t = d1[j] / s;
            let n = rot_ccw(t);
            // k = (γ'' - <γ'', τ> τ) / |γ'|^2
            let kv = (d2[j] - t * d2[j].dot(&t)) / (s * s);
            tau.push(t);
            nu.push(n);
            speed.push(s);
            k.push(kv);
            k_oriented.push(kv.dot(&n));
        }
        // Chord-based trapezoid weights: consistent with the chord-sum length.
        let mut ds = vec![0.0; m + 1];
        for j in 0..m {
            let c = (samples[j + 1] - samples[j]).norm();
            ds[j] += 0.5 * c;
            ds[j + 1] += 0.5 * c;
        }
        edges.push(EdgeGeometry { tau, nu, speed, ds, k, k_oriented });
    }
    Ok(GeometryCache { edges })
}

/// Total length: sum of polyline chord lengths over all edges.
pub fn length(network: &Network) -> f64 {
    network.curves().iter().map(|c| c.chord_length()).sum()
}

/// Resamples every edge at `m + 1` uniform parameters through the monotone
/// cubic interpolant. The parametrization is preserved, only the grid
/// changes; boundary samples are kept bit-exact.
pub fn resample(network: &Network, m: usize) -> Result<Network, ModelError> {
    let curves = network
        .curves()
        .iter()
        .map(|c| {
            let interp = crate::interp::CurveInterpolant::new(c.samples());
            let mut samples: Vec<Vec2> = (0..=m)
                .map(|q| interp.eval(q as f64 / m as f64))
                .collect();
            samples[0] = c.sample(0);
            samples[m] = c.sample(c.m());
            DiscreteCurve::new(samples)
        })
        .collect::<Result<Vec<_>, _>>()?;
    build_network_with_tol(network.topology().clone(), curves, 1e-9)
}

/// Inner tangent of edge `e` at parameter-end `end`: `(-1)^end τ(end)`,
/// computed with the one-sided boundary stencil.
pub fn inner_tangent(curve: &DiscreteCurve, end: u8) -> Vec2 {
    let s = curve.samples();
    let m = curve.m();
    let h = 1.0 / m as f64;
    let d = if end == 0 {
        (-3.0 * s[0] + 4.0 * s[1] - s[2]) / (2.0 * h)
    } else {
        -(3.0 * s[m] - 4.0 * s[m - 1] + s[m - 2]) / (2.0 * h)
    };
    d / d.norm()
}

/// Norm of the signed sum of boundary tangents at each junction; zero exactly
/// when the three inner tangents sum to zero, i.e. pairwise angles of 2π/3.
pub fn junction_angle_residual(network: &Network) -> Vec<f64> {
    network
        .topology()
        .junctions()
        .iter()
        .map(|junction| {
            let mut sum = Vec2::zeros();
            for ee in &junction.ends {
                sum += inner_tangent(network.curve(ee.edge), ee.end);
            }
            sum.norm()
        })
        .collect()
}

/// Diagnostic: pairs of edges whose polylines cross somewhere other than a
/// shared vertex. Embeddedness is never enforced at runtime (discrete flows
/// may graze); this reports it on demand.
pub fn self_intersection_pairs(network: &Network) -> Vec<(usize, usize)> {
    let segs: Vec<Vec<(Vec2, Vec2)>> = network
        .curves()
        .iter()
        .map(|c| c.samples().windows(2).map(|w| (w[0], w[1])).collect())
        .collect();
    let crosses = |a: (Vec2, Vec2), b: (Vec2, Vec2)| -> bool {
        let d1 = a.1 - a.0;
        let d2 = b.1 - b.0;
        let denom = d1.x * d2.y - d1.y * d2.x;
        if denom.abs() < 1e-15 {
            return false;
        }
        let r = b.0 - a.0;
        let t = (r.x * d2.y - r.y * d2.x) / denom;
        let u = (r.x * d1.y - r.y * d1.x) / denom;
        // Strict interior crossings only; touching endpoints do not count.
        let eps = 1e-9;
        t > eps && t < 1.0 - eps && u > eps && u < 1.0 - eps
    };
    let mut out = Vec::new();
    let ne = segs.len();
    for e1 in 0..ne {
        for e2 in e1..ne {
            let mut hit = false;
            for (i, &s1) in segs[e1].iter().enumerate() {
                for (j, &s2) in segs[e2].iter().enumerate() {
                    if e1 == e2 && j <= i + 1 {
                        continue; // identical or adjacent segments
                    }
                    if crosses(s1, s2) {
                        hit = true;
                        break;
                    }
                }
                if hit {
                    break;
                }
            }
            if hit {
                out.push((e1, e2));
            }
        }
    }
    out
}

/// Signed shoelace area of the polyline obtained by concatenating `cycle`,
/// given as `(edge, forward)` pairs forming a closed walk.
pub fn loop_area(network: &Network, cycle: &[(usize, bool)]) -> Result<f64, ModelError> {
    if cycle.is_empty() {
        return Err(ModelError::NotAClosedWalk("empty cycle".into()));
    }
    let topo = network.topology();
    let start = {
        let (e, fwd) = cycle[0];
        topo.vertex_at(e, if fwd { 0 } else { 1 })
    };
    let mut cur = start;
    let mut points: Vec<Vec2> = Vec::new();
    for &(e, fwd) in cycle {
        let from = topo.vertex_at(e, if fwd { 0 } else { 1 });
        if from != cur {
            return Err(ModelError::NotAClosedWalk(format!(
                "edge {e} starts at vertex {from}, walk is at {cur}"
            )));
        }
        let samples = network.curve(e).samples();
        if fwd {
            points.extend(samples[..samples.len() - 1].iter().copied());
        } else {
            points.extend(samples[1..].iter().rev().copied());
        }
        cur = topo.vertex_at(e, if fwd { 1 } else { 0 });
    }
    if cur != start {
        return Err(ModelError::NotAClosedWalk(format!(
            "walk ends at vertex {cur}, started at {start}"
        )));
    }
    Ok(shoelace_area(&points))
}
