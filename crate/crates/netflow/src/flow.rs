//! Time stepping for the parametrized flow `dγ/dt = γ_xx / |γ_x|^2`.
//!
//! One step is linearly implicit: the second derivative is taken at the new
//! time level while the coefficient `1 / |γ_x|^2` is frozen at the current
//! state, so each edge reduces to a tridiagonal solve per coordinate.
//! Endpoint samples are pinned. Junction samples are shared unknowns: the
//! interior solution of every edge is affine in its two boundary values, and
//! an outer Newton iteration moves the junction positions until the signed
//! sum of boundary tangents vanishes at every junction. Concurrency is exact
//! by construction, the angle condition holds up to `newton_tol` at every
//! accepted step.

use crate::geom::Vec2;
use crate::network::{
    derivative_samples, geometry, inner_tangent, junction_angle_residual, length,
    second_derivative_samples, DiscreteCurve, GeometryCache, Network,
};
use crate::topology::ModelError;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("junction Newton failed at t = {t}: residual {residual:.3e} after {iters} iterations")]
    NewtonFailure { t: f64, residual: f64, iters: usize },
    #[error("angle residual {residual:.3} exceeds the projection precondition 0.2")]
    ProjectionPrecondition { residual: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Edge length below which the run stops with `EdgeCollapse`.
    pub min_edge_length: f64,
    /// Oriented-curvature sup bound above which the run stops with
    /// `CurvatureBlowup`.
    pub max_curvature_sup: f64,
    pub t_max: f64,
    /// Log every this many steps (the initial and final states always log).
    pub log_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            min_edge_length: 1e-4,
            max_curvature_sup: 1e3,
            t_max: 1.0,
            log_stride: 1,
        }
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    ReachedTmax,
    EdgeCollapse { edge: usize, t: f64 },
    CurvatureBlowup { edge: usize, t: f64 },
    NewtonFailure { t: f64 },
}

/// Per-step diagnostics.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub edge_lengths: Vec<f64>,
    pub edge_int_k2: Vec<f64>,
    pub sup_k: f64,
    pub junction_residuals: Vec<f64>,
    /// Tangential junction velocities, three per junction in slot order
    /// (edges sorted by index); zero before the first step.
    pub lambdas: Vec<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub time: f64,
    pub network: Network,
    pub cache: GeometryCache,
    pub diagnostics: Diagnostics,
}

impl FlowState {
    pub fn new(network: Network) -> Result<Self, FlowError> {
        let cache = geometry(&network)?;
        let diagnostics = diagnostics_of(&network, &cache, None, 0.0);
        Ok(Self { time: 0.0, network, cache, diagnostics })
    }
}

fn diagnostics_of(
    network: &Network,
    cache: &GeometryCache,
    junction_motion: Option<&[Vec2]>,
    dt: f64,
) -> Diagnostics {
    let ne = network.curves().len();
    let edge_lengths: Vec<f64> = network.curves().iter().map(|c| c.chord_length()).collect();
    let edge_int_k2: Vec<f64> = (0..ne).map(|e| cache.curvature_l2_squared(e)).collect();
    let sup_k = (0..ne).map(|e| cache.sup_k_oriented(e)).fold(0.0, f64::max);
    let junction_residuals = junction_angle_residual(network);
    let lambdas = network
        .topology()
        .junctions()
        .iter()
        .enumerate()
        .map(|(jm, junction)| {
            let mut lam = [0.0_f64; 3];
            if let Some(motion) = junction_motion {
                let v = motion[jm] / dt;
                for (slot, ee) in junction.ends.iter().enumerate() {
                    let idx = network.curve(ee.edge).boundary_index(ee.end);
                    lam[slot] = v.dot(&cache.edge(ee.edge).tau[idx]);
                }
            }
            lam
        })
        .collect();
    Diagnostics { edge_lengths, edge_int_k2, sup_k, junction_residuals, lambdas }
}

/// Interior solution of one edge written as an affine map of its two
/// boundary samples: `γ_q = base_q + a_q γ_0 + b_q γ_M` for `q = 1..M-1`.
struct EdgeAffine {
    base: Vec<Vec2>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl EdgeAffine {
    fn interior(&self, g0: Vec2, gm: Vec2) -> Vec<Vec2> {
        self.base
            .iter()
            .zip(self.a.iter().zip(&self.b))
            .map(|(u, (&a, &b))| u + g0 * a + gm * b)
            .collect()
    }

    /// One-sided derivative stencil at `end`, as an affine function of the
    /// boundary values: returns `(coeff_0, coeff_m, constant)`.
    fn boundary_derivative(&self, end: u8, m: usize) -> (f64, f64, Vec2) {
        let h = 1.0 / m as f64;
        let n = self.base.len(); // m - 1 interior values, slot 0 is sample 1
        if end == 0 {
            let c0 = (-3.0 + 4.0 * self.a[0] - self.a[1]) / (2.0 * h);
            let cm = (4.0 * self.b[0] - self.b[1]) / (2.0 * h);
            let w = (self.base[0] * 4.0 - self.base[1]) / (2.0 * h);
            (c0, cm, w)
        } else {
            let c0 = (-4.0 * self.a[n - 1] + self.a[n - 2]) / (2.0 * h);
            let cm = (3.0 - 4.0 * self.b[n - 1] + self.b[n - 2]) / (2.0 * h);
            let w = (self.base[n - 2] - self.base[n - 1] * 4.0) / (2.0 * h);
            (c0, cm, w)
        }
    }
}

/// Thomas elimination for the symmetric tridiagonal step matrix
/// `diag(1 + 2 r_q)` with off-diagonals `-r_q`, shared across several
/// right-hand sides.
fn solve_step_system(r: &[f64], rhs_list: &mut [Vec<f64>]) {
    let n = r.len();
    let mut diag: Vec<f64> = r.iter().map(|rq| 1.0 + 2.0 * rq).collect();
    for q in 1..n {
        let w = -r[q] / diag[q - 1];
        diag[q] -= w * (-r[q - 1]);
        for rhs in rhs_list.iter_mut() {
            let prev = rhs[q - 1];
            rhs[q] -= w * prev;
        }
    }
    for rhs in rhs_list.iter_mut() {
        rhs[n - 1] /= diag[n - 1];
    }
    for q in (0..n - 1).rev() {
        for rhs in rhs_list.iter_mut() {
            let next = rhs[q + 1];
            rhs[q] = (rhs[q] + r[q] * next) / diag[q];
        }
    }
}

fn edge_affine_solve(curve: &DiscreteCurve, dt: f64) -> EdgeAffine {
    let m = curve.m();
    let samples = curve.samples();
    let d1 = derivative_samples(samples);
    let m2 = (m * m) as f64;
    let r: Vec<f64> = (1..m).map(|q| dt * m2 / d1[q].norm_squared()).collect();
    let n = m - 1;
    let rhs_x: Vec<f64> = (1..m).map(|q| samples[q].x).collect();
    let rhs_y: Vec<f64> = (1..m).map(|q| samples[q].y).collect();
    let mut rhs_a = vec![0.0; n];
    rhs_a[0] = r[0];
    let mut rhs_b = vec![0.0; n];
    rhs_b[n - 1] = r[n - 1];
    let mut list = [rhs_x, rhs_y, rhs_a, rhs_b];
    solve_step_system(&r, &mut list);
    let [sx, sy, sa, sb] = list;
    let base = sx
        .iter()
        .zip(&sy)
        .map(|(&x, &y)| Vec2::new(x, y))
        .collect();
    EdgeAffine { base, a: sa, b: sb }
}

/// Boundary datum of an edge end: pinned endpoint position or junction slot.
#[derive(Clone, Copy)]
enum BoundaryRef {
    Fixed(Vec2),
    Junction(usize),
}

struct StepSystem {
    affines: Vec<EdgeAffine>,
    boundary: Vec<[BoundaryRef; 2]>,
    m: usize,
}

impl StepSystem {
    fn build(network: &Network, dt: f64) -> Self {
        let topo = network.topology();
        let junction_slot: Vec<Option<usize>> = {
            let mut v = vec![None; topo.vertex_count()];
            for (jm, j) in topo.junctions().iter().enumerate() {
                v[j.vertex] = Some(jm);
            }
            v
        };
        let affines = network
            .curves()
            .iter()
            .map(|c| edge_affine_solve(c, dt))
            .collect();
        let boundary = (0..topo.edge_count())
            .map(|e| {
                [0u8, 1u8].map(|end| {
                    let v = topo.vertex_at(e, end);
                    match junction_slot[v] {
                        Some(jm) => BoundaryRef::Junction(jm),
                        None => BoundaryRef::Fixed(network.boundary_sample(e, end)),
                    }
                })
            })
            .collect();
        Self { affines, boundary, m: network.m() }
    }

    fn boundary_value(&self, e: usize, end: u8, mu: &[Vec2]) -> Vec2 {
        match self.boundary[e][end as usize] {
            BoundaryRef::Fixed(p) => p,
            BoundaryRef::Junction(jm) => mu[jm],
        }
    }

    /// One-sided boundary derivative of the implicit solution of edge `e` at
    /// `end`, given junction positions `mu`.
    fn boundary_deriv(&self, e: usize, end: u8, mu: &[Vec2]) -> Vec2 {
        let (c0, cm, w) = self.affines[e].boundary_derivative(end, self.m);
        let g0 = self.boundary_value(e, 0, mu);
        let gm = self.boundary_value(e, 1, mu);
        w + g0 * c0 + gm * cm
    }

    /// Per junction, the signed sum of unit boundary tangents.
    fn residual(&self, network: &Network, mu: &[Vec2]) -> Vec<Vec2> {
        network
            .topology()
            .junctions()
            .iter()
            .map(|junction| {
                let mut sum = Vec2::zeros();
                for ee in &junction.ends {
                    let d = self.boundary_deriv(ee.edge, ee.end, mu);
                    let sigma = if ee.end == 0 { 1.0 } else { -1.0 };
                    sum += sigma * d / d.norm();
                }
                sum
            })
            .collect()
    }

    /// Analytic Jacobian of the stacked residual with respect to the stacked
    /// junction positions.
    fn jacobian(&self, network: &Network, mu: &[Vec2]) -> DMatrix<f64> {
        let topo = network.topology();
        let nj = topo.junctions().len();
        let mut jac = DMatrix::zeros(2 * nj, 2 * nj);
        for (jm, junction) in topo.junctions().iter().enumerate() {
            for ee in &junction.ends {
                let d = self.boundary_deriv(ee.edge, ee.end, mu);
                let nd = d.norm();
                let tau = d / nd;
                let sigma = if ee.end == 0 { 1.0 } else { -1.0 };
                // d(tau)/d(d) = (I - tau tau^T) / |d|
                let proj = [
                    [(1.0 - tau.x * tau.x) / nd, -tau.x * tau.y / nd],
                    [-tau.x * tau.y / nd, (1.0 - tau.y * tau.y) / nd],
                ];
                let (c0, cm, _) = self.affines[ee.edge].boundary_derivative(ee.end, self.m);
                for (end, coeff) in [(0u8, c0), (1u8, cm)] {
                    if let BoundaryRef::Junction(col) = self.boundary[ee.edge][end as usize] {
                        for r in 0..2 {
                            for c in 0..2 {
                                jac[(2 * jm + r, 2 * col + c)] += sigma * coeff * proj[r][c];
                            }
                        }
                    }
                }
            }
        }
        jac
    }

    fn assemble(&self, network: &Network, mu: &[Vec2]) -> Network {
        let curves = (0..network.curves().len())
            .map(|e| {
                let g0 = self.boundary_value(e, 0, mu);
                let gm = self.boundary_value(e, 1, mu);
                let mut samples = Vec::with_capacity(self.m + 1);
                samples.push(g0);
                samples.extend(self.affines[e].interior(g0, gm));
                samples.push(gm);
                DiscreteCurve::new(samples).expect("sample count preserved")
            })
            .collect();
        network.with_curves(curves)
    }
}

pub fn junction_positions(network: &Network) -> Vec<Vec2> {
    network
        .topology()
        .junctions()
        .iter()
        .map(|j| {
            // Boundary samples agree to the concurrency tolerance; average.
            let mut p = Vec2::zeros();
            for ee in &j.ends {
                p += network.boundary_sample(ee.edge, ee.end);
            }
            p / 3.0
        })
        .collect()
}

/// Advances the state by one time step.
pub fn step(state: &FlowState, config: &SolverConfig) -> Result<FlowState, FlowError> {
    let network = &state.network;
    let system = StepSystem::build(network, config.dt);
    let mu_old = junction_positions(network);
    let mut mu = mu_old.clone();
    let nj = mu.len();

    if nj > 0 {
        let mut converged = false;
        let mut last_res = f64::INFINITY;
        for iter in 0..=config.newton_max_iter {
            let res = system.residual(network, &mu);
            last_res = res.iter().fold(0.0_f64, |a, r| a.max(r.norm()));
            if last_res <= config.newton_tol {
                converged = true;
                break;
            }
            if iter == config.newton_max_iter {
                break;
            }
            let jac = system.jacobian(network, &mu);
            let mut rhs = DVector::zeros(2 * nj);
            for (jm, r) in res.iter().enumerate() {
                rhs[2 * jm] = -r.x;
                rhs[2 * jm + 1] = -r.y;
            }
            let Some(delta) = jac.lu().solve(&rhs) else {
                return Err(FlowError::NewtonFailure {
                    t: state.time,
                    residual: last_res,
                    iters: iter,
                });
            };
            for jm in 0..nj {
                mu[jm] += Vec2::new(delta[2 * jm], delta[2 * jm + 1]);
            }
        }
        if !converged {
            return Err(FlowError::NewtonFailure {
                t: state.time,
                residual: last_res,
                iters: config.newton_max_iter,
            });
        }
    }

    let new_network = system.assemble(network, &mu);
    let cache = geometry(&new_network)?;
    let motion: Vec<Vec2> = mu.iter().zip(&mu_old).map(|(n, o)| n - o).collect();
    let diagnostics = diagnostics_of(&new_network, &cache, Some(&motion), config.dt);
    Ok(FlowState {
        time: state.time + config.dt,
        network: new_network,
        cache,
        diagnostics,
    })
}

/// One recorded state of a run; velocities are recovered by differencing
/// neighboring frames.
#[derive(Debug, Clone)]
pub struct Frame {
    pub t: f64,
    pub curves: Vec<Vec<Vec2>>,
    pub junctions: Vec<Vec2>,
}

fn frame_of(state: &FlowState) -> Frame {
    Frame {
        t: state.time,
        curves: state
            .network
            .curves()
            .iter()
            .map(|c| c.samples().to_vec())
            .collect(),
        junctions: junction_positions(&state.network),
    }
}

/// Scalar time series of a run, the CSV-backed log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub format_version: u32,
    pub config_hash: String,
    pub edge_count: usize,
    pub junction_count: usize,
    pub loop_count: usize,
    pub rows: Vec<LogRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub total_length: f64,
    pub edge_lengths: Vec<f64>,
    pub int_k2: f64,
    pub sup_k: f64,
    pub max_angle_residual: f64,
    pub lambdas: Vec<f64>,
    pub loop_areas: Vec<f64>,
}

fn log_row(state: &FlowState, loops: &[Vec<(usize, bool)>]) -> LogRow {
    let d = &state.diagnostics;
    LogRow {
        t: state.time,
        total_length: length(&state.network),
        edge_lengths: d.edge_lengths.clone(),
        int_k2: d.edge_int_k2.iter().sum(),
        sup_k: d.sup_k,
        max_angle_residual: d.junction_residuals.iter().fold(0.0, |a: f64, &r| a.max(r)),
        lambdas: d.lambdas.iter().flatten().copied().collect(),
        loop_areas: loops
            .iter()
            .map(|c| crate::network::loop_area(&state.network, c).unwrap_or(f64::NAN))
            .collect(),
    }
}

pub struct RunResult {
    pub log: TrajectoryLog,
    pub stop: StopReason,
    pub final_state: FlowState,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Record full frames every this many steps (None: no frames).
    pub frame_stride: Option<usize>,
    /// Closed walks whose enclosed areas are logged; auto-detected from the
    /// topology when `None`.
    pub loops: Option<Vec<Vec<(usize, bool)>>>,
    /// Mirror-symmetrize samples across both axes after every step.
    pub enforce_symmetry: bool,
    pub config_hash: String,
}

/// Runs the flow from `initial` until `t_max` or a stop condition triggers.
///
/// An initial network violating the angle condition beyond `newton_tol` is
/// first projected onto it; its residual must not exceed the projection
/// precondition.
pub fn run(
    initial: &Network,
    config: &SolverConfig,
    opts: RunOptions,
) -> Result<RunResult, FlowError> {
    let start = {
        let res = junction_angle_residual(initial);
        let worst = res.iter().fold(0.0_f64, |a, &r| a.max(r));
        if worst > config.newton_tol {
            project_to_regular(initial, config.newton_tol)?
        } else {
            initial.clone()
        }
    };
    let loops = opts
        .loops
        .clone()
        .unwrap_or_else(|| start.topology().cycle_basis());
    let mut state = FlowState::new(start)?;
    let mut log = TrajectoryLog {
        format_version: 1,
        config_hash: opts.config_hash.clone(),
        edge_count: state.network.curves().len(),
        junction_count: state.network.topology().junctions().len(),
        loop_count: loops.len(),
        rows: vec![log_row(&state, &loops)],
    };
    let mut frames = Vec::new();
    if opts.frame_stride.is_some() {
        frames.push(frame_of(&state));
    }
    let mut step_index = 0usize;
    let stop = loop {
        if let Some(reason) = stop_condition(&state, config) {
            break reason;
        }
        if state.time + 0.5 * config.dt >= config.t_max {
            break StopReason::ReachedTmax;
        }
        match step(&state, config) {
            Ok(mut next) => {
                if opts.enforce_symmetry {
                    next = symmetrized(next)?;
                }
                state = next;
            }
            Err(FlowError::NewtonFailure { t, .. }) => break StopReason::NewtonFailure { t },
            Err(e) => return Err(e),
        }
        step_index += 1;
        if step_index % config.log_stride.max(1) == 0 {
            log.rows.push(log_row(&state, &loops));
        }
        if let Some(fs) = opts.frame_stride {
            if step_index % fs.max(1) == 0 {
                frames.push(frame_of(&state));
            }
        }
    };
    if log.rows.last().map(|r| r.t) != Some(state.time) {
        log.rows.push(log_row(&state, &loops));
    }
    if opts.frame_stride.is_some() && frames.last().map(|f| f.t) != Some(state.time) {
        frames.push(frame_of(&state));
    }
    Ok(RunResult { log, stop, final_state: state, frames })
}

fn stop_condition(state: &FlowState, config: &SolverConfig) -> Option<StopReason> {
    for (e, &l) in state.diagnostics.edge_lengths.iter().enumerate() {
        if l < config.min_edge_length {
            return Some(StopReason::EdgeCollapse { edge: e, t: state.time });
        }
    }
    for e in 0..state.network.curves().len() {
        if state.cache.sup_k_oriented(e) > config.max_curvature_sup {
            return Some(StopReason::CurvatureBlowup { edge: e, t: state.time });
        }
    }
    None
}

fn symmetrized(state: FlowState) -> Result<FlowState, FlowError> {
    let network = crate::examples::mirror_average(&state.network)?;
    let cache = geometry(&network)?;
    Ok(FlowState {
        time: state.time,
        network,
        cache,
        diagnostics: state.diagnostics,
    })
}

/// Newton projection onto the angle condition that moves only the two
/// interior samples adjacent to each junction end. Concurrency and all other
/// samples are untouched. Fails when a junction starts more than 0.2 away
/// from the condition.
pub fn project_to_regular(network: &Network, tol: f64) -> Result<Network, FlowError> {
    let res0 = junction_angle_residual(network);
    let worst0 = res0.iter().fold(0.0_f64, |a, &r| a.max(r));
    if worst0 > 0.2 {
        return Err(FlowError::ProjectionPrecondition { residual: worst0 });
    }
    if worst0 <= tol {
        return Ok(network.clone());
    }
    let topo = network.topology().clone();
    let m = network.m();
    let h = 1.0 / m as f64;
    // Movable samples: for each junction end, the two interior neighbors.
    let mut movable: Vec<(usize, usize)> = Vec::new();
    for junction in topo.junctions() {
        for ee in &junction.ends {
            if ee.end == 0 {
                movable.push((ee.edge, 1));
                movable.push((ee.edge, 2));
            } else {
                movable.push((ee.edge, m - 1));
                movable.push((ee.edge, m - 2));
            }
        }
    }
    movable.sort_unstable();
    movable.dedup();
    let col_of = |edge: usize, idx: usize| movable.binary_search(&(edge, idx)).ok();

    let mut curves: Vec<Vec<Vec2>> = network
        .curves()
        .iter()
        .map(|c| c.samples().to_vec())
        .collect();
    let nj = topo.junctions().len();
    let ncols = 2 * movable.len();
    for iter in 0..60 {
        let mut res: DVector<f64> = DVector::zeros(2 * nj);
        let mut jac: DMatrix<f64> = DMatrix::zeros(2 * nj, ncols);
        let mut worst: f64 = 0.0;
        for (jm, junction) in topo.junctions().iter().enumerate() {
            let mut sum = Vec2::zeros();
            for ee in &junction.ends {
                let s = &curves[ee.edge];
                let (d, stencil): (Vec2, [(usize, f64); 2]) = if ee.end == 0 {
                    (
                        (-3.0 * s[0] + 4.0 * s[1] - s[2]) / (2.0 * h),
                        [(1, 4.0 / (2.0 * h)), (2, -1.0 / (2.0 * h))],
                    )
                } else {
                    (
                        (3.0 * s[m] - 4.0 * s[m - 1] + s[m - 2]) / (2.0 * h),
                        [(m - 1, -4.0 / (2.0 * h)), (m - 2, 1.0 / (2.0 * h))],
                    )
                };
                let nd = d.norm();
                let tau = d / nd;
                let sigma = if ee.end == 0 { 1.0 } else { -1.0 };
                sum += sigma * tau;
                let proj = [
                    [(1.0 - tau.x * tau.x) / nd, -tau.x * tau.y / nd],
                    [-tau.x * tau.y / nd, (1.0 - tau.y * tau.y) / nd],
                ];
                for (idx, coeff) in stencil {
                    let col = col_of(ee.edge, idx).expect("movable sample");
                    for r in 0..2 {
                        for c in 0..2 {
                            jac[(2 * jm + r, 2 * col + c)] += sigma * coeff * proj[r][c];
                        }
                    }
                }
            }
            res[2 * jm] = sum.x;
            res[2 * jm + 1] = sum.y;
            worst = worst.max(sum.norm());
        }
        if worst <= tol {
            let rebuilt = curves
                .into_iter()
                .map(DiscreteCurve::new)
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(network.with_curves(rebuilt));
        }
        // Minimal-norm update: delta = J^T (J J^T)^{-1} (-res).
        let jjt: DMatrix<f64> = &jac * jac.transpose();
        let Some(y) = jjt.lu().solve(&(-&res)) else {
            return Err(FlowError::NewtonFailure { t: 0.0, residual: worst, iters: iter });
        };
        let delta: DVector<f64> = jac.transpose() * y;
        for (ci, &(edge, idx)) in movable.iter().enumerate() {
            curves[edge][idx] += Vec2::new(delta[2 * ci], delta[2 * ci + 1]);
        }
    }
    let rebuilt = network.with_curves(
        curves
            .into_iter()
            .map(|s| DiscreteCurve::new(s).unwrap())
            .collect(),
    );
    let worst = junction_angle_residual(&rebuilt)
        .into_iter()
        .fold(0.0_f64, f64::max);
    Err(FlowError::NewtonFailure { t: 0.0, residual: worst, iters: 60 })
}

/// Second-order compatibility diagnostics: the norm of `γ_xx` at endpoints
/// and the largest pairwise mismatch of `γ_xx / |γ_x|^2` across each
/// junction. Logged, never enforced.
pub fn compatibility_residual(state: &FlowState) -> (Vec<f64>, Vec<f64>) {
    let network = &state.network;
    let per_edge: Vec<(Vec<Vec2>, Vec<Vec2>)> = network
        .curves()
        .iter()
        .map(|c| {
            (
                derivative_samples(c.samples()),
                second_derivative_samples(c.samples()),
            )
        })
        .collect();
    let endpoint_res = network
        .topology()
        .endpoints()
        .iter()
        .map(|ep| {
            let idx = network.curve(ep.edge).boundary_index(ep.end);
            per_edge[ep.edge].1[idx].norm()
        })
        .collect();
    let junction_res = network
        .topology()
        .junctions()
        .iter()
        .map(|junction| {
            let vels: Vec<Vec2> = junction
                .ends
                .iter()
                .map(|ee| {
                    let idx = network.curve(ee.edge).boundary_index(ee.end);
                    let (d1, d2) = &per_edge[ee.edge];
                    d2[idx] / d1[idx].norm_squared()
                })
                .collect();
            let mut worst: f64 = 0.0;
            for a in 0..3 {
                for b in (a + 1)..3 {
                    worst = worst.max((vels[a] - vels[b]).norm());
                }
            }
            worst
        })
        .collect();
    (endpoint_res, junction_res)
}

/// Inner tangents at a junction, in slot order.
pub fn junction_tangents(network: &Network, junction: usize) -> [Vec2; 3] {
    let j = &network.topology().junctions()[junction];
    j.ends
        .map(|ee| inner_tangent(network.curve(ee.edge), ee.end))
}
