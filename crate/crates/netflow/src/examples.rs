//! The five-curve rectangle configuration and its certified monitors.
//!
//! Four endpoints sit at `(±a, ±b)`; a vertical central edge of length `L0`
//! joins two junctions on the vertical axis and four congruent convex arcs
//! connect them to the endpoints. With the default `b = a / sqrt(3)` the
//! rectangle's diagonals meet at angles π/3 and 2π/3 and the junction
//! tangents of the arcs have slope `tan(π/6) = 1/sqrt(3)`.
//!
//! Depending on the central length, the discrete run either drives the
//! central edge under the collapse floor in finite time, or reaches `t_max`
//! with the central length bounded away from the floor while the curvature
//! decays. The monitored quantities are the graph gradient bound
//! `v = 1 / <ν, ω>`, the weighted curvature `g = (k v)^2` whose maximum never
//! exceeds its initial value, the junction identities linking tangential
//! velocity and curvature, and 1-D heat barriers sandwiching the arc graph.

use crate::flow::{self, run, Frame, RunOptions, RunResult, SolverConfig, StopReason};
use crate::geom::{rot_ccw, Vec2};
use crate::interp::MonotoneCubic;
use crate::network::{
    build_network, derivative_samples, second_derivative_samples, DiscreteCurve, Network,
};
use crate::topology::{ModelError, NetworkTopology, VertexKind};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExampleError {
    #[error("geometry infeasible: {0}")]
    GeometryInfeasible(String),
    #[error("curve is not a graph over the horizontal axis near sample {0}")]
    NotAGraph(usize),
    #[error("time order violated: t = {t} must precede t0 = {t0}")]
    TimeOrder { t: f64, t0: f64 },
    #[error(transparent)]
    Flow(#[from] flow::FlowError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub const VERTICAL: Vec2 = Vec2::new(0.0, 1.0);

#[derive(Debug, Clone, Copy)]
pub struct RectExampleConfig {
    /// Half width `a` of the endpoint rectangle.
    pub half_width: f64,
    /// Endpoint height `b`; the default makes the diagonals meet at π/3.
    pub endpoint_height: f64,
    /// Initial length of the vertical central edge.
    pub central_length: f64,
    pub m: usize,
    pub dt: f64,
    pub t_max: f64,
    pub symmetry_enforced: bool,
    /// Burn-in steps at `dt / 10` before monitoring starts.
    pub smoothing_steps: usize,
    pub log_stride: usize,
    pub frame_stride: usize,
    pub min_edge_length: f64,
    pub max_curvature_sup: f64,
}

impl Default for RectExampleConfig {
    fn default() -> Self {
        Self {
            half_width: 1.0,
            endpoint_height: 1.0 / 3.0_f64.sqrt(),
            central_length: 0.3,
            m: 128,
            dt: 1e-4,
            t_max: 10.0,
            symmetry_enforced: false,
            smoothing_steps: 5,
            log_stride: 10,
            frame_stride: 50,
            min_edge_length: 1e-4,
            max_curvature_sup: 1e3,
        }
    }
}

impl RectExampleConfig {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            dt: self.dt,
            t_max: self.t_max,
            min_edge_length: self.min_edge_length,
            max_curvature_sup: self.max_curvature_sup,
            log_stride: self.log_stride,
            ..SolverConfig::default()
        }
    }
}

/// Edge layout: 0 central (bottom junction -> top junction), 1 bottom-left,
/// 2 bottom-right, 3 top-right, 4 top-left. Arcs run endpoint -> junction.
pub fn rect_topology() -> NetworkTopology {
    NetworkTopology::new(
        vec![
            VertexKind::Endpoint, // 0: (-a, -b)
            VertexKind::Endpoint, // 1: ( a, -b)
            VertexKind::Endpoint, // 2: ( a,  b)
            VertexKind::Endpoint, // 3: (-a,  b)
            VertexKind::Junction, // 4: bottom
            VertexKind::Junction, // 5: top
        ],
        vec![(4, 5), (0, 4), (1, 4), (2, 5), (3, 5)],
    )
    .expect("valid rectangle topology")
}

/// Circular arc from `a` to `j` arriving at `j` along the unit direction
/// `dir`, sampled at `m + 1` uniform angles (constant speed).
fn tangent_arc(a: Vec2, j: Vec2, dir: Vec2, m: usize) -> Result<Vec<Vec2>, ExampleError> {
    let chord = j - a;
    let n = rot_ccw(dir);
    let denom = 2.0 * n.dot(&chord);
    if denom.abs() < 1e-12 * chord.norm_squared() {
        // Chord already parallel to the required tangent: straight segment.
        return Ok((0..=m)
            .map(|q| a + chord * (q as f64 / m as f64))
            .collect());
    }
    let r = -chord.norm_squared() / denom;
    let center = j + n * r;
    let radius = (j - center).norm();
    let ang = |p: Vec2| (p - center).y.atan2((p - center).x);
    let a_a = ang(a);
    let a_j = ang(j);
    let mut delta = a_j - a_a;
    while delta > std::f64::consts::PI {
        delta -= 2.0 * std::f64::consts::PI;
    }
    while delta <= -std::f64::consts::PI {
        delta += 2.0 * std::f64::consts::PI;
    }
    // Pick the traversal direction arriving along +dir.
    let arrive = Vec2::new(-a_j.sin(), a_j.cos()) * delta.signum();
    if arrive.dot(&dir) < 0.0 {
        delta -= 2.0 * std::f64::consts::PI * delta.signum();
    }
    Ok((0..=m)
        .map(|q| {
            let t = a_a + delta * q as f64 / m as f64;
            center + radius * Vec2::new(t.cos(), t.sin())
        })
        .collect())
}

/// Exact mirror symmetrization across both axes for the rectangle layout.
/// Averages the four mirror images of every sample.
pub fn mirror_average(network: &Network) -> Result<Network, ModelError> {
    if network.curves().len() != 5 {
        return Err(ModelError::Topology(
            "mirror symmetrization requires the 5-edge rectangle layout".into(),
        ));
    }
    let s: Vec<&[Vec2]> = network.curves().iter().map(|c| c.samples()).collect();
    let m = network.m();
    let flip_x = |p: Vec2| Vec2::new(-p.x, p.y);
    let flip_y = |p: Vec2| Vec2::new(p.x, -p.y);
    // Under x-mirror: 1 <-> 2, 3 <-> 4, 0 -> 0 (same parameter).
    // Under y-mirror: 1 <-> 4, 2 <-> 3, 0 -> 0 reversed.
    let avg_edge = |e: usize| -> Vec<Vec2> {
        let (xm, ym, xym) = match e {
            0 => (0, 0, 0),
            1 => (2, 4, 3),
            2 => (1, 3, 4),
            3 => (4, 2, 1),
            4 => (3, 1, 2),
            _ => unreachable!(),
        };
        (0..=m)
            .map(|q| {
                let rev = m - q;
                let base = s[e][q];
                let via_x = flip_x(s[xm][q]);
                let (via_y, via_xy) = if e == 0 {
                    (flip_y(s[ym][rev]), flip_x(flip_y(s[xym][rev])))
                } else {
                    (flip_y(s[ym][q]), flip_x(flip_y(s[xym][q])))
                };
                (base + via_x + via_y + via_xy) / 4.0
            })
            .collect()
    };
    let curves = (0..5)
        .map(|e| DiscreteCurve::new(avg_edge(e)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(network.with_curves(curves))
}

/// Deviation of the sample set from its mirror images, for symmetry checks.
pub fn mirror_asymmetry(network: &Network) -> f64 {
    let avg = match mirror_average(network) {
        Ok(n) => n,
        Err(_) => return f64::NAN,
    };
    network
        .curves()
        .iter()
        .zip(avg.curves())
        .map(|(c, ca)| {
            c.samples()
                .iter()
                .zip(ca.samples())
                .map(|(p, q)| (p - q).norm())
                .fold(0.0_f64, f64::max)
        })
        .fold(0.0_f64, f64::max)
}

/// Builds the initial network: vertical central segment of length `L0` and
/// four congruent convex circular arcs meeting it at exact 2π/3 angles, then
/// projects onto the discrete angle condition and re-symmetrizes.
pub fn build_rect_initial(cfg: &RectExampleConfig) -> Result<Network, ExampleError> {
    let a = cfg.half_width;
    let b = cfg.endpoint_height;
    let l0 = cfg.central_length;
    if a <= 0.0 || b <= 0.0 {
        return Err(ExampleError::GeometryInfeasible(
            "half_width and endpoint_height must be positive".into(),
        ));
    }
    if l0 <= 0.0 {
        return Err(ExampleError::GeometryInfeasible(
            "central_length must be positive; the degenerate network is a limit, not a datum"
                .into(),
        ));
    }
    let m = cfg.m;
    let endpoint = Vec2::new(-a, -b);
    let junction = Vec2::new(0.0, -l0 / 2.0);
    // Arrival direction at the bottom junction: 2π/3 from the vertical
    // central edge, i.e. slope tan(π/6) moving up-right.
    let dir = Vec2::new(3.0_f64.sqrt() / 2.0, 0.5);
    let arc1 = tangent_arc(endpoint, junction, dir, m)?;
    let flip_x = |s: &[Vec2]| s.iter().map(|p| Vec2::new(-p.x, p.y)).collect::<Vec<_>>();
    let flip_y = |s: &[Vec2]| s.iter().map(|p| Vec2::new(p.x, -p.y)).collect::<Vec<_>>();
    let arc2 = flip_x(&arc1);
    let arc4 = flip_y(&arc1);
    let arc3 = flip_x(&arc4);
    let central: Vec<Vec2> = (0..=m)
        .map(|q| Vec2::new(0.0, -l0 / 2.0 + l0 * q as f64 / m as f64))
        .collect();
    let curves = vec![
        DiscreteCurve::new(central)?,
        DiscreteCurve::new(arc1)?,
        DiscreteCurve::new(arc2)?,
        DiscreteCurve::new(arc3)?,
        DiscreteCurve::new(arc4)?,
    ];
    let mut network = build_network(rect_topology(), curves)?;
    // The sampled arc tangents carry O(h^2) stencil error; project onto the
    // discrete angle condition, then restore exact mirror symmetry.
    for _ in 0..3 {
        network = flow::project_to_regular(&network, 1e-11)?;
        network = mirror_average(&network)?;
        let worst = crate::network::junction_angle_residual(&network)
            .into_iter()
            .fold(0.0_f64, f64::max);
        if worst <= 1e-10 {
            break;
        }
    }
    Ok(network)
}

/// Outcome classification of a rectangle run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleOutcome {
    /// The central edge crossed the collapse floor before `t_max`.
    FiniteTimeCollapse,
    /// Reached `t_max` with the central length still decreasing.
    SlowCollapse,
    /// Reached `t_max` essentially stationary above the floor.
    ConvergedToRegular,
    /// The run stopped for another reason (blow-up, solver failure).
    Aborted,
}

#[derive(Debug, Clone)]
pub struct MonitorFrame {
    pub t: f64,
    /// Range of `v = 1 / <ν, ω>` over the bottom-left arc.
    pub v1_min: f64,
    pub v1_max: f64,
    /// Minimum oriented curvature over the arc (convexity monitor).
    pub k1_min: f64,
    /// Maximum of `(k v)^2` over the arc.
    pub g1_max: f64,
    pub central_length: f64,
    /// Slope of the arc tangent at the junction.
    pub junction_slope: f64,
    /// Tangential junction velocity of the arc (centered in time).
    pub lambda1: f64,
    /// `|λ1 - k1/sqrt(3)|` with the junction curvature read from the normal
    /// component of the junction velocity, the identity's native variables.
    pub tangential_identity_residual: f64,
    /// Same identity with the one-sided curvature stencil instead; carries
    /// an `O(h^2 k)` discretization floor.
    pub tangential_identity_residual_stencil: f64,
    /// `|∂_s k1 + λ1 k1|` at the junction, curvature extrapolated from
    /// interior samples.
    pub neumann_identity_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ExampleMonitors {
    pub frames: Vec<MonitorFrame>,
    /// `<τ1(0), ω>` of the first monitored frame (the initial tilt).
    pub initial_tilt: f64,
}

/// Arc-edge pointwise fields used by monitors and the barrier comparison.
struct ArcFields {
    tau: Vec<Vec2>,
    nu: Vec<Vec2>,
    speed: Vec<f64>,
    k_oriented: Vec<f64>,
    ds: Vec<f64>,
}

fn arc_fields(samples: &[Vec2]) -> ArcFields {
    let d1 = derivative_samples(samples);
    let d2 = second_derivative_samples(samples);
    let n = samples.len();
    let mut tau = Vec::with_capacity(n);
    let mut nu = Vec::with_capacity(n);
    let mut speed = Vec::with_capacity(n);
    let mut k_oriented = Vec::with_capacity(n);
    for q in 0..n {
        let s = d1[q].norm();
        let t = d1[q] / s;
        let nv = rot_ccw(t);
        tau.push(t);
        nu.push(nv);
        speed.push(s);
        k_oriented.push(d2[q].dot(&nv) / (s * s));
    }
    let mut ds = vec![0.0; n];
    for q in 0..n - 1 {
        let c = (samples[q + 1] - samples[q]).norm();
        ds[q] += 0.5 * c;
        ds[q + 1] += 0.5 * c;
    }
    ArcFields { tau, nu, speed, k_oriented, ds }
}

/// Derivative of scalar samples on the uniform grid, second order.
fn scalar_derivative(vals: &[f64], m: usize) -> Vec<f64> {
    let h = 1.0 / m as f64;
    let n = vals.len();
    let mut d = Vec::with_capacity(n);
    d.push((-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * h));
    for q in 1..n - 1 {
        d.push((vals[q + 1] - vals[q - 1]) / (2.0 * h));
    }
    d.push((3.0 * vals[n - 1] - 4.0 * vals[n - 2] + vals[n - 3]) / (2.0 * h));
    d
}

/// Derives the monitor series from recorded frames (first/last frames carry
/// no centered velocity, so their identity residuals are NaN).
pub fn monitors_from_frames(frames: &[Frame]) -> ExampleMonitors {
    let mut out = Vec::new();
    let initial_tilt = {
        let arc = &frames[0].curves[1];
        let d1 = derivative_samples(arc);
        (d1[0] / d1[0].norm()).dot(&VERTICAL)
    };
    for j in 0..frames.len() {
        let f = &frames[j];
        let arc = &f.curves[1];
        let m = arc.len() - 1;
        let fields = arc_fields(arc);
        let mut v1_min = f64::INFINITY;
        let mut v1_max = f64::NEG_INFINITY;
        let mut k1_min = f64::INFINITY;
        let mut g1_max: f64 = 0.0;
        for q in 0..=m {
            let nw = fields.nu[q].dot(&VERTICAL);
            let v = 1.0 / nw;
            v1_min = v1_min.min(v);
            v1_max = v1_max.max(v);
            k1_min = k1_min.min(fields.k_oriented[q]);
            g1_max = g1_max.max((fields.k_oriented[q] * v) * (fields.k_oriented[q] * v));
        }
        let central_length = f.curves[0]
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum::<f64>();
        let tau_j = fields.tau[m];
        let nu_j = fields.nu[m];
        let junction_slope = tau_j.y / tau_j.x;
        // Centered junction velocity over neighboring frames.
        let velocity = if j > 0 && j + 1 < frames.len() {
            let dtw = frames[j + 1].t - frames[j - 1].t;
            Some((frames[j + 1].junctions[0] - frames[j - 1].junctions[0]) / dtw)
        } else {
            None
        };
        let lambda1 = velocity.map(|v| v.dot(&tau_j)).unwrap_or(f64::NAN);
        let k_j_stencil = fields.k_oriented[m];
        // Interior-only stencils for the junction curvature and its
        // arclength derivative: one-sided boundary values mix error
        // constants with the centered interior ones, so extrapolating from
        // samples m-1, m-2, m-3 keeps second order.
        let k = &fields.k_oriented;
        let k_j = 3.0 * k[m - 1] - 3.0 * k[m - 2] + k[m - 3];
        let h = 1.0 / m as f64;
        let ds_k_j =
            (2.5 * k[m - 1] - 4.0 * k[m - 2] + 1.5 * k[m - 3]) / (h * fields.speed[m]);
        let s3 = 3.0_f64.sqrt();
        let (tangential_identity_residual, tangential_identity_residual_stencil) =
            match velocity {
                Some(v) => (
                    (v.dot(&tau_j) - v.dot(&nu_j) / s3).abs(),
                    (lambda1 - k_j_stencil / s3).abs(),
                ),
                None => (f64::NAN, f64::NAN),
            };
        let neumann_identity_residual = if lambda1.is_nan() {
            f64::NAN
        } else {
            (ds_k_j + lambda1 * k_j).abs()
        };
        out.push(MonitorFrame {
            t: f.t,
            v1_min,
            v1_max,
            k1_min,
            g1_max,
            central_length,
            junction_slope,
            lambda1,
            tangential_identity_residual,
            tangential_identity_residual_stencil,
            neumann_identity_residual,
        });
    }
    ExampleMonitors { frames: out, initial_tilt }
}

/// Runs the configured rectangle example: builds the initial datum, smooths
/// it briefly, runs the flow with frames recorded, and derives the monitors.
pub fn run_example(
    cfg: &RectExampleConfig,
) -> Result<(RunResult, ExampleMonitors, ExampleOutcome), ExampleError> {
    let mut network = build_rect_initial(cfg)?;
    // Short burn-in at dt/10: the constructed datum is regular but not yet
    // discretely compatible at second order.
    if cfg.smoothing_steps > 0 {
        let burn = SolverConfig {
            dt: cfg.dt / 10.0,
            t_max: f64::INFINITY,
            ..cfg.solver_config()
        };
        let mut state = flow::FlowState::new(network)?;
        for _ in 0..cfg.smoothing_steps {
            state = flow::step(&state, &burn)?;
        }
        network = mirror_average(&state.network)?;
    }
    let result = run(
        &network,
        &cfg.solver_config(),
        RunOptions {
            frame_stride: Some(cfg.frame_stride),
            loops: Some(Vec::new()),
            enforce_symmetry: cfg.symmetry_enforced,
            config_hash: String::new(),
        },
    )?;
    let monitors = monitors_from_frames(&result.frames);
    let outcome = classify(&result, &monitors, cfg);
    Ok((result, monitors, outcome))
}

fn classify(
    result: &RunResult,
    monitors: &ExampleMonitors,
    cfg: &RectExampleConfig,
) -> ExampleOutcome {
    match result.stop {
        StopReason::EdgeCollapse { edge: 0, .. } => ExampleOutcome::FiniteTimeCollapse,
        StopReason::ReachedTmax => {
            let frames = &monitors.frames;
            let last = frames.last().unwrap();
            if last.central_length <= 10.0 * cfg.min_edge_length {
                return ExampleOutcome::SlowCollapse;
            }
            // Compare the central length over the last fifth of the run.
            let t_ref = last.t - 0.2 * (last.t - frames[0].t);
            let ref_len = frames
                .iter()
                .find(|fr| fr.t >= t_ref)
                .map(|fr| fr.central_length)
                .unwrap_or(last.central_length);
            let rel = (ref_len - last.central_length) / last.central_length.max(1e-300);
            if rel < 1e-2 {
                ExampleOutcome::ConvergedToRegular
            } else {
                ExampleOutcome::SlowCollapse
            }
        }
        StopReason::EdgeCollapse { .. } => ExampleOutcome::FiniteTimeCollapse,
        _ => ExampleOutcome::Aborted,
    }
}

/// True when the convexity and gradient bounds hold at every monitored frame:
/// `k1 >= -tol` and `v1` within `[1 - tol, 2/sqrt(3) + tol]`.
pub fn check_v_bounds(monitors: &ExampleMonitors) -> bool {
    check_v_bounds_with_tol(monitors, 1e-6)
}

pub fn check_v_bounds_with_tol(monitors: &ExampleMonitors, tol: f64) -> bool {
    let upper = 2.0 / 3.0_f64.sqrt() + tol;
    monitors.frames.iter().all(|f| {
        f.k1_min >= -tol && f.v1_min >= 1.0 - tol && f.v1_max <= upper
    })
}

// ---------------------------------------------------------------------------
// 1-D heat barriers
// ---------------------------------------------------------------------------

/// Crank-Nicolson stepper for `u_t = c u_xx` on `[0, 1]` with `u(0) = 0` and
/// `u_x(1) = slope`, substepped so the discrete maximum principle holds.
#[derive(Debug, Clone)]
pub struct HeatBarrier {
    pub values: Vec<f64>,
    pub diffusivity: f64,
    pub slope: f64,
}

fn tridiag_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut d = diag.to_vec();
    for q in 1..n {
        let w = sub[q - 1] / d[q - 1];
        d[q] -= w * sup[q - 1];
        let prev = rhs[q - 1];
        rhs[q] -= w * prev;
    }
    rhs[n - 1] /= d[n - 1];
    for q in (0..n - 1).rev() {
        let next = rhs[q + 1];
        rhs[q] = (rhs[q] - sup[q] * next) / d[q];
    }
}

impl HeatBarrier {
    pub fn new(initial: Vec<f64>, diffusivity: f64, slope: f64) -> Self {
        Self { values: initial, diffusivity, slope }
    }

    pub fn grid_m(&self) -> usize {
        self.values.len() - 1
    }

    /// Advances by `dt`, substepping to keep `c dt / h^2 <= 1`.
    pub fn advance(&mut self, dt: f64) {
        let m = self.grid_m();
        let h = 1.0 / m as f64;
        let mu_full = self.diffusivity * dt / (h * h);
        let substeps = mu_full.ceil().max(1.0) as usize;
        let mu = mu_full / substeps as f64;
        for _ in 0..substeps {
            self.cn_step(mu, h);
        }
    }

    fn cn_step(&mut self, mu: f64, h: f64) {
        let m = self.grid_m();
        let u = &self.values;
        // Unknowns q = 1..=m; the ghost sample u_{m+1} = u_{m-1} + 2 h slope
        // encodes the Neumann side and is exact for linear profiles.
        let n = m;
        let mut sub = vec![-0.5 * mu; n - 1];
        let diag = vec![1.0 + mu; n];
        let mut sup = vec![-0.5 * mu; n - 1];
        let mut rhs = vec![0.0; n];
        for q in 1..=m {
            let u_prev = if q == 1 { 0.0 } else { u[q - 1] };
            let u_next = if q == m { u[m - 1] + 2.0 * h * self.slope } else { u[q + 1] };
            rhs[q - 1] = 0.5 * mu * u_prev + (1.0 - mu) * u[q] + 0.5 * mu * u_next;
        }
        // Fold the explicit half of the boundary data into the rhs and the
        // ghost column into the matrix row for q = m.
        rhs[n - 1] += 0.5 * mu * 2.0 * h * self.slope;
        sub[n - 2] = -mu;
        sup[0] = -0.5 * mu; // row q=1 has no dependence on u_0 (Dirichlet 0)
        tridiag_solve(&sub, &diag, &sup, &mut rhs);
        let mut next = vec![0.0; m + 1];
        next[0] = 0.0;
        next[1..=m].copy_from_slice(&rhs);
        self.values = next;
    }

    pub fn sup_distance_to_linear(&self) -> f64 {
        let m = self.grid_m();
        (0..=m)
            .map(|q| (self.values[q] - self.slope * q as f64 / m as f64).abs())
            .fold(0.0, f64::max)
    }
}

/// Resamples the bottom-left arc of a frame as a graph over the horizontal
/// axis on `mb + 1` uniform abscissae, measured from the endpoint height.
/// Returns values of `u >= 0` with `u[0] = 0` at the endpoint.
pub fn extract_graph(frame: &Frame, mb: usize) -> Result<Vec<f64>, ExampleError> {
    let arc = &frame.curves[1];
    for q in 0..arc.len() - 1 {
        if arc[q + 1].x <= arc[q].x {
            return Err(ExampleError::NotAGraph(q));
        }
    }
    let xs: Vec<f64> = arc.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = arc.iter().map(|p| p.y).collect();
    let ix = MonotoneCubic::new(&xs);
    let iy = MonotoneCubic::new(&ys);
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let y0 = ys[0];
    let mut out = Vec::with_capacity(mb + 1);
    for r in 0..=mb {
        let target = x0 + (x1 - x0) * r as f64 / mb as f64;
        // Invert the monotone map x(t) by bisection.
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if ix.eval(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        out.push(iy.eval(t) - y0);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct BarrierFrameReport {
    pub t: f64,
    /// Largest amount by which `u` drops under the lower barrier.
    pub lower_violation: f64,
    /// Largest amount by which `u` exceeds the upper barrier.
    pub upper_violation: f64,
    pub u_gap_to_linear: f64,
    pub v_gap_to_linear: f64,
    pub w_gap_to_linear: f64,
}

#[derive(Debug, Clone)]
pub struct BarrierReport {
    pub frames: Vec<BarrierFrameReport>,
    /// Fitted exponential decay rates of the gap to the linear profile for
    /// `(u, v, w)`, over the window where the fit is clean.
    pub rates: (f64, f64, f64),
}

fn fit_decay_rate(times: &[f64], gaps: &[f64]) -> f64 {
    // Window: gaps between 1e-2 and 1e-6 of the initial gap, in the tail.
    let g0 = gaps[0].abs().max(1e-300);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(gaps)
        .filter(|(_, g)| {
            let rel = g.abs() / g0;
            rel < 1e-1 && rel > 1e-7 && g.abs() > 1e-13
        })
        .map(|(&t, &g)| (t, g.abs().ln()))
        .collect();
    if pts.len() < 4 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    -(n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Sandwiches the arc graph between heat barriers with diffusivities 1/4 and
/// 1 sharing its boundary data, stepping them to each frame time.
///
/// `slope` is the Neumann datum at the junction side in graph coordinates;
/// with the default geometry it is `tan(π/6)`, and `sqrt(3)` reproduces the
/// steeper variant.
pub fn heat_barrier_compare(
    frames: &[Frame],
    half_width: f64,
    slope: f64,
    mb: usize,
) -> Result<BarrierReport, ExampleError> {
    let u0 = extract_graph(&frames[0], mb)?;
    // Normalized coordinate x in [0, 1]; physical length is half_width, so
    // diffusivities scale by 1/a^2 and the Neumann datum by a.
    let a2 = half_width * half_width;
    let g_norm = slope * half_width;
    let mut v = HeatBarrier::new(u0.clone(), 0.25 / a2, g_norm);
    let mut w = HeatBarrier::new(u0.clone(), 1.0 / a2, g_norm);
    let mut reports = Vec::new();
    let mut times = Vec::new();
    let mut gaps_u = Vec::new();
    let mut gaps_v = Vec::new();
    let mut gaps_w = Vec::new();
    let mut t_prev = frames[0].t;
    for frame in frames {
        if frame.t > t_prev {
            v.advance(frame.t - t_prev);
            w.advance(frame.t - t_prev);
            t_prev = frame.t;
        }
        let u = extract_graph(frame, mb)?;
        let mut lower_violation: f64 = 0.0;
        let mut upper_violation: f64 = 0.0;
        let mut u_gap: f64 = 0.0;
        for r in 0..=mb {
            lower_violation = lower_violation.max(v.values[r] - u[r]);
            upper_violation = upper_violation.max(u[r] - w.values[r]);
            u_gap = u_gap.max((u[r] - g_norm * r as f64 / mb as f64).abs());
        }
        let report = BarrierFrameReport {
            t: frame.t,
            lower_violation,
            upper_violation,
            u_gap_to_linear: u_gap,
            v_gap_to_linear: v.sup_distance_to_linear(),
            w_gap_to_linear: w.sup_distance_to_linear(),
        };
        times.push(frame.t);
        gaps_u.push(report.u_gap_to_linear);
        gaps_v.push(report.v_gap_to_linear);
        gaps_w.push(report.w_gap_to_linear);
        reports.push(report);
    }
    let rates = (
        fit_decay_rate(&times, &gaps_u),
        fit_decay_rate(&times, &gaps_v),
        fit_decay_rate(&times, &gaps_w),
    );
    Ok(BarrierReport { frames: reports, rates })
}

// ---------------------------------------------------------------------------
// Backward heat kernel and the monotonicity identity
// ---------------------------------------------------------------------------

/// Weighted squared curvature `g = (k v)^2` with `v = 1/<ν, ω>` along one
/// edge of each frame. Boundary curvatures are extrapolated from interior
/// samples so the series is smooth through the edge ends; one-sided boundary
/// stencils would leave an error kink there that costs an order when the
/// series is differentiated pointwise.
pub fn weighted_curvature_series(frames: &[Frame], edge: usize) -> Vec<Vec<f64>> {
    frames
        .iter()
        .map(|frame| {
            let samples = &frame.curves[edge];
            let fields = arc_fields(samples);
            let m = samples.len() - 1;
            let mut k = fields.k_oriented.clone();
            k[0] = 3.0 * k[1] - 3.0 * k[2] + k[3];
            k[m] = 3.0 * k[m - 1] - 3.0 * k[m - 2] + k[m - 3];
            (0..=m)
                .map(|q| {
                    let v = 1.0 / fields.nu[q].dot(&VERTICAL);
                    (k[q] * v) * (k[q] * v)
                })
                .collect()
        })
        .collect()
}

/// Backward heat kernel value `(4π(t0-t))^{-1/2} exp(-|p-p0|^2 / 4(t0-t))`.
pub fn gaussian_density(t: f64, p: Vec2, t0: f64, p0: Vec2) -> Result<f64, ExampleError> {
    if t >= t0 {
        return Err(ExampleError::TimeOrder { t, t0 });
    }
    let tau = t0 - t;
    Ok((4.0 * std::f64::consts::PI * tau).powf(-0.5) * (-(p - p0).norm_squared() / (4.0 * tau)).exp())
}

#[derive(Debug, Clone)]
pub struct MonotonicityRow {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// The quadratic term in motion-consistent product form
    /// `-∫ (k + P)(w + P) ρ f ds` with `P = <γ-p0, ν>/2(t0-t)` and `w` the
    /// normal velocity of the recorded motion; equals the square form when
    /// the motion is exactly by curvature.
    pub quadratic_term: f64,
    /// The exact square `-∫ (k + P)^2 ρ f ds`, nonpositive by construction.
    pub quadratic_term_symmetric: f64,
    /// Heat part `∫ ρ (∂_t - ∂_s^2) f ds`.
    pub heat_term: f64,
    /// Tangential part `∫ (∂_s λ - λ <γ-p0, τ>/2(t0-t)) ρ f ds`.
    pub tangential_term: f64,
    /// Boundary evaluations `(ρ ∂_s f - f ∂_s ρ)` at the ends.
    pub boundary_term: f64,
    /// Scale of the identity, for relative tolerances.
    pub scale: f64,
}

/// Checks the evolution identity for `∫ (ρ∘γ) f ds` on one edge of a recorded
/// run: the time derivative (differenced across frames) against the quadrature
/// of every term, including the boundary contributions
/// `(ρ∘γ) ∂_s f - f ∂_s(ρ∘γ)` at the edge ends.
pub fn monotonicity_residual(
    frames: &[Frame],
    edge: usize,
    f_series: &[Vec<f64>],
    t0: f64,
    p0: Vec2,
) -> Result<Vec<MonotonicityRow>, ExampleError> {
    assert_eq!(frames.len(), f_series.len());
    let weighted_integral = |frame: &Frame, f: &[f64]| -> Result<f64, ExampleError> {
        let samples = &frame.curves[edge];
        let fields = arc_fields(samples);
        let mut acc = 0.0;
        for q in 0..samples.len() {
            acc += gaussian_density(frame.t, samples[q], t0, p0)? * f[q] * fields.ds[q];
        }
        Ok(acc)
    };
    let mut rows = Vec::new();
    for j in 1..frames.len() - 1 {
        let frame = &frames[j];
        if frame.t >= t0 {
            return Err(ExampleError::TimeOrder { t: frame.t, t0 });
        }
        let samples = &frame.curves[edge];
        let n = samples.len();
        let m = n - 1;
        let fields = arc_fields(samples);
        let dtw = frames[j + 1].t - frames[j - 1].t;
        let lhs = (weighted_integral(&frames[j + 1], &f_series[j + 1])?
            - weighted_integral(&frames[j - 1], &f_series[j - 1])?)
            / dtw;

        let tau_rem = t0 - frame.t;
        let d2 = second_derivative_samples(samples);
        // Velocity field from centered frame differences; its normal part is
        // the effective normal speed of the recorded motion.
        let velocity: Vec<Vec2> = (0..n)
            .map(|q| (frames[j + 1].curves[edge][q] - frames[j - 1].curves[edge][q]) / dtw)
            .collect();
        let lambda: Vec<f64> = (0..n)
            .map(|q| velocity[q].dot(&fields.tau[q]))
            .collect();
        let dlambda = scalar_derivative(&lambda, m);
        let f = &f_series[j];
        let df = scalar_derivative(f, m);
        let d2f = {
            let mut v = Vec::with_capacity(n);
            let h2 = (m * m) as f64;
            v.push((2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) * h2);
            for q in 1..m {
                v.push((f[q + 1] - 2.0 * f[q] + f[q - 1]) * h2);
            }
            v.push((2.0 * f[m] - 5.0 * f[m - 1] + 4.0 * f[m - 2] - f[m - 3]) * h2);
            v
        };
        let dtf: Vec<f64> = (0..n)
            .map(|q| (f_series[j + 1][q] - f_series[j - 1][q]) / dtw)
            .collect();

        let mut t_heat = 0.0;
        let mut t_quad = 0.0;
        let mut t_quad_sym = 0.0;
        let mut t_tangential = 0.0;
        let mut scale = 0.0_f64;
        for q in 0..n {
            let rho = gaussian_density(frame.t, samples[q], t0, p0)?;
            let w = fields.ds[q];
            let speed = fields.speed[q];
            // ∂_s^2 f = f_xx / |γ'|^2 - f_x <γ'', τ> / |γ'|^3
            let dss_f = d2f[q] / (speed * speed)
                - df[q] * d2[q].dot(&fields.tau[q]) / (speed * speed * speed);
            t_heat += rho * (dtf[q] - dss_f) * w;
            let k_oriented = fields.k_oriented[q];
            let p_val = (samples[q] - p0).dot(&fields.nu[q]) / (2.0 * tau_rem);
            let w_normal = velocity[q].dot(&fields.nu[q]);
            t_quad -= (k_oriented + p_val) * (w_normal + p_val) * rho * f[q] * w;
            t_quad_sym -= (k_oriented + p_val) * (k_oriented + p_val) * rho * f[q] * w;
            let ds_lambda = dlambda[q] / speed;
            t_tangential += (ds_lambda
                - lambda[q] * (samples[q] - p0).dot(&fields.tau[q]) / (2.0 * tau_rem))
                * rho
                * f[q]
                * w;
            scale = scale
                .max((rho * (dtf[q] - dss_f) * w).abs())
                .max(((k_oriented + p_val) * (w_normal + p_val) * rho * f[q] * w).abs());
        }
        // Boundary term; ∂_s(ρ∘γ) = -<γ-p0, τ> ρ / 2(t0-t) analytically.
        let boundary = |q: usize, sign: f64| -> Result<f64, ExampleError> {
            let rho = gaussian_density(frame.t, samples[q], t0, p0)?;
            let ds_f = df[q] / fields.speed[q];
            let ds_rho = -(samples[q] - p0).dot(&fields.tau[q]) / (2.0 * tau_rem) * rho;
            Ok(sign * (rho * ds_f - f[q] * ds_rho))
        };
        let t_boundary = boundary(m, 1.0)? + boundary(0, -1.0)?;
        let rhs = t_heat + t_quad + t_tangential + t_boundary;
        let scale = scale
            .max(lhs.abs())
            .max(t_quad.abs())
            .max(t_tangential.abs())
            .max(t_boundary.abs())
            .max(1e-12);
        rows.push(MonotonicityRow {
            t: frame.t,
            lhs,
            rhs,
            residual: (lhs - rhs).abs(),
            quadratic_term: t_quad,
            quadratic_term_symmetric: t_quad_sym,
            heat_term: t_heat,
            tangential_term: t_tangential,
            boundary_term: t_boundary,
            scale,
        });
    }
    Ok(rows)
}

pub use crate::flow::RunResult as ExampleRunResult;
