//! Command-line front end: minimal networks, flow runs, graph
//! parametrization, spectra, gradient-inequality checks, and the rectangle
//! example, with reproducible file outputs.

use clap::{Args, Parser, Subcommand};
use netflow::examples::{
    check_v_bounds, heat_barrier_compare, run_example, RectExampleConfig,
};
use netflow::flow::{run, RunOptions, SolverConfig, StopReason};
use netflow::geom::{rot_ccw, Vec2};
use netflow::graphrep::solve_graph_rep;
use netflow::io;
use netflow::minimal::{descend_length, to_network, DescentOptions};
use netflow::network::{
    build_network, junction_angle_residual, length, resample, DiscreteCurve, Network,
};
use netflow::variations::{assemble_q, ls_check, spectrum, VSpaceBasis};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "netflow",
    version,
    about = "Curvature flow of planar triple-junction networks"
)]
struct Cli {
    /// JSON config file; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a minimal network for a fixed topology and endpoints.
    Minimize(MinimizeArgs),
    /// Run the curvature flow from a network file.
    Evolve(EvolveArgs),
    /// Graph parametrization of a network over a minimal base.
    Param(ParamArgs),
    /// Spectrum of the constrained second-variation form at a minimal base.
    Spectrum(SpectrumArgs),
    /// Gradient-inequality report for a logged trajectory.
    LsCheck(LsCheckArgs),
    /// Built-in experiment configurations.
    #[command(subcommand)]
    Example(ExampleCommand),
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
struct MinimizeArgs {
    #[arg(long)]
    #[serde(default)]
    topology: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    endpoints: Option<PathBuf>,
    /// Junction gradient tolerance.
    #[arg(long)]
    #[serde(default)]
    tol: Option<f64>,
    /// Samples per edge of the emitted network.
    #[arg(long)]
    #[serde(default)]
    m: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
struct EvolveArgs {
    #[arg(long)]
    #[serde(default)]
    network: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    dt: Option<f64>,
    /// Resample each edge to this segment count before the run.
    #[arg(long)]
    #[serde(default)]
    m: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    tmax: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    log: Option<PathBuf>,
    /// Emit an SVG snapshot every N recorded frames into the log directory.
    #[arg(long)]
    #[serde(default)]
    svg_every: Option<usize>,
    /// Log every this many steps.
    #[arg(long)]
    #[serde(default)]
    stride: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    newton_tol: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    min_edge_length: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    max_curvature: Option<f64>,
    /// Amplitude of a seeded random normal perturbation of the initial data.
    #[arg(long)]
    #[serde(default)]
    perturb_normal: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
struct ParamArgs {
    #[arg(long)]
    #[serde(default)]
    target: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    base: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
struct SpectrumArgs {
    #[arg(long)]
    #[serde(default)]
    base: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    m: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    count: Option<usize>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
struct LsCheckArgs {
    #[arg(long)]
    #[serde(default)]
    log: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    base: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    theta: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExampleCommand {
    /// The five-curve rectangle configuration with its monitors.
    Rect(RectArgs),
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
struct RectArgs {
    /// Initial central edge length.
    #[arg(long)]
    #[serde(default)]
    l0: Option<f64>,
    /// Half width of the endpoint rectangle.
    #[arg(long)]
    #[serde(default)]
    a: Option<f64>,
    /// Endpoint height.
    #[arg(long)]
    #[serde(default)]
    b: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    dt: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    m: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    tmax: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    symmetry: Option<bool>,
    #[arg(long)]
    #[serde(default)]
    min_edge_length: Option<f64>,
    /// Emit an SVG snapshot every N recorded frames.
    #[arg(long)]
    #[serde(default)]
    svg_every: Option<usize>,
    /// Neumann slope for the barrier comparison (defaults to tan(pi/6)).
    #[arg(long)]
    #[serde(default)]
    barrier_slope: Option<f64>,
}

#[derive(Debug)]
struct CliError(String);

impl<E: std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

/// Fills unset fields of `args` from the JSON config file section `key`;
/// explicit flags win over file values.
fn merge_config<T: Serialize + for<'de> Deserialize<'de>>(
    args: T,
    config: &Option<PathBuf>,
    key: &str,
) -> Result<T, CliError> {
    let Some(path) = config else { return Ok(args) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError(format!("{path:?}: {e}")))?;
    let file: serde_json::Value = serde_json::from_str(&text)?;
    let section = file.get(key).cloned().unwrap_or(serde_json::Value::Null);
    if section.is_null() {
        return Ok(args);
    }
    let mut merged = section;
    let arg_vals = serde_json::to_value(&args)?;
    if let (Some(m), Some(a)) = (merged.as_object_mut(), arg_vals.as_object()) {
        for (k, v) in a {
            if !v.is_null() {
                m.insert(k.clone(), v.clone());
            }
        }
    }
    Ok(serde_json::from_value(merged)?)
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError(format!("missing required value for --{flag}")))
}

fn read_network(path: &Path) -> Result<Network, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError(format!("{path:?}: {e}")))?;
    Ok(io::network_from_json(&text)?)
}

/// Writes the resolved config JSON next to an output path and returns its
/// hash for log headers.
fn write_resolved<T: Serialize>(out: &Path, key: &str, resolved: &T) -> Result<String, CliError> {
    let value = serde_json::json!({ key: resolved });
    let canonical = serde_json::to_string_pretty(&value)?;
    let hash = io::config_hash(&canonical);
    let cfg_path = out.with_extension("config.json");
    io::write_atomic(&cfg_path, canonical.as_bytes())?;
    Ok(hash)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Minimize(args) => cmd_minimize(merge_config(args, &cli.config, "minimize")?),
        Command::Evolve(args) => cmd_evolve(merge_config(args, &cli.config, "evolve")?),
        Command::Param(args) => cmd_param(merge_config(args, &cli.config, "param")?),
        Command::Spectrum(args) => cmd_spectrum(merge_config(args, &cli.config, "spectrum")?),
        Command::LsCheck(args) => cmd_ls_check(merge_config(args, &cli.config, "ls_check")?),
        Command::Example(ExampleCommand::Rect(args)) => {
            cmd_example_rect(merge_config(args, &cli.config, "example_rect")?)
        }
    }
}

fn cmd_minimize(mut args: MinimizeArgs) -> Result<(), CliError> {
    let topology_path = required(args.topology.take(), "topology")?;
    let endpoints_path = required(args.endpoints.take(), "endpoints")?;
    let out = required(args.out.take(), "out")?;
    let tol = args.tol.unwrap_or(1e-12);
    let m = args.m.unwrap_or(16);

    let topo_text = std::fs::read_to_string(&topology_path)
        .map_err(|e| CliError(format!("{topology_path:?}: {e}")))?;
    let topology = io::topology_from_json(&topo_text)?;
    let pos_text = std::fs::read_to_string(&endpoints_path)
        .map_err(|e| CliError(format!("{endpoints_path:?}: {e}")))?;
    let positions = io::positions_from_json(&pos_text)?;
    let endpoint_positions: Vec<(usize, Vec2)> = positions
        .positions
        .iter()
        .map(|r| (r.id, Vec2::new(r.position[0], r.position[1])))
        .collect();
    let mut init: Vec<(usize, Vec2)> = positions
        .init
        .iter()
        .map(|r| (r.id, Vec2::new(r.position[0], r.position[1])))
        .collect();
    if init.is_empty() {
        init = harmonic_init(&topology, &endpoint_positions)?;
    }
    let sn = descend_length(
        &topology,
        &endpoint_positions,
        &init,
        tol,
        DescentOptions::default(),
    )?;
    let network = to_network(&sn, m)?;
    let resolved = MinimizeArgs {
        topology: Some(topology_path),
        endpoints: Some(endpoints_path),
        tol: Some(tol),
        m: Some(m),
        out: Some(out.clone()),
    };
    write_resolved(&out, "minimize", &resolved)?;
    io::write_atomic(&out, io::network_to_json(&network).as_bytes())?;
    let grad = sn.junction_gradients().into_iter().fold(0.0_f64, f64::max);
    println!("total_length {:.17e}", sn.total_length());
    println!("max_junction_gradient {grad:.3e}");
    println!(
        "max_angle_residual {:.3e}",
        junction_angle_residual(&network)
            .into_iter()
            .fold(0.0_f64, f64::max)
    );
    Ok(())
}

/// Harmonic default placement: each junction at the average of its
/// neighbors, solved as a small linear system anchored at the endpoints.
fn harmonic_init(
    topology: &netflow::topology::NetworkTopology,
    endpoints: &[(usize, Vec2)],
) -> Result<Vec<(usize, Vec2)>, CliError> {
    use nalgebra::{DMatrix, DVector};
    let junctions: Vec<usize> = topology.junctions().iter().map(|j| j.vertex).collect();
    if junctions.is_empty() {
        return Ok(Vec::new());
    }
    let slot = |v: usize| junctions.iter().position(|&w| w == v);
    let nj = junctions.len();
    let mut a: DMatrix<f64> = DMatrix::zeros(nj, nj);
    let mut bx: DVector<f64> = DVector::zeros(nj);
    let mut by: DVector<f64> = DVector::zeros(nj);
    let pos_of = |v: usize| endpoints.iter().find(|(w, _)| *w == v).map(|(_, p)| *p);
    for e in 0..topology.edge_count() {
        let (v0, v1) = topology.edge(e);
        for (s, other) in [(slot(v0), v1), (slot(v1), v0)] {
            let Some(i) = s else { continue };
            a[(i, i)] += 1.0;
            match slot(other) {
                Some(j) => a[(i, j)] -= 1.0,
                None => {
                    let p = pos_of(other)
                        .ok_or_else(|| CliError(format!("no position for endpoint {other}")))?;
                    bx[i] += p.x;
                    by[i] += p.y;
                }
            }
        }
    }
    let lu = a.lu();
    let x = lu
        .solve(&bx)
        .ok_or_else(|| CliError("singular placement system".into()))?;
    let y = lu
        .solve(&by)
        .ok_or_else(|| CliError("singular placement system".into()))?;
    Ok(junctions
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, Vec2::new(x[i], y[i])))
        .collect())
}

fn cmd_evolve(mut args: EvolveArgs) -> Result<(), CliError> {
    let network_path = required(args.network.take(), "network")?;
    let log_path = required(args.log.take(), "log")?;
    let mut network = read_network(&network_path)?;
    if let Some(m) = args.m {
        network = resample(&network, m)?;
    }
    if let Some(amp) = args.perturb_normal {
        let seed = args.seed.unwrap_or(0);
        network = perturb_normal(&network, amp, seed)?;
    }
    let config = SolverConfig {
        dt: args.dt.unwrap_or(1e-4),
        t_max: args.tmax.unwrap_or(1.0),
        newton_tol: args.newton_tol.unwrap_or(1e-10),
        min_edge_length: args.min_edge_length.unwrap_or(1e-4),
        max_curvature_sup: args.max_curvature.unwrap_or(1e3),
        log_stride: args.stride.unwrap_or(1),
        ..SolverConfig::default()
    };
    let resolved = EvolveArgs {
        network: Some(network_path),
        dt: Some(config.dt),
        m: Some(network.m()),
        tmax: Some(config.t_max),
        log: Some(log_path.clone()),
        svg_every: args.svg_every,
        stride: Some(config.log_stride),
        newton_tol: Some(config.newton_tol),
        min_edge_length: Some(config.min_edge_length),
        max_curvature: Some(config.max_curvature_sup),
        perturb_normal: args.perturb_normal,
        seed: args.seed,
    };
    let hash = write_resolved(&log_path, "evolve", &resolved)?;
    let frame_stride = args.svg_every.map(|n| n.max(1) * config.log_stride.max(1));
    let result = run(
        &network,
        &config,
        RunOptions {
            frame_stride,
            config_hash: hash,
            ..Default::default()
        },
    )?;
    io::write_atomic(&log_path, io::log_to_csv(&result.log).as_bytes())?;
    if args.svg_every.is_some() {
        let dir = log_path.parent().unwrap_or_else(|| Path::new("."));
        for (i, frame) in result.frames.iter().enumerate() {
            let curves = frame
                .curves
                .iter()
                .map(|s| DiscreteCurve::new(s.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            let net = build_network(network.topology().clone(), curves)?;
            let path = dir.join(format!("frame_{i:06}.svg"));
            io::write_atomic(&path, io::network_to_svg(&net).as_bytes())?;
        }
    }
    println!("stop {:?}", result.stop);
    println!(
        "final_length {:.17e}",
        result
            .log
            .rows
            .last()
            .map(|r| r.total_length)
            .unwrap_or(f64::NAN)
    );
    Ok(())
}

fn perturb_normal(network: &Network, amplitude: f64, seed: u64) -> Result<Network, CliError> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let curves = network
        .curves()
        .iter()
        .map(|c| {
            let m = c.m();
            let c1: f64 = rng.gen_range(-1.0..1.0);
            let c2: f64 = rng.gen_range(-1.0..1.0);
            let chord = c.sample(m) - c.sample(0);
            let n = rot_ccw(chord / chord.norm());
            DiscreteCurve::new(
                c.samples()
                    .iter()
                    .enumerate()
                    .map(|(q, p)| {
                        let x = q as f64 / m as f64;
                        let bump = c1 * (std::f64::consts::PI * x).sin()
                            + c2 * (2.0 * std::f64::consts::PI * x).sin();
                        p + n * amplitude * bump * x * (1.0 - x) * 4.0
                    })
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(build_network(network.topology().clone(), curves)?)
}

fn cmd_param(mut args: ParamArgs) -> Result<(), CliError> {
    let target_path = required(args.target.take(), "target")?;
    let base_path = required(args.base.take(), "base")?;
    let out = required(args.out.take(), "out")?;
    let target = read_network(&target_path)?;
    let base = read_network(&base_path)?;
    let rep = solve_graph_rep(&target, &base)?;
    let resolved = ParamArgs {
        target: Some(target_path),
        base: Some(base_path),
        out: Some(out.clone()),
    };
    write_resolved(&out, "param", &resolved)?;
    let body = serde_json::json!({
        "version": 1,
        "residual": rep.residual,
        "n": rep.n,
        "t": rep.t,
        "phi": rep.phi,
    });
    io::write_atomic(&out, serde_json::to_string_pretty(&body)?.as_bytes())?;
    println!("residual {:.3e}", rep.residual);
    Ok(())
}

fn cmd_spectrum(mut args: SpectrumArgs) -> Result<(), CliError> {
    let base_path = required(args.base.take(), "base")?;
    let count = args.count.unwrap_or(5);
    let mut base = read_network(&base_path)?;
    if let Some(m) = args.m {
        base = resample(&base, m)?;
    }
    let basis = VSpaceBasis::build(&base);
    let form = assemble_q(&basis);
    let ev = spectrum(&form, count);
    println!("# constrained dimension {}", basis.dim());
    println!("index eigenvalue");
    for (i, lam) in ev.iter().enumerate() {
        println!("{i} {lam:.17e}");
    }
    Ok(())
}

fn cmd_ls_check(mut args: LsCheckArgs) -> Result<(), CliError> {
    let log_path = required(args.log.take(), "log")?;
    let base_path = required(args.base.take(), "base")?;
    let text =
        std::fs::read_to_string(&log_path).map_err(|e| CliError(format!("{log_path:?}: {e}")))?;
    let log = io::log_from_csv(&text)?;
    let base = read_network(&base_path)?;
    let report = ls_check(&log, length(&base), args.theta)?;
    let body = serde_json::json!({
        "version": 1,
        "theta": report.theta,
        "c_ls": report.c_ls,
        "window_samples": report.series.len(),
        "violations": report.violations,
        "h_non_monotone_steps": report.h_non_monotone_steps,
        "series": report.series,
        "h": report.h,
    });
    let rendered = serde_json::to_string_pretty(&body)?;
    match args.out {
        Some(out) => io::write_atomic(&out, rendered.as_bytes())?,
        None => println!("{rendered}"),
    }
    Ok(())
}

fn cmd_example_rect(args: RectArgs) -> Result<(), CliError> {
    let out_dir = required(args.out.clone(), "out")?;
    let cfg = RectExampleConfig {
        half_width: args.a.unwrap_or(1.0),
        endpoint_height: args.b.unwrap_or(1.0 / 3.0_f64.sqrt()),
        central_length: args.l0.unwrap_or(0.3),
        m: args.m.unwrap_or(128),
        dt: args.dt.unwrap_or(1e-4),
        t_max: args.tmax.unwrap_or(10.0),
        symmetry_enforced: args.symmetry.unwrap_or(false),
        min_edge_length: args.min_edge_length.unwrap_or(1e-4),
        ..RectExampleConfig::default()
    };
    let resolved = RectArgs {
        l0: Some(cfg.central_length),
        a: Some(cfg.half_width),
        b: Some(cfg.endpoint_height),
        dt: Some(cfg.dt),
        m: Some(cfg.m),
        tmax: Some(cfg.t_max),
        out: Some(out_dir.clone()),
        symmetry: Some(cfg.symmetry_enforced),
        min_edge_length: Some(cfg.min_edge_length),
        svg_every: args.svg_every,
        barrier_slope: args.barrier_slope,
    };
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError(format!("{out_dir:?}: {e}")))?;
    write_resolved(&out_dir.join("run"), "example_rect", &resolved)?;
    let (result, monitors, outcome) = run_example(&cfg)?;
    io::write_atomic(
        &out_dir.join("trajectory.csv"),
        io::log_to_csv(&result.log).as_bytes(),
    )?;

    let mut mon = String::from(
        "t,central_length,v1_min,v1_max,k1_min,g1_max,junction_slope,lambda1,tangential_identity_residual,neumann_identity_residual\n",
    );
    for f in &monitors.frames {
        mon.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            f.t,
            f.central_length,
            f.v1_min,
            f.v1_max,
            f.k1_min,
            f.g1_max,
            f.junction_slope,
            f.lambda1,
            f.tangential_identity_residual,
            f.neumann_identity_residual
        ));
    }
    io::write_atomic(&out_dir.join("monitors.csv"), mon.as_bytes())?;

    let slope = args.barrier_slope.unwrap_or(1.0 / 3.0_f64.sqrt());
    let barrier = heat_barrier_compare(&result.frames, cfg.half_width, slope, cfg.m)?;
    let mut bar = String::from("t,lower_violation,upper_violation,u_gap,v_gap,w_gap\n");
    for f in &barrier.frames {
        bar.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            f.t,
            f.lower_violation,
            f.upper_violation,
            f.u_gap_to_linear,
            f.v_gap_to_linear,
            f.w_gap_to_linear
        ));
    }
    io::write_atomic(&out_dir.join("barriers.csv"), bar.as_bytes())?;

    if let Some(every) = args.svg_every {
        let topo = netflow::examples::rect_topology();
        for (i, frame) in result.frames.iter().enumerate().step_by(every.max(1)) {
            let curves = frame
                .curves
                .iter()
                .map(|s| DiscreteCurve::new(s.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            let net = build_network(topo.clone(), curves)?;
            io::write_atomic(
                &out_dir.join(format!("frame_{i:06}.svg")),
                io::network_to_svg(&net).as_bytes(),
            )?;
        }
    }

    println!("stop {:?}", result.stop);
    println!("outcome {outcome:?}");
    println!(
        "central_length_final {:.17e}",
        monitors
            .frames
            .last()
            .map(|f| f.central_length)
            .unwrap_or(f64::NAN)
    );
    println!("v_bounds_hold {}", check_v_bounds(&monitors));
    let fmt_rate = |r: f64| {
        if r.is_nan() {
            "n/a(run too short to fit)".to_string()
        } else {
            format!("{r:.6}")
        }
    };
    println!(
        "barrier_rates {} {} {}",
        fmt_rate(barrier.rates.0),
        fmt_rate(barrier.rates.1),
        fmt_rate(barrier.rates.2)
    );
    if matches!(result.stop, StopReason::NewtonFailure { .. }) {
        return Err(CliError("solver failed during the run".into()));
    }
    Ok(())
}
