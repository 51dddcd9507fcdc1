//! `qmem` command-line front end: storage simulation, efficiency bound,
//! control optimization, parameter sweeps, shape-based comparison, and
//! protocol classification.
//!
//! Exit codes: 0 success, 1 computation failure, 2 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use qmem_core::bound;
use qmem_core::optimizer::{optimize_control, optimize_theta_only, OptimizeOptions};
use qmem_core::protocols::{self, classify};
use qmem_core::shapeopt::{compare_methods, CompareOptions, ShapeOptions};
use qmem_core::solver::{default_grids, energy_balance, simulate_storage};
use qmem_core::sweep::{run_sweep, SpecCore, SweepMode, SweepRecord, SweepSpec};
use qmem_core::{ControlParams, Error, GridOptions, MemoryParams};

#[derive(Parser)]
#[command(name = "qmem", version, about = "Broadband Lambda-type quantum memory toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Chebyshev points in z.
    #[arg(long, default_value_t = 48)]
    n_z: usize,
    /// Time step = min(sigma) / divisor.
    #[arg(long, default_value_t = 20.0)]
    step_divisor: f64,
}

impl GridArgs {
    fn to_options(&self) -> GridOptions {
        GridOptions {
            n_z: self.n_z,
            step_divisor: self.step_divisor,
        }
    }
}

#[derive(Args, Clone)]
struct MemoryArgs {
    /// Resonant optical depth.
    #[arg(long)]
    d: f64,
    /// Signal intensity FWHM (units of 1/gamma).
    #[arg(long)]
    tau: f64,
    /// Two-photon detuning (units of gamma).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    delta: f64,
    /// Spin-wave decay rate (units of gamma).
    #[arg(long, default_value_t = 0.0)]
    gamma_b: f64,
}

impl MemoryArgs {
    fn to_params(&self) -> qmem_core::Result<MemoryParams> {
        MemoryParams::new(self.d, self.tau, self.delta, self.gamma_b)
    }
}

#[derive(Args, Clone)]
struct ControlArgs {
    /// Control pulse area in radians.
    #[arg(long, conflicts_with = "theta_pi")]
    theta: Option<f64>,
    /// Control pulse area in units of pi.
    #[arg(long)]
    theta_pi: Option<f64>,
    /// Control delay relative to the signal peak.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    delay: f64,
    /// Control intensity FWHM.
    #[arg(long)]
    tau_ctrl: f64,
}

impl ControlArgs {
    fn to_params(&self) -> qmem_core::Result<ControlParams> {
        let theta = match (self.theta, self.theta_pi) {
            (Some(t), None) => t,
            (None, Some(t)) => t * std::f64::consts::PI,
            _ => {
                return Err(Error::InvalidArgument(
                    "exactly one of --theta / --theta-pi is required".into(),
                ))
            }
        };
        ControlParams::new(theta, self.delay, self.tau_ctrl)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one storage run and report efficiencies.
    Solve {
        #[command(flatten)]
        memory: MemoryArgs,
        #[command(flatten)]
        control: ControlArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Write the final spin-wave profile B(z) as CSV.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Protocol-independent efficiency bound at a given optical depth.
    Bound {
        #[arg(long)]
        d: f64,
        /// Kernel grid size.
        #[arg(long, default_value_t = bound::DEFAULT_BOUND_N)]
        n: usize,
        /// Also report the total (storage + retrieval) bound, the square.
        #[arg(long)]
        square: bool,
    },
    /// Optimize the Gaussian control for one memory point.
    Optimize {
        #[command(flatten)]
        memory: MemoryArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Optimize the pulse area only (zero delay, matched duration).
        #[arg(long)]
        theta_only: bool,
        /// Bound kernel grid size for eta_opt.
        #[arg(long, default_value_t = bound::DEFAULT_BOUND_N)]
        bound_n: usize,
    },
    /// Run or resume a parameter sweep from a JSON spec file.
    Sweep {
        /// Path to a JSON SweepSpec.
        #[arg(long)]
        spec: PathBuf,
        /// Override the spec's output path.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Override the worker count (env QMEM_WORKERS, then the spec).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Gaussian versus shape-based optimization at fixed depth.
    Compare {
        #[arg(long)]
        d: f64,
        /// Comma-separated signal durations.
        #[arg(long, value_delimiter = ',')]
        tau_list: Vec<f64>,
        #[command(flatten)]
        grid: GridArgs,
        /// Bound kernel grid size for eta_opt.
        #[arg(long, default_value_t = bound::DEFAULT_BOUND_N)]
        bound_n: usize,
        /// Write the table in the sweep CSV schema.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Optimize one point and report its protocol diagnostics.
    Classify {
        #[command(flatten)]
        memory: MemoryArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Bound kernel grid size for eta_opt.
        #[arg(long, default_value_t = bound::DEFAULT_BOUND_N)]
        bound_n: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::InvalidArgument(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn echo_config(command: &str, value: serde_json::Value) {
    println!("# config: {}", json!({ "command": command, "args": value }));
}

fn run(command: Command) -> qmem_core::Result<()> {
    match command {
        Command::Solve {
            memory,
            control,
            grid,
            dump,
        } => cmd_solve(memory, control, grid, dump),
        Command::Bound { d, n, square } => cmd_bound(d, n, square),
        Command::Optimize {
            memory,
            grid,
            theta_only,
            bound_n,
        } => cmd_optimize(memory, grid, theta_only, bound_n),
        Command::Sweep {
            spec,
            output,
            workers,
        } => cmd_sweep(spec, output, workers),
        Command::Compare {
            d,
            tau_list,
            grid,
            bound_n,
            output,
        } => cmd_compare(d, tau_list, grid, bound_n, output),
        Command::Classify {
            memory,
            grid,
            bound_n,
        } => cmd_classify(memory, grid, bound_n),
    }
}

fn cmd_solve(
    memory: MemoryArgs,
    control: ControlArgs,
    grid: GridArgs,
    dump: Option<PathBuf>,
) -> qmem_core::Result<()> {
    let m = memory.to_params()?;
    let g = control.to_params()?;
    let opts = grid.to_options();
    echo_config(
        "solve",
        json!({ "memory": m, "control": g, "grid": opts }),
    );
    let (zg, tg) = default_grids(&m, &g, &opts)?;
    let r = simulate_storage(&m, &g, &zg, &tg)?;
    println!("eta          = {}", r.eta);
    println!("eta_total    = {}", r.eta_total);
    println!("ledger_resid = {:.3e}", energy_balance(&r)?);
    println!("grid         = {} ({} time steps)", opts.fingerprint(), tg.n_steps);
    if let Some(path) = dump {
        let mut out = String::from("z,re_b,im_b,abs2_b\n");
        for (i, &z) in zg.nodes.iter().enumerate() {
            let b = r.b_final[i];
            out.push_str(&format!("{z},{},{},{}\n", b.re, b.im, b.norm_sqr()));
        }
        std::fs::write(&path, out)?;
        println!("spin-wave profile written to {}", path.display());
    }
    Ok(())
}

fn cmd_bound(d: f64, n: usize, square: bool) -> qmem_core::Result<()> {
    echo_config("bound", json!({ "d": d, "n": n, "square": square }));
    let (eta_opt, delta) = bound::eta_opt_checked(d, n)?;
    println!("eta_opt      = {eta_opt}");
    if square {
        println!("eta_opt^2    = {}", eta_opt * eta_opt);
    }
    println!("grid_n       = {n}");
    println!("richardson   = {delta:.3e}");
    Ok(())
}

fn cmd_optimize(
    memory: MemoryArgs,
    grid: GridArgs,
    theta_only: bool,
    bound_n: usize,
) -> qmem_core::Result<()> {
    let m = memory.to_params()?;
    let gopts = grid.to_options();
    echo_config(
        "optimize",
        json!({ "memory": m, "grid": gopts, "theta_only": theta_only, "bound_n": bound_n }),
    );
    let opts = OptimizeOptions {
        grid: gopts,
        eta_opt: Some(bound::eta_opt(m.d, bound_n)?),
        ..Default::default()
    };
    let r = if theta_only {
        optimize_theta_only(&m, &opts)?
    } else {
        optimize_control(&m, &opts)?
    };
    println!("theta        = {} ({} pi)", r.best_g.theta, r.best_g.theta / std::f64::consts::PI);
    println!("delay        = {} ({} tau_sig)", r.best_g.delay, r.best_g.delay / m.tau_sig);
    println!("tau_ctrl     = {} ({} tau_sig)", r.best_g.tau_ctrl, r.best_g.tau_ctrl / m.tau_sig);
    println!("eta          = {}", r.eta);
    println!("eta_opt      = {}", r.eta_opt);
    println!("eta_ratio    = {}", r.eta_ratio);
    println!("seed         = {}", r.seed_label);
    println!("n_evals      = {}", r.n_evals);
    println!("converged    = {}", r.converged);
    Ok(())
}

fn cmd_sweep(
    spec_path: PathBuf,
    output: Option<PathBuf>,
    workers: Option<usize>,
) -> qmem_core::Result<()> {
    let text = std::fs::read_to_string(&spec_path)?;
    let mut spec: SweepSpec = serde_json::from_str(&text)?;
    if let Some(out) = output {
        spec.output = out;
    }
    if let Some(w) = workers {
        spec.workers = w;
    } else if let Ok(w) = std::env::var("QMEM_WORKERS") {
        spec.workers = w
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad QMEM_WORKERS value {w:?}")))?;
    }
    spec.validate()?;
    echo_config("sweep", serde_json::to_value(&spec)?);
    println!("points       = {}", spec.n_points());
    let out = run_sweep(&spec)?;
    println!("resumed      = {}", out.n_resumed);
    println!("computed     = {}", out.n_computed);
    println!("failed       = {}", out.n_failed);
    println!("output       = {}", spec.output.display());
    Ok(())
}

fn cmd_compare(
    d: f64,
    mut tau_list: Vec<f64>,
    grid: GridArgs,
    bound_n: usize,
    output: Option<PathBuf>,
) -> qmem_core::Result<()> {
    if tau_list.is_empty() {
        return Err(Error::InvalidArgument("--tau-list is empty".into()));
    }
    tau_list.sort_by(|a, b| a.partial_cmp(b).unwrap());
    tau_list.dedup();
    let gopts = grid.to_options();
    echo_config(
        "compare",
        json!({ "d": d, "tau_list": tau_list, "grid": gopts, "bound_n": bound_n }),
    );
    let eta_opt = bound::eta_opt(d, bound_n)?;
    let opts = CompareOptions {
        shape: ShapeOptions {
            grid: gopts,
            ..Default::default()
        },
        optimize: OptimizeOptions {
            grid: gopts,
            eta_opt: Some(eta_opt),
            ..Default::default()
        },
    };
    let rows = compare_methods(d, &tau_list, &opts)?;
    println!("{:>10} {:>12} {:>12} {:>12}", "tau_sig", "eta_gauss", "eta_shape", "eta_opt");
    for r in &rows {
        println!(
            "{:>10} {:>12.6} {:>12.6} {:>12.6}",
            r.tau_sig, r.eta_gaussian, r.eta_shape, r.eta_opt
        );
    }
    if let Some(path) = output {
        // sweep-schema CSV; the eta column carries the shape-based value
        let core = SpecCore {
            d_values: vec![d],
            tau_values: tau_list.clone(),
            delta_values: vec![0.0],
            mode: SweepMode::CompareShapes,
            grid: gopts,
            bound_n,
        };
        let mut records: Vec<SweepRecord> = Vec::with_capacity(rows.len());
        for r in &rows {
            let m = MemoryParams::resonant(d, r.tau_sig)?;
            let (zg, tg) = default_grids(&m, &r.best_g, &gopts)?;
            let sim = simulate_storage(&m, &r.best_g, &zg, &tg)?;
            let c = protocols::character_ratio(&sim, &m, &zg, &tg)?;
            let c0 = protocols::pure_ats_reference(&m, &gopts)?;
            let diag = protocols::classify_from_measurements(&m, &r.best_g, c, c0)?;
            records.push(SweepRecord {
                delta: 0.0,
                d,
                tau_sig: r.tau_sig,
                theta: r.best_g.theta,
                delay: r.best_g.delay,
                tau_ctrl: r.best_g.tau_ctrl,
                eta: r.eta_shape,
                eta_opt: r.eta_opt,
                eta_ratio: r.eta_shape / r.eta_opt,
                adiabaticity: diag.adiabaticity,
                c_tilde: diag.normalized_character,
                label: diag.label.as_str().to_string(),
                n_evals: 0,
                converged: true,
                grid_fingerprint: gopts.fingerprint(),
                status: "ok".into(),
                reason: String::new(),
            });
        }
        qmem_core::sweep::write_records(&path, &core, &gopts.fingerprint(), &mut records)?;
        println!("table written to {}", path.display());
    }
    Ok(())
}

fn cmd_classify(memory: MemoryArgs, grid: GridArgs, bound_n: usize) -> qmem_core::Result<()> {
    let m = memory.to_params()?;
    let gopts = grid.to_options();
    echo_config(
        "classify",
        json!({ "memory": m, "grid": gopts, "bound_n": bound_n }),
    );
    let opts = OptimizeOptions {
        grid: gopts,
        eta_opt: Some(bound::eta_opt(m.d, bound_n)?),
        ..Default::default()
    };
    let r = optimize_control(&m, &opts)?;
    let diag = classify(&m, &r, &gopts)?;
    println!("label        = {}", diag.label);
    println!("adiabaticity = {}", diag.adiabaticity);
    println!("eff_depth    = {}", diag.effective_depth);
    println!("C            = {}", diag.character_ratio);
    println!("C_tilde      = {}", diag.normalized_character);
    println!("alt_delay    = {}", diag.alt_delay_band);
    println!("alt_character= {}", diag.alt_character_band);
    println!("low_depth    = {}", diag.low_depth_warning);
    println!("eta          = {}", r.eta);
    println!("eta_ratio    = {}", r.eta_ratio);
    Ok(())
}
