//! The `herdopt` command-line driver.
//!
//! Exit codes: 0 on success, 2 when a solver fails to converge (any
//! requested output is still written), 1 on usage, parse and I/O errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use herdopt_core::bvp::{solve_with_restarts, BvpOptions};
use herdopt_core::dynamics::{trajectory_cost, ScenarioSpec};
use herdopt_core::gradcheck::{check_scenario, GRADCHECK_TOL};
use herdopt_core::lqr::{simulate_lqr_with, CareOptions, LqrWeights};
use herdopt_core::scenario_io::{
    env_seed, export_trajectory, make_guess, parse_scenario, parse_weights, random_circle_init,
    read_trajectory_csv, scenario_to_string, ExportFormat, GuessStyle, VelocityMode,
    DEFAULT_SPIRAL_RADIUS,
};
use herdopt_core::shooting::{gaussian_costate_guess, shoot};
use herdopt_core::{Error, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "herdopt",
    version,
    about = "Optimal herding controls for dogs and sheep"
)]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GuessKind {
    Zeros,
    Noise,
    Spiral,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the optimality conditions by collocation.
    SolveBvp {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = GuessKind::Spiral)]
        guess: GuessKind,
        /// Final spiral radius for the spiral guess.
        #[arg(long, default_value_t = DEFAULT_SPIRAL_RADIUS)]
        r_f: f64,
        /// Standard deviation of the noise guess.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Nodes in the initial mesh.
        #[arg(long, default_value_t = 50)]
        nodes: usize,
        #[arg(long, default_value_t = BvpOptions::default().max_restarts)]
        max_restarts: usize,
        #[arg(long, default_value_t = BvpOptions::default().max_nodes)]
        max_nodes: usize,
        /// Seed for the noise guess; defaults to the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Trajectory output, `.csv` or `.svg`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Single shooting from a Gaussian initial costate.
    Shoot {
        scenario: PathBuf,
        /// Seed of the costate guess; defaults to the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-loop LQR simulation.
    SimulateLqr {
        scenario: PathBuf,
        /// Weight table (TOML); omitted keys keep their defaults.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-8)]
        rtol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cost of a trajectory CSV under a scenario's weights.
    EvalCost {
        trajectory: PathBuf,
        scenario: PathBuf,
    },
    /// Compare the analytic Jacobians with finite differences.
    CheckGradients {
        scenario: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a scenario with agents placed at random on circles.
    InitRandom {
        m: usize,
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        dog_radius: f64,
        #[arg(long, default_value_t = 1.0)]
        sheep_radius: f64,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Gaussian initial velocities with this standard deviation.
        #[arg(long)]
        velocity_sigma: Option<f64>,
        /// Defaults to HERDOPT_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        /// Scenario output; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn exit_code(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<Error>() {
        Some(
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::Io { .. }
            | Error::DimensionMismatch(_)
            | Error::MissingControls { .. },
        )
        | None => EXIT_USAGE,
        Some(_) => EXIT_NOT_CONVERGED,
    }
}

fn output_format(path: &Path) -> anyhow::Result<ExportFormat> {
    match ExportFormat::from_path(path) {
        Some(f) => Ok(f),
        None => bail!(Error::Validation(format!(
            "{}: output must end in .csv or .svg",
            path.display()
        ))),
    }
}

fn write_output(traj: &Trajectory, out: Option<&Path>) -> anyhow::Result<()> {
    if let Some(path) = out {
        export_trajectory(traj, path, output_format(path)?)?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn load(path: &Path) -> anyhow::Result<ScenarioSpec> {
    Ok(parse_scenario(path)?)
}

fn run(command: Command) -> anyhow::Result<i32> {
    match command {
        Command::SolveBvp {
            scenario,
            guess,
            r_f,
            sigma,
            nodes,
            max_restarts,
            max_nodes,
            seed,
            out,
        } => {
            let spec = load(&scenario)?;
            if let Some(path) = &out {
                output_format(path)?;
            }
            let style = match guess {
                GuessKind::Zeros => GuessStyle::Zeros,
                GuessKind::Noise => GuessStyle::GaussianNoise { sigma },
                GuessKind::Spiral => GuessStyle::StructuredSpiral { r_f },
            };
            let mesh = make_guess(&spec, style, nodes, seed.unwrap_or(spec.seed))?;
            let opts = BvpOptions {
                max_restarts,
                max_nodes,
                ..BvpOptions::default()
            };
            let (traj, report) = solve_with_restarts(&spec, &mesh, &opts)?;
            write_output(&traj, out.as_deref())?;
            println!("converged: {}", report.converged);
            println!("restarts: {}", report.restarts_used);
            println!("newton iterations: {}", report.newton_iterations);
            println!("nodes: {}", traj.len());
            println!("max rms residual: {:.6e}", report.max_rms_residual);
            println!("cost: {:.10e}", report.final_cost);
            print_sheep_distances(&traj);
            Ok(if report.converged {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            })
        }
        Command::Shoot {
            scenario,
            seed,
            sigma,
            max_iter,
            tol,
            out,
        } => {
            let spec = load(&scenario)?;
            if let Some(path) = &out {
                output_format(path)?;
            }
            let guess = gaussian_costate_guess(&spec, sigma, seed.unwrap_or(spec.seed))?;
            let res = shoot(&spec, &guess, max_iter, tol)?;
            write_output(&res.trajectory, out.as_deref())?;
            println!("converged: {}", res.converged);
            println!("iterations: {}", res.iterations);
            println!("terminal costate norm: {:.6e}", res.terminal_costate_norm);
            println!("cost: {:.10e}", trajectory_cost(&res.trajectory, &spec)?);
            print_sheep_distances(&res.trajectory);
            Ok(EXIT_OK)
        }
        Command::SimulateLqr {
            scenario,
            weights,
            rtol,
            out,
        } => {
            let spec = load(&scenario)?;
            if let Some(path) = &out {
                output_format(path)?;
            }
            let w = match weights {
                Some(path) => parse_weights(&path)?,
                None => LqrWeights::default(),
            };
            let run = simulate_lqr_with(&spec, &w, rtol, &CareOptions::default())?;
            write_output(&run.trajectory, out.as_deref())?;
            let d = &run.diagnostics;
            println!("steps: {}", run.trajectory.len());
            println!("cost: {:.10e}", run.report.final_cost);
            println!("gain fallbacks: {}", d.care_fallbacks);
            println!("unstable steps: {}", d.unstable_steps);
            println!("max spectral abscissa: {:.6e}", d.max_spectral_abscissa);
            if let Some((dist, t)) = d.closest_approach {
                println!("closest dog-sheep approach: {dist:.6e} at t = {t:.6}");
            }
            print_sheep_distances(&run.trajectory);
            Ok(EXIT_OK)
        }
        Command::EvalCost {
            trajectory,
            scenario,
        } => {
            let spec = load(&scenario)?;
            let traj = read_trajectory_csv(&trajectory, spec.layout())?;
            let cost = trajectory_cost(&traj, &spec)
                .with_context(|| format!("evaluating {}", trajectory.display()))?;
            println!("cost: {cost:.10e}");
            Ok(EXIT_OK)
        }
        Command::CheckGradients {
            scenario,
            samples,
            seed,
        } => {
            let spec = load(&scenario)?;
            let results = check_scenario(&spec, samples, seed.unwrap_or(spec.seed));
            let mut ok = true;
            for r in &results {
                let pass = r.passed(GRADCHECK_TOL);
                ok &= pass;
                println!(
                    "{} {}: max relative error {:.3e} over {} samples",
                    if pass { "PASS" } else { "FAIL" },
                    r.name,
                    r.max_rel_error,
                    r.samples
                );
            }
            Ok(if ok { EXIT_OK } else { EXIT_NOT_CONVERGED })
        }
        Command::InitRandom {
            m,
            n,
            dog_radius,
            sheep_radius,
            dim,
            velocity_sigma,
            seed,
            out,
        } => {
            if !(dim == 2 || dim == 3) {
                bail!(Error::Validation(format!("dim must be 2 or 3, got {dim}")));
            }
            if !(dog_radius > 0.0 && sheep_radius > 0.0) {
                bail!(Error::Validation("radii must be positive".into()));
            }
            let velocities = match velocity_sigma {
                None => VelocityMode::Zero,
                Some(s) if s > 0.0 => VelocityMode::Gaussian(s),
                Some(s) => bail!(Error::Validation(format!(
                    "velocity sigma must be positive, got {s}"
                ))),
            };
            let seed = seed.unwrap_or_else(env_seed);
            let spec = random_circle_init(m, n, dim, dog_radius, sheep_radius, velocities, seed)
                .into_spec(dim, seed);
            spec.validate()?;
            let text = scenario_to_string(&spec);
            match out {
                Some(path) => std::fs::write(&path, text).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?,
                None => std::io::stdout()
                    .write_all(text.as_bytes())
                    .context("writing to stdout")?,
            }
            Ok(EXIT_OK)
        }
    }
}

fn print_sheep_distances(traj: &Trajectory) {
    let last = traj.len() - 1;
    for i in 0..traj.layout.sheep {
        println!(
            "sheep {}: distance {:.6} -> {:.6}",
            i + 1,
            traj.sheep_distance(0, i),
            traj.sheep_distance(last, i)
        );
    }
}
