use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use excursus::decomp::verify_local_decomposition;
use excursus::harness::{self, Direction, ExperimentConfig};
use excursus::ppp::{verify_levy_system, Functional, LevyConfig, Weight};
use excursus::spec::resolve_spec;
use excursus::vervaat::{vervaat_forward, vervaat_inverse};
use excursus::{Error, Result};

#[derive(Parser)]
#[command(name = "excursus", version, about = "Excursions above the minimum of one-dimensional diffusions")]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "EXCURSUS_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    Fwd,
    Inv,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the increasing and decreasing eigenfunctions and their s-derivatives.
    Eigen {
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate the first-passage density from x down to y.
    Fpt {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
        #[arg(long)]
        tmax: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample paths and their excursions above the running minimum.
    Simulate {
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Shortest excursion recorded.
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        excursions: Option<PathBuf>,
    },
    /// Compare both sides of the Lévy system identity.
    LevyVerify {
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long)]
        seed: u64,
        /// `discount` or `before:T`.
        #[arg(long, default_value = "discount")]
        weight: String,
        /// `longer`, `zero`, `discounted-length:α` or `height:h`.
        #[arg(long, default_value = "longer")]
        functional: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Sample the global minimum, its time and the lifetime.
    Williams {
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the decomposition of a path at its minimum before t.
    LocalDecomp {
        #[arg(long, default_value = "brownian")]
        spec: String,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        #[arg(long, default_value_t = 20_000)]
        n: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Bridge to excursion (fwd) or excursion to bridge (inv).
    Vervaat {
        #[arg(long, value_enum)]
        direction: Dir,
        #[arg(long, default_value_t = 1000)]
        n_steps: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Transform this (t, x) loop instead of sampling.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Cut point for `inv` on an input loop.
        #[arg(long, default_value_t = 0.5)]
        u: f64,
        /// Sampled loops written in full.
        #[arg(long, default_value_t = 10)]
        keep: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run verification checks on one spec.
    Verify {
        /// Check ids, or `all` for every check that applies.
        #[arg(default_value = "all")]
        checks: Vec<String>,
        #[arg(long, default_value = "brownian")]
        spec: String,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the acceptance criteria, at full size or reduced tenfold.
    Suite {
        #[arg(value_parser = ["acceptance", "smoke"])]
        name: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn parse_weight(s: &str) -> Result<Weight> {
    match s.split_once(':') {
        None if s == "discount" => Ok(Weight::Discount),
        Some(("before", t)) => t.parse().map(Weight::Before).map_err(|_| Error::Config(format!("bad horizon '{t}'"))),
        _ => Err(Error::Config(format!("unknown weight '{s}'; use discount or before:T"))),
    }
}

fn parse_functional(s: &str) -> Result<Functional> {
    let num = |v: &str| v.parse::<f64>().map_err(|_| Error::Config(format!("bad number '{v}'")));
    match s.split_once(':') {
        None if s == "longer" => Ok(Functional::Longer),
        None if s == "zero" => Ok(Functional::Zero),
        Some(("discounted-length", a)) => Ok(Functional::DiscountedLength(num(a)?)),
        Some(("height", h)) => Ok(Functional::Height(num(h)?)),
        _ => Err(Error::Config(format!("unknown functional '{s}'; use longer, zero, discounted-length:α or height:h"))),
    }
}

fn emit<T: serde::Serialize>(report: Option<&PathBuf>, value: &T) -> Result<()> {
    match report {
        Some(p) => harness::write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

/// `Ok(false)` when a verdict failed.
fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Eigen { spec, alpha, stride, out } => {
            let spec = resolve_spec(&spec)?;
            harness::write_csv(&out, harness::eigen_table(&spec, alpha, stride)?)?;
        }
        Command::Fpt { spec, x, y, tmax, points, out } => {
            let spec = resolve_spec(&spec)?;
            harness::write_csv(&out, harness::fpt_table(&spec, x, y, tmax, points)?)?;
        }
        Command::Simulate { spec, x0, dt, horizon, n, seed, eps, out, excursions } => {
            let cfg = ExperimentConfig { spec, dt, horizon, eps, n: Some(n), seed: Some(seed), ..Default::default() };
            cfg.validate(true)?;
            let spec = resolve_spec(&cfg.spec)?;
            let (paths, exc) = harness::simulate_tables(&spec, x0, dt, horizon, n, eps, seed)?;
            harness::write_csv(&out, paths)?;
            if let Some(p) = excursions {
                harness::write_csv(&p, exc)?;
            }
        }
        Command::LevyVerify { spec, x, eps, n, dt, seed, weight, functional, report } => {
            let spec = resolve_spec(&spec)?;
            let cfg = LevyConfig::new(x, parse_weight(&weight)?, parse_functional(&functional)?, eps, n, dt, seed);
            let r = verify_levy_system(&spec, &cfg)?;
            emit(report.as_ref(), &r)?;
            return Ok(r.passes(3.0));
        }
        Command::Williams { spec, x, n, dt, seed, out } => {
            let spec = resolve_spec(&spec)?;
            harness::write_csv(&out, harness::williams_table(&spec, x, n, dt, seed)?)?;
        }
        Command::LocalDecomp { spec, t, x, n, dt, seed, report } => {
            let spec = resolve_spec(&spec)?;
            let r = verify_local_decomposition(&spec, x, t, n, dt, seed)?;
            emit(report.as_ref(), &r)?;
            return Ok(r.passes(harness::LEVEL));
        }
        Command::Vervaat { direction, n_steps, n, seed, input, u, keep, out, report } => {
            if let Some(input) = input {
                let omega = harness::read_loop(&input)?;
                let image = match direction {
                    Dir::Fwd => vervaat_forward(&omega),
                    Dir::Inv => vervaat_inverse(&omega, u)?,
                };
                harness::write_csv(&out, harness::loop_rows(&image))?;
                return Ok(true);
            }
            let dir = match direction {
                Dir::Fwd => Direction::Forward,
                Dir::Inv => Direction::Inverse,
            };
            let (rows, r) = harness::vervaat_table(dir, n_steps, n, keep, seed)?;
            harness::write_csv(&out, rows)?;
            emit(report.as_ref(), &r)?;
            return Ok(r.passes(harness::LEVEL));
        }
        Command::Verify { checks, spec, alpha, dt, eps, n, seed, report } => {
            let cfg = ExperimentConfig { spec, alpha, dt, eps, n, seed: Some(seed), report, menu: checks, ..Default::default() };
            let m = harness::run(&cfg)?;
            for c in &m.checks {
                eprintln!("{}", c.line());
            }
            emit(cfg.report.as_ref(), &m)?;
            return Ok(m.passed);
        }
        Command::Suite { name, report } => {
            let m = harness::suite(&name)?;
            for c in &m.checks {
                eprintln!("{}", c.line());
            }
            emit(report.as_ref(), &m)?;
            return Ok(m.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(2);
    }
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
