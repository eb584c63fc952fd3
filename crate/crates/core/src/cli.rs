//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid configuration, 2 unsupported parameter
//! region, 3 numerical failure (including a failed verification), 4 I/O error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{self, LoadError, RunConfig, SolutionDocument, Solved};
use crate::error::Error;
use crate::mc::{estimate_value, spike_deviation_estimate, SimConfig, SpikeEstimate, ValueEstimate};
use crate::solution::{EquilibriumSolution, SolutionCase};
use crate::verify::{verify, VerificationReport, DEFAULT_U_POINTS, DEFAULT_X_POINTS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_UNSUPPORTED: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "eqdiv", version, about = "Equilibrium dividend barriers under non-exponential discounting")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the equilibrium barrier and coefficients.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check HJB residuals, smooth fit and the threshold property.
    Verify {
        /// Run config or a solution document written by `solve`.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_X_POINTS)]
        x_points: usize,
        #[arg(long, default_value_t = DEFAULT_U_POINTS)]
        u_points: usize,
    },
    /// Monte Carlo value estimates of the equilibrium strategy.
    Mc {
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Spike-deviation gains over an (x0, l, ε) grid.
    Spike {
        #[command(flatten)]
        sim: SimArgs,
        /// Deviation rates; default 0, M/2, M.
        #[arg(long, value_delimiter = ',')]
        l: Option<Vec<f64>>,
        /// Deviation lengths; default 0.05, 0.02, 0.01.
        #[arg(long = "eps", value_delimiter = ',')]
        epsilon: Option<Vec<f64>>,
    },
    /// CSV of V, V', V'' on an x grid for each parameter set.
    Figure {
        #[arg(long, value_parser = ["mixture", "pseudo"], conflicts_with = "config", required_unless_present = "config")]
        example: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Initial surplus levels; default b/2, b, 2b (and 4b for `mc`).
    #[arg(long, value_delimiter = ',')]
    x0: Option<Vec<f64>>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Brownian-bridge ruin correction.
    #[arg(long)]
    bridge: bool,
}

/// Error carrying the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidParameter { .. } | Error::Domain { .. } => EXIT_CONFIG,
            Error::Unsupported(_) | Error::NoAnalyticTail(_) => EXIT_UNSUPPORTED,
            Error::NoSignChange { .. } | Error::NonFinite { .. } | Error::Numerical(_) | Error::NotBarrierCase => {
                EXIT_NUMERICAL
            }
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Io(message) => Failure { code: EXIT_IO, message },
            LoadError::Config(e) => e.into(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32, Failure> {
    match cmd {
        Command::Solve { config, out } => solve(&config, out.as_deref()),
        Command::Verify {
            config,
            out,
            x_points,
            u_points,
        } => verify_cmd(&config, out.as_deref(), x_points, u_points),
        Command::Mc { sim } => mc(&sim),
        Command::Spike { sim, l, epsilon } => spike(&sim, l, epsilon),
        Command::Figure { example, config, out } => figure(example.as_deref(), config.as_deref(), &out),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn solve(path: &Path, out: Option<&Path>) -> Result<i32, Failure> {
    let cfg = config::load(path)?;
    let sol = config::solve(&cfg.model, &cfg.discount)?;
    println!("b = {:.4}", sol.barrier());
    println!("case = {}", sol.case());
    let doc = to_json(&sol.document());
    match out {
        Some(_) => emit(out, &doc)?,
        None => print!("{doc}"),
    }
    Ok(EXIT_OK)
}

/// A run config, or a solution document (recognised by its `case` and `b` keys).
fn load_solution(path: &Path) -> Result<Solved, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::from(Error::invalid("<json>", e.to_string())))?;
    if value.get("case").is_some() && value.get("b").is_some() {
        let doc: SolutionDocument =
            serde_json::from_value(value).map_err(|e| Failure::from(Error::invalid("<solution>", e.to_string())))?;
        Ok(Solved::from_document(&doc)?)
    } else {
        let cfg = RunConfig::from_json(&text)?;
        Ok(config::solve(&cfg.model, &cfg.discount)?)
    }
}

fn verify_cmd(path: &Path, out: Option<&Path>, x_points: usize, u_points: usize) -> Result<i32, Failure> {
    let sol = load_solution(path)?;
    let report: VerificationReport = verify(&sol, x_points, u_points)?;
    emit(out, &to_json(&report))?;
    let passed = report.passed();
    eprintln!("verification {}", if passed { "passed" } else { "FAILED" });
    Ok(if passed { EXIT_OK } else { EXIT_NUMERICAL })
}

fn sim_config(cfg: &RunConfig, args: &SimArgs) -> Result<SimConfig, Failure> {
    let mut opts = cfg.mc.clone().unwrap_or_default();
    opts.dt = args.dt.or(opts.dt);
    opts.n_paths = args.paths.or(opts.n_paths);
    opts.seed = args.seed.or(opts.seed);
    opts.bridge_correction |= args.bridge;
    let sim = cfg.sim_config(&opts)?.with_threads(args.threads);
    sim.validate()?;
    Ok(sim)
}

fn default_x0(b: f64, multiples: &[f64]) -> Vec<f64> {
    let scale = if b > 0.0 { b } else { 1.0 };
    multiples.iter().map(|m| m * scale).collect()
}

#[derive(Serialize)]
struct McEntry {
    #[serde(flatten)]
    estimate: ValueEstimate,
    closed_form: f64,
}

#[derive(Serialize)]
struct McOutput {
    config_sha: String,
    b: f64,
    case: SolutionCase,
    sim: SimConfig,
    estimates: Vec<McEntry>,
}

fn mc(args: &SimArgs) -> Result<i32, Failure> {
    let cfg = config::load(&args.config)?;
    let sim = sim_config(&cfg, args)?;
    let sol = config::solve(&cfg.model, &cfg.discount)?;
    let x0s = args
        .x0
        .clone()
        .or_else(|| cfg.mc.as_ref().and_then(|m| m.x0.clone()))
        .unwrap_or_else(|| default_x0(sol.barrier(), &[0.5, 1.0, 2.0, 4.0]));
    let strategy = sol.strategy();
    let mut estimates = Vec::with_capacity(x0s.len());
    for x0 in x0s {
        let estimate = estimate_value(&cfg.model, &cfg.discount, &strategy, x0, &sim)?;
        estimates.push(McEntry {
            estimate,
            closed_form: sol.value(x0)?,
        });
    }
    let out = McOutput {
        config_sha: cfg.sha256(),
        b: sol.barrier(),
        case: sol.case(),
        // worker count never affects results, so it is left out of the record
        sim: sim.with_threads(None),
        estimates,
    };
    emit(args.out.as_deref(), &to_json(&out))?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SpikeOutput {
    config_sha: String,
    b: f64,
    sim: SimConfig,
    gains: Vec<SpikeEstimate>,
}

fn spike(args: &SimArgs, l: Option<Vec<f64>>, epsilon: Option<Vec<f64>>) -> Result<i32, Failure> {
    let cfg = config::load(&args.config)?;
    let sim = sim_config(&cfg, args)?;
    let sol = config::solve(&cfg.model, &cfg.discount)?;
    let opts = cfg.spike.clone().unwrap_or_default();
    let m = cfg.model.max_rate;
    let x0s = args
        .x0
        .clone()
        .or(opts.x0)
        .unwrap_or_else(|| default_x0(sol.barrier(), &[0.5, 1.0, 2.0]));
    let ls = l.or(opts.l).unwrap_or_else(|| vec![0.0, 0.5 * m, m]);
    let eps = epsilon.or(opts.epsilon).unwrap_or_else(|| vec![0.05, 0.02, 0.01]);
    let mut gains = Vec::new();
    for &x0 in &x0s {
        for &l in &ls {
            for &e in &eps {
                gains.push(spike_deviation_estimate(&sol, x0, l, e, &sim)?);
            }
        }
    }
    let out = SpikeOutput {
        config_sha: cfg.sha256(),
        b: sol.barrier(),
        sim: sim.with_threads(None),
        gains,
    };
    emit(args.out.as_deref(), &to_json(&out))?;
    Ok(EXIT_OK)
}

/// `x` with 10 significant digits in scientific notation.
fn sig10(x: f64) -> String {
    format!("{x:.9e}")
}

/// CSV body for one solution: metadata comment, header, one row per grid point.
pub fn figure_csv(cfg: &RunConfig, sol: &dyn EquilibriumSolution) -> Result<String, Error> {
    let fig = cfg.figure.unwrap_or_default();
    let mut s = String::new();
    let _ = writeln!(s, "# b={} case={} config_sha={}", sol.barrier(), sol.case(), cfg.sha256());
    s.push_str("x,V,Vx,Vxx\n");
    for i in 0..fig.points {
        let x = fig.x_max * i as f64 / (fig.points - 1) as f64;
        let p = sol.partials(0.0, x)?;
        let _ = writeln!(s, "{},{},{},{}", sig10(x), sig10(p.c), sig10(p.c_x), sig10(p.c_xx));
    }
    Ok(s)
}

fn figure(example: Option<&str>, config: Option<&Path>, out: &Path) -> Result<i32, Failure> {
    let sets = match (example, config) {
        (Some(family), _) => config::bundled(family)?,
        (None, Some(path)) => {
            let cfg = config::load(path)?;
            let name = cfg.name.clone().unwrap_or_else(|| {
                path.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "figure".into())
            });
            vec![(name, cfg)]
        }
        (None, None) => unreachable!("clap requires --example or --config"),
    };
    std::fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    for (name, cfg) in sets {
        let sol = config::solve(&cfg.model, &cfg.discount)?;
        let csv = figure_csv(&cfg, &sol)?;
        let path = out.join(format!("{name}.csv"));
        std::fs::write(&path, csv).map_err(|e| io_failure(&path, e))?;
        println!("{}: b = {:.4} ({})", path.display(), sol.barrier(), sol.case());
    }
    Ok(EXIT_OK)
}
