//! `quasilap`: config-driven experiments over the spectral-geometry
//! library, with reproducible machine-readable artifacts.
//!
//! Each run subcommand assembles a validated [`config::ExperimentConfig`]
//! (optional `--config` TOML file, overlaid by flags, then per-experiment
//! defaults), executes deterministically, prints the data artifact to
//! stdout, and writes `config.toml`, the data table, and `manifest.json`
//! under `<output dir>/<experiment>/`. The `QUASILAP_OUT` environment
//! variable overrides the output directory. Exit codes: `0` all checks
//! pass, `1` a check failed or the run aborted on a hard invariant,
//! `2` configuration error.

mod artifact;
mod config;
mod experiments;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Overrides};

#[derive(Debug)]
pub enum CliError {
    /// Unusable configuration; exit code 2.
    Config(String),
    /// Hard failure while running; exit code 1.
    Run(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Run(msg) => write!(f, "run error: {msg}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "quasilap",
    version,
    about = "Quasiconformal spectral-geometry experiments",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Zeta-regularized flat-torus determinant against the exact value.
    ///
    /// JSON columns: z, n, zeta_logdet, oracle_logdet, delta (relative),
    /// bound, pass.
    TorusDet(RunArgs),
    /// Solve one Beltrami equation and certify the equation residual.
    ///
    /// Columns: preset, z, n, residual, iterations, contraction,
    /// new_modulus, bound, pass.
    BeltramiSolve(RunArgs),
    /// Principal-symbol angle of the operator family and its growth in
    /// the off-diagonal scale.
    ///
    /// Columns: eps, max_abs_arg; fit summary (slope, intercept,
    /// r_squared) in the JSON summary object.
    SymbolAngle(RunArgs),
    /// Determinant sweep over deformation scales.
    ///
    /// CSV columns: eps, min_gap, log_det_re, log_det_im, res_s, res_t,
    /// N, theta.
    DetSweep(RunArgs),
    /// Built-in potential and extension example battery.
    ///
    /// Columns: example, defect, tolerance, pass.
    PotentialVerify(RunArgs),
    /// Cauchy-Riemann residual of log det along a coefficient line, with
    /// a non-holomorphic diagonal contrast.
    ///
    /// Columns: res_s, res_t, max_abs_arg, min_gap, log_det_re,
    /// log_det_im.
    HolomorphyCheck(RunArgs),
    /// Aggregate the pass/fail matrix from every manifest under a
    /// directory.
    Report {
        /// Artifact directory produced by earlier runs.
        dir: PathBuf,
    },
}

impl Cmd {
    fn experiment(&self) -> &'static str {
        match self {
            Cmd::TorusDet(_) => "torus-det",
            Cmd::BeltramiSolve(_) => "beltrami-solve",
            Cmd::SymbolAngle(_) => "symbol-angle",
            Cmd::DetSweep(_) => "det-sweep",
            Cmd::PotentialVerify(_) => "potential-verify",
            Cmd::HolomorphyCheck(_) => "holomorphy-check",
            Cmd::Report { .. } => "report",
        }
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML config file; explicit flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Torus modulus as a complex literal, e.g. "i", "0.5+2i".
    #[arg(long)]
    z: Option<String>,
    /// Samples per side.
    #[arg(long = "N")]
    n: Option<usize>,
    /// Coefficient preset for mu, e.g. "constant:0.3", "fourier:1,0,0.1",
    /// "random:9,3,0.4".
    #[arg(long)]
    mu: Option<String>,
    /// Coefficient preset for nu.
    #[arg(long)]
    nu: Option<String>,
    /// Deformation direction preset on the mu side.
    #[arg(long)]
    mu1: Option<String>,
    /// Deformation direction preset on the nu side.
    #[arg(long)]
    nu1: Option<String>,
    /// Shorthand for --mu (beltrami-solve).
    #[arg(long)]
    preset: Option<String>,
    /// Solver residual target.
    #[arg(long)]
    tol: Option<f64>,
    /// Solver iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Sweep deformation scales, comma separated.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Differencing steps, comma separated; the first drives single-step
    /// checks.
    #[arg(long, value_delimiter = ',')]
    h: Option<Vec<f64>>,
    /// Branch-cut angles, comma separated; the first drives single-cut
    /// checks.
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    /// Kernel exclusion radius; 0 selects half the smallest nonzero
    /// eigenvalue modulus.
    #[arg(long)]
    rho: Option<f64>,
    /// Output directory (the QUASILAP_OUT environment variable wins).
    #[arg(long)]
    out: Option<String>,
    /// Data artifact format: json or csv.
    #[arg(long)]
    format: Option<String>,
    /// Seed for randomized presets and suites.
    #[arg(long)]
    seed: Option<u64>,
    /// Sweep parallelism; artifacts do not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            z: self.z.clone(),
            n: self.n,
            mu: self.mu.clone().or_else(|| self.preset.clone()),
            nu: self.nu.clone(),
            mu1: self.mu1.clone(),
            nu1: self.nu1.clone(),
            tol: self.tol,
            max_iter: self.max_iter,
            eps: self.eps.clone(),
            h: self.h.clone(),
            theta: self.theta.clone(),
            rho: self.rho,
            out: self.out.clone(),
            format: self.format.clone(),
            seed: self.seed,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.cmd) {
        Ok(all_pass) => {
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                CliError::Run(_) => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cmd: &Cmd) -> Result<bool, CliError> {
    match cmd {
        Cmd::Report { dir } => {
            let (rendered, all_pass) = artifact::report(dir)?;
            print!("{rendered}");
            Ok(all_pass)
        }
        Cmd::TorusDet(args)
        | Cmd::BeltramiSolve(args)
        | Cmd::SymbolAngle(args)
        | Cmd::DetSweep(args)
        | Cmd::PotentialVerify(args)
        | Cmd::HolomorphyCheck(args) => {
            let cfg = ExperimentConfig::assemble(
                cmd.experiment(),
                args.config.as_deref(),
                &args.overrides(),
            )?;
            let outcome = experiments::run(&cfg, args.jobs)?;
            let payload = artifact::write_run(&cfg, &outcome)?;
            print!("{payload}");
            if !outcome.all_pass() {
                for check in outcome.checks.iter().filter(|c| !c.pass) {
                    eprintln!(
                        "FAIL {}: {:.6e} {} {:.3e}",
                        check.check,
                        check.value,
                        check.relation,
                        check.bound.unwrap_or(f64::NAN)
                    );
                }
            }
            Ok(outcome.all_pass())
        }
    }
}
