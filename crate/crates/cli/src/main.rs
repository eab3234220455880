//! `skewloc`: batch driver for the skew-shift localization experiments.
//!
//! Parameters resolve as defaults < `--config` document < `SKEWLOC_*`
//! environment variables < flags. Every run writes CSV tables, a JSON summary
//! embedding the effective config and its SHA-256, and a schema file.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use skewloc::rotor::{KickRoute, StepOrder};

use config::{ExperimentConfig, FrequencyKind};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] skewloc::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use skewloc::Error as E;
        match self {
            CliError::Core(e) => match e {
                E::SingularityGuard { .. } => 2,
                E::IllConditioned { .. }
                | E::ConvergenceFailure { .. }
                | E::PotentialOverflow { .. }
                | E::InsufficientData { .. } => 3,
                E::TruncationBreach { .. } => 5,
                E::DecayViolation { .. }
                | E::SymmetryViolation { .. }
                | E::KernelTable { .. }
                | E::InfeasibleCover { .. }
                | E::HypothesisFailed { .. }
                | E::InvalidInput(_) => 4,
            },
            CliError::Config(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "skewloc", version, about = "Skew-shift localization experiments")]
struct Cli {
    /// JSON config document, or a previous run's summary.
    #[arg(long, global = true, env = "SKEWLOC_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "SKEWLOC_SEED")]
    seed: Option<u64>,
    /// Worker threads; 0 lets the pool decide.
    #[arg(long, global = true, env = "SKEWLOC_WORKERS", default_value_t = 0)]
    workers: usize,
    #[arg(long, global = true, env = "SKEWLOC_OUT", default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Orbit of the skew shift and visit counts near a target.
    Orbit(Params),
    /// Finite-range diophantine check of omega.
    DcCheck(Params),
    /// Green's function on [0, n] and its decay fit.
    Green(Params),
    /// Monte-Carlo diagonal-smallness and bad-set measures.
    ScanMeasure(Params),
    /// Good/bad site classification and bad-window density.
    Multiscale(Params),
    /// Resolvent-identity patching report.
    Patch(Params),
    /// Eigenpairs, localization statistics and frequency comparison.
    Eig(Params),
    /// Kicked-rotor evolution and resonance scan.
    Rotor(Params),
}

fn parse_serde<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

#[derive(Args, Debug, Default)]
struct Params {
    #[arg(long, env = "SKEWLOC_OMEGA")]
    omega: Option<f64>,
    #[arg(long, value_enum, env = "SKEWLOC_FREQUENCY")]
    frequency: Option<FrequencyKind>,
    /// Diophantine constant `c`.
    #[arg(long = "c", env = "SKEWLOC_DC_CONSTANT")]
    dc_constant: Option<f64>,
    /// Largest denominator checked.
    #[arg(long = "range", env = "SKEWLOC_DC_RANGE")]
    dc_range: Option<u64>,
    #[arg(long, env = "SKEWLOC_X1")]
    x1: Option<f64>,
    #[arg(long, env = "SKEWLOC_X2")]
    x2: Option<f64>,
    /// Singularity guard tolerance.
    #[arg(long, env = "SKEWLOC_GUARD")]
    guard: Option<f64>,
    #[arg(long, env = "SKEWLOC_EPS")]
    eps: Option<f64>,
    #[arg(long, env = "SKEWLOC_RHO")]
    rho: Option<f64>,
    /// Kernel table file with `n re im` rows.
    #[arg(long, env = "SKEWLOC_KERNEL_TABLE")]
    kernel_table: Option<PathBuf>,
    #[arg(long, env = "SKEWLOC_BAND")]
    band: Option<usize>,
    #[arg(long, env = "SKEWLOC_ENERGY", allow_hyphen_values = true)]
    energy: Option<f64>,
    #[arg(long, env = "SKEWLOC_ENERGIES", value_delimiter = ',', allow_hyphen_values = true)]
    energies: Option<Vec<f64>>,
    #[arg(long, env = "SKEWLOC_CONDITION_CAP")]
    condition_cap: Option<f64>,
    #[arg(long, env = "SKEWLOC_N")]
    n: Option<usize>,
    #[arg(long, env = "SKEWLOC_M")]
    m: Option<usize>,
    #[arg(long, env = "SKEWLOC_L0")]
    l0: Option<usize>,
    #[arg(long, env = "SKEWLOC_DELTA")]
    delta: Option<f64>,
    #[arg(long, env = "SKEWLOC_C3")]
    c3: Option<f64>,
    #[arg(long, env = "SKEWLOC_NORM_CAP")]
    norm_cap: Option<f64>,
    #[arg(long, env = "SKEWLOC_MINLEN")]
    minlen: Option<usize>,
    #[arg(long, env = "SKEWLOC_N0")]
    n0: Option<usize>,
    #[arg(long, env = "SKEWLOC_EPS0")]
    eps0: Option<f64>,
    #[arg(long, env = "SKEWLOC_SCALES", value_delimiter = ',')]
    scales: Option<Vec<usize>>,
    #[arg(long, env = "SKEWLOC_SAMPLES")]
    samples: Option<usize>,
    /// Latin-hypercube sampling (`false` for plain uniform).
    #[arg(long, env = "SKEWLOC_STRATIFIED")]
    stratified: Option<bool>,
    #[arg(long, env = "SKEWLOC_TARGET_X1")]
    target_x1: Option<f64>,
    #[arg(long, env = "SKEWLOC_TARGET_X2")]
    target_x2: Option<f64>,
    #[arg(long, env = "SKEWLOC_VISIT_EPS")]
    visit_eps: Option<f64>,
    #[arg(long, env = "SKEWLOC_VISIT_STEPS")]
    visit_steps: Option<u64>,
    /// Rational frequencies to compare against `omega`.
    #[arg(long, env = "SKEWLOC_COMPARE", value_delimiter = ',')]
    compare: Option<Vec<f64>>,
    #[arg(long, env = "SKEWLOC_COMPARE_SAMPLES")]
    compare_samples: Option<usize>,
    /// Also write the full Green's matrix.
    #[arg(long, env = "SKEWLOC_MATRIX")]
    matrix: Option<bool>,
    #[arg(long, env = "SKEWLOC_A")]
    a: Option<f64>,
    #[arg(long, env = "SKEWLOC_B", allow_hyphen_values = true)]
    b: Option<f64>,
    #[arg(long, env = "SKEWLOC_KAPPA")]
    kappa: Option<f64>,
    #[arg(long, env = "SKEWLOC_STEPS")]
    steps: Option<usize>,
    #[arg(long, env = "SKEWLOC_N_MAX")]
    n_max: Option<usize>,
    /// `kick-first` or `kinetic-first`.
    #[arg(long, env = "SKEWLOC_ORDER", value_parser = parse_serde::<StepOrder>)]
    order: Option<StepOrder>,
    /// `grid` or `bessel`.
    #[arg(long, env = "SKEWLOC_ROUTE", value_parser = parse_serde::<KickRoute>)]
    route: Option<KickRoute>,
    #[arg(long, env = "SKEWLOC_A_VALUES", value_delimiter = ',')]
    a_values: Option<Vec<f64>>,
}

impl Params {
    fn apply(self, c: &mut ExperimentConfig) -> Result<(), CliError> {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        macro_rules! set_some {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = Some(v); })* };
        }
        set!(
            omega, frequency, dc_constant, dc_range, guard, eps, rho, energy, energies, condition_cap, n, m, l0,
            delta, n0, eps0, scales, samples, stratified, target_x1, target_x2, visit_eps, visit_steps, compare,
            compare_samples, matrix, a, b, kappa, steps, n_max, order, route, a_values
        );
        set_some!(x1, x2, band, c3, norm_cap, minlen);
        if let Some(p) = &self.kernel_table {
            c.set_kernel_table(p)?;
        }
        Ok(())
    }
}

impl Command {
    fn split(self) -> (&'static str, Params) {
        match self {
            Command::Orbit(p) => ("orbit", p),
            Command::DcCheck(p) => ("dc-check", p),
            Command::Green(p) => ("green", p),
            Command::ScanMeasure(p) => ("scan-measure", p),
            Command::Multiscale(p) => ("multiscale", p),
            Command::Patch(p) => ("patch", p),
            Command::Eig(p) => ("eig", p),
            Command::Rotor(p) => ("rotor", p),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, params) = cli.command.split();
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    params.apply(&mut cfg)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.experiment = name.to_string();
    cfg.validate()?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if cli.workers > 0 {
        pool = pool.num_threads(cli.workers);
    }
    let pool = pool.build().map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let out = pool.install(|| match name {
        "orbit" => commands::orbit(&cfg),
        "dc-check" => commands::dc_check(&cfg),
        "green" => commands::green(&cfg),
        "scan-measure" => commands::scan_measure(&cfg),
        "multiscale" => commands::multiscale(&cfg),
        "patch" => commands::patch(&cfg),
        "eig" => commands::eig(&cfg),
        "rotor" => commands::rotor(&cfg),
        _ => unreachable!("subcommand names are fixed"),
    })?;
    for p in output::emit(&cli.out, name, &cfg, &out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(4),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("skewloc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
