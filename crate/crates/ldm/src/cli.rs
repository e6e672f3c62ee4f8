//! Argument parsing and exit-status mapping for the `ldm` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ldm_core::sim::StepMode;

use crate::commands::{self, Command};
use crate::config::{parse_param_file, ConfigError, KindSelection, ParamFile, ScenarioConfig};

/// Exit status: all checks passed.
pub const EXIT_OK: u8 = 0;
/// A verification, oracle or shape check failed; outputs were still written.
pub const EXIT_CHECKS_FAILED: u8 = 1;
/// Invalid arguments, parameter file or model constraints.
pub const EXIT_CONFIG: u8 = 2;
/// A computation or IO step failed.
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "ldm", version, about = "Equilibrium curves, Monte Carlo batches, figure datasets and verification for the latent-demand market")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Subcommand, Debug)]
pub enum Sub {
    /// Solve the equilibrium curves and write curve and coefficient tables.
    Solve(Common),
    /// Run a Monte Carlo batch; write moments, correlation estimates and optional per-path series.
    Simulate(Common),
    /// Write one dataset per figure panel plus gnuplot scripts.
    Figures(Common),
    /// Check identities and the filter oracle; exit 1 when any check fails.
    Verify(Common),
    /// Compare price-impact and Nash loadings node by node.
    Compare(Common),
    /// Estimate the rebalancer value function and rebalancing cost on a target grid.
    ValueFunction(Common),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    PriceImpact,
    Nash,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Euler,
    Exact,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Parameter file of `key = value` lines. Defaults to the holdings-figure parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory [default: out/<command>]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Overrides `kind` in the parameter file.
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Path budget [default: 1000 for simulate and verify, 100000 for figures and value-function]
    #[arg(long)]
    pub paths: Option<usize>,
    /// Overrides `grid.n_steps` in the parameter file.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Euler)]
    pub mode: ModeArg,
    /// Keep every path trajectory (needed for --series).
    #[arg(long)]
    pub full_retention: bool,
    /// Per-path series to export, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub series: Vec<String>,
    /// Correlation bandwidths in grid steps, comma separated; each must be even.
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4])]
    pub strides: Vec<usize>,
    /// Figure panels, comma separated, or `all`.
    #[arg(long, value_delimiter = ',', default_values_t = ["all".to_string()])]
    pub figures: Vec<String>,
    /// Keep every k-th node in figure datasets.
    #[arg(long, default_value_t = 1)]
    pub every: usize,
    /// Rebalancer targets for the value function, comma separated [default: -6 to 6 by 0.5]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub a_grid: Vec<f64>,
    /// Paths for the filter oracle in verify.
    #[arg(long, default_value_t = 100_000)]
    pub oracle_paths: usize,
    /// Add a constant to one holdings loading, as `name=delta`.
    #[arg(long, hide = true, value_parser = parse_perturb)]
    pub perturb: Option<(String, f64)>,
}

fn parse_perturb(s: &str) -> Result<(String, f64), String> {
    let (name, delta) = s.split_once('=').ok_or("expected name=delta")?;
    let delta: f64 = delta.parse().map_err(|_| format!("'{delta}' is not a number"))?;
    Ok((name.to_string(), delta))
}

impl Sub {
    fn parts(&self) -> (Command, &Common) {
        match self {
            Sub::Solve(c) => (Command::Solve, c),
            Sub::Simulate(c) => (Command::Simulate, c),
            Sub::Figures(c) => (Command::Figures, c),
            Sub::Verify(c) => (Command::Verify, c),
            Sub::Compare(c) => (Command::Compare, c),
            Sub::ValueFunction(c) => (Command::ValueFunction, c),
        }
    }
}

fn config_error(message: String) -> anyhow::Error {
    ConfigError { line: 0, message }.into()
}

/// Resolves flags over the parameter file.
pub fn scenario(cmd: Command, a: &Common) -> anyhow::Result<ScenarioConfig> {
    let mut file = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("reading {}: {e}", path.display())))?;
            parse_param_file(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?
        }
        None => ParamFile::figure_default(),
    };
    if let Some(k) = a.kind {
        file.kind = match k {
            KindArg::PriceImpact => KindSelection::One(ldm_core::EquilibriumKind::PriceImpact),
            KindArg::Nash => KindSelection::One(ldm_core::EquilibriumKind::Nash),
            KindArg::Both => KindSelection::Both,
        };
    }
    if let Some(n) = a.steps {
        if n < 2 {
            return Err(config_error("--steps must be at least 2".into()));
        }
        file.grid = ldm_core::TimeGrid::new(n);
    }
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("out").join(cmd.name()));
    let mut sc = ScenarioConfig::new(file, out);
    sc.n_paths = a.paths.unwrap_or(match cmd {
        Command::Figures | Command::ValueFunction => 100_000,
        _ => 1000,
    });
    sc.seed = a.seed;
    sc.mode = match a.mode {
        ModeArg::Euler => StepMode::Euler,
        ModeArg::Exact => StepMode::Exact,
    };
    sc.full_retention = a.full_retention;
    sc.series = a.series.clone();
    sc.strides = a.strides.clone();
    sc.figures = a.figures.clone();
    sc.every = a.every;
    if !a.a_grid.is_empty() {
        sc.value_grid = a.a_grid.clone();
    }
    sc.oracle_paths = a.oracle_paths;
    sc.perturb = a.perturb.clone();
    Ok(sc)
}

/// Runs the parsed command, prints its summary, and returns the exit status.
pub fn execute(cli: &Cli) -> u8 {
    let (cmd, args) = cli.command.parts();
    let result = scenario(cmd, args).and_then(|sc| commands::run(cmd, &sc));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            outcome.exit_code()
        }
        Err(e) if e.downcast_ref::<ConfigError>().is_some() => {
            eprintln!("ldm {}: configuration error: {e:#}", cmd.name());
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("ldm {}: {e:#}", cmd.name());
            EXIT_RUNTIME
        }
    }
}
