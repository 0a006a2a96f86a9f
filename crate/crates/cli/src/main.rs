//! `viralfeed`: batch front-end for analysis, simulation, equilibrium and
//! platform-design runs. Every artifact written embeds the resolved
//! configuration, and `--config <artifact>` re-runs it.

mod commands;
mod config;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{GridPoint, RunConfig, SplitConfig, StrategyAt};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Core(#[from] viralfeed::Error),
}

impl CliError {
    pub fn invalid(field: &str, reason: impl Into<String>) -> Self {
        CliError::Invalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// 2 for bad input, 3 for numerical-resolution failures, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid { .. } => 2,
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Core(viralfeed::Error::EquilibriumUnresolved { .. }) => 2,
            CliError::Core(viralfeed::Error::Resolution { .. }) => 3,
            CliError::Core(_) => 1,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "viralfeed",
    version,
    about = "Social learning from popularity-weighted news feeds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fixed points of the inflow map for a strategy.
    Analyze(Flags),
    /// Critical virality weight of the majority rule.
    LambdaStar(Flags),
    /// Critical weights and their comparative statics over a (q, K, C) grid.
    Statics(Flags),
    /// Ensemble of simulated trajectories.
    Simulate(Flags),
    /// Simulated posteriors, best responses and mixing equilibria.
    Equilibrium(Flags),
    /// Platform payoffs over a grid of virality weights.
    Design(Flags),
    /// Fixed points and ensembles across manipulation rates.
    Robustness(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// Configuration JSON, or any CSV / JSON artifact written by this tool.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    q: Option<f64>,
    /// Feed size.
    #[arg(long = "K")]
    feed_size: Option<usize>,
    /// Sharing capacity.
    #[arg(long = "C")]
    capacity: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Manipulation rate.
    #[arg(long)]
    iota: Option<f64>,
    /// Number of agents per run.
    #[arg(long)]
    n: Option<usize>,
    /// majority | majority-signal-tie | deviation:<p> | deviation:<s>:<k>:<p> | <strategy.json>
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of simulated runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Arrivals per run in `simulate` (defaults to n).
    #[arg(long)]
    horizon: Option<usize>,
    /// Distance within which a final state counts as reaching a steady state.
    #[arg(long)]
    radius: Option<f64>,
    /// Record and write the paths of this many runs.
    #[arg(long)]
    paths: Option<usize>,
    /// Bisection tolerance for critical weights.
    #[arg(long)]
    tol: Option<f64>,
    /// Points on the inflow curve written by `analyze`.
    #[arg(long)]
    curve_points: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    q_grid: Option<Vec<f64>>,
    #[arg(long = "K-grid", value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
    #[arg(long = "C-grid", value_delimiter = ',')]
    c_grid: Option<Vec<usize>>,
    /// Mixing probabilities to scan, comma separated; empty to skip mixing.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    p_grid: Option<Vec<f64>>,
    /// Horizons at which to solve for the mixing probability.
    #[arg(long, value_delimiter = ',')]
    n_schedule: Option<Vec<usize>>,
    /// Pivotal cell of the deviation family: auto or <s>:<k>.
    #[arg(long, allow_hyphen_values = true)]
    pivotal: Option<String>,
    /// Posterior splitting: arrivals before the split.
    #[arg(long)]
    split_at: Option<usize>,
    /// Posterior splitting: share of settled runs continued.
    #[arg(long)]
    keep_rate: Option<f64>,
    /// Posterior splitting: distance to an unstable point that always continues.
    #[arg(long)]
    split_margin: Option<f64>,
    /// Simulate every run to the horizon.
    #[arg(long)]
    no_split: bool,
    /// Virality weights, comma separated; `lstar` and `lstar-0.001` are relative to the critical weight.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lambda_grid: Option<Vec<String>>,
    /// accuracy | agreement | table:<path>; repeatable.
    #[arg(long = "objective")]
    objectives: Option<Vec<String>>,
    /// Equilibrium strategy for one weight, as <lambda>=<strategy>; repeatable.
    #[arg(long = "equilibrium-at")]
    equilibria: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    iota_grid: Option<Vec<f64>>,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, env = "VIRALFEED_OUT_DIR", default_value = "viralfeed-out")]
    out: PathBuf,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

impl Flags {
    fn into_config(self) -> Result<(RunConfig, commands::Output, Option<usize>), CliError> {
        let file = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let split = if self.no_split {
            Some(SplitConfig {
                keep_rate: 1.0,
                ..commands::default_split(file.split)
            })
        } else if self.split_at.is_some() || self.keep_rate.is_some() || self.split_margin.is_some()
        {
            let base = commands::default_split(file.split);
            Some(SplitConfig {
                at: self.split_at.unwrap_or(base.at),
                keep_rate: self.keep_rate.unwrap_or(base.keep_rate),
                margin: self.split_margin.unwrap_or(base.margin),
            })
        } else {
            None
        };
        let equilibria = self
            .equilibria
            .map(|list| {
                list.iter()
                    .map(|e| {
                        let (l, s) = e.split_once('=').ok_or_else(|| {
                            CliError::invalid(
                                "equilibria",
                                format!("expected <lambda>=<strategy>, got `{e}`"),
                            )
                        })?;
                        let lambda = l.trim().parse().map_err(|_| {
                            CliError::invalid("equilibria", format!("bad weight `{l}`"))
                        })?;
                        Ok(StrategyAt {
                            lambda,
                            strategy: s.trim().to_string(),
                        })
                    })
                    .collect::<Result<Vec<_>, CliError>>()
            })
            .transpose()?;
        let flags = RunConfig {
            q: self.q,
            feed_size: self.feed_size,
            capacity: self.capacity,
            lambda: self.lambda,
            iota: self.iota,
            n: self.n,
            strategy: self.strategy,
            m_runs: self.runs,
            base_seed: self.seed,
            horizon: self.horizon,
            classify_radius: self.radius,
            record_paths: self.paths,
            tol: self.tol,
            curve_points: self.curve_points,
            q_grid: self.q_grid,
            k_grid: self.k_grid,
            c_grid: self.c_grid,
            p_grid: self.p_grid,
            n_schedule: self.n_schedule,
            pivotal: self.pivotal,
            split,
            lambda_grid: self
                .lambda_grid
                .map(|g| g.iter().map(|t| GridPoint::parse(t)).collect()),
            objectives: self.objectives,
            equilibria,
            iota_grid: self.iota_grid,
        };
        let out = commands::Output {
            dir: self.out,
            plot: self.plot,
        };
        Ok((file.merge(flags), out, self.threads))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, flags) = match cli.command {
        Command::Analyze(f) => ("analyze", f),
        Command::LambdaStar(f) => ("lambda-star", f),
        Command::Statics(f) => ("statics", f),
        Command::Simulate(f) => ("simulate", f),
        Command::Equilibrium(f) => ("equilibrium", f),
        Command::Design(f) => ("design", f),
        Command::Robustness(f) => ("robustness", f),
    };
    let (config, out, threads) = flags.into_config()?;
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::invalid("threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::invalid("threads", e.to_string()))?;
    }
    let summary = commands::execute(name, config, &out)?;
    let text = serde_json::to_string_pretty(&summary)?;
    // a closed stdout (for example `| head`) is not a failure of the run
    let _ = writeln!(std::io::stdout(), "{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::invalid("q", "bad").exit_code(), 2);
        let resolution = viralfeed::Error::Resolution {
            lo: 0.0,
            hi: 1.0,
            reason: "x".into(),
        };
        assert_eq!(CliError::Core(resolution).exit_code(), 3);
        let unresolved = viralfeed::Error::EquilibriumUnresolved {
            lambda: 1.0,
            reason: "x".into(),
        };
        assert_eq!(CliError::Core(unresolved).exit_code(), 2);
        assert_eq!(
            CliError::Core(viralfeed::Error::Precondition("x".into())).exit_code(),
            2
        );
        let io = std::io::Error::other("disk");
        assert_eq!(CliError::from(io).exit_code(), 1);
    }

    #[test]
    fn flags_are_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
