use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use surrogate_core::experiment::{EstimatorSpec, ExperimentConfig, MdpSpec, NChainSpec};

#[derive(Debug, Parser)]
#[command(
    name = "surrogate",
    version,
    about = "Surrogate policy gradients with compatible critics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact V, Q, A, occupancy and J for an MDP and policy.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Policy JSON file; defaults to the sigmoid policy with --theta.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Sample trajectories under the behavior policy as JSON lines.
    Rollout {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 10)]
        rollouts: usize,
    },
    /// Fit a critic and print the fit report.
    FitCritic {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_enum, default_value_t = CriticArg::Compatible)]
        kind: CriticArg,
        #[arg(long, value_enum, default_value_t = FitMethod::Exact)]
        method: FitMethod,
        /// Rollouts for the sampled fit.
        #[arg(long, default_value_t = 1000)]
        rollouts: usize,
    },
    /// Compare exact and Monte-Carlo gradient estimators against the ground truth.
    GradCompare {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 1000)]
        rollouts: usize,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Print JSON instead of an aligned table.
        #[arg(long)]
        json: bool,
    },
    /// Run the bias/variance/RMSE sweep and write CSV.
    Sweep {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Comma-separated, strictly ascending.
        #[arg(long, value_delimiter = ',')]
        rollout_counts: Option<Vec<usize>>,
        /// Comma-separated: true_q, standard, compatible, compatible_is.
        #[arg(long, value_delimiter = ',')]
        estimators: Option<Vec<String>>,
        /// Also write the SVG chart here.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Render a sweep CSV as an SVG chart.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CriticArg {
    Standard,
    Compatible,
    CompatibleIs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FitMethod {
    Exact,
    Sampled,
}

/// Problem definition shared by every subcommand except `plot`.
#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Experiment config JSON; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// MDP JSON file (replaces NChain).
    #[arg(long, conflicts_with_all = ["nchain_n", "slip", "gamma"])]
    pub mdp: Option<PathBuf>,
    /// NChain length.
    #[arg(long)]
    pub nchain_n: Option<usize>,
    /// NChain slip probability.
    #[arg(long)]
    pub slip: Option<f64>,
    /// Discount factor in (0, 1).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Behavior parameters, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    /// Target parameters, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta_tilde: Option<Vec<f64>>,
    /// Trials per sweep cell.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rollout length (default: discarded tail below 1e-6).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl ProblemArgs {
    pub fn config(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(path) = &self.mdp {
            config.mdp = MdpSpec::Path(path.clone());
        }
        if self.nchain_n.is_some() || self.slip.is_some() || self.gamma.is_some() {
            let mut spec = match config.mdp {
                MdpSpec::Nchain(spec) => spec,
                MdpSpec::Path(_) => NChainSpec::default(),
            };
            spec.n = self.nchain_n.unwrap_or(spec.n);
            spec.slip = self.slip.unwrap_or(spec.slip);
            spec.gamma = self.gamma.unwrap_or(spec.gamma);
            config.mdp = MdpSpec::Nchain(spec);
        }
        if let Some(theta) = &self.theta {
            config.theta = theta.clone();
        }
        if let Some(theta) = &self.theta_tilde {
            config.theta_tilde = theta.clone();
        }
        if let Some(trials) = self.trials {
            config.n_trials = trials;
        }
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(h) = self.horizon {
            config.horizon = Some(h);
        }
        config.validate()?;
        Ok(config)
    }
}

pub fn parse_estimators(names: &[String]) -> Result<Vec<EstimatorSpec>> {
    if names.is_empty() {
        bail!("--estimators needs at least one name");
    }
    names
        .iter()
        .map(|n| EstimatorSpec::parse(n.trim()).map_err(Into::into))
        .collect()
}
