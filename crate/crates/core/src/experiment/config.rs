use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::critic::FeatureKind;
use crate::error::{Error, Result};
use crate::mdp::{make_nchain, TabularMdp};
use crate::policy::{DifferentiablePolicy, PolicyFamily};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NChainSpec {
    pub n: usize,
    pub slip: f64,
    pub small_reward: f64,
    pub large_reward: f64,
    pub gamma: f64,
}

impl Default for NChainSpec {
    fn default() -> Self {
        Self {
            n: 5,
            slip: 0.2,
            small_reward: 2.0,
            large_reward: 10.0,
            gamma: 0.9,
        }
    }
}

/// Either NChain parameters or a path to an MDP JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdpSpec {
    Nchain(NChainSpec),
    Path(PathBuf),
}

impl Default for MdpSpec {
    fn default() -> Self {
        MdpSpec::Nchain(NChainSpec::default())
    }
}

impl MdpSpec {
    pub fn build(&self) -> Result<TabularMdp> {
        match self {
            MdpSpec::Nchain(p) => make_nchain(p.n, p.slip, p.small_reward, p.large_reward, p.gamma),
            MdpSpec::Path(path) => TabularMdp::from_json(&std::fs::read_to_string(path)?),
        }
    }
}

/// A gradient estimator in the sweep: a critic kind paired with its fit method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorSpec {
    /// Exact `Q^π_θ` plugged into the Monte-Carlo gradient; no critic.
    TrueQ,
    /// `[s, enc(a), 1]` fitted by ordinary least squares.
    Standard,
    /// Target-policy score features fitted by importance-weighted least squares.
    Compatible,
    /// Importance-weighted score features fitted by ordinary least squares.
    CompatibleIs,
}

impl EstimatorSpec {
    pub const ALL: [EstimatorSpec; 4] = [
        EstimatorSpec::TrueQ,
        EstimatorSpec::Standard,
        EstimatorSpec::Compatible,
        EstimatorSpec::CompatibleIs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorSpec::TrueQ => "true_q",
            EstimatorSpec::Standard => "standard",
            EstimatorSpec::Compatible => "compatible",
            EstimatorSpec::CompatibleIs => "compatible_is",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == name.replace('-', "_"))
            .ok_or_else(|| Error::Parse(format!("unknown estimator {name:?}")))
    }

    /// Stream index mixed into per-trial seeds. Fixed forever.
    pub fn seed_code(self) -> u64 {
        match self {
            EstimatorSpec::TrueQ => 0,
            EstimatorSpec::Standard => 1,
            EstimatorSpec::Compatible => 2,
            EstimatorSpec::CompatibleIs => 3,
        }
    }

    pub fn critic_kind(self) -> Option<FeatureKind> {
        match self {
            EstimatorSpec::TrueQ => None,
            EstimatorSpec::Standard => Some(FeatureKind::StandardLinear),
            EstimatorSpec::Compatible => Some(FeatureKind::CompatibleTarget),
            EstimatorSpec::CompatibleIs => Some(FeatureKind::CompatibleIs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QTargetMode {
    ExactQ,
    EmpiricalReturns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub mdp: MdpSpec,
    pub policy_family: PolicyFamily,
    pub theta: Vec<f64>,
    pub theta_tilde: Vec<f64>,
    pub rollout_counts: Vec<usize>,
    pub n_trials: usize,
    /// `None` selects the truncation rule with tolerance 1e-6.
    pub horizon: Option<usize>,
    pub master_seed: u64,
    pub estimators: Vec<EstimatorSpec>,
    pub q_target_mode: QTargetMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mdp: MdpSpec::default(),
            policy_family: PolicyFamily::SigmoidLinear,
            theta: vec![0.2, 0.5],
            theta_tilde: vec![0.3, 0.6],
            rollout_counts: vec![10, 30, 100, 300, 1000, 3000],
            n_trials: 250,
            horizon: None,
            master_seed: 2019,
            estimators: vec![EstimatorSpec::Standard, EstimatorSpec::Compatible],
            q_target_mode: QTargetMode::ExactQ,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_trials must be at least 2, got {}",
                self.n_trials
            )));
        }
        if self.rollout_counts.first() == Some(&0)
            || self.rollout_counts.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidArgument(
                "rollout_counts must be positive and strictly ascending".into(),
            ));
        }
        if self.horizon == Some(0) {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if self.theta.len() != self.theta_tilde.len() {
            return Err(Error::DimensionMismatch(
                "theta and theta_tilde differ in length".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        if !self.estimators.iter().all(|e| seen.insert(*e)) {
            return Err(Error::InvalidArgument("duplicate estimator".into()));
        }
        Ok(())
    }

    pub fn behavior(&self) -> DifferentiablePolicy {
        self.policy(&self.theta)
    }

    pub fn target(&self) -> DifferentiablePolicy {
        self.policy(&self.theta_tilde)
    }

    fn policy(&self, theta: &[f64]) -> DifferentiablePolicy {
        DifferentiablePolicy {
            family: self.policy_family,
            theta: crate::policy::PolicyParams(theta.to_vec()),
            action_encoding: Vec::new(),
        }
    }
}
