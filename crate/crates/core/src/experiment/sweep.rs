use rayon::prelude::*;
use serde::Serialize;

use super::config::{EstimatorSpec, ExperimentConfig, QTargetMode};
use crate::critic::{
    fit_exact_with_occupancy, fit_standard_ls, fit_weighted_ls, q_targets_from_returns,
    q_targets_from_table, sample_value_baseline, FeatureKind, FeatureMap, SampleCount, StepWeights,
    Weighting,
};
use crate::error::{Error, Result};
use crate::gradient::{surrogate_grad_from, surrogate_grad_mc, EstimatorKind, GradientEstimate};
use crate::mdp::{PolicyEvaluation, StateActionTable, StateTable, TabularMdp};
use crate::policy::DifferentiablePolicy;
use crate::rollout::{collect, default_horizon, derive_seed};

const HORIZON_TOLERANCE: f64 = 1e-6;

/// Everything a sweep needs that does not depend on the trial.
#[derive(Debug, Clone)]
pub struct ExperimentContext {
    pub config: ExperimentConfig,
    pub mdp: TabularMdp,
    pub behavior: DifferentiablePolicy,
    pub target: DifferentiablePolicy,
    pub behavior_probs: StateActionTable,
    pub behavior_eval: PolicyEvaluation,
    pub horizon: usize,
    /// Exact `∂L/∂θ̃` with the true `Q^π_θ`.
    pub ground_truth: Vec<f64>,
}

impl ExperimentContext {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mdp = config.mdp.build()?;
        let behavior = config.behavior();
        let target = config.target();
        let behavior_probs = behavior.action_probs(mdp.n_states, mdp.n_actions)?;
        target.check_dims(mdp.n_states, mdp.n_actions)?;
        let behavior_eval = PolicyEvaluation::new(&mdp, &behavior_probs)?;
        let ground_truth =
            surrogate_grad_from(&behavior_eval.occupancy, &target, &behavior_eval.q)?;
        let horizon = config
            .horizon
            .unwrap_or_else(|| default_horizon(mdp.gamma, mdp.max_abs_reward(), HORIZON_TOLERANCE));
        Ok(Self {
            config: config.clone(),
            mdp,
            behavior,
            target,
            behavior_probs,
            behavior_eval,
            horizon,
            ground_truth,
        })
    }

    pub fn feature_map(&self, kind: FeatureKind) -> Result<FeatureMap> {
        FeatureMap::new(
            kind,
            &self.behavior,
            &self.target,
            self.mdp.n_states,
            self.mdp.n_actions,
        )
    }

    fn step_weights(&self) -> StepWeights {
        StepWeights::Discounted(self.mdp.gamma)
    }
}

/// Seed of one trial: `mix(mix(mix(master, estimator), n_rollouts), trial)`.
pub fn trial_seed(master: u64, estimator: EstimatorSpec, n_rollouts: usize, trial: usize) -> u64 {
    let s = derive_seed(master, estimator.seed_code());
    let s = derive_seed(s, n_rollouts as u64);
    derive_seed(s, trial as u64)
}

/// One seeded gradient estimate.
///
/// Critic-based estimators fit their critic on the same rollouts that feed the
/// gradient. A rank-deficient fit is returned as [`Error::DegenerateFit`].
pub fn run_trial(
    ctx: &ExperimentContext,
    estimator: EstimatorSpec,
    n_rollouts: usize,
    trial: usize,
) -> Result<GradientEstimate> {
    let seed = trial_seed(ctx.config.master_seed, estimator, n_rollouts, trial);
    let samples = collect(&ctx.mdp, &ctx.behavior, n_rollouts, ctx.horizon, seed)?;
    let gamma = ctx.mdp.gamma;
    let q = &ctx.behavior_eval.q;

    let Some(kind) = estimator.critic_kind() else {
        return surrogate_grad_mc(&samples, gamma, &ctx.behavior_probs, &ctx.target, |s, a| {
            q[(s, a)]
        });
    };

    let map = ctx.feature_map(kind)?;
    let targets = match ctx.config.q_target_mode {
        QTargetMode::ExactQ => q_targets_from_table(&samples, q),
        QTargetMode::EmpiricalReturns => q_targets_from_returns(&samples, gamma),
    };
    let baseline = match (kind, ctx.config.q_target_mode) {
        (FeatureKind::StandardLinear, _) => StateTable::zeros(ctx.mdp.n_states),
        (_, QTargetMode::ExactQ) => ctx.behavior_eval.value.clone(),
        (_, QTargetMode::EmpiricalReturns) => {
            sample_value_baseline(&samples, &targets, ctx.mdp.n_states, ctx.step_weights())
        }
    };
    let (report, critic) = match estimator {
        EstimatorSpec::Compatible => {
            fit_weighted_ls(&samples, &map, &targets, &baseline, ctx.step_weights())?
        }
        _ => fit_standard_ls(&samples, &map, &targets, &baseline, ctx.step_weights())?,
    };
    if report.rank_deficient {
        return Err(Error::DegenerateFit {
            rank: report.rank,
            dim: report.w.len(),
            condition_number: report.condition_number,
        });
    }
    let table = critic.table()?;
    let g = surrogate_grad_mc(&samples, gamma, &ctx.behavior_probs, &ctx.target, |s, a| {
        table[(s, a)]
    })?;
    Ok(g.with_critic(kind))
}

/// Statistics of one (estimator, rollout count) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellStats {
    pub estimator: String,
    pub n_rollouts: usize,
    pub n_trials: usize,
    pub n_failed: usize,
    pub mean: Vec<f64>,
    /// `mean - g*`
    pub bias: Vec<f64>,
    pub bias_norm: f64,
    /// Unbiased per-component sample variance.
    pub variance: Vec<f64>,
    pub var_trace: f64,
    /// `sqrt(mean ‖ĝ - g*‖²)`
    pub rmse: f64,
    /// Per-component standard error of the mean.
    pub se: Vec<f64>,
    /// `sqrt(var_trace / n_trials)`
    pub se_bias_norm: f64,
}

impl CellStats {
    /// Statistics over successful trial estimates. Needs at least one estimate;
    /// variances need two.
    pub fn from_estimates(
        estimator: &str,
        n_rollouts: usize,
        estimates: &[Vec<f64>],
        n_failed: usize,
        truth: &[f64],
    ) -> Self {
        let n = estimates.len();
        let d = truth.len();
        let nf = n as f64;
        let mut mean = vec![0.0; d];
        for g in estimates {
            for (m, x) in mean.iter_mut().zip(g) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nf);
        let mut variance = vec![0.0; d];
        let mut sq_err = 0.0;
        for g in estimates {
            for k in 0..d {
                variance[k] += (g[k] - mean[k]).powi(2);
                sq_err += (g[k] - truth[k]).powi(2);
            }
        }
        let denom = if n > 1 { nf - 1.0 } else { f64::NAN };
        variance.iter_mut().for_each(|v| *v /= denom);
        let bias: Vec<f64> = mean.iter().zip(truth).map(|(m, t)| m - t).collect();
        let bias_norm = bias.iter().map(|b| b * b).sum::<f64>().sqrt();
        let var_trace: f64 = variance.iter().sum();
        let se = variance.iter().map(|v| (v / nf).sqrt()).collect();
        Self {
            estimator: estimator.to_string(),
            n_rollouts,
            n_trials: n,
            n_failed,
            mean,
            bias,
            bias_norm,
            variance,
            var_trace,
            rmse: (sq_err / nf).sqrt(),
            se,
            se_bias_norm: (var_trace / nf).sqrt(),
        }
    }

    /// `bias_norm / se_bias_norm`
    pub fn bias_z(&self) -> f64 {
        self.bias_norm / self.se_bias_norm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub dim: usize,
    pub ground_truth: Vec<f64>,
    pub cells: Vec<CellStats>,
}

impl SweepResult {
    pub fn cell(&self, estimator: &str, n_rollouts: usize) -> Option<&CellStats> {
        self.cells
            .iter()
            .find(|c| c.estimator == estimator && c.n_rollouts == n_rollouts)
    }
}

/// Runs every (estimator, rollout count) cell. Trials run in parallel on the
/// current rayon pool; results are gathered in trial order so the output does
/// not depend on the thread count.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    let ctx = ExperimentContext::new(config)?;
    let mut cells = Vec::new();
    for &estimator in &config.estimators {
        for &n_rollouts in &config.rollout_counts {
            let outcomes: Vec<Result<GradientEstimate>> = (0..config.n_trials)
                .into_par_iter()
                .map(|trial| run_trial(&ctx, estimator, n_rollouts, trial))
                .collect();
            let mut estimates = Vec::with_capacity(outcomes.len());
            let mut n_failed = 0;
            for outcome in outcomes {
                match outcome {
                    Ok(g) => estimates.push(g.g),
                    Err(Error::DegenerateFit { .. }) => n_failed += 1,
                    Err(e) => return Err(e),
                }
            }
            if estimates.is_empty() {
                return Err(Error::AllTrialsFailed {
                    estimator: estimator.name().to_string(),
                    n_rollouts,
                    n_trials: config.n_trials,
                });
            }
            cells.push(CellStats::from_estimates(
                estimator.name(),
                n_rollouts,
                &estimates,
                n_failed,
                &ctx.ground_truth,
            ));
        }
    }
    Ok(SweepResult {
        dim: ctx.ground_truth.len(),
        ground_truth: ctx.ground_truth,
        cells,
    })
}

/// One line of the estimator comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub label: String,
    pub estimate: GradientEstimate,
    /// `‖g - g*‖∞`
    pub gap: f64,
}

/// Exact and single-trial Monte-Carlo estimates side by side.
pub fn grad_compare(
    ctx: &ExperimentContext,
    n_rollouts: usize,
    trial: usize,
) -> Result<Vec<CompareRow>> {
    let truth = &ctx.ground_truth;
    let row = |label: String, estimate: GradientEstimate| CompareRow {
        gap: estimate.sup_distance(truth),
        label,
        estimate,
    };
    let mut rows = vec![row(
        "exact/true_q".into(),
        GradientEstimate {
            g: truth.clone(),
            estimator: EstimatorKind::ExactTrueQ,
            n_rollouts: SampleCount::Exact,
            critic_kind: None,
        },
    )];
    let eval = &ctx.behavior_eval;
    for (kind, weighting) in [
        (FeatureKind::StandardLinear, Weighting::Behavior),
        (FeatureKind::CompatibleIs, Weighting::Behavior),
        (FeatureKind::CompatibleTarget, Weighting::Target),
    ] {
        let baseline = if kind == FeatureKind::StandardLinear {
            StateTable::zeros(ctx.mdp.n_states)
        } else {
            eval.value.clone()
        };
        let map = ctx.feature_map(kind)?;
        let (_, critic) =
            fit_exact_with_occupancy(&map, &eval.occupancy, &eval.q, &baseline, weighting)?;
        let g = surrogate_grad_from(&eval.occupancy, &ctx.target, &critic.table()?)?;
        let estimate = GradientEstimate {
            g,
            estimator: EstimatorKind::ExactCritic,
            n_rollouts: SampleCount::Exact,
            critic_kind: Some(kind),
        };
        rows.push(row(format!("exact/{}", kind.name()), estimate));
    }
    let mut mc: Vec<EstimatorSpec> = vec![EstimatorSpec::TrueQ];
    mc.extend(
        ctx.config
            .estimators
            .iter()
            .filter(|e| **e != EstimatorSpec::TrueQ),
    );
    for estimator in mc {
        let estimate = run_trial(ctx, estimator, n_rollouts, trial)?;
        rows.push(row(format!("mc/{}", estimator.name()), estimate));
    }
    Ok(rows)
}
