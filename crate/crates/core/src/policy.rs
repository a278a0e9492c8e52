//! Differentiable parametric policies over finite state and action sets.
//!
//! Two families are provided:
//!
//! * `SigmoidLinear`: `π(a|s) ∝ σ(θ₁·s + θ₂·enc(a))`, renormalized per state.
//!   Two parameters regardless of the MDP size.
//! * `SoftmaxTabular`: one logit per `(s, a)`, `π(·|s) = softmax(θ[s, ·])`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::StateActionTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyFamily {
    SigmoidLinear,
    SoftmaxTabular,
}

/// Policy parameter vector θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyParams(pub Vec<f64>);

impl PolicyParams {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A parametric stochastic policy with analytic score vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferentiablePolicy {
    pub family: PolicyFamily,
    pub theta: PolicyParams,
    /// Real value assigned to each action index by `SigmoidLinear`. Empty means
    /// `enc(a) = a`.
    #[serde(default)]
    pub action_encoding: Vec<f64>,
}

/// `G[s][a][k] = ∂ log π(a|s) / ∂θ_k`
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub dim: usize,
    pub score: Vec<Vec<Vec<f64>>>,
}

impl ScoreTable {
    pub fn at(&self, s: usize, a: usize) -> &[f64] {
        &self.score[s][a]
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl DifferentiablePolicy {
    /// Two-parameter sigmoid policy with the default action encoding `enc(a) = a`.
    pub fn sigmoid_linear(theta1: f64, theta2: f64) -> Self {
        Self {
            family: PolicyFamily::SigmoidLinear,
            theta: PolicyParams(vec![theta1, theta2]),
            action_encoding: Vec::new(),
        }
    }

    /// Tabular softmax; `logits` is row-major `[s * n_actions + a]`.
    pub fn softmax_tabular(logits: Vec<f64>) -> Self {
        Self {
            family: PolicyFamily::SoftmaxTabular,
            theta: PolicyParams(logits),
            action_encoding: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let policy: Self = serde_json::from_str(text)?;
        if policy.theta.0.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("policy theta must be finite".into()));
        }
        if policy.family == PolicyFamily::SigmoidLinear && policy.theta.dim() != 2 {
            return Err(Error::DimensionMismatch(format!(
                "sigmoid_linear takes 2 parameters, got {}",
                policy.theta.dim()
            )));
        }
        Ok(policy)
    }

    pub fn dim(&self) -> usize {
        self.theta.dim()
    }

    /// Same family and encoding with a different parameter vector.
    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        Self {
            theta: PolicyParams(theta),
            ..self.clone()
        }
    }

    /// `enc(a)`
    pub fn action_value(&self, a: usize) -> f64 {
        self.action_encoding.get(a).copied().unwrap_or(a as f64)
    }

    /// Errors unless this policy can act on an MDP of the given shape.
    pub fn check_dims(&self, n_states: usize, n_actions: usize) -> Result<()> {
        match self.family {
            PolicyFamily::SigmoidLinear => {
                if self.theta.dim() != 2 {
                    return Err(Error::DimensionMismatch(format!(
                        "sigmoid_linear takes 2 parameters, got {}",
                        self.theta.dim()
                    )));
                }
                if !self.action_encoding.is_empty() && self.action_encoding.len() != n_actions {
                    return Err(Error::DimensionMismatch(format!(
                        "action_encoding has {} entries for {n_actions} actions",
                        self.action_encoding.len()
                    )));
                }
            }
            PolicyFamily::SoftmaxTabular => {
                if self.theta.dim() != n_states * n_actions {
                    return Err(Error::DimensionMismatch(format!(
                        "softmax_tabular needs {} logits for a {n_states}x{n_actions} MDP, got {}",
                        n_states * n_actions,
                        self.theta.dim()
                    )));
                }
            }
        }
        Ok(())
    }

    fn sigmoid_logit(&self, s: usize, a: usize) -> f64 {
        self.theta.0[0] * s as f64 + self.theta.0[1] * self.action_value(a)
    }

    /// `π(·|s)`
    pub fn probs_at(&self, s: usize, n_actions: usize) -> Vec<f64> {
        match self.family {
            PolicyFamily::SigmoidLinear => {
                let sig: Vec<f64> = (0..n_actions)
                    .map(|a| sigmoid(self.sigmoid_logit(s, a)))
                    .collect();
                let total: f64 = sig.iter().sum();
                sig.into_iter().map(|x| x / total).collect()
            }
            PolicyFamily::SoftmaxTabular => {
                let logits = &self.theta.0[s * n_actions..(s + 1) * n_actions];
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                exps.into_iter().map(|x| x / total).collect()
            }
        }
    }

    /// Full `π(a|s)` table.
    pub fn action_probs(&self, n_states: usize, n_actions: usize) -> Result<StateActionTable> {
        self.check_dims(n_states, n_actions)?;
        Ok(StateActionTable(
            (0..n_states).map(|s| self.probs_at(s, n_actions)).collect(),
        ))
    }

    /// Analytic `∂ log π(a|s) / ∂θ`.
    ///
    /// For `SigmoidLinear` this includes the per-state normalization term:
    /// `(1 - σ_a)·x_a - Σ_b π(b|s)·(1 - σ_b)·x_b` with `x_b = (s, enc(b))`.
    pub fn score(&self, s: usize, a: usize, n_actions: usize) -> Vec<f64> {
        match self.family {
            PolicyFamily::SigmoidLinear => {
                let probs = self.probs_at(s, n_actions);
                let sf = s as f64;
                let mut g = self.literal_sigmoid_score(s, a);
                for (b, pb) in probs.iter().enumerate() {
                    let w = pb * (1.0 - sigmoid(self.sigmoid_logit(s, b)));
                    g[0] -= w * sf;
                    g[1] -= w * self.action_value(b);
                }
                g
            }
            PolicyFamily::SoftmaxTabular => {
                let probs = self.probs_at(s, n_actions);
                let mut g = vec![0.0; self.theta.dim()];
                let base = s * n_actions;
                for (b, pb) in probs.iter().enumerate() {
                    g[base + b] = -pb;
                }
                g[base + a] += 1.0;
                g
            }
        }
    }

    /// `[(1 - σ(x)) s, (1 - σ(x)) enc(a)]` with `x = θ₁ s + θ₂ enc(a)`: the score of
    /// the unnormalized sigmoid. Not the gradient of `log π` for the normalized
    /// policy; exposed for comparison only.
    pub fn literal_sigmoid_score(&self, s: usize, a: usize) -> Vec<f64> {
        let c = 1.0 - sigmoid(self.sigmoid_logit(s, a));
        vec![c * s as f64, c * self.action_value(a)]
    }

    pub fn score_table(&self, n_states: usize, n_actions: usize) -> Result<ScoreTable> {
        self.check_dims(n_states, n_actions)?;
        Ok(ScoreTable {
            dim: self.dim(),
            score: (0..n_states)
                .map(|s| {
                    (0..n_actions)
                        .map(|a| self.score(s, a, n_actions))
                        .collect()
                })
                .collect(),
        })
    }
}

/// `|x - y| / max(|y|, floor)`
fn floored_relative_error(x: f64, y: f64, floor: f64) -> f64 {
    let diff = (x - y).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / x.abs().max(y.abs()).max(floor)
}

/// Max over `(s, a, k)` of the relative error between the analytic score and a
/// central difference of `log π(a|s)` with the given step.
pub fn finite_diff_score_check(
    policy: &DifferentiablePolicy,
    n_states: usize,
    n_actions: usize,
    step: f64,
) -> Result<f64> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {step}"
        )));
    }
    let scores = policy.score_table(n_states, n_actions)?;
    let mut worst = 0.0_f64;
    for k in 0..policy.dim() {
        let mut plus = policy.theta.0.clone();
        let mut minus = policy.theta.0.clone();
        plus[k] += step;
        minus[k] -= step;
        let p_plus = policy.with_theta(plus).action_probs(n_states, n_actions)?;
        let p_minus = policy.with_theta(minus).action_probs(n_states, n_actions)?;
        for s in 0..n_states {
            for a in 0..n_actions {
                let numeric = (p_plus[(s, a)].ln() - p_minus[(s, a)].ln()) / (2.0 * step);
                let analytic = scores.at(s, a)[k];
                worst = worst.max(floored_relative_error(analytic, numeric, 1e-3));
            }
        }
    }
    Ok(worst)
}

/// `max_s ½ Σ_a |p(a|s) - q(a|s)|` over two probability tables.
pub fn tv_distance_tables(p: &StateActionTable, q: &StateActionTable) -> Result<f64> {
    if p.n_states() != q.n_states() || p.n_actions() != q.n_actions() {
        return Err(Error::DimensionMismatch(
            "policies act on different MDP shapes".into(),
        ));
    }
    Ok(p.rows()
        .zip(q.rows())
        .map(|(pr, qr)| 0.5 * pr.iter().zip(qr).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Total-variation coefficient α between two policies.
pub fn tv_distance_alpha(
    p: &DifferentiablePolicy,
    q: &DifferentiablePolicy,
    n_states: usize,
    n_actions: usize,
) -> Result<f64> {
    tv_distance_tables(
        &p.action_probs(n_states, n_actions)?,
        &q.action_probs(n_states, n_actions)?,
    )
}
