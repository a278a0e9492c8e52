//! Surrogate objective, its gradient (exact and Monte-Carlo), the classic
//! policy gradient, and the monotonic-improvement lower bound.
//!
//! With `ρ = ρ_π_θ` the behavior occupancy,
//!
//! ```text
//! L(θ̃)      = J(π_θ) + Σ_s ρ(s) Σ_a π_θ̃(a|s) A^π_θ(s, a)
//! ∇_θ̃ L     = Σ_s ρ(s) Σ_a π_θ̃(a|s) ∇_θ̃ log π_θ̃(a|s) T(s, a)
//! ```
//!
//! where `T` is `Q^π_θ` for the ground truth, or a critic table `f_w`.

use serde::Serialize;

use crate::critic::{FeatureKind, SampleCount};
use crate::error::{Error, Result};
use crate::mdp::{PolicyEvaluation, StateActionTable, StateTable, TabularMdp};
use crate::policy::{tv_distance_tables, DifferentiablePolicy};
use crate::rollout::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    ExactTrueQ,
    ExactCritic,
    McTrueQ,
    McCritic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientEstimate {
    pub g: Vec<f64>,
    pub estimator: EstimatorKind,
    pub n_rollouts: SampleCount,
    pub critic_kind: Option<FeatureKind>,
}

impl GradientEstimate {
    /// Relabels a true-Q estimate as one computed from the given critic.
    pub fn with_critic(mut self, kind: FeatureKind) -> Self {
        self.estimator = match self.estimator {
            EstimatorKind::ExactTrueQ | EstimatorKind::ExactCritic => EstimatorKind::ExactCritic,
            EstimatorKind::McTrueQ | EstimatorKind::McCritic => EstimatorKind::McCritic,
        };
        self.critic_kind = Some(kind);
        self
    }

    /// `‖self - other‖∞`
    pub fn sup_distance(&self, other: &[f64]) -> f64 {
        self.g
            .iter()
            .zip(other)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// `L = J(π_θ) + Σ_s ρ(s) Σ_a π_θ̃(a|s) A(s, a)` from a behavior evaluation.
pub fn surrogate_value_from(behavior: &PolicyEvaluation, target_probs: &StateActionTable) -> f64 {
    let expected_advantage: f64 = behavior
        .occupancy
        .0
        .iter()
        .zip(target_probs.rows())
        .zip(behavior.advantage.rows())
        .map(|((rho, pt), adv)| rho * pt.iter().zip(adv).map(|(p, a)| p * a).sum::<f64>())
        .sum();
    behavior.j + expected_advantage
}

pub fn surrogate_value(
    mdp: &TabularMdp,
    behavior: &DifferentiablePolicy,
    target: &DifferentiablePolicy,
) -> Result<f64> {
    let eval = PolicyEvaluation::new(mdp, &behavior.action_probs(mdp.n_states, mdp.n_actions)?)?;
    let target_probs = target.action_probs(mdp.n_states, mdp.n_actions)?;
    Ok(surrogate_value_from(&eval, &target_probs))
}

/// `Σ_s ρ(s) Σ_a π_θ̃(a|s)·∇log π_θ̃(a|s)·T[s][a]`
pub fn surrogate_grad_from(
    occupancy: &StateTable,
    target: &DifferentiablePolicy,
    table: &StateActionTable,
) -> Result<Vec<f64>> {
    let (ns, na) = (table.n_states(), table.n_actions());
    if occupancy.len() != ns {
        return Err(Error::DimensionMismatch(
            "occupancy and value table disagree on n_states".into(),
        ));
    }
    let probs = target.action_probs(ns, na)?;
    let mut g = vec![0.0; target.dim()];
    for s in 0..ns {
        let mut inner = vec![0.0; target.dim()];
        for a in 0..na {
            let c = probs[(s, a)] * table[(s, a)];
            for (acc, sc) in inner.iter_mut().zip(target.score(s, a, na)) {
                *acc += c * sc;
            }
        }
        for (acc, x) in g.iter_mut().zip(inner) {
            *acc += occupancy[s] * x;
        }
    }
    Ok(g)
}

/// Exact `∂L/∂θ̃` with `table` standing in for `Q^π_θ`.
pub fn surrogate_grad_exact(
    mdp: &TabularMdp,
    behavior: &DifferentiablePolicy,
    target: &DifferentiablePolicy,
    table: &StateActionTable,
) -> Result<GradientEstimate> {
    let probs = behavior.action_probs(mdp.n_states, mdp.n_actions)?;
    let occupancy = crate::mdp::exact_occupancy(mdp, &probs)?;
    if table.n_states() != mdp.n_states || table.n_actions() != mdp.n_actions {
        return Err(Error::DimensionMismatch(
            "value table shape differs from MDP".into(),
        ));
    }
    Ok(GradientEstimate {
        g: surrogate_grad_from(&occupancy, target, table)?,
        estimator: EstimatorKind::ExactTrueQ,
        n_rollouts: SampleCount::Exact,
        critic_kind: None,
    })
}

/// Exact `∂J/∂θ = Σ_s ρ_π(s) Σ_a π(a|s)·∇log π(a|s)·Q^π(s, a)`.
pub fn policy_grad_exact(
    mdp: &TabularMdp,
    policy: &DifferentiablePolicy,
) -> Result<GradientEstimate> {
    let eval = PolicyEvaluation::new(mdp, &policy.action_probs(mdp.n_states, mdp.n_actions)?)?;
    Ok(GradientEstimate {
        g: surrogate_grad_from(&eval.occupancy, policy, &eval.q)?,
        estimator: EstimatorKind::ExactTrueQ,
        n_rollouts: SampleCount::Exact,
        critic_kind: None,
    })
}

/// Importance-weighted score-function estimate of `∂L/∂θ̃` from behavior rollouts:
///
/// ```text
/// g = (1/N) Σ_traj Σ_t γ^t · π_θ̃(a_t|s_t)/π_θ(a_t|s_t) · ∇log π_θ̃(a_t|s_t) · value(s_t, a_t)
/// ```
///
/// Discounted visit weights are aggregated per `(s, a)` before contraction, so
/// `value` is called once per visited pair.
pub fn surrogate_grad_mc(
    samples: &SampleSet,
    gamma: f64,
    behavior_probs: &StateActionTable,
    target: &DifferentiablePolicy,
    value: impl Fn(usize, usize) -> f64,
) -> Result<GradientEstimate> {
    let (ns, na) = (behavior_probs.n_states(), behavior_probs.n_actions());
    let target_probs = target.action_probs(ns, na)?;
    let mut visits = vec![vec![0.0_f64; na]; ns];
    for traj in &samples.trajectories {
        let mut disc = 1.0;
        for tr in &traj.transitions {
            if tr.s >= ns || tr.a >= na {
                return Err(Error::InvalidArgument(format!(
                    "sampled pair (s={}, a={}) outside a {ns}x{na} MDP",
                    tr.s, tr.a
                )));
            }
            visits[tr.s][tr.a] += disc;
            disc *= gamma;
        }
    }
    let n = samples.trajectories.len();
    let mut g = vec![0.0; target.dim()];
    for s in 0..ns {
        for a in 0..na {
            let weight = visits[s][a];
            if weight == 0.0 {
                continue;
            }
            let pb = behavior_probs[(s, a)];
            if pb.is_nan() || pb <= 0.0 {
                return Err(Error::ImportanceWeightUndefined { s, a });
            }
            let c = weight * target_probs[(s, a)] / pb * value(s, a) / n as f64;
            for (acc, sc) in g.iter_mut().zip(target.score(s, a, na)) {
                *acc += c * sc;
            }
        }
    }
    Ok(GradientEstimate {
        g,
        estimator: EstimatorKind::McTrueQ,
        n_rollouts: SampleCount::Samples(n),
        critic_kind: None,
    })
}

/// Terms of `J(π_θ̃) ≥ L - 4εγ α² / (1-γ)²`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    #[serde(rename = "L")]
    pub surrogate: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub bound: f64,
    #[serde(rename = "J_target")]
    pub j_target: f64,
    pub holds: bool,
}

const BOUND_SLACK: f64 = 1e-8;

pub fn mpi_lower_bound(
    mdp: &TabularMdp,
    behavior: &DifferentiablePolicy,
    target: &DifferentiablePolicy,
) -> Result<BoundReport> {
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let behavior_probs = behavior.action_probs(ns, na)?;
    let target_probs = target.action_probs(ns, na)?;
    let eval = PolicyEvaluation::new(mdp, &behavior_probs)?;
    let epsilon = eval.advantage.max_abs();
    let alpha = tv_distance_tables(&behavior_probs, &target_probs)?;
    let surrogate = surrogate_value_from(&eval, &target_probs);
    let gamma = mdp.gamma;
    let bound = surrogate - 4.0 * epsilon * gamma * alpha * alpha / ((1.0 - gamma) * (1.0 - gamma));
    let j_target = crate::mdp::policy_value(mdp, &target_probs)?;
    Ok(BoundReport {
        surrogate,
        epsilon,
        alpha,
        bound,
        j_target,
        holds: j_target >= bound - BOUND_SLACK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{make_nchain, policy_value, random_mdp};
    use crate::rollout::collect;
    use rand::SeedableRng;

    fn nchain() -> TabularMdp {
        make_nchain(5, 0.2, 2.0, 10.0, 0.9).unwrap()
    }

    #[test]
    fn surrogate_equals_j_at_behavior() {
        let mdp = nchain();
        let p = DifferentiablePolicy::sigmoid_linear(0.2, 0.5);
        let l = surrogate_value(&mdp, &p, &p).unwrap();
        let j = policy_value(&mdp, &p.action_probs(5, 2).unwrap()).unwrap();
        assert!((l - j).abs() < 1e-12);
    }

    #[test]
    fn single_action_surrogate_is_j() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mdp = random_mdp(&mut rng, 4, 1, 0.8).unwrap();
        let p = DifferentiablePolicy::softmax_tabular(vec![0.3; 4]);
        let q = DifferentiablePolicy::softmax_tabular(vec![-1.0; 4]);
        let l = surrogate_value(&mdp, &p, &q).unwrap();
        let j = policy_value(&mdp, &p.action_probs(4, 1).unwrap()).unwrap();
        assert!((l - j).abs() < 1e-12);
        assert!(policy_grad_exact(&mdp, &p)
            .unwrap()
            .g
            .iter()
            .all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn surrogate_nchain_term_by_term() {
        let mdp = nchain();
        let b = DifferentiablePolicy::sigmoid_linear(0.2, 0.5);
        let t = DifferentiablePolicy::sigmoid_linear(0.3, 0.6);
        let pb = b.action_probs(5, 2).unwrap();
        let pt = t.action_probs(5, 2).unwrap();
        let eval = PolicyEvaluation::new(&mdp, &pb).unwrap();
        // brute-force: J + Σ_s Σ_a ρ(s) π̃(a|s) (Q(s,a) - V(s))
        let mut expected = eval.j;
        for s in 0..5 {
            for a in 0..2 {
                expected += eval.occupancy[s] * pt[(s, a)] * (eval.q[(s, a)] - eval.value[s]);
            }
        }
        let l = surrogate_value(&mdp, &b, &t).unwrap();
        assert!((l - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_advantage_table_gives_zero_gradient() {
        let mdp = nchain();
        let b = DifferentiablePolicy::sigmoid_linear(0.2, 0.5);
        let t = DifferentiablePolicy::sigmoid_linear(0.3, 0.6);
        let table = StateActionTable::from_fn(5, 2, |s, _| 3.0 * s as f64 - 1.0);
        let g = surrogate_grad_exact(&mdp, &b, &t, &table).unwrap();
        assert!(g.g.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn first_order_match_at_behavior() {
        let mdp = nchain();
        let b = DifferentiablePolicy::sigmoid_linear(0.2, 0.5);
        let q = PolicyEvaluation::new(&mdp, &b.action_probs(5, 2).unwrap())
            .unwrap()
            .q;
        let surrogate = surrogate_grad_exact(&mdp, &b, &b, &q).unwrap();
        let pg = policy_grad_exact(&mdp, &b).unwrap();
        assert!(surrogate.sup_distance(&pg.g) < 1e-10);
    }

    #[test]
    fn symmetric_softmax_components_match() {
        // two identical states with identical exchangeable actions
        let mdp = TabularMdp::new(
            vec![
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            ],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![0.5, 0.5],
            0.9,
        )
        .unwrap();
        let p = DifferentiablePolicy::softmax_tabular(vec![0.2, -0.1, 0.2, -0.1]);
        let g = policy_grad_exact(&mdp, &p).unwrap().g;
        assert!((g[0] - g[2]).abs() < 1e-12);
        assert!((g[1] - g[3]).abs() < 1e-12);
    }

    #[test]
    fn mc_zero_value_is_zero() {
        let mdp = nchain();
        let b = DifferentiablePolicy::sigmoid_linear(0.2, 0.5);
        let t = DifferentiablePolicy::sigmoid_linear(0.3, 0.6);
        let samples = collect(&mdp, &b, 5, 50, 1).unwrap();
        let g = surrogate_grad_mc(&samples, 0.9, &b.action_probs(5, 2).unwrap(), &t, |_, _| {
            0.0
        })
        .unwrap();
        assert_eq!(g.g, vec![0.0, 0.0]);
        assert_eq!(g.n_rollouts, SampleCount::Samples(5));
        assert_eq!(
            g.with_critic(FeatureKind::StandardLinear).estimator,
            EstimatorKind::McCritic
        );
    }

    #[test]
    fn bound_tight_at_behavior() {
        let mdp = nchain();
        let b = DifferentiablePolicy::sigmoid_linear(0.2, 0.5);
        let report = mpi_lower_bound(&mdp, &b, &b).unwrap();
        assert_eq!(report.alpha, 0.0);
        assert!((report.bound - report.j_target).abs() < 1e-10);
        assert!((report.surrogate - report.j_target).abs() < 1e-10);
        assert!(report.holds);
    }

    #[test]
    fn bound_holds_at_reference_params() {
        let mdp = nchain();
        let b = DifferentiablePolicy::sigmoid_linear(0.2, 0.5);
        let t = DifferentiablePolicy::sigmoid_linear(0.3, 0.6);
        let report = mpi_lower_bound(&mdp, &b, &t).unwrap();
        assert!(report.holds);
        assert!(report.epsilon > 0.0 && report.alpha > 0.0);
        let json = serde_json::to_value(&report).unwrap();
        assert!(json.get("L").is_some() && json.get("J_target").is_some());
    }
}
