//! Independent reference computations for the integration tests.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;
use surrogate_core::mdp::random_mdp;
use surrogate_core::rollout::rng_from_seed;
use surrogate_core::{DifferentiablePolicy, StateActionTable, TabularMdp};

pub fn nchain() -> TabularMdp {
    surrogate_core::make_nchain(5, 0.2, 2.0, 10.0, 0.9).unwrap()
}

pub fn reference_pair() -> (DifferentiablePolicy, DifferentiablePolicy) {
    (
        DifferentiablePolicy::sigmoid_linear(0.2, 0.5),
        DifferentiablePolicy::sigmoid_linear(0.3, 0.6),
    )
}

/// Random MDP with 2..=6 states, 2..=4 actions and γ in [0.5, 0.95].
pub fn random_instance(seed: u64) -> TabularMdp {
    let mut rng = rng_from_seed(seed);
    let ns = rng.random_range(2..=6);
    let na = rng.random_range(2..=4);
    let gamma = rng.random_range(0.5..0.95);
    random_mdp(&mut rng, ns, na, gamma).unwrap()
}

pub fn random_softmax(seed: u64, mdp: &TabularMdp, scale: f64) -> DifferentiablePolicy {
    let mut rng = rng_from_seed(seed);
    let logits = (0..mdp.n_states * mdp.n_actions)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    DifferentiablePolicy::softmax_tabular(logits)
}

/// Q by repeated Bellman backups until the sup-norm change drops below `tol`.
pub fn value_iteration_q(mdp: &TabularMdp, pi: &StateActionTable, tol: f64) -> Vec<Vec<f64>> {
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut q = vec![vec![0.0; na]; ns];
    loop {
        let v: Vec<f64> = (0..ns)
            .map(|s| (0..na).map(|a| pi[(s, a)] * q[s][a]).sum())
            .collect();
        let mut delta = 0.0_f64;
        for s in 0..ns {
            for a in 0..na {
                let next: f64 = (0..ns).map(|t| mdp.transition[s][a][t] * v[t]).sum();
                let updated = mdp.reward[s][a] + mdp.gamma * next;
                delta = delta.max((updated - q[s][a]).abs());
                q[s][a] = updated;
            }
        }
        if delta < tol {
            return q;
        }
    }
}

pub fn value_iteration_v(mdp: &TabularMdp, pi: &StateActionTable, tol: f64) -> Vec<f64> {
    let q = value_iteration_q(mdp, pi, tol);
    (0..mdp.n_states)
        .map(|s| (0..mdp.n_actions).map(|a| pi[(s, a)] * q[s][a]).sum())
        .collect()
}

/// `Σ_{t<horizon} γ^t Pr(s_t = s)` by pushing the start distribution forward.
pub fn forward_occupancy(mdp: &TabularMdp, pi: &StateActionTable, horizon: usize) -> Vec<f64> {
    let ns = mdp.n_states;
    let mut dist = mdp.initial_dist.clone();
    let mut rho = vec![0.0; ns];
    let mut disc = 1.0;
    for _ in 0..horizon {
        for s in 0..ns {
            rho[s] += disc * dist[s];
        }
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..mdp.n_actions {
                for t in 0..ns {
                    next[t] += dist[s] * pi[(s, a)] * mdp.transition[s][a][t];
                }
            }
        }
        dist = next;
        disc *= mdp.gamma;
    }
    rho
}

/// `J = Σ_s ρ₀(s) V(s)` from value iteration.
pub fn oracle_j(mdp: &TabularMdp, policy: &DifferentiablePolicy) -> f64 {
    let pi = policy.action_probs(mdp.n_states, mdp.n_actions).unwrap();
    let v = value_iteration_v(mdp, &pi, 1e-14);
    mdp.initial_dist.iter().zip(&v).map(|(p, x)| p * x).sum()
}

/// `L = J + Σ_s ρ(s) Σ_a π̃(a|s) A(s, a)` from value iteration and forward occupancy.
pub fn oracle_l(
    mdp: &TabularMdp,
    behavior: &DifferentiablePolicy,
    target: &DifferentiablePolicy,
) -> f64 {
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let pi = behavior.action_probs(ns, na).unwrap();
    let pt = target.action_probs(ns, na).unwrap();
    let q = value_iteration_q(mdp, &pi, 1e-14);
    let horizon = (36.0 / -mdp.gamma.ln()).ceil() as usize;
    let rho = forward_occupancy(mdp, &pi, horizon);
    let mut l = 0.0;
    let mut j = 0.0;
    for s in 0..ns {
        let v: f64 = (0..na).map(|a| pi[(s, a)] * q[s][a]).sum();
        j += mdp.initial_dist[s] * v;
        l += rho[s] * (0..na).map(|a| pt[(s, a)] * (q[s][a] - v)).sum::<f64>();
    }
    j + l
}

/// Central difference of `f` at `theta`, one coordinate at a time.
pub fn central_difference(theta: &[f64], step: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..theta.len())
        .map(|k| {
            let mut plus = theta.to_vec();
            let mut minus = theta.to_vec();
            plus[k] += step;
            minus[k] -= step;
            (f(&plus) - f(&minus)) / (2.0 * step)
        })
        .collect()
}

/// `max_k |a_k - b_k| / max(|b_k|, floor)`
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}

pub fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
