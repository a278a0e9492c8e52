//! Finite MDPs and exact policy evaluation.
//!
//! Every quantity here is obtained from a dense linear solve, so the results are
//! exact up to floating-point roundoff:
//!
//! ```text
//! V   = (I - γ P_π)^-1 r_π
//! Q   = R + γ P V
//! ρ_π = (I - γ P_πᵀ)^-1 ρ₀        (unnormalized, total mass 1/(1-γ))
//! J   = ρ₀ᵀ V
//! ```

use std::ops::Index;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lu_solve;

const STOCHASTIC_TOL: f64 = 1e-12;
const POLICY_TOL: f64 = 1e-10;

pub const FORWARD: usize = 0;
pub const RETURN: usize = 1;

/// A finite MDP `⟨S, A, P, R, ρ₀, γ⟩` stored as dense nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transition[s][a][s']`
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`, the expected immediate reward.
    pub reward: Vec<Vec<f64>>,
    pub initial_dist: Vec<f64>,
    pub gamma: f64,
}

/// Per-(state, action) table: Q, A, critic evaluations or action probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateActionTable(pub Vec<Vec<f64>>);

/// Per-state table: V or the occupancy measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateTable(pub Vec<f64>);

impl StateActionTable {
    pub fn from_fn(n_states: usize, n_actions: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        Self(
            (0..n_states)
                .map(|s| (0..n_actions).map(|a| f(s, a)).collect())
                .collect(),
        )
    }

    pub fn n_states(&self) -> usize {
        self.0.len()
    }

    pub fn n_actions(&self) -> usize {
        self.0.first().map_or(0, Vec::len)
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.0[s]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.0.iter().map(Vec::as_slice)
    }

    /// `T[s][a] - baseline[s]`
    pub fn minus_baseline(&self, baseline: &StateTable) -> Self {
        Self(
            self.0
                .iter()
                .zip(&baseline.0)
                .map(|(row, b)| row.iter().map(|x| x - b).collect())
                .collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

impl Index<(usize, usize)> for StateActionTable {
    type Output = f64;
    fn index(&self, (s, a): (usize, usize)) -> &f64 {
        &self.0[s][a]
    }
}

impl StateTable {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl Index<usize> for StateTable {
    type Output = f64;
    fn index(&self, s: usize) -> &f64 {
        &self.0[s]
    }
}

impl TabularMdp {
    /// Builds and validates an MDP.
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        initial_dist: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let mdp = Self {
            n_states: transition.len(),
            n_actions: transition.first().map_or(0, Vec::len),
            transition,
            reward,
            initial_dist,
            gamma,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mdp: Self = serde_json::from_str(text)?;
        mdp.validate()?;
        Ok(mdp)
    }

    /// Checks every structural invariant and reports the first violation.
    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || na == 0 {
            return Err(Error::DimensionMismatch(format!(
                "n_states = {ns}, n_actions = {na}; both must be positive"
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::DiscountOutOfRange(self.gamma));
        }
        if self.transition.len() != ns {
            return Err(Error::DimensionMismatch(format!(
                "transition has {} state rows, expected {ns}",
                self.transition.len()
            )));
        }
        for (s, by_action) in self.transition.iter().enumerate() {
            if by_action.len() != na {
                return Err(Error::DimensionMismatch(format!(
                    "transition[{s}] has {} actions, expected {na}",
                    by_action.len()
                )));
            }
            for (a, row) in by_action.iter().enumerate() {
                if row.len() != ns {
                    return Err(Error::DimensionMismatch(format!(
                        "transition[{s}][{a}] has length {}, expected {ns}",
                        row.len()
                    )));
                }
                if let Some((next, &value)) = row
                    .iter()
                    .enumerate()
                    .find(|(_, p)| p.is_nan() || **p < 0.0)
                {
                    return Err(Error::NegativeTransition { s, a, next, value });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::TransitionNotStochastic { s, a, sum });
                }
            }
        }
        if self.reward.len() != ns || self.reward.iter().any(|r| r.len() != na) {
            return Err(Error::DimensionMismatch(format!(
                "reward must be {ns}x{na}"
            )));
        }
        if let Some((s, a)) = (0..ns)
            .flat_map(|s| (0..na).map(move |a| (s, a)))
            .find(|&(s, a)| !self.reward[s][a].is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "reward[{s}][{a}] is not finite"
            )));
        }
        if self.initial_dist.len() != ns {
            return Err(Error::InitialDistribution(format!(
                "length {}, expected {ns}",
                self.initial_dist.len()
            )));
        }
        if let Some((s, p)) = self
            .initial_dist
            .iter()
            .enumerate()
            .find(|(_, p)| p.is_nan() || **p < 0.0)
        {
            return Err(Error::InitialDistribution(format!("entry {s} is {p}")));
        }
        let mass: f64 = self.initial_dist.iter().sum();
        if (mass - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InitialDistribution(format!("sums to {mass}")));
        }
        Ok(())
    }

    /// Largest absolute expected reward.
    pub fn max_abs_reward(&self) -> f64 {
        self.reward
            .iter()
            .flatten()
            .fold(0.0_f64, |m, r| m.max(r.abs()))
    }

    /// Checks that `policy` is an `n_states x n_actions` row-stochastic table.
    pub fn check_policy(&self, policy: &StateActionTable) -> Result<()> {
        if policy.n_states() != self.n_states || policy.0.iter().any(|r| r.len() != self.n_actions)
        {
            return Err(Error::DimensionMismatch(format!(
                "policy table must be {}x{}",
                self.n_states, self.n_actions
            )));
        }
        for (s, row) in policy.rows().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| p.is_nan() || *p < 0.0) || (sum - 1.0).abs() > POLICY_TOL {
                return Err(Error::PolicyNotStochastic { s, sum });
            }
        }
        Ok(())
    }

    /// `r_π[s] = Σ_a π(a|s) R[s][a]`
    fn policy_reward(&self, policy: &StateActionTable) -> DVector<f64> {
        DVector::from_iterator(
            self.n_states,
            (0..self.n_states).map(|s| {
                policy
                    .row(s)
                    .iter()
                    .zip(&self.reward[s])
                    .map(|(p, r)| p * r)
                    .sum::<f64>()
            }),
        )
    }

    /// `P_π[s][s'] = Σ_a π(a|s) P[s][a][s']`
    pub fn policy_transition(&self, policy: &StateActionTable) -> DMatrix<f64> {
        let n = self.n_states;
        let mut p = DMatrix::zeros(n, n);
        for s in 0..n {
            for (a, &pa) in policy.row(s).iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for (next, &prob) in self.transition[s][a].iter().enumerate() {
                    p[(s, next)] += pa * prob;
                }
            }
        }
        p
    }
}

/// Builds the NChain benchmark.
///
/// Action `FORWARD` advances one state (self-looping at the end of the chain with
/// `large_reward`), `RETURN` jumps back to state 0 with `small_reward`. The
/// executed action is the opposite of the chosen one with probability `slip`.
/// Rewards are stored as expectations over the slip.
pub fn make_nchain(
    n: usize,
    slip: f64,
    small_reward: f64,
    large_reward: f64,
    gamma: f64,
) -> Result<TabularMdp> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "nchain needs n >= 2, got {n}"
        )));
    }
    if !(0.0..1.0).contains(&slip) {
        return Err(Error::InvalidArgument(format!(
            "slip must lie in [0, 1), got {slip}"
        )));
    }
    // (next state, reward) when the executed action is forward / return
    let forward = |s: usize| {
        if s + 1 < n {
            (s + 1, 0.0)
        } else {
            (s, large_reward)
        }
    };
    let back = (0usize, small_reward);

    let mut transition = vec![vec![vec![0.0; n]; 2]; n];
    let mut reward = vec![vec![0.0; 2]; n];
    for s in 0..n {
        for chosen in [FORWARD, RETURN] {
            let outcomes = [(FORWARD, forward(s)), (RETURN, back)];
            for (executed, (next, r)) in outcomes {
                let p = if executed == chosen { 1.0 - slip } else { slip };
                transition[s][chosen][next] += p;
                reward[s][chosen] += p * r;
            }
        }
    }
    let mut initial_dist = vec![0.0; n];
    initial_dist[0] = 1.0;
    TabularMdp::new(transition, reward, initial_dist, gamma)
}

/// Random MDP with Dirichlet(1)-like transition rows, rewards in `[0, 1)` and a
/// random initial distribution.
pub fn random_mdp<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
) -> Result<TabularMdp> {
    let mut simplex = |n: usize| {
        let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = raw.iter().sum();
        let mut v: Vec<f64> = raw.iter().map(|x| x / total).collect();
        // push the rounding residue into the largest entry so rows sum to 1 tightly
        let residue = 1.0 - v.iter().sum::<f64>();
        let imax = (0..n).max_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap_or(0);
        v[imax] += residue;
        v
    };
    let transition = (0..n_states)
        .map(|_| (0..n_actions).map(|_| simplex(n_states)).collect())
        .collect();
    let initial_dist = simplex(n_states);
    let reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.random::<f64>()).collect())
        .collect();
    TabularMdp::new(transition, reward, initial_dist, gamma)
}

/// Exact state values: solves `(I - γ P_π) V = r_π`.
pub fn exact_value(mdp: &TabularMdp, policy: &StateActionTable) -> Result<StateTable> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states;
    let system = DMatrix::identity(n, n) - mdp.policy_transition(policy) * mdp.gamma;
    let v = lu_solve(system, &mdp.policy_reward(policy))?;
    Ok(StateTable(v.iter().copied().collect()))
}

fn q_from_value(mdp: &TabularMdp, v: &StateTable) -> StateActionTable {
    StateActionTable::from_fn(mdp.n_states, mdp.n_actions, |s, a| {
        let next: f64 = mdp.transition[s][a]
            .iter()
            .zip(&v.0)
            .map(|(p, vn)| p * vn)
            .sum();
        mdp.reward[s][a] + mdp.gamma * next
    })
}

/// `Q[s][a] = R[s][a] + γ Σ_s' P[s][a][s'] V[s']`
pub fn exact_q(mdp: &TabularMdp, policy: &StateActionTable) -> Result<StateActionTable> {
    let v = exact_value(mdp, policy)?;
    Ok(q_from_value(mdp, &v))
}

/// `A[s][a] = Q[s][a] - V[s]`
pub fn exact_advantage(mdp: &TabularMdp, policy: &StateActionTable) -> Result<StateActionTable> {
    let v = exact_value(mdp, policy)?;
    Ok(q_from_value(mdp, &v).minus_baseline(&v))
}

/// Unnormalized discounted occupancy: solves `(I - γ P_πᵀ) ρ = ρ₀`.
pub fn exact_occupancy(mdp: &TabularMdp, policy: &StateActionTable) -> Result<StateTable> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states;
    let system = DMatrix::identity(n, n) - mdp.policy_transition(policy).transpose() * mdp.gamma;
    let rho0 = DVector::from_column_slice(&mdp.initial_dist);
    let rho = lu_solve(system, &rho0)?;
    Ok(StateTable(rho.iter().copied().collect()))
}

/// `J = Σ_s ρ₀[s] V[s]`
pub fn policy_value(mdp: &TabularMdp, policy: &StateActionTable) -> Result<f64> {
    let v = exact_value(mdp, policy)?;
    Ok(dot(&mdp.initial_dist, &v.0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// All exact quantities for one policy, computed with two linear solves.
#[derive(Debug, Clone, Serialize)]
pub struct PolicyEvaluation {
    pub value: StateTable,
    pub q: StateActionTable,
    pub advantage: StateActionTable,
    pub occupancy: StateTable,
    pub j: f64,
}

impl PolicyEvaluation {
    pub fn new(mdp: &TabularMdp, policy: &StateActionTable) -> Result<Self> {
        let value = exact_value(mdp, policy)?;
        let q = q_from_value(mdp, &value);
        let advantage = q.minus_baseline(&value);
        let occupancy = exact_occupancy(mdp, policy)?;
        let j = dot(&mdp.initial_dist, &value.0);
        Ok(Self {
            value,
            q,
            advantage,
            occupancy,
            j,
        })
    }
}
