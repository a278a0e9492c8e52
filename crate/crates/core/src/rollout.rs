//! Seeded trajectory sampling.
//!
//! Trajectory `i` of a sample set drawn with master seed `seed` uses its own
//! ChaCha8 stream seeded with `derive_seed(seed, i)`:
//!
//! ```text
//! derive_seed(seed, i) = splitmix64(seed ^ splitmix64(i + 0x9E3779B97F4A7C15))
//! ```
//!
//! so the output does not depend on how trajectories are scheduled across threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{StateActionTable, TabularMdp};
use crate::policy::{DifferentiablePolicy, PolicyParams};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sub-stream `stream` under `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(GOLDEN_GAMMA)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Index drawn from a discrete distribution by inverse CDF.
pub fn sample_index<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // u landed in the rounding gap above the accumulated mass
    last_positive
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub horizon: usize,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Trajectories drawn under one behavior policy from one master seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub trajectories: Vec<Trajectory>,
    pub behavior_params: PolicyParams,
    pub seed: u64,
}

impl SampleSet {
    pub fn n_steps(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// One JSON object per line: `{"seed": .., "steps": [[s, a, r], ..]}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for traj in &self.trajectories {
            let steps: Vec<(usize, usize, f64)> = traj
                .transitions
                .iter()
                .map(|tr| (tr.s, tr.a, tr.r))
                .collect();
            let line = serde_json::json!({ "seed": traj.seed, "steps": steps });
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Truncation horizon making the discarded tail `γ^H R_max / (1-γ)` at most `tol`.
pub fn default_horizon(gamma: f64, max_abs_reward: f64, tol: f64) -> usize {
    if max_abs_reward <= 0.0 {
        return 1;
    }
    let h = (tol * (1.0 - gamma) / max_abs_reward).ln() / gamma.ln();
    h.ceil().max(1.0) as usize
}

/// Samples one length-`horizon` trajectory with action probabilities `policy`.
pub fn sample_trajectory(
    mdp: &TabularMdp,
    policy: &StateActionTable,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    mdp.check_policy(policy)?;
    Ok(sample_unchecked(mdp, policy, horizon, seed))
}

fn sample_unchecked(
    mdp: &TabularMdp,
    policy: &StateActionTable,
    horizon: usize,
    seed: u64,
) -> Trajectory {
    let mut rng = rng_from_seed(seed);
    let mut s = sample_index(&mut rng, &mdp.initial_dist);
    let mut transitions = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let a = sample_index(&mut rng, policy.row(s));
        transitions.push(Transition {
            s,
            a,
            r: mdp.reward[s][a],
            t,
        });
        s = sample_index(&mut rng, &mdp.transition[s][a]);
    }
    Trajectory {
        transitions,
        horizon,
        seed,
    }
}

/// Discounted tail returns `G_t = Σ_{k≥t} γ^{k-t} r_k`.
pub fn empirical_returns(traj: &Trajectory, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; traj.len()];
    let mut acc = 0.0;
    for (g, tr) in out.iter_mut().zip(&traj.transitions).rev() {
        acc = tr.r + gamma * acc;
        *g = acc;
    }
    out
}

/// Draws `n_rollouts` trajectories; trajectory `i` uses `derive_seed(seed, i)`.
pub fn collect(
    mdp: &TabularMdp,
    policy: &DifferentiablePolicy,
    n_rollouts: usize,
    horizon: usize,
    seed: u64,
) -> Result<SampleSet> {
    if n_rollouts == 0 {
        return Err(Error::InvalidArgument(
            "n_rollouts must be at least 1".into(),
        ));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let probs = policy.action_probs(mdp.n_states, mdp.n_actions)?;
    mdp.check_policy(&probs)?;
    let trajectories = (0..n_rollouts as u64)
        .into_par_iter()
        .map(|i| sample_unchecked(mdp, &probs, horizon, derive_seed(seed, i)))
        .collect();
    Ok(SampleSet {
        trajectories,
        behavior_params: policy.theta.clone(),
        seed,
    })
}
