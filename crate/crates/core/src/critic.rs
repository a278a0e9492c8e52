//! Linear critics `f_w(s, a) = wᵀφ(s, a) + c₀(s)` and their least-squares fits.
//!
//! Three feature maps are supported:
//!
//! | kind                | φ(s, a)                                   |
//! |---------------------|-------------------------------------------|
//! | `StandardLinear`    | `[s, enc(a), 1]`                          |
//! | `CompatibleIs`      | `π_θ̃(a|s) / π_θ(a|s) · ∇_θ̃ log π_θ̃(a|s)` |
//! | `CompatibleTarget`  | `∇_θ̃ log π_θ̃(a|s)`                        |
//!
//! All fits reduce to one weighted projection over the finite `(s, a)` grid:
//! the exact fit weights each pair by `ρ_π_θ(s)·π(a|s)`, and a sampled fit
//! first aggregates per-sample weights and targets into the same grid.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::solve_gram;
use crate::mdp::{exact_occupancy, StateActionTable, StateTable, TabularMdp};
use crate::policy::DifferentiablePolicy;
use crate::rollout::{empirical_returns, SampleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    StandardLinear,
    CompatibleIs,
    CompatibleTarget,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::StandardLinear => "standard_linear",
            FeatureKind::CompatibleIs => "compatible_is",
            FeatureKind::CompatibleTarget => "compatible_target",
        }
    }
}

/// Which action distribution weights the projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `ρ_π_θ(s)·π_θ(a|s)`
    Behavior,
    /// `ρ_π_θ(s)·π_θ̃(a|s)`
    Target,
}

/// Per-step weights applied to trajectory samples before aggregation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepWeights {
    /// `γ^t`: the empirical measure targets the discounted occupancy.
    Discounted(f64),
    Uniform,
}

/// Feature map bound to a behavior/target policy pair and an MDP shape.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    kind: FeatureKind,
    behavior: DifferentiablePolicy,
    target: DifferentiablePolicy,
    n_states: usize,
    n_actions: usize,
    dim: usize,
    behavior_probs: StateActionTable,
    target_probs: StateActionTable,
    // flat [(s * n_actions + a) * dim + k]; NaN rows are undefined
    phi: Vec<f64>,
}

impl FeatureMap {
    pub fn new(
        kind: FeatureKind,
        behavior: &DifferentiablePolicy,
        target: &DifferentiablePolicy,
        n_states: usize,
        n_actions: usize,
    ) -> Result<Self> {
        if behavior.family != target.family || behavior.dim() != target.dim() {
            return Err(Error::DimensionMismatch(
                "behavior and target policies must share a family and dimension".into(),
            ));
        }
        let behavior_probs = behavior.action_probs(n_states, n_actions)?;
        let target_probs = target.action_probs(n_states, n_actions)?;
        let dim = match kind {
            FeatureKind::StandardLinear => 3,
            FeatureKind::CompatibleIs | FeatureKind::CompatibleTarget => target.dim(),
        };
        let mut phi = Vec::with_capacity(n_states * n_actions * dim);
        for s in 0..n_states {
            for a in 0..n_actions {
                match kind {
                    FeatureKind::StandardLinear => {
                        phi.extend_from_slice(&[s as f64, target.action_value(a), 1.0])
                    }
                    FeatureKind::CompatibleTarget => {
                        phi.extend(target.score(s, a, n_actions));
                    }
                    FeatureKind::CompatibleIs => {
                        let pb = behavior_probs[(s, a)];
                        if pb > 0.0 {
                            let ratio = target_probs[(s, a)] / pb;
                            phi.extend(target.score(s, a, n_actions).iter().map(|g| ratio * g));
                        } else {
                            phi.extend(std::iter::repeat_n(f64::NAN, dim));
                        }
                    }
                }
            }
        }
        Ok(Self {
            kind,
            behavior: behavior.clone(),
            target: target.clone(),
            n_states,
            n_actions,
            dim,
            behavior_probs,
            target_probs,
            phi,
        })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn behavior(&self) -> &DifferentiablePolicy {
        &self.behavior
    }

    pub fn target(&self) -> &DifferentiablePolicy {
        &self.target
    }

    pub fn behavior_probs(&self) -> &StateActionTable {
        &self.behavior_probs
    }

    pub fn target_probs(&self) -> &StateActionTable {
        &self.target_probs
    }

    /// `φ(s, a)`
    pub fn features(&self, s: usize, a: usize) -> Result<&[f64]> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(Error::InvalidArgument(format!(
                "(s={s}, a={a}) outside a {}x{} MDP",
                self.n_states, self.n_actions
            )));
        }
        let start = (s * self.n_actions + a) * self.dim;
        let row = &self.phi[start..start + self.dim];
        if row.first().is_some_and(|x| x.is_nan()) {
            return Err(Error::ImportanceWeightUndefined { s, a });
        }
        Ok(row)
    }

    /// `π_θ̃(a|s) / π_θ(a|s)`
    pub fn importance_weight(&self, s: usize, a: usize) -> Result<f64> {
        let pb = self.behavior_probs[(s, a)];
        if pb > 0.0 {
            Ok(self.target_probs[(s, a)] / pb)
        } else {
            Err(Error::ImportanceWeightUndefined { s, a })
        }
    }
}

/// Number of samples behind a fit, or `EXACT` for the closed-form projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleCount {
    Exact,
    Samples(usize),
}

impl Serialize for SampleCount {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SampleCount::Exact => ser.serialize_str("EXACT"),
            SampleCount::Samples(n) => ser.serialize_u64(*n as u64),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub w: Vec<f64>,
    /// `Σ weight·φ·(target - f_w)`: the fitted orthogonality condition.
    pub weighted_residual_moment: Vec<f64>,
    pub condition_number: f64,
    pub rank: usize,
    pub rank_deficient: bool,
    pub n_samples: SampleCount,
}

impl FitReport {
    pub fn residual_sup_norm(&self) -> f64 {
        self.weighted_residual_moment
            .iter()
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// `f_w(s, a) = wᵀφ(s, a) + c₀(s)`
#[derive(Debug, Clone)]
pub struct LinearCritic {
    pub features: FeatureMap,
    pub w: Vec<f64>,
    pub baseline: StateTable,
}

#[derive(Serialize)]
struct CriticJson<'a> {
    kind: FeatureKind,
    w: &'a [f64],
    baseline: &'a [f64],
    behavior_theta: &'a [f64],
    target_theta: &'a [f64],
}

impl LinearCritic {
    pub fn new(features: FeatureMap, w: Vec<f64>, baseline: StateTable) -> Result<Self> {
        if w.len() != features.dim() {
            return Err(Error::DimensionMismatch(format!(
                "w has {} entries, features have {}",
                w.len(),
                features.dim()
            )));
        }
        if baseline.len() != features.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "baseline has {} entries for {} states",
                baseline.len(),
                features.n_states()
            )));
        }
        Ok(Self {
            features,
            w,
            baseline,
        })
    }

    pub fn evaluate(&self, s: usize, a: usize) -> Result<f64> {
        let phi = self.features.features(s, a)?;
        Ok(dot(&self.w, phi) + self.baseline[s])
    }

    /// `f_w` over the whole grid. Undefined pairs (zero behavior probability
    /// under `CompatibleIs`) are reported as errors.
    pub fn table(&self) -> Result<StateActionTable> {
        let (ns, na) = (self.features.n_states(), self.features.n_actions());
        let rows = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| self.evaluate(s, a))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StateActionTable(rows))
    }

    /// `{"kind", "w", "baseline", "behavior_theta", "target_theta"}`
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(CriticJson {
            kind: self.features.kind(),
            w: &self.w,
            baseline: &self.baseline.0,
            behavior_theta: self.features.behavior().theta.as_slice(),
            target_theta: self.features.target().theta.as_slice(),
        })
        .expect("critic json is always serializable")
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `Σ W[s][a] φφᵀ w = Σ φ·Y[s][a]` where `Y` already carries the weights.
fn project(
    map: &FeatureMap,
    weight: &StateActionTable,
    weighted_target: &StateActionTable,
    n_samples: SampleCount,
) -> Result<FitReport> {
    let d = map.dim();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for s in 0..map.n_states() {
        for a in 0..map.n_actions() {
            let wt = weight[(s, a)];
            if wt == 0.0 {
                continue;
            }
            let phi = map.features(s, a)?;
            for i in 0..d {
                rhs[i] += phi[i] * weighted_target[(s, a)];
                for j in 0..d {
                    gram[(i, j)] += wt * phi[i] * phi[j];
                }
            }
        }
    }
    let sol = solve_gram(&gram, &rhs);
    let moment = &rhs - &gram * &sol.w;
    Ok(FitReport {
        w: sol.w.iter().copied().collect(),
        weighted_residual_moment: moment.iter().copied().collect(),
        condition_number: sol.condition_number,
        rank: sol.rank,
        rank_deficient: sol.is_rank_deficient(),
        n_samples,
    })
}

/// Closed-form projection of `q - baseline` onto the feature span under
/// `ρ_π_θ(s)·π_weight(a|s)`.
pub fn fit_exact(
    mdp: &TabularMdp,
    map: &FeatureMap,
    q: &StateActionTable,
    baseline: &StateTable,
    weighting: Weighting,
) -> Result<(FitReport, LinearCritic)> {
    check_shape(mdp, map)?;
    let occupancy = exact_occupancy(mdp, map.behavior_probs())?;
    fit_exact_with_occupancy(map, &occupancy, q, baseline, weighting)
}

/// [`fit_exact`] with a precomputed behavior occupancy.
pub fn fit_exact_with_occupancy(
    map: &FeatureMap,
    occupancy: &StateTable,
    q: &StateActionTable,
    baseline: &StateTable,
    weighting: Weighting,
) -> Result<(FitReport, LinearCritic)> {
    let probs = match weighting {
        Weighting::Behavior => map.behavior_probs(),
        Weighting::Target => map.target_probs(),
    };
    let (ns, na) = (map.n_states(), map.n_actions());
    let weight = StateActionTable::from_fn(ns, na, |s, a| occupancy[s] * probs[(s, a)]);
    let target =
        StateActionTable::from_fn(ns, na, |s, a| weight[(s, a)] * (q[(s, a)] - baseline[s]));
    let report = project(map, &weight, &target, SampleCount::Exact)?;
    let critic = LinearCritic::new(map.clone(), report.w.clone(), baseline.clone())?;
    Ok((report, critic))
}

fn check_shape(mdp: &TabularMdp, map: &FeatureMap) -> Result<()> {
    if mdp.n_states != map.n_states() || mdp.n_actions != map.n_actions() {
        return Err(Error::DimensionMismatch(
            "feature map and MDP have different shapes".into(),
        ));
    }
    Ok(())
}

/// Per-sample regression targets, aligned with `SampleSet::trajectories`.
pub type QTargets = Vec<Vec<f64>>;

/// Targets read from an exact (or any tabulated) Q table.
pub fn q_targets_from_table(samples: &SampleSet, q: &StateActionTable) -> QTargets {
    samples
        .trajectories
        .iter()
        .map(|traj| traj.transitions.iter().map(|tr| q[(tr.s, tr.a)]).collect())
        .collect()
}

/// Targets from discounted tail returns.
pub fn q_targets_from_returns(samples: &SampleSet, gamma: f64) -> QTargets {
    samples
        .trajectories
        .iter()
        .map(|traj| empirical_returns(traj, gamma))
        .collect()
}

/// Per-state average of the targets over visits, weighted like the fit;
/// unvisited states get 0.
pub fn sample_value_baseline(
    samples: &SampleSet,
    targets: &QTargets,
    n_states: usize,
    step_weights: StepWeights,
) -> StateTable {
    let mut num = vec![0.0; n_states];
    let mut den = vec![0.0; n_states];
    for (traj, ys) in samples.trajectories.iter().zip(targets) {
        let mut disc = 1.0;
        for (tr, y) in traj.transitions.iter().zip(ys) {
            num[tr.s] += disc * y;
            den[tr.s] += disc;
            if let StepWeights::Discounted(g) = step_weights {
                disc *= g;
            }
        }
    }
    StateTable(
        num.iter()
            .zip(&den)
            .map(|(n, d)| if *d > 0.0 { n / d } else { 0.0 })
            .collect(),
    )
}

fn fit_sampled(
    samples: &SampleSet,
    map: &FeatureMap,
    targets: &QTargets,
    baseline: &StateTable,
    step_weights: StepWeights,
    importance: bool,
) -> Result<(FitReport, LinearCritic)> {
    if targets.len() != samples.trajectories.len()
        || samples
            .trajectories
            .iter()
            .zip(targets)
            .any(|(t, y)| t.len() != y.len())
    {
        return Err(Error::DimensionMismatch(
            "targets must align with sampled transitions".into(),
        ));
    }
    let (ns, na) = (map.n_states(), map.n_actions());
    let mut weight = StateActionTable::from_fn(ns, na, |_, _| 0.0);
    let mut weighted_target = weight.clone();
    let mut n = 0;
    for (traj, ys) in samples.trajectories.iter().zip(targets) {
        let mut disc = 1.0;
        for (tr, y) in traj.transitions.iter().zip(ys) {
            let ratio = if importance {
                map.importance_weight(tr.s, tr.a)?
            } else {
                map.features(tr.s, tr.a)?;
                1.0
            };
            let wt = disc * ratio;
            weight.0[tr.s][tr.a] += wt;
            weighted_target.0[tr.s][tr.a] += wt * (y - baseline[tr.s]);
            n += 1;
            if let StepWeights::Discounted(g) = step_weights {
                disc *= g;
            }
        }
    }
    // average over trajectories so Gram entries approximate ρ-weighted integrals
    let scale = 1.0 / samples.trajectories.len().max(1) as f64;
    for row in weight.0.iter_mut().chain(weighted_target.0.iter_mut()) {
        row.iter_mut().for_each(|x| *x *= scale);
    }
    let report = project(map, &weight, &weighted_target, SampleCount::Samples(n))?;
    let critic = LinearCritic::new(map.clone(), report.w.clone(), baseline.clone())?;
    Ok((report, critic))
}

/// Least squares over the sampled `(s, a)` pairs.
pub fn fit_standard_ls(
    samples: &SampleSet,
    map: &FeatureMap,
    targets: &QTargets,
    baseline: &StateTable,
    step_weights: StepWeights,
) -> Result<(FitReport, LinearCritic)> {
    fit_sampled(samples, map, targets, baseline, step_weights, false)
}

/// Least squares with per-sample importance weights `π_θ̃(a|s) / π_θ(a|s)`.
pub fn fit_weighted_ls(
    samples: &SampleSet,
    map: &FeatureMap,
    targets: &QTargets,
    baseline: &StateTable,
    step_weights: StepWeights,
) -> Result<(FitReport, LinearCritic)> {
    fit_sampled(samples, map, targets, baseline, step_weights, true)
}
