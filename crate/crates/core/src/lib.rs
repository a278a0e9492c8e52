//! Surrogate policy gradients with compatible-feature critics on tabular MDPs.
//!
//! The crate computes the surrogate objective `L_π_θ(π_θ̃)` and its gradient
//! exactly on finite MDPs, fits linear critics (standard and compatible) either
//! in closed form or from rollouts, and runs the bias/variance/RMSE sweep that
//! compares Monte-Carlo gradient estimates built from those critics.

pub mod critic;
pub mod error;
pub mod experiment;
pub mod gradient;
pub mod linalg;
pub mod mdp;
pub mod policy;
pub mod rollout;

pub use critic::{
    fit_exact, fit_standard_ls, fit_weighted_ls, FeatureKind, FeatureMap, FitReport, LinearCritic,
    SampleCount, StepWeights, Weighting,
};
pub use error::{Error, Result};
pub use gradient::{
    mpi_lower_bound, policy_grad_exact, surrogate_grad_exact, surrogate_grad_mc, surrogate_value,
    BoundReport, EstimatorKind, GradientEstimate,
};
pub use mdp::{
    exact_advantage, exact_occupancy, exact_q, exact_value, make_nchain, policy_value,
    PolicyEvaluation, StateActionTable, StateTable, TabularMdp,
};
pub use policy::{
    finite_diff_score_check, tv_distance_alpha, DifferentiablePolicy, PolicyFamily, PolicyParams,
    ScoreTable,
};
pub use rollout::{
    collect, empirical_returns, sample_trajectory, SampleSet, Trajectory, Transition,
};
