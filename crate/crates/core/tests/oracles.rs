//! Library results checked against independent reference computations.

mod common;

use common::*;
use surrogate_core::critic::{q_targets_from_table, FeatureKind};
use surrogate_core::experiment::{run_sweep, EstimatorSpec, ExperimentConfig};
use surrogate_core::rollout::{default_horizon, rng_from_seed, sample_index};
use surrogate_core::{
    collect, empirical_returns, exact_occupancy, exact_q, exact_value, fit_exact, fit_standard_ls,
    fit_weighted_ls, policy_value, sample_trajectory, DifferentiablePolicy, FeatureMap,
    StateActionTable, StepWeights, Weighting,
};

#[test]
fn exact_solves_match_value_iteration_and_forward_occupancy() {
    for i in 0..100u64 {
        let mdp = random_instance(i);
        let policy = random_softmax(10_000 + i, &mdp, 2.0);
        let pi = policy.action_probs(mdp.n_states, mdp.n_actions).unwrap();
        let v = exact_value(&mdp, &pi).unwrap();
        let q = exact_q(&mdp, &pi).unwrap();
        assert!(sup_gap(&v.0, &value_iteration_v(&mdp, &pi, 1e-12)) < 1e-8);
        let q_vi = value_iteration_q(&mdp, &pi, 1e-12);
        for (s, row) in q_vi.iter().enumerate() {
            assert!(sup_gap(q.row(s), row) < 1e-8);
        }
        let rho = exact_occupancy(&mdp, &pi).unwrap();
        let rho_fw = forward_occupancy(&mdp, &pi, 500);
        let tail = mdp.gamma.powi(500) / (1.0 - mdp.gamma);
        assert!(sup_gap(&rho.0, &rho_fw) <= tail + 1e-10, "instance {i}");
        assert!((rho.sum() - 1.0 / (1.0 - mdp.gamma)).abs() < 1e-9);
    }
}

#[test]
fn nchain_values_match_value_iteration() {
    let mdp = nchain();
    let (b, _) = reference_pair();
    let pi = b.action_probs(5, 2).unwrap();
    let v = exact_value(&mdp, &pi).unwrap();
    assert!(sup_gap(&v.0, &value_iteration_v(&mdp, &pi, 1e-13)) < 1e-9);
    assert!((policy_value(&mdp, &pi).unwrap() - oracle_j(&mdp, &b)).abs() < 1e-9);
}

#[test]
fn mean_discounted_return_matches_j() {
    let mdp = nchain();
    let (b, _) = reference_pair();
    let horizon = default_horizon(mdp.gamma, mdp.max_abs_reward(), 1e-6);
    let samples = collect(&mdp, &b, 100_000, horizon, 7).unwrap();
    let returns: Vec<f64> = samples
        .trajectories
        .iter()
        .map(|t| empirical_returns(t, mdp.gamma)[0])
        .collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let j = oracle_j(&mdp, &b);
    assert!((mean - j).abs() < 3.0 * se, "mean {mean}, J {j}, se {se}");
}

#[test]
fn monte_carlo_q_matches_exact_q() {
    // Q(s, a) from rollouts that start in s, take a, then follow the policy.
    let mdp = nchain();
    let (b, _) = reference_pair();
    let pi = b.action_probs(5, 2).unwrap();
    let q = exact_q(&mdp, &pi).unwrap();
    let horizon = default_horizon(mdp.gamma, mdp.max_abs_reward(), 1e-6);
    let n = 20_000;
    for s in 0..5 {
        for a in 0..2 {
            let mut start = mdp.clone();
            start.initial_dist = vec![0.0; 5];
            start.initial_dist[s] = 1.0;
            let forced = StateActionTable::from_fn(5, 2, |_, _| 0.0);
            let mut first = forced.clone();
            for row in first.0.iter_mut() {
                row[a] = 1.0;
            }
            let mut returns = Vec::with_capacity(n);
            for i in 0..n as u64 {
                let head = sample_trajectory(&start, &first, 1, 1_000_000 * (2 * s + a) as u64 + i)
                    .unwrap();
                let mut cont = mdp.clone();
                cont.initial_dist = mdp.transition[s][a].clone();
                let tail = sample_trajectory(&cont, &pi, horizon, i ^ 0xABCD_EF01).unwrap();
                let g = head.transitions[0].r + mdp.gamma * empirical_returns(&tail, mdp.gamma)[0];
                returns.push(g);
            }
            let nf = n as f64;
            let mean = returns.iter().sum::<f64>() / nf;
            let var = returns.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            let se = (var / nf).sqrt();
            assert!(
                (mean - q[(s, a)]).abs() < 3.5 * se,
                "Q({s},{a}): mc {mean}, exact {}, se {se}",
                q[(s, a)]
            );
        }
    }
}

#[test]
fn empirical_state_frequencies_match_stationary_distribution() {
    let mdp = nchain();
    let uniform = StateActionTable::from_fn(5, 2, |_, _| 0.5);
    let traj = sample_trajectory(&mdp, &uniform, 100_000, 11).unwrap();
    let mut freq = [0.0; 5];
    for tr in &traj.transitions {
        freq[tr.s] += 1.0 / 100_000.0;
    }
    let p = mdp.policy_transition(&uniform);
    let mut stationary = vec![0.2; 5];
    for _ in 0..10_000 {
        stationary = (0..5)
            .map(|t| (0..5).map(|s| stationary[s] * p[(s, t)]).sum())
            .collect();
    }
    let l1: f64 = freq
        .iter()
        .zip(&stationary)
        .map(|(f, p)| (f - p).abs())
        .sum();
    assert!(l1 < 1e-2, "L1 {l1}");
}

#[test]
fn sampled_actions_pass_chi_square() {
    let probs = [0.1, 0.2, 0.3, 0.4];
    let n = 100_000;
    let mut rng = rng_from_seed(3);
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[sample_index(&mut rng, &probs)] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    // 0.999 quantile of chi-square with 3 degrees of freedom
    assert!(chi2 < 16.27, "chi2 {chi2}");
}

#[test]
fn sampled_fits_approach_exact_fits() {
    let mdp = nchain();
    let (b, t) = reference_pair();
    let pi = b.action_probs(5, 2).unwrap();
    let q = exact_q(&mdp, &pi).unwrap();
    let v = exact_value(&mdp, &pi).unwrap();
    let horizon = default_horizon(mdp.gamma, mdp.max_abs_reward(), 1e-6);
    let samples = collect(&mdp, &b, 100_000, horizon, 5).unwrap();
    let targets = q_targets_from_table(&samples, &q);
    let sw = StepWeights::Discounted(mdp.gamma);
    for (kind, weighting) in [
        (FeatureKind::StandardLinear, Weighting::Behavior),
        (FeatureKind::CompatibleIs, Weighting::Behavior),
        (FeatureKind::CompatibleTarget, Weighting::Target),
    ] {
        let map = FeatureMap::new(kind, &b, &t, 5, 2).unwrap();
        let baseline = match kind {
            FeatureKind::StandardLinear => surrogate_core::StateTable::zeros(5),
            _ => v.clone(),
        };
        let (exact, _) = fit_exact(&mdp, &map, &q, &baseline, weighting).unwrap();
        let (sampled, _) = match weighting {
            Weighting::Target => fit_weighted_ls(&samples, &map, &targets, &baseline, sw),
            Weighting::Behavior => fit_standard_ls(&samples, &map, &targets, &baseline, sw),
        }
        .unwrap();
        let scale = exact.w.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        let gap = sup_gap(&exact.w, &sampled.w) / scale;
        assert!(
            gap < 1e-2,
            "{}: exact {:?}, sampled {:?}",
            kind.name(),
            exact.w,
            sampled.w
        );
    }
}

#[test]
fn monte_carlo_gradients_are_unbiased_with_true_q() {
    let config = ExperimentConfig {
        rollout_counts: vec![30, 300],
        n_trials: 200,
        estimators: vec![EstimatorSpec::TrueQ, EstimatorSpec::Compatible],
        ..ExperimentConfig::default()
    };
    let result = run_sweep(&config).unwrap();
    for cell in &result.cells {
        for (k, (bias, se)) in cell.bias.iter().zip(&cell.se).enumerate() {
            assert!(
                bias.abs() < 4.0 * se,
                "{} N={} component {k}: bias {bias}, se {se}",
                cell.estimator,
                cell.n_rollouts
            );
        }
    }
}

#[test]
fn exact_gradients_match_oracle_finite_differences() {
    // value-iteration J and forward-recursion L, independent of the linear solves
    let mdp = nchain();
    let (b, t) = reference_pair();
    let family = |theta: &[f64]| DifferentiablePolicy::sigmoid_linear(theta[0], theta[1]);
    let dj = central_difference(&b.theta.0, 1e-4, |th| oracle_j(&mdp, &family(th)));
    let dl = central_difference(&t.theta.0, 1e-4, |th| oracle_l(&mdp, &b, &family(th)));
    let g_j = surrogate_core::policy_grad_exact(&mdp, &b).unwrap().g;
    let q = exact_q(&mdp, &b.action_probs(5, 2).unwrap()).unwrap();
    let g_l = surrogate_core::surrogate_grad_exact(&mdp, &b, &t, &q)
        .unwrap()
        .g;
    assert!(
        max_relative_error(&g_j, &dj, 1e-9) < 1e-6,
        "{g_j:?} vs {dj:?}"
    );
    assert!(
        max_relative_error(&g_l, &dl, 1e-9) < 1e-6,
        "{g_l:?} vs {dl:?}"
    );
}
