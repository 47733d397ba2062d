//! The trajectory-return estimators: ordinary IS, sequential IS, and the
//! doubly robust estimator.
//!
//! - OIS applies the single weight λ_T to the whole discounted return:
//!   `E_n[λ_T G_T]`.
//! - SIS reweights each reward with the ratio accumulated up to its time:
//!   `E_n[Σ_t γ^t λ_t R_t]`.
//! - DR augments SIS with a Q-function baseline:
//!   `E_n[Σ_t λ_t γ^t (R_t − Q_t(S_t, A_t)) + λ_{t−1} γ^t Σ_a Q_t(S_t, a) π_e(a|S_t)]`
//!   with λ_{-1} = 1. With Q ≡ 0 it reduces to SIS exactly.

use crate::data::Dataset;
use crate::policy::Policy;
use crate::stats::mean;

use super::qfunction::QFunction;
use super::weights::IsWeights;

fn check_alignment(dataset: &Dataset, weights: &IsWeights) {
    assert_eq!(weights.num_trajectories(), dataset.len(), "weights were computed on a different dataset");
    assert_eq!(weights.num_steps(), dataset.num_steps(), "weights horizon mismatch");
}

/// Per-trajectory OIS contributions λ_T * G_T.
pub fn per_trajectory_ois(dataset: &Dataset, weights: &IsWeights, gamma: f64) -> Vec<f64> {
    check_alignment(dataset, weights);
    let last = dataset.num_steps() - 1;
    dataset
        .trajectories()
        .iter()
        .enumerate()
        .map(|(i, traj)| weights.lambda(i, last) * traj.discounted_return(gamma))
        .collect()
}

/// Ordinary importance sampling: `E_n[λ_T G_T]`.
pub fn ois(dataset: &Dataset, weights: &IsWeights, gamma: f64) -> f64 {
    mean(&per_trajectory_ois(dataset, weights, gamma))
}

/// Per-trajectory SIS contributions `Σ_t γ^t λ_t R_t`.
pub fn per_trajectory_sis(dataset: &Dataset, weights: &IsWeights, gamma: f64) -> Vec<f64> {
    check_alignment(dataset, weights);
    dataset
        .trajectories()
        .iter()
        .enumerate()
        .map(|(i, traj)| {
            let mut acc = 0.0;
            let mut disc = 1.0;
            for t in 0..traj.num_steps() {
                acc += disc * weights.lambda(i, t) * traj.reward(t);
                disc *= gamma;
            }
            acc
        })
        .collect()
}

/// Sequential importance sampling: `E_n[Σ_t γ^t λ_t R_t]`.
pub fn sis(dataset: &Dataset, weights: &IsWeights, gamma: f64) -> f64 {
    mean(&per_trajectory_sis(dataset, weights, gamma))
}

/// Per-trajectory DR contributions.
pub fn per_trajectory_dr(
    dataset: &Dataset,
    weights: &IsWeights,
    q: &QFunction,
    target: &dyn Policy,
    gamma: f64,
) -> Vec<f64> {
    check_alignment(dataset, weights);
    dataset
        .trajectories()
        .iter()
        .enumerate()
        .map(|(i, traj)| {
            let mut acc = 0.0;
            let mut disc = 1.0;
            for t in 0..traj.num_steps() {
                let state = traj.state(t);
                if traj.is_absorbed(t) {
                    // Absorbing regime: zero reward and zero continuation
                    // value; nothing to add.
                    disc *= gamma;
                    continue;
                }
                let residual = traj.reward(t) - q.eval(t, state, traj.action(t));
                let baseline = q.eval_under_policy(t, state, target);
                acc += weights.lambda(i, t) * disc * residual
                    + weights.lambda_before(i, t) * disc * baseline;
                disc *= gamma;
            }
            acc
        })
        .collect()
}

/// Doubly robust estimator with the given Q-function.
pub fn dr(
    dataset: &Dataset,
    weights: &IsWeights,
    q: &QFunction,
    target: &dyn Policy,
    gamma: f64,
) -> f64 {
    mean(&per_trajectory_dr(dataset, weights, q, target, gamma))
}

/// Per-trajectory weighted Bellman-residual cores `Σ_t λ_t γ^t U_t` with
/// `U_t = R_t − Q_t(S_t, A_t) + γ Σ_a Q_{t+1}(S_{t+1}, a) π_e(a|S_{t+1})`
/// (Q_{T+1} ≡ 0). For OIS and SIS, pass the corresponding cores instead.
/// These are the mean-zero-against-scores variables whose projected variance
/// predicts the estimated-ratio estimator's asymptotic variance.
pub fn per_trajectory_dr_core(
    dataset: &Dataset,
    weights: &IsWeights,
    q: &QFunction,
    target: &dyn Policy,
    gamma: f64,
) -> Vec<f64> {
    check_alignment(dataset, weights);
    let steps = dataset.num_steps();
    dataset
        .trajectories()
        .iter()
        .enumerate()
        .map(|(i, traj)| {
            let mut acc = 0.0;
            let mut disc = 1.0;
            for t in 0..steps {
                if traj.is_absorbed(t) {
                    break;
                }
                let mut u = traj.reward(t) - q.eval(t, traj.state(t), traj.action(t));
                if t + 1 < steps && !traj.is_absorbed(t + 1) {
                    u += gamma * q.eval_under_policy(t + 1, traj.state(t + 1), target);
                }
                acc += weights.lambda(i, t) * disc * u;
                disc *= gamma;
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_bandit_dataset, sample_trajectories, BanditSpec, EnvSpec, TabularMdpSpec};
    use crate::estimators::weights::{compute_weights, BehaviorRef};
    use crate::estimators::{bandit_is, BanditIsMode};
    use crate::policy::TabularPolicy;
    use approx::assert_relative_eq;

    fn mdp_setup(n: usize, seed: u64) -> (crate::data::Dataset, TabularMdpSpec, TabularPolicy, TabularPolicy) {
        let spec = TabularMdpSpec::two_state_example();
        let behavior =
            TabularPolicy::context_dependent(vec![vec![0.5, 0.5], vec![0.4, 0.6]]).unwrap();
        let target =
            TabularPolicy::context_dependent(vec![vec![0.65, 0.35], vec![0.3, 0.7]]).unwrap();
        let ds = sample_trajectories(&EnvSpec::Tabular(spec.clone()), &behavior, n, seed).unwrap();
        (ds, spec, behavior, target)
    }

    #[test]
    fn on_policy_estimates_are_the_sample_mean_return() {
        let (ds, _, behavior, _) = mdp_setup(300, 4);
        let w = compute_weights(&ds, &behavior, BehaviorRef::Oracle(&behavior)).unwrap();
        let mean_return =
            mean(&ds.trajectories().iter().map(|t| t.discounted_return(1.0)).collect::<Vec<_>>());
        assert_relative_eq!(ois(&ds, &w, 1.0), mean_return, epsilon = 1e-12);
        assert_relative_eq!(sis(&ds, &w, 1.0), mean_return, epsilon = 1e-12);
    }

    #[test]
    fn zero_q_collapses_dr_to_sis() {
        let (ds, _, behavior, target) = mdp_setup(300, 5);
        let w = compute_weights(&ds, &target, BehaviorRef::Oracle(&behavior)).unwrap();
        let q = QFunction::zero();
        assert_relative_eq!(
            dr(&ds, &w, &q, &target, 0.9),
            sis(&ds, &w, 0.9),
            epsilon = 1e-12
        );
    }

    #[test]
    fn rewards_only_at_the_last_step_collapse_sis_to_ois() {
        let (ds, _, behavior, target) = mdp_setup(100, 6);
        // Rebuild trajectories with all rewards zeroed except t = T.
        let last = ds.num_steps() - 1;
        let trajs: Vec<_> = ds
            .trajectories()
            .iter()
            .map(|tr| {
                let rewards: Vec<f64> =
                    (0..tr.num_steps()).map(|t| if t == last { tr.reward(t) } else { 0.0 }).collect();
                let states: Vec<f64> = (0..tr.num_steps()).flat_map(|t| tr.state(t).to_vec()).collect();
                let actions: Vec<u32> = (0..tr.num_steps()).map(|t| tr.action(t)).collect();
                crate::data::Trajectory::new(states, actions, rewards, 1).unwrap()
            })
            .collect();
        let sparse = crate::data::Dataset::new(trajs, 2, ds.seed_record()).unwrap();
        let w = compute_weights(&sparse, &target, BehaviorRef::Oracle(&behavior)).unwrap();
        assert_relative_eq!(sis(&sparse, &w, 0.8), ois(&sparse, &w, 0.8), epsilon = 1e-12);
    }

    #[test]
    fn horizon_zero_ois_equals_bandit_is() {
        let spec = BanditSpec::example_two_context();
        let ds = sample_bandit_dataset(&spec, 500, 9).unwrap();
        let target = spec.target_policy();
        let behavior = spec.behavior_policy();
        let w = compute_weights(&ds, &target, BehaviorRef::Oracle(&behavior)).unwrap();
        let from_ois = ois(&ds, &w, 1.0);
        let from_sis = sis(&ds, &w, 1.0);
        let from_bandit = bandit_is(&ds, BanditIsMode::Oracle, &spec).unwrap();
        assert_relative_eq!(from_ois, from_bandit, epsilon = 1e-12);
        assert_relative_eq!(from_sis, from_bandit, epsilon = 1e-12);
    }

    #[test]
    fn dr_contribution_decomposes_into_baseline_plus_core() {
        let (ds, spec, behavior, target) = mdp_setup(200, 7);
        let w = compute_weights(&ds, &target, BehaviorRef::Oracle(&behavior)).unwrap();
        let q = QFunction::exact_tabular(&spec, &target);
        let gamma = spec.discount;
        let full = per_trajectory_dr(&ds, &w, &q, &target, gamma);
        let core = per_trajectory_dr_core(&ds, &w, &q, &target, gamma);
        for (i, traj) in ds.trajectories().iter().enumerate() {
            let baseline = q.eval_under_policy(0, traj.state(0), &target);
            assert_relative_eq!(full[i], baseline + core[i], epsilon = 1e-10);
        }
    }

    /// Oracle-weight unbiasedness at the scale fixed by the estimator
    /// contract: 1e4 replications of n = 200, mean within 4 SE of truth.
    #[test]
    #[ignore = "slow Monte Carlo check; run with --ignored"]
    fn oracle_ois_sis_dr_are_unbiased_over_replications() {
        let spec = TabularMdpSpec::two_state_example();
        let behavior =
            TabularPolicy::context_dependent(vec![vec![0.5, 0.5], vec![0.4, 0.6]]).unwrap();
        let target =
            TabularPolicy::context_dependent(vec![vec![0.65, 0.35], vec![0.3, 0.7]]).unwrap();
        let truth = spec.exact_value(&target);
        let q = QFunction::exact_tabular(&spec, &target);
        let reps = 10_000;
        let mut est = vec![Vec::with_capacity(reps); 3];
        for rep in 0..reps {
            let seed = crate::rng::mix(&[11, rep as u64]);
            let ds =
                sample_trajectories(&EnvSpec::Tabular(spec.clone()), &behavior, 200, seed).unwrap();
            let w = compute_weights(&ds, &target, BehaviorRef::Oracle(&behavior)).unwrap();
            est[0].push(ois(&ds, &w, spec.discount));
            est[1].push(sis(&ds, &w, spec.discount));
            est[2].push(dr(&ds, &w, &q, &target, spec.discount));
        }
        for (name, xs) in ["ois", "sis", "dr"].iter().zip(&est) {
            let (m, se) = crate::stats::mean_se(xs);
            assert!((m - truth).abs() < 4.0 * se, "{name}: mean {m} truth {truth} se {se}");
        }
    }
}
