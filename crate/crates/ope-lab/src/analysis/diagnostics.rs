//! Coverage and boundedness diagnostics for a dataset under a given pair of
//! policies: the empirical counterparts of the reward bound R_max, the
//! coverage constant C, the behavior floor epsilon, and (when a Q-function is
//! supplied) the Bellman-residual bound U_max.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Result;
use crate::estimators::QFunction;
use crate::policy::Policy;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    /// max |R_t| observed.
    pub r_max: f64,
    /// max per-step ratio pi_e / pi_b on observed actions.
    pub c_hat: f64,
    /// min behavior probability on observed actions.
    pub eps_hat: f64,
    /// max |R_t - Q_t(S_t, A_t) + gamma * Q_{t+1}(S_{t+1}, pi_e)| when a Q is
    /// supplied.
    pub u_max: Option<f64>,
}

pub fn coverage_diagnostics(
    dataset: &Dataset,
    target: &dyn Policy,
    behavior: &dyn Policy,
    q: Option<(&QFunction, f64)>,
) -> Result<CoverageReport> {
    let mut r_max = 0.0f64;
    let mut c_hat = 0.0f64;
    let mut eps_hat = f64::INFINITY;
    let mut u_max: Option<f64> = q.map(|_| 0.0);
    let steps = dataset.num_steps();
    for traj in dataset.trajectories() {
        for t in 0..steps {
            if traj.is_absorbed(t) {
                break;
            }
            let state = traj.state(t);
            let action = traj.action(t);
            r_max = r_max.max(traj.reward(t).abs());
            let pb = behavior.prob(state, action);
            eps_hat = eps_hat.min(pb);
            c_hat = c_hat.max(target.prob(state, action) / pb);
            if let (Some(bound), Some((qf, gamma))) = (u_max.as_mut(), q) {
                let mut u = traj.reward(t) - qf.eval(t, state, action);
                if t + 1 < steps && !traj.is_absorbed(t + 1) {
                    u += gamma * qf.eval_under_policy(t + 1, traj.state(t + 1), target);
                }
                *bound = bound.max(u.abs());
            }
        }
    }
    Ok(CoverageReport { r_max, c_hat, eps_hat, u_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_bandit_dataset, BanditSpec};

    #[test]
    fn on_policy_coverage_is_one() {
        let mut spec = BanditSpec::example_two_context();
        spec.target_probs = spec.behavior_probs.clone();
        let ds = sample_bandit_dataset(&spec, 200, 2).unwrap();
        let b = spec.behavior_policy();
        let report = coverage_diagnostics(&ds, &b, &b, None).unwrap();
        assert!((report.c_hat - 1.0).abs() < 1e-12);
        assert!(report.u_max.is_none());
    }

    /// C_hat for the two-context example is max(0.4/0.3, 0.6/0.7) = 4/3 once
    /// both actions have been observed.
    #[test]
    fn example_coverage_constant() {
        let spec = BanditSpec::example_two_context();
        let ds = sample_bandit_dataset(&spec, 500, 3).unwrap();
        let report =
            coverage_diagnostics(&ds, &spec.target_policy(), &spec.behavior_policy(), None).unwrap();
        assert!((report.c_hat - 4.0 / 3.0).abs() < 1e-12);
        assert!((report.eps_hat - 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_rewards_give_zero_r_max() {
        let mut spec = BanditSpec::example_two_context();
        spec.reward_mean = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        spec.reward_noise_sd = 0.0;
        let ds = sample_bandit_dataset(&spec, 50, 4).unwrap();
        let report =
            coverage_diagnostics(&ds, &spec.target_policy(), &spec.behavior_policy(), None).unwrap();
        assert_eq!(report.r_max, 0.0);
    }
}
