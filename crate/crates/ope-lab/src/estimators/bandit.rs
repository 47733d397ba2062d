//! The three bandit IS estimators: oracle ratio, context-agnostic estimated
//! ratio, and context-dependent estimated ratio.

use crate::data::Dataset;
use crate::env::BanditSpec;
use crate::error::{OpeError, Result};

/// Which behavior model goes in the denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BanditIsMode {
    /// True behavior probabilities from the spec.
    Oracle,
    /// Sample frequencies n(a) / n.
    ContextAgnostic,
    /// Conditional frequencies n(s, a) / n(s).
    ContextDependent,
}

/// `E_n[pi_e(A) / pi~_b(·) * R]` on a horizon-0 bandit dataset.
pub fn bandit_is(dataset: &Dataset, mode: BanditIsMode, spec: &BanditSpec) -> Result<f64> {
    spec.validate()?;
    if dataset.num_steps() != 1 {
        return Err(OpeError::DimensionMismatch(
            "bandit estimators need horizon-0 trajectories".into(),
        ));
    }
    let n = dataset.len();
    let num_actions = spec.num_actions();
    let num_contexts = spec.num_contexts();

    let mut action_counts = vec![0u64; num_actions];
    let mut cell_counts = vec![0u64; num_contexts * num_actions];
    let mut context_counts = vec![0u64; num_contexts];
    for traj in dataset.trajectories() {
        let s = traj.state(0)[0] as usize;
        let a = traj.action(0) as usize;
        action_counts[a] += 1;
        context_counts[s] += 1;
        cell_counts[s * num_actions + a] += 1;
    }

    let mut total = 0.0;
    for traj in dataset.trajectories() {
        let s = traj.state(0)[0] as usize;
        let a = traj.action(0) as usize;
        let pb = match mode {
            BanditIsMode::Oracle => spec.behavior_probs[a],
            BanditIsMode::ContextAgnostic => action_counts[a] as f64 / n as f64,
            BanditIsMode::ContextDependent => {
                let cell = cell_counts[s * num_actions + a];
                if cell == 0 {
                    return Err(OpeError::UnvisitedCell { context: s, action: a as u32 });
                }
                cell as f64 / context_counts[s] as f64
            }
        };
        total += spec.target_probs[a] / pb * traj.reward(0);
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SeedRecord, Trajectory};
    use crate::env::sample_bandit_dataset;
    use approx::assert_relative_eq;

    fn dataset_from(samples: &[(usize, u32, f64)]) -> Dataset {
        let trajs = samples
            .iter()
            .map(|&(s, a, r)| Trajectory::new(vec![s as f64], vec![a], vec![r], 1).unwrap())
            .collect();
        Dataset::new(trajs, 2, SeedRecord { root_seed: 0, base_stream: 0 }).unwrap()
    }

    /// Two hand-checked samples under the two-context example policies:
    /// ((0.4/0.3) * 10.1 + (0.6/0.7) * 0.3) / 2.
    #[test]
    fn oracle_mode_matches_hand_arithmetic() {
        let spec = BanditSpec::example_two_context();
        let ds = dataset_from(&[(0, 1, 10.1), (1, 0, 0.3)]);
        let v = bandit_is(&ds, BanditIsMode::Oracle, &spec).unwrap();
        let expected = ((0.4 / 0.3) * 10.1 + (0.6 / 0.7) * 0.3) / 2.0;
        assert_relative_eq!(v, expected, epsilon = 1e-12);
    }

    #[test]
    fn identical_policies_give_the_sample_mean() {
        let mut spec = BanditSpec::example_two_context();
        spec.target_probs = spec.behavior_probs.clone();
        let ds = sample_bandit_dataset(&spec, 200, 3).unwrap();
        let v = bandit_is(&ds, BanditIsMode::Oracle, &spec).unwrap();
        let mean_r: f64 =
            ds.trajectories().iter().map(|t| t.reward(0)).sum::<f64>() / ds.len() as f64;
        assert_relative_eq!(v, mean_r, epsilon = 1e-12);
    }

    #[test]
    fn estimated_modes_use_the_observed_frequencies() {
        let spec = BanditSpec::example_two_context();
        // n(a=1) = 1 of 4; n(s=0) = 2 with n(s=0, a=1) = 1.
        let ds = dataset_from(&[(0, 1, 2.0), (0, 0, 1.0), (1, 0, 1.0), (1, 0, 3.0)]);
        let ca = bandit_is(&ds, BanditIsMode::ContextAgnostic, &spec).unwrap();
        let expected_ca = (0.4 / 0.25 * 2.0 + 0.6 / 0.75 * (1.0 + 1.0 + 3.0)) / 4.0;
        assert_relative_eq!(ca, expected_ca, epsilon = 1e-12);
        let cd = bandit_is(&ds, BanditIsMode::ContextDependent, &spec).unwrap();
        let expected_cd = (0.4 / 0.5 * 2.0 + 0.6 / 0.5 * 1.0 + 0.6 / 1.0 * (1.0 + 3.0)) / 4.0;
        assert_relative_eq!(cd, expected_cd, epsilon = 1e-12);
    }
}
