//! Data-generating processes: a contextual bandit, tabular MDPs, and a
//! CartPole physics model, plus the sampling loop and Monte Carlo valuation
//! shared by all of them.
//!
//! All specs are immutable and sampling uses one counter-based substream per
//! trajectory, so generation is reproducible and embarrassingly parallel.

mod bandit;
mod cartpole;
mod tabular;

pub use bandit::{sample_bandit_dataset, BanditSpec};
pub(crate) use bandit::sample_index as sample_index_from;
pub use cartpole::{CartPoleSpec, CartpoleAnglePolicy};
pub use tabular::TabularMdpSpec;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SeedRecord, Trajectory};
use crate::error::{OpeError, Result};
use crate::policy::Policy;
use crate::rng::substream;

/// Any of the supported environments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvSpec {
    Bandit(BanditSpec),
    Tabular(TabularMdpSpec),
    CartPole(CartPoleSpec),
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            EnvSpec::Bandit(s) => s.validate(),
            EnvSpec::Tabular(s) => s.validate(),
            EnvSpec::CartPole(s) => s.validate(),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            EnvSpec::Bandit(_) | EnvSpec::Tabular(_) => 1,
            EnvSpec::CartPole(_) => 4,
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            EnvSpec::Bandit(s) => s.num_actions(),
            EnvSpec::Tabular(s) => s.num_actions,
            EnvSpec::CartPole(_) => 2,
        }
    }

    /// Timesteps per trajectory (T + 1).
    pub fn num_steps(&self) -> usize {
        match self {
            EnvSpec::Bandit(_) => 1,
            EnvSpec::Tabular(s) => s.horizon + 1,
            EnvSpec::CartPole(s) => s.horizon,
        }
    }
}

/// Draws `n` i.i.d. trajectories of full horizon under `behavior`.
///
/// CartPole episodes that fail early are padded to the shared horizon with an
/// absorbing regime: frozen state, zero reward, and a single null action (so
/// padded steps never enter likelihoods or IS ratios).
pub fn sample_trajectories(
    env: &EnvSpec,
    behavior: &dyn Policy,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    env.validate()?;
    if n == 0 {
        return Err(OpeError::NotEnoughData("requested an empty dataset".into()));
    }
    validate_policy_normalization(env, behavior)?;
    let record = SeedRecord { root_seed: seed, base_stream: 0 };
    let trajectories: Vec<Trajectory> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(record.root_seed, record.trajectory_stream(i));
            sample_one(env, behavior, &mut rng)
        })
        .collect();
    Dataset::new(trajectories, env.num_actions(), record)
}

/// Monte Carlo estimate of the target policy value `E[sum_t gamma^t R_t]`,
/// returned with its standard error.
pub fn monte_carlo_value(
    env: &EnvSpec,
    target: &dyn Policy,
    episodes: usize,
    gamma: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    env.validate()?;
    if episodes == 0 {
        return Err(OpeError::NotEnoughData("monte carlo needs at least one episode".into()));
    }
    validate_policy_normalization(env, target)?;
    let returns: Vec<f64> = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            sample_one(env, target, &mut rng).discounted_return(gamma)
        })
        .collect();
    Ok(crate::stats::mean_se(&returns))
}

fn sample_one(env: &EnvSpec, policy: &dyn Policy, rng: &mut impl Rng) -> Trajectory {
    match env {
        EnvSpec::Bandit(s) => s.sample_one(policy, rng),
        EnvSpec::Tabular(s) => s.sample_one(policy, rng),
        EnvSpec::CartPole(s) => s.sample_one(policy, rng),
    }
}

/// Rejects policies whose action probabilities do not normalize on the
/// environment's states (all states for finite spaces, probe states for
/// CartPole).
fn validate_policy_normalization(env: &EnvSpec, policy: &dyn Policy) -> Result<()> {
    if policy.num_actions() != env.num_actions() {
        return Err(OpeError::DimensionMismatch(format!(
            "policy has {} actions, environment has {}",
            policy.num_actions(),
            env.num_actions()
        )));
    }
    let check = |state: &[f64]| -> Result<()> {
        let sum: f64 =
            (0..env.num_actions() as u32).map(|a| policy.prob(state, a)).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(OpeError::NotAProbability {
                what: format!("policy probabilities at state {state:?}"),
                sum,
                min: 0.0,
            });
        }
        Ok(())
    };
    match env {
        EnvSpec::Bandit(s) => {
            for c in 0..s.num_contexts() {
                check(&[c as f64])?;
            }
        }
        EnvSpec::Tabular(s) => {
            for st in 0..s.num_states {
                check(&[st as f64])?;
            }
        }
        EnvSpec::CartPole(s) => {
            for theta in [-s.theta_max, 0.0, s.theta_max] {
                check(&[0.0, 0.0, theta, 0.0])?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::TabularPolicy;

    #[test]
    fn identical_seeds_give_identical_datasets() {
        let spec = EnvSpec::Tabular(TabularMdpSpec::two_state_example());
        let behavior = TabularPolicy::action_only(vec![0.5, 0.5]).unwrap();
        let a = sample_trajectories(&spec, &behavior, 17, 99).unwrap();
        let b = sample_trajectories(&spec, &behavior, 17, 99).unwrap();
        for i in 0..a.len() {
            assert_eq!(a.trajectory(i), b.trajectory(i));
        }
        let c = sample_trajectories(&spec, &behavior, 17, 100).unwrap();
        assert!((0..a.len()).any(|i| a.trajectory(i) != c.trajectory(i)));
    }

    #[test]
    fn non_normalized_policy_is_rejected() {
        struct Broken;
        impl Policy for Broken {
            fn num_actions(&self) -> usize {
                2
            }
            fn prob(&self, _state: &[f64], _action: u32) -> f64 {
                0.4
            }
        }
        let spec = EnvSpec::Tabular(TabularMdpSpec::two_state_example());
        assert!(sample_trajectories(&spec, &Broken, 3, 0).is_err());
    }

    #[test]
    fn degenerate_single_action_mdp() {
        // 1 state, 1 action, unit reward, T = 2: every trajectory is (1,1,1).
        let spec = TabularMdpSpec::new(
            1,
            1,
            vec![1.0],
            vec![1.0],
            0.0,
            vec![1.0],
            2,
            1.0,
        )
        .unwrap();
        let behavior = TabularPolicy::action_only(vec![1.0]).unwrap();
        let ds = sample_trajectories(&EnvSpec::Tabular(spec.clone()), &behavior, 5, 1).unwrap();
        for tr in ds.trajectories() {
            assert_eq!(tr.rewards(), &[1.0, 1.0, 1.0]);
        }
        // gamma = 0.5 -> exactly 1.75, zero standard error
        let (v, se) =
            monte_carlo_value(&EnvSpec::Tabular(spec), &behavior, 32, 0.5, 5).unwrap();
        assert!((v - 1.75).abs() < 1e-12);
        assert_eq!(se, 0.0);
    }
}
