//! The contextual bandit: a finite context set, a finite action set, and a
//! mean-reward table. Bandit samples are encoded as horizon-0 trajectories so
//! every estimator in the crate applies unchanged.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SeedRecord, Trajectory};
use crate::error::{OpeError, Result};
use crate::policy::{Policy, TabularPolicy};
use crate::rng::substream;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BanditSpec {
    /// Distribution of the context S.
    pub context_probs: Vec<f64>,
    /// Mean reward r(s, a), rows indexed by context.
    pub reward_mean: Vec<Vec<f64>>,
    /// Standard deviation of the additive Gaussian reward noise.
    pub reward_noise_sd: f64,
    /// Context-independent behavior policy pi_b(a).
    pub behavior_probs: Vec<f64>,
    /// Context-independent target policy pi_e(a).
    pub target_probs: Vec<f64>,
}

impl BanditSpec {
    /// The two-context, two-action example: r(s, a) = 10a + 0.1(1 + 2s),
    /// pi_e(1) = 0.4, pi_b(1) = 0.3, uniform contexts. Its target value is
    /// exactly 4.2.
    pub fn example_two_context() -> Self {
        let r = |s: usize, a: usize| 10.0 * a as f64 + 0.1 * (1.0 + 2.0 * s as f64);
        Self {
            context_probs: vec![0.5, 0.5],
            reward_mean: vec![vec![r(0, 0), r(0, 1)], vec![r(1, 0), r(1, 1)]],
            reward_noise_sd: 1.0,
            behavior_probs: vec![0.7, 0.3],
            target_probs: vec![0.6, 0.4],
        }
    }

    pub fn num_contexts(&self) -> usize {
        self.context_probs.len()
    }

    pub fn num_actions(&self) -> usize {
        self.behavior_probs.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("context_probs", &self.context_probs),
            ("behavior_probs", &self.behavior_probs),
            ("target_probs", &self.target_probs),
        ] {
            let sum: f64 = v.iter().sum();
            let min = v.iter().fold(f64::INFINITY, |m, &p| m.min(p));
            if v.is_empty() || (sum - 1.0).abs() > 1e-12 || min <= 0.0 {
                return Err(OpeError::NotAProbability { what: name.into(), sum, min });
            }
        }
        if self.target_probs.len() != self.behavior_probs.len() {
            return Err(OpeError::InvalidSpec("behavior/target action sets differ".into()));
        }
        if self.reward_mean.len() != self.num_contexts()
            || self.reward_mean.iter().any(|row| row.len() != self.num_actions())
        {
            return Err(OpeError::InvalidSpec("reward_mean table shape mismatch".into()));
        }
        if self.reward_noise_sd < 0.0 {
            return Err(OpeError::InvalidSpec("reward_noise_sd must be >= 0".into()));
        }
        Ok(())
    }

    pub fn behavior_policy(&self) -> TabularPolicy {
        TabularPolicy::action_only(self.behavior_probs.clone()).expect("validated spec")
    }

    pub fn target_policy(&self) -> TabularPolicy {
        TabularPolicy::action_only(self.target_probs.clone()).expect("validated spec")
    }

    /// Closed-form value of a context-independent policy:
    /// `sum_s P(s) sum_a pi(a) r(s, a)`.
    pub fn exact_value(&self, action_probs: &[f64]) -> f64 {
        self.context_probs
            .iter()
            .enumerate()
            .map(|(s, &ps)| {
                ps * action_probs
                    .iter()
                    .enumerate()
                    .map(|(a, &pa)| pa * self.reward_mean[s][a])
                    .sum::<f64>()
            })
            .sum()
    }

    pub(crate) fn sample_one(&self, policy: &dyn Policy, rng: &mut impl Rng) -> Trajectory {
        let s = sample_index(&self.context_probs, rng.gen::<f64>());
        let state = [s as f64];
        let a = policy.sample_action(&state, rng.gen::<f64>());
        let mut r = self.reward_mean[s][a as usize];
        if self.reward_noise_sd > 0.0 {
            r += Normal::new(0.0, self.reward_noise_sd).unwrap().sample(rng);
        }
        Trajectory::new(vec![s as f64], vec![a], vec![r], 1).expect("bandit trajectory")
    }
}

pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}

/// Draws `n` context-action-reward triplets (horizon-0 trajectories) under
/// the spec's behavior policy.
pub fn sample_bandit_dataset(spec: &BanditSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(OpeError::NotEnoughData("requested an empty dataset".into()));
    }
    let record = SeedRecord { root_seed: seed, base_stream: 0 };
    let behavior = spec.behavior_policy();
    let trajectories: Vec<Trajectory> = (0..n)
        .map(|i| {
            let mut rng = substream(record.root_seed, record.trajectory_stream(i));
            spec.sample_one(&behavior, &mut rng)
        })
        .collect();
    Dataset::new(trajectories, spec.num_actions(), record)
}
