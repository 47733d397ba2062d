//! Finite-horizon tabular MDPs with exact dynamic-programming oracles for
//! values, Q-functions, and per-step marginal state-action distributions.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Trajectory;
use crate::error::{OpeError, Result};
use crate::policy::{Policy, TabularPolicy};

use super::bandit::sample_index;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularMdpSpec {
    pub num_states: usize,
    pub num_actions: usize,
    /// P(s' | s, a), flattened as [s][a][s'], each row stochastic.
    pub transition: Vec<f64>,
    /// r(s, a), flattened as [s][a].
    pub reward_mean: Vec<f64>,
    pub reward_noise_sd: f64,
    pub initial_dist: Vec<f64>,
    /// Horizon T; trajectories have T + 1 steps.
    pub horizon: usize,
    pub discount: f64,
}

impl TabularMdpSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward_mean: Vec<f64>,
        reward_noise_sd: f64,
        initial_dist: Vec<f64>,
        horizon: usize,
        discount: f64,
    ) -> Result<Self> {
        let spec = Self {
            num_states,
            num_actions,
            transition,
            reward_mean,
            reward_noise_sd,
            initial_dist,
            horizon,
            discount,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The reference tabular MDP used by the experiment suite: three states,
    /// two actions, horizon T = 10, undiscounted. Rewards are roughly
    /// centered with strong action contrast, which keeps the higher-order
    /// terms of the estimated-ratio estimators small relative to the
    /// first-order projection effects the experiments measure. Returns the
    /// spec with its Markov behavior and target policies.
    pub fn reference() -> (Self, TabularPolicy, TabularPolicy) {
        let spec = Self::new(
            3,
            2,
            vec![
                // s = 0
                0.70, 0.20, 0.10, // a = 0
                0.20, 0.60, 0.20, // a = 1
                // s = 1
                0.30, 0.50, 0.20, // a = 0
                0.10, 0.30, 0.60, // a = 1
                // s = 2
                0.40, 0.40, 0.20, // a = 0
                0.10, 0.20, 0.70, // a = 1
            ],
            // Rewards have zero conditional mean under the target policy, so
            // the target value function vanishes identically and Q reduces to
            // the reward table; the action contrast stays strong, which is
            // what the ratio-estimation effects feed on.
            vec![
                -3.0, 1.0, // s = 0
                0.9, -2.1, // s = 1
                -2.1, 1.4, // s = 2
            ],
            0.4,
            vec![0.5, 0.3, 0.2],
            10,
            1.0,
        )
        .expect("valid reference spec");
        let behavior = TabularPolicy::context_dependent(vec![
            vec![0.45, 0.55],
            vec![0.55, 0.45],
            vec![0.50, 0.50],
        ])
        .expect("valid behavior");
        let target = TabularPolicy::context_dependent(vec![
            vec![0.25, 0.75],
            vec![0.70, 0.30],
            vec![0.40, 0.60],
        ])
        .expect("valid target");
        (spec, behavior, target)
    }

    /// A small ergodic two-state chain used in tests.
    pub fn two_state_example() -> Self {
        Self::new(
            2,
            2,
            vec![
                0.8, 0.2, // s=0, a=0
                0.3, 0.7, // s=0, a=1
                0.5, 0.5, // s=1, a=0
                0.1, 0.9, // s=1, a=1
            ],
            vec![1.0, 0.0, 0.5, 2.0],
            0.0,
            vec![1.0, 0.0],
            4,
            1.0,
        )
        .expect("valid example spec")
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_states == 0 || self.num_actions == 0 {
            return Err(OpeError::InvalidSpec("state and action sets must be non-empty".into()));
        }
        if self.horizon == 0 {
            return Err(OpeError::InvalidSpec("horizon T must be >= 1".into()));
        }
        if !(0.0 < self.discount && self.discount <= 1.0) {
            return Err(OpeError::InvalidSpec(format!("discount {} outside (0, 1]", self.discount)));
        }
        if self.reward_noise_sd < 0.0 {
            return Err(OpeError::InvalidSpec("reward_noise_sd must be >= 0".into()));
        }
        if self.transition.len() != self.num_states * self.num_actions * self.num_states {
            return Err(OpeError::InvalidSpec("transition tensor shape mismatch".into()));
        }
        if self.reward_mean.len() != self.num_states * self.num_actions {
            return Err(OpeError::InvalidSpec("reward table shape mismatch".into()));
        }
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.transition_row(s, a);
                let sum: f64 = row.iter().sum();
                let min = row.iter().fold(f64::INFINITY, |m, &p| m.min(p));
                if (sum - 1.0).abs() > 1e-12 || min < 0.0 {
                    return Err(OpeError::NotAProbability {
                        what: format!("transition row (s={s}, a={a})"),
                        sum,
                        min,
                    });
                }
            }
        }
        let sum: f64 = self.initial_dist.iter().sum();
        let min = self.initial_dist.iter().fold(f64::INFINITY, |m, &p| m.min(p));
        if self.initial_dist.len() != self.num_states || (sum - 1.0).abs() > 1e-12 || min < 0.0 {
            return Err(OpeError::NotAProbability { what: "initial_dist".into(), sum, min });
        }
        Ok(())
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.num_actions + a) * self.num_states;
        &self.transition[base..base + self.num_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward_mean[s * self.num_actions + a]
    }

    /// Exact policy value by backward induction. Reward noise is mean zero,
    /// so this is the exact expectation regardless of the noise level.
    pub fn exact_value(&self, policy: &dyn Policy) -> f64 {
        let q = self.exact_q(policy);
        let v0: Vec<f64> = (0..self.num_states)
            .map(|s| {
                (0..self.num_actions)
                    .map(|a| {
                        policy.prob(&[s as f64], a as u32) * q[s * self.num_actions + a]
                    })
                    .sum()
            })
            .collect();
        self.initial_dist.iter().zip(&v0).map(|(&d, &v)| d * v).sum()
    }

    /// Exact per-step Q-functions under `policy`, flattened as [t][s][a]
    /// with t in 0..=T.
    pub fn exact_q(&self, policy: &dyn Policy) -> Vec<f64> {
        let (ns, na, steps) = (self.num_states, self.num_actions, self.horizon + 1);
        let cells = ns * na;
        let mut q = vec![0.0; steps * cells];
        let mut v_next = vec![0.0; ns];
        for t in (0..steps).rev() {
            let mut v_now = vec![0.0; ns];
            for s in 0..ns {
                for a in 0..na {
                    let mut val = self.reward(s, a);
                    if t + 1 < steps {
                        let row = self.transition_row(s, a);
                        val += self.discount
                            * row.iter().zip(&v_next).map(|(&p, &v)| p * v).sum::<f64>();
                    }
                    q[t * cells + s * na + a] = val;
                    v_now[s] += policy.prob(&[s as f64], a as u32) * val;
                }
            }
            v_next = v_now;
        }
        q
    }

    /// Marginal state-action distributions d_t(s, a) induced by `policy`,
    /// flattened as [t][s][a].
    pub fn marginal_distributions(&self, policy: &dyn Policy) -> Vec<f64> {
        let (ns, na, steps) = (self.num_states, self.num_actions, self.horizon + 1);
        let cells = ns * na;
        let mut d = vec![0.0; steps * cells];
        let mut state_dist = self.initial_dist.clone();
        for t in 0..steps {
            for s in 0..ns {
                for a in 0..na {
                    d[t * cells + s * na + a] =
                        state_dist[s] * policy.prob(&[s as f64], a as u32);
                }
            }
            if t + 1 < steps {
                let mut next = vec![0.0; ns];
                for s in 0..ns {
                    for a in 0..na {
                        let mass = d[t * cells + s * na + a];
                        if mass > 0.0 {
                            for (sp, &p) in self.transition_row(s, a).iter().enumerate() {
                                next[sp] += mass * p;
                            }
                        }
                    }
                }
                state_dist = next;
            }
        }
        d
    }

    pub(crate) fn sample_one(&self, policy: &dyn Policy, rng: &mut impl Rng) -> Trajectory {
        let steps = self.horizon + 1;
        let mut states = Vec::with_capacity(steps);
        let mut actions = Vec::with_capacity(steps);
        let mut rewards = Vec::with_capacity(steps);
        let noise = (self.reward_noise_sd > 0.0)
            .then(|| Normal::new(0.0, self.reward_noise_sd).unwrap());
        let mut s = sample_index(&self.initial_dist, rng.gen::<f64>());
        for t in 0..steps {
            let a = policy.sample_action(&[s as f64], rng.gen::<f64>());
            let mut r = self.reward(s, a as usize);
            if let Some(n) = &noise {
                r += n.sample(rng);
            }
            states.push(s as f64);
            actions.push(a);
            rewards.push(r);
            if t + 1 < steps {
                s = sample_index(self.transition_row(s, a as usize), rng.gen::<f64>());
            }
        }
        Trajectory::new(states, actions, rewards, 1).expect("tabular trajectory")
    }
}
