//! CartPole: the classic cart-and-pole balancing system with Euler-integrated
//! dynamics, binary force actions, and angle-feedback Bernoulli policies.
//!
//! The state is `(x, x_dot, theta, theta_dot)`. The per-step reward is a
//! function of the current state, `(2 - x/x_max) * (2 - theta/theta_max) - 1`
//! (3 at the origin). An episode ends when the cart leaves `[-x_max, x_max]`
//! or the pole leaves `[-theta_max, theta_max]`; the remaining steps are
//! padded with an absorbing regime so every trajectory has the same length.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Trajectory;
use crate::error::{OpeError, Result};
use crate::policy::Policy;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CartPoleSpec {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub pole_half_length: f64,
    pub force_mag: f64,
    /// Euler integration timestep.
    pub dt: f64,
    pub x_max: f64,
    pub theta_max: f64,
    /// Episode length in timesteps (T + 1).
    pub horizon: usize,
    /// Initial state coordinates are uniform on [-init_range, init_range].
    pub init_range: f64,
    pub behavior_logit_scale: f64,
    pub target_logit_scale: f64,
}

impl Default for CartPoleSpec {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            force_mag: 10.0,
            dt: 0.02,
            x_max: 2.4,
            theta_max: 12.0 * std::f64::consts::PI / 180.0,
            horizon: 200,
            init_range: 0.05,
            behavior_logit_scale: 10.0,
            target_logit_scale: 20.0,
        }
    }
}

impl CartPoleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(OpeError::InvalidSpec("cartpole horizon must be >= 1".into()));
        }
        if self.x_max <= 0.0 || self.theta_max <= 0.0 {
            return Err(OpeError::InvalidSpec("x_max and theta_max must be positive".into()));
        }
        if self.dt <= 0.0 || self.force_mag <= 0.0 || self.cart_mass <= 0.0 || self.pole_mass <= 0.0 {
            return Err(OpeError::InvalidSpec("physics constants must be positive".into()));
        }
        Ok(())
    }

    pub fn behavior_policy(&self) -> CartpoleAnglePolicy {
        CartpoleAnglePolicy { logit_scale: self.behavior_logit_scale }
    }

    pub fn target_policy(&self) -> CartpoleAnglePolicy {
        CartpoleAnglePolicy { logit_scale: self.target_logit_scale }
    }

    pub fn reward(&self, state: &[f64]) -> f64 {
        (2.0 - state[0] / self.x_max) * (2.0 - state[2] / self.theta_max) - 1.0
    }

    fn failed(&self, state: &[f64]) -> bool {
        state[0].abs() > self.x_max || state[2].abs() > self.theta_max
    }

    /// One Euler step of the cart-pole dynamics. Action 1 pushes the cart in
    /// the +x direction, action 0 in the -x direction.
    pub fn step(&self, state: &[f64; 4], action: u32) -> [f64; 4] {
        let [x, x_dot, theta, theta_dot] = *state;
        let force = if action == 1 { self.force_mag } else { -self.force_mag };
        let total_mass = self.cart_mass + self.pole_mass;
        let pml = self.pole_mass * self.pole_half_length;
        let (sin_t, cos_t) = theta.sin_cos();
        let temp = (force + pml * theta_dot * theta_dot * sin_t) / total_mass;
        let theta_acc = (self.gravity * sin_t - cos_t * temp)
            / (self.pole_half_length * (4.0 / 3.0 - self.pole_mass * cos_t * cos_t / total_mass));
        let x_acc = temp - pml * theta_acc * cos_t / total_mass;
        [
            x + self.dt * x_dot,
            x_dot + self.dt * x_acc,
            theta + self.dt * theta_dot,
            theta_dot + self.dt * theta_acc,
        ]
    }

    pub(crate) fn sample_one(&self, policy: &dyn Policy, rng: &mut impl Rng) -> Trajectory {
        let steps = self.horizon;
        let mut states = Vec::with_capacity(steps * 4);
        let mut actions = Vec::with_capacity(steps);
        let mut rewards = Vec::with_capacity(steps);
        let mut state = [0.0f64; 4];
        for v in &mut state {
            *v = rng.gen_range(-self.init_range..=self.init_range);
        }
        let mut term_step = None;
        for t in 0..steps {
            if term_step.is_some() {
                // absorbing padding: frozen state, null action, zero reward
                let frozen: [f64; 4] = states[(t - 1) * 4..t * 4].try_into().unwrap();
                states.extend_from_slice(&frozen);
                actions.push(0);
                rewards.push(0.0);
                continue;
            }
            let a = policy.sample_action(&state, rng.gen::<f64>());
            states.extend_from_slice(&state);
            actions.push(a);
            rewards.push(self.reward(&state));
            state = self.step(&state, a);
            if self.failed(&state) && t + 1 < steps {
                term_step = Some(t + 1);
            }
        }
        Trajectory::with_termination(states, actions, rewards, 4, term_step)
            .expect("cartpole trajectory")
    }
}

/// Bernoulli angle-feedback policy: `P(A = 1 | s) = 1 / (1 + exp(scale * theta))`.
///
/// With action 1 pushing in +x, larger positive scales push the cart away
/// from the lean, so sharper policies topple the pole sooner.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CartpoleAnglePolicy {
    pub logit_scale: f64,
}

impl Policy for CartpoleAnglePolicy {
    fn num_actions(&self) -> usize {
        2
    }

    fn prob(&self, state: &[f64], action: u32) -> f64 {
        let p1 = 1.0 / (1.0 + (self.logit_scale * state[2]).exp());
        if action == 1 {
            p1
        } else {
            1.0 - p1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_trajectories, EnvSpec};

    #[test]
    fn reward_at_origin_is_three() {
        let spec = CartPoleSpec::default();
        assert_eq!(spec.reward(&[0.0, 0.0, 0.0, 0.0]), 3.0);
    }

    #[test]
    fn balanced_pole_with_symmetric_forces_stays_centered() {
        // With theta = 0 the policy is a fair coin; alternating +/- force
        // pairs cancel on average. A deterministic stronger statement: from
        // the exact origin a +F step then a -F step returns x_dot and
        // theta_dot to near zero.
        let spec = CartPoleSpec::default();
        let s1 = spec.step(&[0.0; 4], 1);
        let s2 = spec.step(&s1, 0);
        assert!(s2[1].abs() < 1e-9, "x_dot after +/- pair: {}", s2[1]);
        assert!(s2[3].abs() < 5e-3, "theta_dot after +/- pair: {}", s2[3]);
    }

    #[test]
    fn upright_start_without_disturbance_stays_at_rest() {
        // Zero initial range puts the pole exactly upright with no velocity;
        // gravity alone produces no angular acceleration at theta = 0, so the
        // only motion comes from the applied force. Probability of 'push
        // right' at theta=0 is exactly 1/2 independent of the state, so we
        // verify the physics directly: zero force keeps the system frozen.
        let spec = CartPoleSpec::default();
        let mut zero_force = spec.clone();
        zero_force.force_mag = f64::MIN_POSITIVE; // effectively zero
        let mut state = [0.0f64; 4];
        for _ in 0..200 {
            state = zero_force.step(&state, 1);
        }
        for v in state {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn early_failures_are_padded_to_full_horizon() {
        let mut spec = CartPoleSpec::default();
        spec.init_range = 0.04;
        let env = EnvSpec::CartPole(spec.clone());
        let ds = sample_trajectories(&env, &spec.target_policy(), 40, 5).unwrap();
        assert!(ds.trajectories().iter().all(|t| t.num_steps() == spec.horizon));
        let padded = ds.trajectories().iter().filter(|t| t.term_step().is_some()).count();
        assert!(padded > 0, "expected some early terminations under the sharp policy");
        for tr in ds.trajectories() {
            if let Some(ts) = tr.term_step() {
                for t in ts..tr.num_steps() {
                    assert_eq!(tr.reward(t), 0.0);
                    assert_eq!(tr.action(t), 0);
                }
            }
        }
    }

    #[test]
    fn policy_probabilities_flip_with_angle() {
        let p = CartpoleAnglePolicy { logit_scale: 10.0 };
        assert!(p.prob(&[0.0, 0.0, 0.1, 0.0], 1) < 0.5);
        assert!(p.prob(&[0.0, 0.0, -0.1, 0.0], 1) > 0.5);
        let sum = p.prob(&[0.0, 0.0, 0.03, 0.0], 0) + p.prob(&[0.0, 0.0, 0.03, 0.0], 1);
        assert!((sum - 1.0).abs() < 1e-15);
    }
}
