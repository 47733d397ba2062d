//! State-action value models used by the doubly robust estimator.

use std::sync::Arc;

use crate::env::TabularMdpSpec;
use crate::policy::Policy;

use super::mis::MisDesign;

/// A per-timestep Q-function: identically zero, tabular, or linear in a
/// feature design. An additive offset serves as a controlled
/// misspecification knob for the tabular and linear modes.
#[derive(Debug, Clone)]
pub struct QFunction {
    kind: QKind,
    offset: f64,
}

#[derive(Debug, Clone)]
enum QKind {
    Zero,
    Tabular {
        /// Values flattened as [t][s][a].
        values: Arc<Vec<f64>>,
        num_actions: usize,
        num_steps: usize,
    },
    Linear {
        design: Arc<MisDesign>,
        /// Coefficients beta_t per timestep.
        betas: Arc<Vec<Vec<f64>>>,
    },
}

impl QFunction {
    /// The zero Q-function (reduces DR to SIS exactly).
    pub fn zero() -> Self {
        Self { kind: QKind::Zero, offset: 0.0 }
    }

    /// Exact Q under `target` on a tabular MDP, by backward induction.
    pub fn exact_tabular(spec: &TabularMdpSpec, target: &dyn Policy) -> Self {
        Self {
            kind: QKind::Tabular {
                values: Arc::new(spec.exact_q(target)),
                num_actions: spec.num_actions,
                num_steps: spec.horizon + 1,
            },
            offset: 0.0,
        }
    }

    /// Tabular Q from explicit values flattened as [t][s][a].
    pub fn tabular(values: Vec<f64>, num_actions: usize, num_steps: usize) -> Self {
        assert_eq!(values.len() % (num_actions * num_steps), 0, "table shape mismatch");
        Self {
            kind: QKind::Tabular { values: Arc::new(values), num_actions, num_steps },
            offset: 0.0,
        }
    }

    /// Linear-in-features Q with per-timestep coefficients (history length 0
    /// designs only).
    pub fn linear(design: Arc<MisDesign>, betas: Vec<Vec<f64>>) -> Self {
        assert_eq!(design.k(), 0, "linear Q evaluation needs a history-free design");
        Self { kind: QKind::Linear { design, betas: Arc::new(betas) }, offset: 0.0 }
    }

    /// Returns the same Q shifted by a constant: a deliberately misspecified
    /// model whose Bellman residuals no longer have zero conditional mean.
    pub fn with_offset(mut self, offset: f64) -> Self {
        debug_assert!(
            !matches!(self.kind, QKind::Zero) || offset == 0.0,
            "the zero Q-function stays identically zero"
        );
        self.offset = offset;
        self
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Q_t(s, a). Deterministic in its inputs.
    pub fn eval(&self, t: usize, state: &[f64], action: u32) -> f64 {
        match &self.kind {
            QKind::Zero => 0.0,
            QKind::Tabular { values, num_actions, num_steps } => {
                debug_assert!(t < *num_steps);
                let s = state[0] as usize;
                let cells = values.len() / num_steps;
                values[t * cells + s * num_actions + action as usize] + self.offset
            }
            QKind::Linear { design, betas } => {
                design.eval_state_action(t, state, action, &betas[t]) + self.offset
            }
        }
    }

    /// `sum_a Q_t(s, a) pi(a | s)`.
    pub fn eval_under_policy(&self, t: usize, state: &[f64], policy: &dyn Policy) -> f64 {
        (0..policy.num_actions() as u32)
            .map(|a| policy.prob(state, a) * self.eval(t, state, a))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::TabularMdpSpec;
    use crate::policy::TabularPolicy;
    use approx::assert_relative_eq;

    #[test]
    fn zero_mode_is_identically_zero() {
        let q = QFunction::zero();
        assert_eq!(q.eval(0, &[1.0], 1), 0.0);
        assert_eq!(q.eval(3, &[0.0], 0), 0.0);
    }

    #[test]
    fn exact_q_satisfies_the_bellman_recursion() {
        let spec = TabularMdpSpec::two_state_example();
        let target = TabularPolicy::context_dependent(vec![vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
        let q = QFunction::exact_tabular(&spec, &target);
        for t in 0..spec.horizon {
            for s in 0..spec.num_states {
                for a in 0..spec.num_actions {
                    let mut expected = spec.reward(s, a);
                    for (sp, &p) in spec.transition_row(s, a).iter().enumerate() {
                        expected += spec.discount
                            * p
                            * q.eval_under_policy(t + 1, &[sp as f64], &target);
                    }
                    assert_relative_eq!(q.eval(t, &[s as f64], a as u32), expected, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn offset_shifts_every_value() {
        let spec = TabularMdpSpec::two_state_example();
        let target = TabularPolicy::action_only(vec![0.5, 0.5]).unwrap();
        let q = QFunction::exact_tabular(&spec, &target);
        let qo = q.clone().with_offset(2.5);
        assert_relative_eq!(qo.eval(1, &[1.0], 0), q.eval(1, &[1.0], 0) + 2.5, epsilon = 1e-12);
    }
}
