//! Cumulative importance-sampling ratios.
//!
//! For each trajectory, `lambda_t = lambda_{t-1} * pi_e(A_t|S_t) / pi_b(A_t|.)`
//! with the convention `lambda_{-1} = 1`; the governing behavior model is
//! either the oracle Markov policy or a fitted history-dependent policy.
//! Absorbing padding steps contribute a unit ratio: in the padded process
//! both policies take the single null action with probability one.

use crate::data::Dataset;
use crate::error::{OpeError, Result};
use crate::policy::{HistoryWindow, ParametricHistoryPolicy, Policy};

/// Which behavior model produced a set of weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSource {
    Oracle,
    Estimated { k: usize },
}

/// The behavior model used in the denominator of the IS ratios.
#[derive(Clone, Copy)]
pub enum BehaviorRef<'a> {
    /// The true (oracle) Markov behavior policy.
    Oracle(&'a dyn Policy),
    /// A fitted history-dependent policy.
    Fitted(&'a ParametricHistoryPolicy),
}

/// Per-trajectory cached cumulative ratios λ_0..λ_T.
#[derive(Debug, Clone)]
pub struct IsWeights {
    lambdas: Vec<f64>, // n x num_steps, row-major
    num_steps: usize,
    pub source: WeightSource,
    /// Coverage diagnostic: the largest per-step ratio observed.
    pub max_step_ratio: f64,
    /// Smallest behavior probability assigned to an observed action.
    pub min_behavior_prob: f64,
}

impl IsWeights {
    pub fn num_trajectories(&self) -> usize {
        self.lambdas.len() / self.num_steps
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    /// λ_t for trajectory `i`.
    pub fn lambda(&self, i: usize, t: usize) -> f64 {
        self.lambdas[i * self.num_steps + t]
    }

    /// λ_{t-1} with λ_{-1} = 1.
    pub fn lambda_before(&self, i: usize, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.lambda(i, t - 1)
        }
    }

    /// Final weights λ_T across trajectories.
    pub fn final_lambdas(&self) -> Vec<f64> {
        (0..self.num_trajectories()).map(|i| self.lambda(i, self.num_steps - 1)).collect()
    }

    /// Effective sample size of the final weights, `(Σλ_T)^2 / Σλ_T^2`.
    pub fn ess(&self) -> f64 {
        let finals = self.final_lambdas();
        let s: f64 = finals.iter().sum();
        let s2: f64 = finals.iter().map(|l| l * l).sum();
        if s2 == 0.0 {
            0.0
        } else {
            s * s / s2
        }
    }
}

/// Computes cumulative IS ratios of `target` against `behavior` on every
/// trajectory of the dataset.
///
/// An observed action with zero behavior probability is a hard error; near
/// misses are reported through `min_behavior_prob` and `max_step_ratio`
/// rather than silently producing exploding weights.
pub fn compute_weights(
    dataset: &Dataset,
    target: &dyn Policy,
    behavior: BehaviorRef<'_>,
) -> Result<IsWeights> {
    let steps = dataset.num_steps();
    let mut lambdas = Vec::with_capacity(dataset.len() * steps);
    let mut max_step_ratio = 0.0f64;
    let mut min_behavior_prob = f64::INFINITY;
    let source = match behavior {
        BehaviorRef::Oracle(_) => WeightSource::Oracle,
        BehaviorRef::Fitted(p) => WeightSource::Estimated { k: p.k() },
    };

    for (i, traj) in dataset.trajectories().iter().enumerate() {
        let mut lambda = 1.0;
        for t in 0..steps {
            if !traj.is_absorbed(t) {
                let action = traj.action(t);
                let state = traj.state(t);
                let pb = match behavior {
                    BehaviorRef::Oracle(p) => p.prob(state, action),
                    BehaviorRef::Fitted(p) => {
                        p.prob(&HistoryWindow::new(traj, t, p.k()), action)
                    }
                };
                if pb <= 0.0 {
                    return Err(OpeError::ZeroBehaviorProbability { traj: i, t, action });
                }
                let ratio = target.prob(state, action) / pb;
                lambda *= ratio;
                max_step_ratio = max_step_ratio.max(ratio);
                min_behavior_prob = min_behavior_prob.min(pb);
            }
            lambdas.push(lambda);
        }
    }
    Ok(IsWeights { lambdas, num_steps: steps, source, max_step_ratio, min_behavior_prob })
}
