//! Feature maps for parametric history-dependent policy classes.
//!
//! Every class scores actions additively over lag blocks,
//! `score(a) = sum_i theta_i' phi_i(S_{t-i}, A_{t-i}, a)`, with one parameter
//! block per lag i in 0..=k. Zeroing the blocks above k' makes the policy a
//! member of the k'-step class on every input, which is what makes the
//! classes nested in the history length.
//!
//! Internally a window is encoded as sparse `(base, value)` entries, where
//! the parameter index for action `a >= 1` is `base + (a - 1)`; action 0 is
//! the softmax baseline. One-hot tabular blocks produce at most one entry per
//! lag, which keeps likelihood fitting cheap.

use serde::{Deserialize, Serialize};

use super::window::HistoryWindow;

/// Block-structured feature maps, one flavor per state-space kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyFeatures {
    /// One-hot blocks over a finite state space: lag 0 indexes the current
    /// state, lag i >= 1 the (state, action) pair i steps back.
    TabularBlocks { num_states: usize, num_actions: usize },
    /// Raw-coordinate blocks for continuous states: lag 0 is an intercept
    /// plus the current state, lag i >= 1 the lagged state plus its action.
    DenseBlocks { state_dim: usize, num_actions: usize },
    /// Per-coordinate polynomial blocks of the given degree; the basis used
    /// for sieve fitting, where the degree grows with the sample size.
    PolynomialBlocks { state_dim: usize, num_actions: usize, degree: usize },
}

impl PolicyFeatures {
    pub fn num_actions(&self) -> usize {
        match *self {
            PolicyFeatures::TabularBlocks { num_actions, .. }
            | PolicyFeatures::DenseBlocks { num_actions, .. }
            | PolicyFeatures::PolynomialBlocks { num_actions, .. } => num_actions,
        }
    }

    /// Number of feature units in lag block `lag` (before crossing with the
    /// non-baseline actions).
    pub fn block_units(&self, lag: usize) -> usize {
        match *self {
            PolicyFeatures::TabularBlocks { num_states, num_actions } => {
                if lag == 0 {
                    num_states
                } else {
                    num_states * num_actions
                }
            }
            PolicyFeatures::DenseBlocks { state_dim, .. } => {
                if lag == 0 {
                    1 + state_dim
                } else {
                    state_dim + 1
                }
            }
            PolicyFeatures::PolynomialBlocks { state_dim, degree, .. } => {
                if lag == 0 {
                    1 + state_dim * degree
                } else {
                    state_dim * degree + 1
                }
            }
        }
    }

    /// Total parameter dimension for history length `k`.
    pub fn theta_dim(&self, k: usize) -> usize {
        let cols = self.num_actions().saturating_sub(1);
        (0..=k).map(|i| self.block_units(i)).sum::<usize>() * cols
    }

    /// Start of lag block `lag` in the parameter vector.
    pub fn block_offset(&self, lag: usize) -> usize {
        let cols = self.num_actions().saturating_sub(1);
        (0..lag).map(|i| self.block_units(i)).sum::<usize>() * cols
    }

    /// Parameter range of lag block `lag` for history length `k`.
    pub fn block_range(&self, lag: usize) -> std::ops::Range<usize> {
        let cols = self.num_actions().saturating_sub(1);
        let start = self.block_offset(lag);
        start..start + self.block_units(lag) * cols
    }

    /// Sparse encoding of a window: `(base, value)` entries with parameter
    /// index `base + (a - 1)` for action `a >= 1`. Missing lags contribute
    /// nothing (the zero-feature padding rule).
    pub(crate) fn encode(&self, w: &HistoryWindow, out: &mut Vec<(u32, f64)>) {
        out.clear();
        let cols = self.num_actions().saturating_sub(1);
        if cols == 0 {
            return;
        }
        let push = |out: &mut Vec<(u32, f64)>, offset: usize, unit: usize, value: f64| {
            out.push(((offset + unit * cols) as u32, value));
        };
        match *self {
            PolicyFeatures::TabularBlocks { num_actions, num_states } => {
                let s = discrete_state(w.current_state(), num_states);
                push(out, self.block_offset(0), s, 1.0);
                for i in 1..=w.k() {
                    if let Some((state, action)) = w.lag(i) {
                        let cell = discrete_state(state, num_states) * num_actions + action as usize;
                        push(out, self.block_offset(i), cell, 1.0);
                    }
                }
            }
            PolicyFeatures::DenseBlocks { state_dim, .. } => {
                let off0 = self.block_offset(0);
                push(out, off0, 0, 1.0);
                for (j, &v) in w.current_state().iter().take(state_dim).enumerate() {
                    push(out, off0, 1 + j, v);
                }
                for i in 1..=w.k() {
                    if let Some((state, action)) = w.lag(i) {
                        let off = self.block_offset(i);
                        for (j, &v) in state.iter().take(state_dim).enumerate() {
                            push(out, off, j, v);
                        }
                        push(out, off, state_dim, action as f64);
                    }
                }
            }
            PolicyFeatures::PolynomialBlocks { state_dim, degree, .. } => {
                let off0 = self.block_offset(0);
                push(out, off0, 0, 1.0);
                encode_powers(w.current_state(), state_dim, degree, |unit, v| push(out, off0, 1 + unit, v));
                for i in 1..=w.k() {
                    if let Some((state, action)) = w.lag(i) {
                        let off = self.block_offset(i);
                        encode_powers(state, state_dim, degree, |unit, v| push(out, off, unit, v));
                        push(out, off, state_dim * degree, action as f64);
                    }
                }
            }
        }
    }
}

fn encode_powers(state: &[f64], state_dim: usize, degree: usize, mut push: impl FnMut(usize, f64)) {
    for (j, &x) in state.iter().take(state_dim).enumerate() {
        let mut v = 1.0;
        for p in 0..degree {
            v *= x;
            push(j * degree + p, v);
        }
    }
}

pub(crate) fn discrete_state(state: &[f64], num_states: usize) -> usize {
    let s = state[0] as usize;
    debug_assert!(s < num_states, "state index {s} out of range {num_states}");
    s.min(num_states - 1)
}

/// A policy-class template: the feature map plus the uniform-mixing floor
/// applied to fitted probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyClass {
    pub features: PolicyFeatures,
    /// Mixing weight delta of the uniform floor: the returned policy is
    /// `(1 - delta) * softmax + delta * uniform`, so every action probability
    /// is at least `delta / num_actions`.
    pub floor_mix: f64,
}

impl PolicyClass {
    pub fn new(features: PolicyFeatures, floor_mix: f64) -> Self {
        Self { features, floor_mix }
    }

    /// Template with the default floor of 1e-3.
    pub fn with_default_floor(features: PolicyFeatures) -> Self {
        Self::new(features, 1e-3)
    }
}

/// Sieve basis schedule: polynomial degree `ceil(n^(1/4))`, capped.
pub fn sieve_degree(n: usize, cap: usize) -> usize {
    ((n as f64).powf(0.25).ceil() as usize).clamp(1, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Trajectory;

    #[test]
    fn tabular_dims_and_offsets() {
        let f = PolicyFeatures::TabularBlocks { num_states: 3, num_actions: 2 };
        assert_eq!(f.theta_dim(0), 3);
        assert_eq!(f.theta_dim(2), 3 + 6 + 6);
        assert_eq!(f.block_offset(1), 3);
        assert_eq!(f.block_range(2), 9..15);
    }

    #[test]
    fn tabular_encoding_skips_missing_lags() {
        let f = PolicyFeatures::TabularBlocks { num_states: 3, num_actions: 2 };
        let tr = Trajectory::new(vec![2.0, 0.0, 1.0], vec![1, 0, 1], vec![0.0; 3], 1).unwrap();
        let mut buf = Vec::new();
        f.encode(&HistoryWindow::new(&tr, 0, 2), &mut buf);
        assert_eq!(buf, vec![(2, 1.0)]);
        f.encode(&HistoryWindow::new(&tr, 2, 2), &mut buf);
        // lag 1 cell = state 0, action 0 -> 0; lag 2 cell = state 2, action 1 -> 5
        assert_eq!(buf, vec![(1, 1.0), (3 + 0, 1.0), (9 + 5, 1.0)]);
    }

    #[test]
    fn three_action_indexing() {
        let f = PolicyFeatures::TabularBlocks { num_states: 2, num_actions: 3 };
        // two columns per unit
        assert_eq!(f.theta_dim(0), 4);
        let tr = Trajectory::new(vec![1.0], vec![2], vec![0.0], 1).unwrap();
        let mut buf = Vec::new();
        f.encode(&HistoryWindow::new(&tr, 0, 0), &mut buf);
        assert_eq!(buf, vec![(2, 1.0)]); // indexes 2 (a=1) and 3 (a=2)
    }

    #[test]
    fn sieve_schedule() {
        assert_eq!(sieve_degree(10, 6), 2);
        assert_eq!(sieve_degree(10_000, 6), 10f64.min(6.0) as usize);
        assert_eq!(sieve_degree(2, 6), 2);
        assert_eq!(sieve_degree(1, 6), 1);
    }
}
