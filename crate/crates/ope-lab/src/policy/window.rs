//! History windows H_{t-k:t}: the k preceding (state, action) pairs plus the
//! current state.

use crate::data::Trajectory;

/// A view of the k-step history ending at step `t` of a trajectory.
///
/// Lags that would reach before the start of the episode are *missing*: the
/// feature maps give them an all-zero block (equivalently, the designated
/// null action whose features vanish), so early timesteps behave like a
/// lower-order window. [`HistoryWindow::is_padded`] flags those steps.
#[derive(Clone, Copy)]
pub struct HistoryWindow<'a> {
    traj: &'a Trajectory,
    t: usize,
    k: usize,
}

impl<'a> HistoryWindow<'a> {
    pub fn new(traj: &'a Trajectory, t: usize, k: usize) -> Self {
        assert!(t < traj.num_steps(), "window step out of range");
        Self { traj, t, k }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn current_state(&self) -> &'a [f64] {
        self.traj.state(self.t)
    }

    /// The (state, action) pair `i` steps back, for `i` in `1..=k`.
    /// `None` when the lag reaches before the episode start.
    pub fn lag(&self, i: usize) -> Option<(&'a [f64], u32)> {
        debug_assert!(i >= 1 && i <= self.k);
        if i > self.t {
            None
        } else {
            Some((self.traj.state(self.t - i), self.traj.action(self.t - i)))
        }
    }

    /// True when some lag is missing (t < k) and the padding rule applies.
    pub fn is_padded(&self) -> bool {
        self.t < self.k
    }
}
