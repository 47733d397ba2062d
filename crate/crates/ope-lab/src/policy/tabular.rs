//! Tabular policies and their sample-frequency estimators.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{OpeError, Result};

use super::Policy;

/// A probability table over (state, action), or over actions only when the
/// policy ignores context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    probs: Vec<f64>,
    /// 0 encodes a context-agnostic table.
    num_states: usize,
    num_actions: usize,
}

impl TabularPolicy {
    /// Context-dependent table; `rows[s][a] = pi(a | s)`.
    pub fn context_dependent(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, Vec::len);
        if num_states == 0 || num_actions == 0 {
            return Err(OpeError::InvalidSpec("empty policy table".into()));
        }
        let mut probs = Vec::with_capacity(num_states * num_actions);
        for (s, row) in rows.iter().enumerate() {
            validate_row(row, &format!("policy row for state {s}"))?;
            probs.extend_from_slice(row);
        }
        Ok(Self { probs, num_states, num_actions })
    }

    /// Context-agnostic table; `probs[a] = pi(a)`.
    pub fn action_only(probs: Vec<f64>) -> Result<Self> {
        validate_row(&probs, "action probabilities")?;
        Ok(Self { num_actions: probs.len(), probs, num_states: 0 })
    }

    pub fn is_context_dependent(&self) -> bool {
        self.num_states > 0
    }

    pub fn row(&self, state: usize) -> &[f64] {
        if self.num_states == 0 {
            &self.probs
        } else {
            &self.probs[state * self.num_actions..(state + 1) * self.num_actions]
        }
    }

    pub fn prob_indexed(&self, state: usize, action: u32) -> f64 {
        self.row(state)[action as usize]
    }
}

pub(crate) fn validate_row(row: &[f64], what: &str) -> Result<()> {
    let sum: f64 = row.iter().sum();
    let min = row.iter().fold(f64::INFINITY, |m, &p| m.min(p));
    if (sum - 1.0).abs() > 1e-12 || min < 0.0 {
        return Err(OpeError::NotAProbability { what: what.into(), sum, min });
    }
    Ok(())
}

impl Policy for TabularPolicy {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn prob(&self, state: &[f64], action: u32) -> f64 {
        if self.num_states == 0 {
            self.probs[action as usize]
        } else {
            self.prob_indexed(state[0] as usize, action)
        }
    }
}

/// Sample-frequency policy estimator: `n(s, a) / n(s)` when
/// `context_dependent`, else `n(a) / n`. Counts pool every non-absorbed
/// timestep of every trajectory.
///
/// With `context_dependent = true`, states in `0..num_states` that never
/// occur in the data make the estimator undefined and are reported as an
/// error.
pub fn fit_tabular(dataset: &Dataset, num_states: usize, context_dependent: bool) -> Result<TabularPolicy> {
    let num_actions = dataset.num_actions();
    if !context_dependent {
        let mut counts = vec![0u64; num_actions];
        let mut total = 0u64;
        for traj in dataset.trajectories() {
            for t in 0..traj.num_steps() {
                if traj.is_absorbed(t) {
                    break;
                }
                counts[traj.action(t) as usize] += 1;
                total += 1;
            }
        }
        return TabularPolicy::action_only(
            counts.iter().map(|&c| c as f64 / total as f64).collect(),
        );
    }

    let mut counts = vec![0u64; num_states * num_actions];
    let mut state_counts = vec![0u64; num_states];
    for traj in dataset.trajectories() {
        for t in 0..traj.num_steps() {
            if traj.is_absorbed(t) {
                break;
            }
            let s = traj.state(t)[0] as usize;
            if s >= num_states {
                return Err(OpeError::InvalidSpec(format!(
                    "observed state {s} outside declared range 0..{num_states}"
                )));
            }
            counts[s * num_actions + traj.action(t) as usize] += 1;
            state_counts[s] += 1;
        }
    }
    let unvisited: Vec<usize> =
        (0..num_states).filter(|&s| state_counts[s] == 0).collect();
    if !unvisited.is_empty() {
        return Err(OpeError::UnvisitedStates { states: unvisited });
    }
    let rows = (0..num_states)
        .map(|s| {
            (0..num_actions)
                .map(|a| counts[s * num_actions + a] as f64 / state_counts[s] as f64)
                .collect()
        })
        .collect();
    TabularPolicy::context_dependent(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SeedRecord, Trajectory};
    use approx::assert_relative_eq;

    fn dataset_from_cells(cells: &[(f64, u32)]) -> Dataset {
        let trajs = cells
            .iter()
            .map(|&(s, a)| Trajectory::new(vec![s], vec![a], vec![0.0], 1).unwrap())
            .collect();
        Dataset::new(trajs, 2, SeedRecord { root_seed: 0, base_stream: 0 }).unwrap()
    }

    #[test]
    fn action_only_counts() {
        // n(a=1) = 3 of n = 10 -> 0.3
        let mut cells = vec![(0.0, 0u32); 7];
        cells.extend(vec![(0.0, 1u32); 3]);
        let policy = fit_tabular(&dataset_from_cells(&cells), 1, false).unwrap();
        assert_relative_eq!(policy.prob(&[0.0], 1), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn context_dependent_counts() {
        // n(s=0, a=1) = 2, n(s=0) = 4 -> 0.5
        let cells =
            [(0.0, 1u32), (0.0, 1), (0.0, 0), (0.0, 0), (1.0, 0), (1.0, 1), (1.0, 1), (1.0, 1)];
        let policy = fit_tabular(&dataset_from_cells(&cells), 2, true).unwrap();
        assert_relative_eq!(policy.prob(&[0.0], 1), 0.5, epsilon = 1e-15);
        assert_relative_eq!(policy.prob(&[1.0], 1), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn unvisited_states_are_reported() {
        let cells = [(0.0, 1u32), (0.0, 0)];
        let err = fit_tabular(&dataset_from_cells(&cells), 3, true).unwrap_err();
        match err {
            OpeError::UnvisitedStates { states } => assert_eq!(states, vec![1, 2]),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn rows_must_normalize() {
        assert!(TabularPolicy::context_dependent(vec![vec![0.6, 0.2]]).is_err());
        assert!(TabularPolicy::action_only(vec![0.5, 0.5]).is_ok());
    }
}
