//! Empirical Fisher information of a fitted policy.

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{OpeError, Result};

use super::parametric::ParametricHistoryPolicy;

/// Eigenvalues below this threshold trigger ridge regularization.
pub const FISHER_EIGEN_THRESHOLD: f64 = 1e-10;
/// Ridge added to a near-singular information matrix.
pub const FISHER_RIDGE: f64 = 1e-8;

/// Empirical Fisher information with its non-singularity diagnostic.
#[derive(Debug, Clone)]
pub struct FisherInfo {
    /// `E_n[s s']` over per-trajectory scores, plus any recorded ridge.
    pub matrix: DMatrix<f64>,
    /// Smallest eigenvalue of the raw (un-ridged) matrix.
    pub min_eigenvalue: f64,
    /// Ridge that was added (0 when the matrix was well conditioned).
    pub ridge: f64,
}

/// Estimates the Fisher information as the empirical second moment of
/// per-trajectory score vectors. A near-singular matrix is not an error: the
/// ridge is applied and recorded so callers can judge the diagnostic.
pub fn fisher_information(policy: &ParametricHistoryPolicy, dataset: &Dataset) -> Result<FisherInfo> {
    if dataset.is_empty() {
        return Err(OpeError::NotEnoughData("fisher information needs a non-empty dataset".into()));
    }
    let dim = policy.theta().len();
    let mut matrix = DMatrix::zeros(dim, dim);
    let inv_n = 1.0 / dataset.len() as f64;
    for traj in dataset.trajectories() {
        let s = policy.score_vector(traj);
        for i in 0..dim {
            if s[i] == 0.0 {
                continue;
            }
            for j in 0..dim {
                matrix[(i, j)] += inv_n * s[i] * s[j];
            }
        }
    }
    let min_eigenvalue = if dim == 0 {
        0.0
    } else {
        matrix.clone().symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |m, &e| m.min(e))
    };
    let mut ridge = 0.0;
    if dim > 0 && min_eigenvalue < FISHER_EIGEN_THRESHOLD {
        ridge = FISHER_RIDGE;
        for i in 0..dim {
            matrix[(i, i)] += ridge;
        }
    }
    Ok(FisherInfo { matrix, min_eigenvalue, ridge })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, SeedRecord, Trajectory};
    use crate::policy::{ParametricHistoryPolicy, PolicyFeatures};

    #[test]
    fn symmetric_and_psd() {
        let trajs = (0..24)
            .map(|i| {
                let s = (i % 2) as f64;
                let a = ((i / 2) % 2) as u32;
                Trajectory::new(vec![s, 1.0 - s], vec![a, 1 - a], vec![0.0, 0.0], 1).unwrap()
            })
            .collect();
        let ds = Dataset::new(trajs, 2, SeedRecord { root_seed: 0, base_stream: 0 }).unwrap();
        let features = PolicyFeatures::TabularBlocks { num_states: 2, num_actions: 2 };
        let policy =
            ParametricHistoryPolicy::new(features, 1, vec![0.3, -0.2, 0.1, 0.0, -0.4, 0.2], 1e-3)
                .unwrap();
        let info = fisher_information(&policy, &ds).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert!((info.matrix[(i, j)] - info.matrix[(j, i)]).abs() < 1e-12);
            }
        }
        assert!(info.min_eigenvalue >= -1e-10);
    }

    #[test]
    fn single_action_scores_give_zero_matrix() {
        let tr = Trajectory::new(vec![0.0], vec![0], vec![0.0], 1).unwrap();
        let ds = Dataset::new(vec![tr], 1, SeedRecord { root_seed: 0, base_stream: 0 }).unwrap();
        let features = PolicyFeatures::TabularBlocks { num_states: 1, num_actions: 1 };
        let policy = ParametricHistoryPolicy::new(features, 0, vec![], 0.0).unwrap();
        let info = fisher_information(&policy, &ds).unwrap();
        assert_eq!(info.matrix.nrows(), 0);
        assert_eq!(info.ridge, 0.0);
    }
}
