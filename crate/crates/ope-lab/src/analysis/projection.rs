//! The projection-variance oracle.
//!
//! For an estimator core X (λ_T G_T for OIS, Σ_t γ^t λ_t R_t for SIS,
//! Σ_t γ^t λ_t U_t for DR) computed with oracle weights, the asymptotic
//! variance of the matching estimated-ratio estimator is the variance of X
//! minus the variance of its best linear predictor by the score vector:
//!
//! ```text
//! var_projected = Var(X) - c' I^{-1} c,   c = E[X s],  I = E[s s']
//! ```
//!
//! so `var_projected / n` predicts the sampling variance of the plug-in
//! estimator that fits the behavior policy on the same data. Moments are
//! computed with the score mean removed (it vanishes at the MLE up to the fit
//! tolerance), which keeps `0 <= var_projected <= Var(X)` an algebraic fact
//! rather than a numerical accident.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{OpeError, Result};
use crate::estimators::{
    compute_weights, per_trajectory_dr_core, per_trajectory_ois, per_trajectory_sis, BehaviorRef,
    QFunction,
};
use crate::policy::{fisher_information, FisherInfo, ParametricHistoryPolicy, Policy};
use crate::stats;

/// Which per-trajectory core variable to project.
#[derive(Clone, Copy)]
pub enum EstimatorCore<'a> {
    Ois,
    Sis,
    Dr(&'a QFunction),
}

impl std::fmt::Debug for EstimatorCore<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorCore::Ois => write!(f, "Ois"),
            EstimatorCore::Sis => write!(f, "Sis"),
            EstimatorCore::Dr(_) => write!(f, "Dr"),
        }
    }
}

/// Output of [`projection_variance`].
#[derive(Debug, Clone)]
pub struct ProjectionReport {
    /// Var(X) of the oracle-weight core.
    pub var_raw: f64,
    /// Cross moment c = E_n[X s].
    pub cross_moment: Vec<f64>,
    /// Empirical Fisher information of the fitted policy.
    pub fisher: FisherInfo,
    /// Var(X) - c' I^{-1} c: the asymptotic n * Var prediction for the
    /// estimated-ratio estimator.
    pub var_projected: f64,
    pub k: usize,
}

impl ProjectionReport {
    /// Predicted sampling variance of the estimated-ratio estimator at
    /// sample size `n`.
    pub fn predicted_estimator_variance(&self, n: usize) -> f64 {
        self.var_projected / n as f64
    }
}

/// Estimates the projected variance of the given core on this dataset.
///
/// `fitted` should be the MLE on this dataset (or on an independent split;
/// the mean score then no longer vanishes exactly and the centering absorbs
/// the difference). `behavior` is the oracle behavior policy used for the
/// weights inside X.
pub fn projection_variance(
    dataset: &Dataset,
    target: &dyn Policy,
    behavior: &dyn Policy,
    fitted: &ParametricHistoryPolicy,
    core: EstimatorCore<'_>,
    gamma: f64,
) -> Result<ProjectionReport> {
    if dataset.len() < 2 {
        return Err(OpeError::NotEnoughData("projection variance needs n >= 2".into()));
    }
    let weights = compute_weights(dataset, target, BehaviorRef::Oracle(behavior))?;
    let xs = match core {
        EstimatorCore::Ois => per_trajectory_ois(dataset, &weights, gamma),
        EstimatorCore::Sis => per_trajectory_sis(dataset, &weights, gamma),
        EstimatorCore::Dr(q) => per_trajectory_dr_core(dataset, &weights, q, target, gamma),
    };
    let var_raw = stats::pop_var(&xs);
    let dim = fitted.theta().len();
    let n = dataset.len() as f64;

    if dim == 0 {
        // Empty tangent space: nothing to project out.
        return Ok(ProjectionReport {
            var_raw,
            cross_moment: Vec::new(),
            fisher: FisherInfo { matrix: DMatrix::zeros(0, 0), min_eigenvalue: 0.0, ridge: 0.0 },
            var_projected: var_raw,
            k: fitted.k(),
        });
    }

    let fisher = fisher_information(fitted, dataset)?;
    let x_mean = stats::mean(&xs);
    let mut score_mean = vec![0.0; dim];
    let scores: Vec<Vec<f64>> =
        dataset.trajectories().iter().map(|tr| fitted.score_vector(tr)).collect();
    for s in &scores {
        for (m, v) in score_mean.iter_mut().zip(s) {
            *m += v / n;
        }
    }
    let mut cross = vec![0.0; dim];
    let mut centered_info = DMatrix::zeros(dim, dim);
    for (x, s) in xs.iter().zip(&scores) {
        for i in 0..dim {
            let si = s[i] - score_mean[i];
            cross[i] += (x - x_mean) * si / n;
            for j in 0..dim {
                centered_info[(i, j)] += si * (s[j] - score_mean[j]) / n;
            }
        }
    }
    let mut reg = centered_info;
    if fisher.ridge > 0.0 {
        for i in 0..dim {
            reg[(i, i)] += fisher.ridge;
        }
    }
    let c = DVector::from_column_slice(&cross);
    let explained = match Cholesky::new(reg.clone()) {
        Some(chol) => c.dot(&chol.solve(&c)),
        None => {
            // Last-resort ridge: the information matrix was declared
            // non-singular by the eigen check but Cholesky still failed.
            for i in 0..dim {
                reg[(i, i)] += crate::policy::FISHER_RIDGE;
            }
            let chol = Cholesky::new(reg).ok_or(OpeError::SingularMoment { t: 0 })?;
            c.dot(&chol.solve(&c))
        }
    };
    let var_projected = (var_raw - explained).max(0.0);
    Ok(ProjectionReport { var_raw, cross_moment: cross, fisher, var_projected, k: fitted.k() })
}
