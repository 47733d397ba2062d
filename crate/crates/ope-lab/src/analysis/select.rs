//! History-length selection by a variance-plus-penalty criterion.
//!
//! The selected length minimizes `2n * Var_hat(h) - h * ln(n)`: the variance
//! term rewards longer histories (they lower the asymptotic variance of the
//! weights-based estimators) while the penalty guards against buying
//! negligible variance reductions with extra bias. `Var_hat(h)` comes from a
//! trajectory bootstrap by default, or from the projection-variance formula.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Trajectory};
use crate::error::{OpeError, Result};
use crate::estimators::{
    compute_weights, dr, fit_mis_ratios, mis, ois, sis, BehaviorRef, MisFeatureSpec, QFunction,
};
use crate::policy::{fit_mle, FitOptions, ParametricHistoryPolicy, Policy, PolicyClass};
use crate::rng::{mix, substream};

use super::projection::{projection_variance, EstimatorCore};

/// How to estimate the per-candidate variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VarianceEstimator {
    /// Nonparametric bootstrap over trajectories.
    Bootstrap { b: usize },
    /// The projection-variance prediction divided by n.
    SamplingFormula,
}

impl Default for VarianceEstimator {
    fn default() -> Self {
        VarianceEstimator::Bootstrap { b: 200 }
    }
}

/// Estimator whose variance drives the selection.
#[derive(Clone, Copy)]
pub enum SelectEstimator<'a> {
    Ois,
    Sis,
    Dr(&'a QFunction),
    /// Marginalized IS with indicator ratio features of the candidate length.
    Mis,
}

/// Result of a history-length selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistorySelection {
    pub candidates: Vec<usize>,
    pub var_hat: Vec<f64>,
    pub objective: Vec<f64>,
    pub h_star: usize,
}

/// `2n * var - h * ln(n)`.
pub fn bic_objective(n: usize, var_hat: f64, h: usize) -> f64 {
    2.0 * n as f64 * var_hat - h as f64 * (n as f64).ln()
}

/// Selection from precomputed variances; ties break to the smaller length.
pub fn select_from_variances(candidates: &[usize], var_hat: &[f64], n: usize) -> Result<HistorySelection> {
    if candidates.is_empty() || candidates.len() != var_hat.len() {
        return Err(OpeError::InvalidConfig("candidates and variances must align and be non-empty".into()));
    }
    let objective: Vec<f64> =
        candidates.iter().zip(var_hat).map(|(&h, &v)| bic_objective(n, v, h)).collect();
    let mut best = 0;
    for (i, &obj) in objective.iter().enumerate().skip(1) {
        let better = obj < objective[best];
        let tie_smaller = obj == objective[best] && candidates[i] < candidates[best];
        if better || tie_smaller {
            best = i;
        }
    }
    Ok(HistorySelection {
        candidates: candidates.to_vec(),
        var_hat: var_hat.to_vec(),
        objective,
        h_star: candidates[best],
    })
}

/// Options for [`select_history`].
#[derive(Debug, Clone)]
pub struct SelectOptions {
    pub candidates: Vec<usize>,
    pub variance: VarianceEstimator,
    pub class: PolicyClass,
    pub fit: FitOptions,
    pub gamma: f64,
    pub seed: u64,
    /// MIS ridge (only used for the MIS estimator).
    pub ridge: f64,
}

/// Runs the selection on a dataset.
///
/// `behavior` is required by the sampling-formula variance (oracle weights
/// inside the projection) and ignored by the bootstrap.
pub fn select_history(
    dataset: &Dataset,
    target: &dyn Policy,
    behavior: Option<&dyn Policy>,
    estimator: SelectEstimator<'_>,
    opts: &SelectOptions,
) -> Result<HistorySelection> {
    if opts.candidates.is_empty() {
        return Err(OpeError::InvalidConfig("no candidate history lengths".into()));
    }
    let n = dataset.len();
    let mut var_hat = Vec::with_capacity(opts.candidates.len());
    match opts.variance {
        VarianceEstimator::Bootstrap { b } => {
            if n < 10 {
                return Err(OpeError::NotEnoughData(format!(
                    "bootstrap variance is degenerate at n = {n} (< 10 trajectories)"
                )));
            }
            if b < 2 {
                return Err(OpeError::InvalidConfig("bootstrap needs at least 2 resamples".into()));
            }
            // The same resamples are reused for every candidate (common
            // random numbers), so variance differences across h are estimated
            // far more precisely than the variances themselves.
            for &h in &opts.candidates {
                // Warm start every resample fit from the full-data solution.
                let warm = match estimator {
                    SelectEstimator::Mis => None,
                    _ => {
                        let (fit, _) = fit_mle(dataset, &opts.class, h, &opts.fit)?;
                        Some(fit.theta().to_vec())
                    }
                };
                let mut estimates = Vec::with_capacity(b);
                for rep in 0..b {
                    let mut rng = substream(mix(&[opts.seed]), rep as u64);
                    let resample = resample_trajectories(dataset, &mut rng)?;
                    estimates.push(estimate_once(
                        &resample, target, estimator, h, opts, warm.clone(),
                    )?);
                }
                var_hat.push(crate::stats::pop_var(&estimates));
            }
        }
        VarianceEstimator::SamplingFormula => {
            let behavior = behavior.ok_or_else(|| {
                OpeError::InvalidConfig("sampling-formula variance needs the oracle behavior policy".into())
            })?;
            for &h in &opts.candidates {
                let core = match estimator {
                    SelectEstimator::Ois => EstimatorCore::Ois,
                    SelectEstimator::Sis => EstimatorCore::Sis,
                    SelectEstimator::Dr(q) => EstimatorCore::Dr(q),
                    SelectEstimator::Mis => {
                        return Err(OpeError::InvalidConfig(
                            "sampling-formula variance is defined for the weights-based estimators".into(),
                        ))
                    }
                };
                let (fitted, _) = fit_mle(dataset, &opts.class, h, &opts.fit)?;
                let report = projection_variance(dataset, target, behavior, &fitted, core, opts.gamma)?;
                var_hat.push(report.predicted_estimator_variance(n));
            }
        }
    }
    select_from_variances(&opts.candidates, &var_hat, n)
}

fn resample_trajectories(dataset: &Dataset, rng: &mut impl Rng) -> Result<Dataset> {
    let n = dataset.len();
    let trajs: Vec<Trajectory> =
        (0..n).map(|_| dataset.trajectory(rng.gen_range(0..n)).clone()).collect();
    Dataset::new(trajs, dataset.num_actions(), dataset.seed_record())
}

fn estimate_once(
    dataset: &Dataset,
    target: &dyn Policy,
    estimator: SelectEstimator<'_>,
    h: usize,
    opts: &SelectOptions,
    warm: Option<Vec<f64>>,
) -> Result<f64> {
    match estimator {
        SelectEstimator::Mis => {
            let features = MisFeatureSpec::TabularIndicator { k: h };
            let model = fit_mis_ratios(dataset, target, &features, opts.ridge)?;
            Ok(mis(dataset, &model, opts.gamma))
        }
        _ => {
            let fit_opts = FitOptions { warm_start: warm, ..opts.fit.clone() };
            let (fitted, _) = fit_mle(dataset, &opts.class, h, &fit_opts)?;
            let weights = compute_weights(dataset, target, BehaviorRef::Fitted(&fitted))?;
            Ok(match estimator {
                SelectEstimator::Ois => ois(dataset, &weights, opts.gamma),
                SelectEstimator::Sis => sis(dataset, &weights, opts.gamma),
                SelectEstimator::Dr(q) => dr(dataset, &weights, q, target, opts.gamma),
                SelectEstimator::Mis => unreachable!(),
            })
        }
    }
}

/// Convenience wrapper exposing the fitted policies used along the way (for
/// diagnostics at the CLI layer).
pub fn fit_candidates(
    dataset: &Dataset,
    class: &PolicyClass,
    candidates: &[usize],
    fit: &FitOptions,
) -> Result<Vec<ParametricHistoryPolicy>> {
    candidates.iter().map(|&h| Ok(fit_mle(dataset, class, h, fit)?.0)).collect()
}
