//! Policy-value estimators: the bandit IS triple, OIS, SIS, DR, and
//! marginalized IS, each usable with oracle or estimated IS ratios.
//!
//! All estimators are pure functions of immutable inputs and can be evaluated
//! concurrently across replications.

mod bandit;
mod mis;
mod qfunction;
mod returns;
mod weights;

pub use bandit::{bandit_is, BanditIsMode};
pub use mis::{drl_linear, fit_mis_ratios, mis, DrlEstimate, MisFeatureSpec, MisRatioModel};
pub use qfunction::QFunction;
pub use returns::{
    dr, ois, per_trajectory_dr, per_trajectory_dr_core, per_trajectory_ois, per_trajectory_sis,
    sis,
};
pub use weights::{compute_weights, BehaviorRef, IsWeights, WeightSource};

use serde::{Deserialize, Serialize};

/// Structured per-estimate diagnostics record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateDiagnostics {
    pub estimator: String,
    /// History length of the estimated ratio model (`None` for oracle ratios).
    pub ratio_k: Option<usize>,
    pub n: usize,
    /// Largest per-step ratio observed while building the weights.
    pub coverage_c_hat: f64,
    /// Effective sample size of the final weights.
    pub ess: f64,
    pub ridge: f64,
}

impl EstimateDiagnostics {
    pub fn from_weights(estimator: &str, weights: &IsWeights) -> Self {
        Self {
            estimator: estimator.to_string(),
            ratio_k: match weights.source {
                WeightSource::Oracle => None,
                WeightSource::Estimated { k } => Some(k),
            },
            n: weights.num_trajectories(),
            coverage_c_hat: weights.max_step_ratio,
            ess: weights.ess(),
            ridge: 0.0,
        }
    }
}
