//! Theory oracles and experiment logic: projection-variance predictions,
//! replicated bias/variance/MSE sweeps, coverage diagnostics, and the
//! BIC-style history-length selector.

mod diagnostics;
mod projection;
mod select;
mod sweep;

pub use diagnostics::{coverage_diagnostics, CoverageReport};
pub use projection::{projection_variance, EstimatorCore, ProjectionReport};
pub use select::{
    bic_objective, fit_candidates, select_from_variances, select_history, HistorySelection,
    SelectEstimator, SelectOptions, VarianceEstimator,
};
pub use sweep::{
    ground_truth, run_bandit_sweep, run_sweep, write_bandit_csv, BanditSweepCell, EstimatorKind,
    QMode, RatioSpec, SweepCell, SweepConfig, SweepReport,
};
