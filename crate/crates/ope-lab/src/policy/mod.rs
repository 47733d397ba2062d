//! Policies: Markov target/behavior policies, tabular frequency estimators,
//! and parametric history-dependent policy classes fitted by maximum
//! likelihood.

mod features;
mod fisher;
mod fit;
mod parametric;
mod tabular;
mod window;

pub use features::{sieve_degree, PolicyClass, PolicyFeatures};
pub use fisher::{fisher_information, FisherInfo, FISHER_EIGEN_THRESHOLD, FISHER_RIDGE};
pub use fit::{fit_mle, FitOptions, FitReport};
pub use parametric::ParametricHistoryPolicy;
pub use tabular::{fit_tabular, TabularPolicy};
pub use window::HistoryWindow;

/// A Markov policy over a finite action set.
///
/// States are passed as raw feature slices so discrete and continuous
/// environments share one interface; discrete states store the index in the
/// first coordinate.
pub trait Policy: Sync {
    fn num_actions(&self) -> usize;

    /// π(action | state). Implementations must return a proper distribution
    /// over `0..num_actions` for every state they are used with.
    fn prob(&self, state: &[f64], action: u32) -> f64;

    /// Inverse-CDF sampling from a uniform draw in [0, 1).
    fn sample_action(&self, state: &[f64], u: f64) -> u32 {
        let n = self.num_actions();
        let mut cum = 0.0;
        for a in 0..n as u32 {
            cum += self.prob(state, a);
            if u < cum {
                return a;
            }
        }
        n as u32 - 1
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn prob(&self, state: &[f64], action: u32) -> f64 {
        (**self).prob(state, action)
    }
}
