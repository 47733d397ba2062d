//! Off-policy evaluation (OPE) for finite-horizon MDPs, centered on the
//! importance-sampling family of estimators and on what happens to them when
//! the behavior policy is *estimated* — possibly conditioning on more history
//! than the true behavior policy ever used.
//!
//! The crate provides:
//!
//! - simulated data-generating processes (a contextual bandit, tabular MDPs,
//!   and a CartPole physics model) with deterministic, seedable sampling
//!   ([`env`]);
//! - parametric history-dependent behavior-policy classes fitted by maximum
//!   likelihood, with analytic scores and empirical Fisher information
//!   ([`policy`]);
//! - the estimators themselves: bandit IS in oracle / context-agnostic /
//!   context-dependent flavors, OIS, SIS, DR, and marginalized IS with a
//!   linear ratio recursion plus its doubly-robust twin ([`estimators`]);
//! - theory oracles and experiment drivers: projection-variance predictions,
//!   replicated bias/variance/MSE sweeps, coverage diagnostics, and a
//!   BIC-style history-length selector ([`analysis`]);
//! - a command-line front end that turns TOML configs into CSV/JSON artifacts
//!   ([`cli`]).
//!
//! A narrative guide with runnable examples lives in `book/`; its code blocks
//! are compiled and executed as part of `cargo test --doc`.

pub mod analysis;
pub mod cli;
pub mod data;
pub mod env;
pub mod error;
pub mod estimators;
pub mod policy;
pub mod rng;
pub mod stats;

pub use data::{Dataset, Trajectory};
pub use error::OpeError;

/// Every guide chapter doubles as a doc-test so the book can never drift from
/// the crate. mdBook renders the same files from `book/`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/environments.md")]
    mod environments {}
    #[doc = include_str!("../../../book/src/behavior-policies.md")]
    mod behavior_policies {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/mis-and-drl.md")]
    mod mis_and_drl {}
    #[doc = include_str!("../../../book/src/theory-oracles.md")]
    mod theory_oracles {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
