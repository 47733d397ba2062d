//! The parametric history-dependent policy class.
//!
//! Actions are scored by a softmax over block-additive lag features with
//! action 0 as the baseline; the fitted distribution is floored by mixing
//! with the uniform distribution, `(1 - delta) * softmax + delta / A`, so all
//! probabilities stay above a positive bound.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Trajectory;
use crate::error::{OpeError, Result};

use super::features::{PolicyClass, PolicyFeatures};
use super::fit::FitReport;
use super::window::HistoryWindow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricHistoryPolicy {
    k: usize,
    features: PolicyFeatures,
    theta: Vec<f64>,
    floor_mix: f64,
}

impl ParametricHistoryPolicy {
    pub fn new(features: PolicyFeatures, k: usize, theta: Vec<f64>, floor_mix: f64) -> Result<Self> {
        if theta.len() != features.theta_dim(k) {
            return Err(OpeError::DimensionMismatch(format!(
                "theta has length {}, class needs {}",
                theta.len(),
                features.theta_dim(k)
            )));
        }
        if !(0.0..1.0).contains(&floor_mix) {
            return Err(OpeError::InvalidSpec(format!("floor_mix {floor_mix} outside [0, 1)")));
        }
        Ok(Self { k, features, theta, floor_mix })
    }

    pub fn zeros(class: &PolicyClass, k: usize) -> Self {
        Self {
            k,
            features: class.features.clone(),
            theta: vec![0.0; class.features.theta_dim(k)],
            floor_mix: class.floor_mix,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn features(&self) -> &PolicyFeatures {
        &self.features
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn floor_mix(&self) -> f64 {
        self.floor_mix
    }

    pub fn num_actions(&self) -> usize {
        self.features.num_actions()
    }

    /// Guaranteed lower bound on every action probability (epsilon).
    pub fn probability_floor(&self) -> f64 {
        self.floor_mix / self.num_actions() as f64
    }

    /// Embeds this policy into the k'-step class (k' >= k) by zero-filling
    /// the higher lag blocks. The embedded policy is the same function of the
    /// data on every window.
    pub fn embed(&self, k_new: usize) -> Result<Self> {
        if k_new < self.k {
            return Err(OpeError::InvalidSpec(format!("cannot embed k={} into smaller k={k_new}", self.k)));
        }
        let mut theta = vec![0.0; self.features.theta_dim(k_new)];
        theta[..self.theta.len()].copy_from_slice(&self.theta);
        Self::new(self.features.clone(), k_new, theta, self.floor_mix)
    }

    /// Mixed action probabilities on a window.
    pub fn action_probs(&self, w: &HistoryWindow) -> Vec<f64> {
        let mut entries = Vec::new();
        let mut probs = vec![0.0; self.num_actions()];
        self.features.encode(w, &mut entries);
        softmax_from_entries(&entries, &self.theta, &mut probs);
        for p in probs.iter_mut() {
            *p = (1.0 - self.floor_mix) * *p + self.floor_mix / self.num_actions() as f64;
        }
        probs
    }

    pub fn prob(&self, w: &HistoryWindow, action: u32) -> f64 {
        self.action_probs(w)[action as usize]
    }

    /// Mean per-trajectory log-likelihood contribution of one trajectory,
    /// skipping absorbed padding steps.
    pub fn trajectory_log_likelihood(&self, traj: &Trajectory) -> f64 {
        let mut ll = 0.0;
        for t in 0..traj.num_steps() {
            if traj.is_absorbed(t) {
                break;
            }
            let w = HistoryWindow::new(traj, t, self.k);
            ll += self.prob(&w, traj.action(t)).ln();
        }
        ll
    }

    /// Analytic score: the gradient in theta of the trajectory log-likelihood
    /// `sum_t log pi_theta(A_t | H_{t-k:t})`.
    pub fn score_vector(&self, traj: &Trajectory) -> Vec<f64> {
        let mut grad = vec![0.0; self.theta.len()];
        let mut entries = Vec::new();
        let mut probs = vec![0.0; self.num_actions()];
        for t in 0..traj.num_steps() {
            if traj.is_absorbed(t) {
                break;
            }
            let w = HistoryWindow::new(traj, t, self.k);
            self.features.encode(&w, &mut entries);
            softmax_from_entries(&entries, &self.theta, &mut probs);
            accumulate_log_prob_grad(
                &entries,
                &probs,
                traj.action(t),
                self.floor_mix,
                1.0,
                &mut grad,
            );
        }
        grad
    }

    /// Serializes the policy (and optional fit diagnostics) as JSON.
    pub fn save(&self, path: &Path, report: Option<&FitReport>) -> Result<()> {
        let file = PolicyFile { policy: self.clone(), report: report.cloned() };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, Option<FitReport>)> {
        let file: PolicyFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok((file.policy, file.report))
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    policy: ParametricHistoryPolicy,
    report: Option<FitReport>,
}

/// Raw softmax probabilities from the sparse encoding (baseline action 0).
pub(crate) fn softmax_from_entries(entries: &[(u32, f64)], theta: &[f64], probs: &mut [f64]) {
    let n = probs.len();
    probs[0] = 0.0;
    for a in 1..n {
        let mut s = 0.0;
        for &(base, v) in entries {
            s += v * theta[base as usize + a - 1];
        }
        probs[a] = s;
    }
    let max = probs.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let mut z = 0.0;
    for p in probs.iter_mut() {
        *p = (*p - max).exp();
        z += *p;
    }
    for p in probs.iter_mut() {
        *p /= z;
    }
}

/// Adds `scale * d/dtheta log pi~(obs_action | window)` into `grad`, where
/// `pi~` is the floor-mixed policy and `probs` holds the raw softmax.
pub(crate) fn accumulate_log_prob_grad(
    entries: &[(u32, f64)],
    probs: &[f64],
    obs_action: u32,
    floor_mix: f64,
    scale: f64,
    grad: &mut [f64],
) {
    let n = probs.len();
    let obs = obs_action as usize;
    let mixed = (1.0 - floor_mix) * probs[obs] + floor_mix / n as f64;
    let coef = scale * (1.0 - floor_mix) * probs[obs] / mixed;
    for &(base, v) in entries {
        for a in 1..n {
            let indicator = if a == obs { 1.0 } else { 0.0 };
            grad[base as usize + a - 1] += coef * v * (indicator - probs[a]);
        }
    }
}
