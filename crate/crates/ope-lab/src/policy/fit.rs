//! Maximum-likelihood fitting of history-dependent behavior policies.
//!
//! The objective is the floor-mixed log-likelihood
//! `E_n[ sum_t log pi~_theta(A_t | H_{t-k:t}) ]`, maximized by damped Newton
//! steps on the exact Hessian; the step is halved until the likelihood
//! improves. When the Hessian cannot be factorized (or stops being an ascent
//! direction away from the optimum) the step falls back to plain gradient
//! ascent.
//!
//! The dataset is encoded once into sparse per-observation entries, so with
//! one-hot tabular blocks each Newton iteration costs O(n * T * k) plus one
//! small dense solve.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{OpeError, Result};

use super::features::PolicyClass;
use super::parametric::{accumulate_log_prob_grad, softmax_from_entries, ParametricHistoryPolicy};
use super::window::HistoryWindow;

/// Optimizer controls for [`fit_mle`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    /// Convergence threshold on the L2 norm of the mean-per-trajectory
    /// gradient.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Optional starting point (e.g. a previous fit on overlapping data).
    pub warm_start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-8, max_iter: 500, warm_start: None }
    }
}

/// Diagnostics of one maximum-likelihood fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    /// Mean per-trajectory log-likelihood at the solution.
    pub log_likelihood: f64,
    pub gradient_norm_at_solution: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Newton steps replaced by gradient steps after a failed factorization.
    pub gradient_fallback_steps: usize,
}

/// Fits the k-step class to the dataset by maximum likelihood.
///
/// Non-convergence within `max_iter` is reported, not raised: the caller
/// decides whether a `converged = false` report is acceptable.
pub fn fit_mle(
    dataset: &Dataset,
    class: &PolicyClass,
    k: usize,
    opts: &FitOptions,
) -> Result<(ParametricHistoryPolicy, FitReport)> {
    let features = &class.features;
    if features.num_actions() != dataset.num_actions() {
        return Err(OpeError::DimensionMismatch(format!(
            "class has {} actions, dataset has {}",
            features.num_actions(),
            dataset.num_actions()
        )));
    }
    let dim = features.theta_dim(k);
    if dim == 0 {
        // Single-action environments: the likelihood is identically zero and
        // any parameter is optimal, so the template is returned unchanged.
        let policy = ParametricHistoryPolicy::zeros(class, k);
        let report = FitReport {
            log_likelihood: 0.0,
            gradient_norm_at_solution: 0.0,
            iterations: 0,
            converged: true,
            gradient_fallback_steps: 0,
        };
        return Ok((policy, report));
    }

    let design = Design::compile(dataset, class, k);
    let num_actions = features.num_actions();
    let floor = class.floor_mix;
    let inv_n = 1.0 / dataset.len() as f64;

    let mut theta = match &opts.warm_start {
        Some(t) if t.len() == dim => t.clone(),
        Some(t) => {
            return Err(OpeError::DimensionMismatch(format!(
                "warm start has length {}, class needs {dim}",
                t.len()
            )))
        }
        None => vec![0.0; dim],
    };

    let mut probs = vec![0.0; num_actions];
    let mut ll = design.log_likelihood(&theta, floor, &mut probs) * inv_n;
    let mut grad = vec![0.0; dim];
    let mut info = DMatrix::zeros(dim, dim);
    let mut fallback_steps = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm;
    // Newton decrement of the previous pure-Newton step, for the
    // contraction guard.
    let mut prev_decrement = f64::INFINITY;

    loop {
        design.gradient_and_information(&theta, floor, inv_n, &mut probs, &mut grad, &mut info);
        grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm <= opts.grad_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let g = DVector::from_column_slice(&grad);
        let mut reg = info.clone();
        for i in 0..dim {
            reg[(i, i)] += 1e-10;
        }
        let (direction, is_newton) = match Cholesky::new(reg) {
            Some(chol) => {
                let dir = chol.solve(&g);
                if g.dot(&dir) > 0.0 {
                    (dir, true)
                } else {
                    fallback_steps += 1;
                    (g.clone(), false)
                }
            }
            None => {
                fallback_steps += 1;
                (g.clone(), false)
            }
        };

        // Squared Newton decrement: the predicted likelihood gain of a full
        // step is about half of it.
        let decrement_sq = g.dot(&direction);
        if is_newton && decrement_sq <= 1e-6 {
            // Close to the optimum the exact-Hessian step contracts
            // quadratically while likelihood differences fall below f64
            // resolution, so the step is taken unguarded; the decrement must
            // keep shrinking or the fit stops.
            if decrement_sq >= 0.25 * prev_decrement {
                break;
            }
            prev_decrement = decrement_sq;
            for (t, d) in theta.iter_mut().zip(direction.iter()) {
                *t += d;
            }
            ll = design.log_likelihood(&theta, floor, &mut probs) * inv_n;
            continue;
        }
        prev_decrement = f64::INFINITY;

        // Step halving on likelihood decrease (strict improvement).
        let mut step = 1.0;
        let mut advanced = false;
        while step > 1e-12 {
            let candidate: Vec<f64> =
                theta.iter().zip(direction.iter()).map(|(t, d)| t + step * d).collect();
            let cand_ll = design.log_likelihood(&candidate, floor, &mut probs) * inv_n;
            if cand_ll > ll {
                theta = candidate;
                ll = cand_ll;
                advanced = true;
                break;
            }
            step *= 0.5;
        }
        if !advanced {
            break;
        }
    }

    let policy = ParametricHistoryPolicy::new(features.clone(), k, theta, floor)?;
    let report = FitReport {
        log_likelihood: ll,
        gradient_norm_at_solution: grad_norm,
        iterations,
        converged,
        gradient_fallback_steps: fallback_steps,
    };
    Ok((policy, report))
}

/// Sparse per-observation design compiled once per (dataset, class, k).
struct Design {
    /// Flattened `(base, value)` entries across observations.
    entries: Vec<(u32, f64)>,
    /// `(entry_start, entry_end, observed_action)` per observation.
    obs: Vec<(u32, u32, u32)>,
    num_actions: usize,
}

impl Design {
    fn compile(dataset: &Dataset, class: &PolicyClass, k: usize) -> Self {
        let mut entries = Vec::new();
        let mut obs = Vec::new();
        let mut buf = Vec::new();
        for traj in dataset.trajectories() {
            for t in 0..traj.num_steps() {
                if traj.is_absorbed(t) {
                    break;
                }
                let w = HistoryWindow::new(traj, t, k);
                class.features.encode(&w, &mut buf);
                let start = entries.len() as u32;
                entries.extend_from_slice(&buf);
                obs.push((start, entries.len() as u32, traj.action(t)));
            }
        }
        Self { entries, obs, num_actions: class.features.num_actions() }
    }

    fn log_likelihood(&self, theta: &[f64], floor: f64, probs: &mut [f64]) -> f64 {
        let n = self.num_actions;
        let mut ll = 0.0;
        for &(start, end, action) in &self.obs {
            let entries = &self.entries[start as usize..end as usize];
            softmax_from_entries(entries, theta, probs);
            let mixed = (1.0 - floor) * probs[action as usize] + floor / n as f64;
            ll += mixed.ln();
        }
        ll
    }

    fn gradient_and_information(
        &self,
        theta: &[f64],
        floor: f64,
        scale: f64,
        probs: &mut [f64],
        grad: &mut [f64],
        info: &mut DMatrix<f64>,
    ) {
        let n = self.num_actions;
        grad.fill(0.0);
        info.fill(0.0);
        for &(start, end, action) in &self.obs {
            let entries = &self.entries[start as usize..end as usize];
            softmax_from_entries(entries, theta, probs);
            accumulate_log_prob_grad(entries, probs, action, floor, scale, grad);
            // Exact negative Hessian of the mixed log-likelihood,
            //   c * V - c (1 - c) u u',
            // with V the softmax information, u the observed-action score, and
            // c the floor shrinkage (1 - delta) p / pi~. Exactness buys
            // quadratic convergence, which matters: the floor makes the
            // softmax information only an approximation, and the resulting
            // linear crawl stalls below the fit tolerance on f64 likelihoods.
            let obs = action as usize;
            let mixed = (1.0 - floor) * probs[obs] + floor / n as f64;
            let c = (1.0 - floor) * probs[obs] / mixed;
            for &(b1, v1) in entries {
                for &(b2, v2) in entries {
                    for a1 in 1..n {
                        let p1 = probs[a1];
                        let u1 = if a1 == obs { 1.0 - p1 } else { -p1 };
                        for a2 in 1..n {
                            let p2 = probs[a2];
                            let kronecker = if a1 == a2 { p1 } else { 0.0 };
                            let v_term = kronecker - p1 * p2;
                            let u2 = if a2 == obs { 1.0 - p2 } else { -p2 };
                            let h = c * v_term - c * (1.0 - c) * u1 * u2;
                            info[(b1 as usize + a1 - 1, b2 as usize + a2 - 1)] +=
                                scale * v1 * v2 * h;
                        }
                    }
                }
            }
        }
    }
}
