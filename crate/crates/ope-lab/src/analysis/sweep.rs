//! Replicated bias/variance/MSE sweeps over (estimator, ratio source, n)
//! cells.
//!
//! Each replication draws a fresh dataset, fits the behavior policy per
//! requested history length on that same data, and evaluates every estimator
//! on the shared dataset, so comparisons across estimators and history
//! lengths are paired. Replications run concurrently on deterministic
//! substreams; aggregation is a reduction over the replication index and does
//! not depend on completion order.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::env::{monte_carlo_value, sample_bandit_dataset, sample_trajectories, BanditSpec, EnvSpec};
use crate::error::{OpeError, Result};
use crate::estimators::{
    compute_weights, dr, fit_mis_ratios, mis, ois, sis, BehaviorRef, IsWeights, MisFeatureSpec,
    QFunction,
};
use crate::policy::{fit_mle, FitOptions, Policy, PolicyClass};
use crate::rng::mix;
use crate::stats;

/// Q-function choice for the DR estimator inside a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QMode {
    Zero,
    /// Exact backward-induction Q on the tabular model.
    Exact,
    /// Exact Q shifted by a constant: controlled misspecification.
    Offset { offset: f64 },
}

/// Estimators a sweep can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimatorKind {
    Ois,
    Sis,
    Dr { q: QMode },
    Mis,
}

impl EstimatorKind {
    pub fn label(&self) -> String {
        match self {
            EstimatorKind::Ois => "ois".into(),
            EstimatorKind::Sis => "sis".into(),
            EstimatorKind::Dr { q: QMode::Zero } => "dr-zero-q".into(),
            EstimatorKind::Dr { q: QMode::Exact } => "dr-exact-q".into(),
            EstimatorKind::Dr { q: QMode::Offset { .. } } => "dr-offset-q".into(),
            EstimatorKind::Mis => "mis".into(),
        }
    }
}

/// Ratio source: the oracle behavior policy (or exact marginal ratios for
/// MIS) versus a model fitted with k-step history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RatioSpec {
    Oracle,
    Fitted { k: usize },
}

impl RatioSpec {
    pub fn label(&self) -> String {
        match self {
            RatioSpec::Oracle => "oracle".into(),
            RatioSpec::Fitted { k } => format!("k{k}"),
        }
    }
}

/// Sweep configuration.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub estimators: Vec<EstimatorKind>,
    pub ratios: Vec<RatioSpec>,
    pub ns: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub policy_class: PolicyClass,
    pub fit: FitOptions,
    pub mis_ridge: f64,
    /// Episodes for the Monte Carlo ground truth when the environment has no
    /// closed-form value (CartPole).
    pub truth_episodes: usize,
    /// Retain per-replication estimates in each cell (needed for paired
    /// tests; omitted from CSV).
    pub keep_raw: bool,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(OpeError::InvalidConfig("no estimators requested".into()));
        }
        if self.ratios.is_empty() {
            return Err(OpeError::InvalidConfig("no ratio sources requested".into()));
        }
        if self.ns.is_empty() {
            return Err(OpeError::InvalidConfig("no sample sizes requested".into()));
        }
        if self.replications < 2 {
            return Err(OpeError::InvalidConfig(
                "at least 2 replications are needed for a variance".into(),
            ));
        }
        Ok(())
    }
}

/// One (estimator, ratio, n) cell of a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub estimator: String,
    pub ratio: String,
    pub n: usize,
    pub replications: usize,
    pub bias: f64,
    pub bias_se: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub mse: f64,
    pub mse_se: f64,
    pub failures: usize,
    /// Cell is invalid when more than 1% of replications failed.
    pub valid: bool,
    pub mean_c_hat: f64,
    pub mean_ess: f64,
    #[serde(skip)]
    pub estimates: Option<Vec<f64>>,
}

/// Aggregated sweep output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub truth: f64,
    pub truth_se: f64,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    /// Finds a cell by its labels.
    pub fn cell(&self, estimator: &EstimatorKind, ratio: &RatioSpec, n: usize) -> Option<&SweepCell> {
        let (el, rl) = (estimator.label(), ratio.label());
        self.cells.iter().find(|c| c.estimator == el && c.ratio == rl && c.n == n)
    }

    /// Writes the cell table as CSV (without raw estimates).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "estimator",
            "ratio",
            "n",
            "replications",
            "bias",
            "bias_se",
            "variance",
            "variance_se",
            "mse",
            "mse_se",
            "failures",
            "valid",
            "mean_c_hat",
            "mean_ess",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.estimator.clone(),
                c.ratio.clone(),
                c.n.to_string(),
                c.replications.to_string(),
                format!("{}", c.bias),
                format!("{}", c.bias_se),
                format!("{}", c.variance),
                format!("{}", c.variance_se),
                format!("{}", c.mse),
                format!("{}", c.mse_se),
                c.failures.to_string(),
                c.valid.to_string(),
                format!("{}", c.mean_c_hat),
                format!("{}", c.mean_ess),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ground truth for an environment: closed form where available, Monte Carlo
/// with recorded standard error otherwise.
pub fn ground_truth(
    env: &EnvSpec,
    target: &dyn Policy,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    match env {
        EnvSpec::Bandit(spec) => {
            let probs: Vec<f64> =
                (0..spec.num_actions()).map(|a| target.prob(&[0.0], a as u32)).collect();
            Ok((spec.exact_value(&probs), 0.0))
        }
        EnvSpec::Tabular(spec) => Ok((spec.exact_value(target), 0.0)),
        EnvSpec::CartPole(_) => monte_carlo_value(env, target, episodes, 1.0, mix(&[seed, 0xDEAD])),
    }
}

fn discount(env: &EnvSpec) -> f64 {
    match env {
        EnvSpec::Tabular(spec) => spec.discount,
        _ => 1.0,
    }
}

/// Runs the full sweep. `behavior` generates the data and provides oracle
/// ratios; `target` is the evaluated policy.
pub fn run_sweep(
    env: &EnvSpec,
    target: &dyn Policy,
    behavior: &dyn Policy,
    config: &SweepConfig,
) -> Result<SweepReport> {
    config.validate()?;
    env.validate()?;
    let gamma = discount(env);
    let (truth, truth_se) = ground_truth(env, target, config.truth_episodes, config.seed)?;

    // Exact Q and exact marginal ratios exist only on the tabular model.
    let needs_exact_q = config.estimators.iter().any(|e| {
        matches!(e, EstimatorKind::Dr { q: QMode::Exact } | EstimatorKind::Dr { q: QMode::Offset { .. } })
    });
    let needs_oracle_mis = config.estimators.iter().any(|e| matches!(e, EstimatorKind::Mis))
        && config.ratios.iter().any(|r| matches!(r, RatioSpec::Oracle));
    let tabular_spec = match env {
        EnvSpec::Tabular(spec) => Some(spec),
        _ => None,
    };
    if (needs_exact_q || needs_oracle_mis) && tabular_spec.is_none() {
        return Err(OpeError::InvalidConfig(
            "exact Q and oracle marginal ratios need a tabular environment".into(),
        ));
    }
    let exact_q = needs_exact_q.then(|| QFunction::exact_tabular(tabular_spec.unwrap(), target));
    let oracle_mis_ratios = needs_oracle_mis.then(|| {
        let spec = tabular_spec.unwrap();
        let de = spec.marginal_distributions(target);
        let db = spec.marginal_distributions(behavior);
        let ratios: Vec<f64> = de
            .iter()
            .zip(&db)
            .map(|(&e, &b)| if b > 0.0 { e / b } else { 0.0 })
            .collect();
        (ratios, spec.num_actions)
    });

    let fitted_ks: Vec<usize> = {
        let mut ks: Vec<usize> = config
            .ratios
            .iter()
            .filter_map(|r| match r {
                RatioSpec::Fitted { k } => Some(*k),
                RatioSpec::Oracle => None,
            })
            .collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    };
    let needs_oracle_weights = config.ratios.iter().any(|r| matches!(r, RatioSpec::Oracle))
        && config.estimators.iter().any(|e| !matches!(e, EstimatorKind::Mis));
    let needs_fitted_weights =
        config.estimators.iter().any(|e| !matches!(e, EstimatorKind::Mis));

    let pairs: Vec<(EstimatorKind, RatioSpec)> = config
        .estimators
        .iter()
        .flat_map(|e| config.ratios.iter().map(move |r| (*e, *r)))
        .collect();

    let mut cells = Vec::new();
    for &n in &config.ns {
        // One replication: Vec of per-pair outcomes plus weight diagnostics.
        let rep_results: Vec<Result<RepOutcome>> = (0..config.replications)
            .into_par_iter()
            .map(|rep| -> Result<RepOutcome> {
                let seed = mix(&[config.seed, n as u64, rep as u64]);
                let ds = match env {
                    EnvSpec::Bandit(spec) => sample_bandit_dataset(spec, n, seed)?,
                    _ => sample_trajectories(env, behavior, n, seed)?,
                };
                let oracle_weights = if needs_oracle_weights {
                    Some(compute_weights(&ds, target, BehaviorRef::Oracle(behavior))?)
                } else {
                    None
                };
                let mut fitted_weights: Vec<(usize, IsWeights)> = Vec::new();
                if needs_fitted_weights {
                    for &k in &fitted_ks {
                        let (policy, report) = fit_mle(&ds, &config.policy_class, k, &config.fit)?;
                        if !report.converged {
                            return Err(OpeError::InvalidConfig(format!(
                                "behavior fit did not converge at k = {k}"
                            )));
                        }
                        fitted_weights
                            .push((k, compute_weights(&ds, target, BehaviorRef::Fitted(&policy))?));
                    }
                }
                let mut values = Vec::with_capacity(pairs.len());
                let mut c_hat = 0.0;
                let mut ess = 0.0;
                if let Some(w) = &oracle_weights {
                    c_hat = w.max_step_ratio;
                    ess = w.ess();
                } else if let Some((_, w)) = fitted_weights.first() {
                    c_hat = w.max_step_ratio;
                    ess = w.ess();
                }
                for (est, ratio) in &pairs {
                    values.push(evaluate_pair(
                        &ds,
                        env,
                        target,
                        est,
                        ratio,
                        oracle_weights.as_ref(),
                        &fitted_weights,
                        exact_q.as_ref(),
                        oracle_mis_ratios.as_ref(),
                        config.mis_ridge,
                        gamma,
                    )?);
                }
                Ok(RepOutcome { values, c_hat, ess })
            })
            .collect();

        let mut failures = 0usize;
        let mut ok: Vec<&RepOutcome> = Vec::new();
        for r in &rep_results {
            match r {
                Ok(o) => ok.push(o),
                Err(_) => failures += 1,
            }
        }
        if ok.len() < 2 {
            return Err(OpeError::InvalidConfig(format!(
                "sweep cell at n = {n} had {failures} failures out of {}",
                config.replications
            )));
        }
        let mean_c_hat = stats::mean(&ok.iter().map(|o| o.c_hat).collect::<Vec<_>>());
        let mean_ess = stats::mean(&ok.iter().map(|o| o.ess).collect::<Vec<_>>());
        for (pi, (est, ratio)) in pairs.iter().enumerate() {
            let estimates: Vec<f64> = ok.iter().map(|o| o.values[pi]).collect();
            let (mean, mean_se) = stats::mean_se(&estimates);
            let var = stats::jackknife_variance(&estimates);
            let mse = stats::mse_about(&estimates, truth);
            cells.push(SweepCell {
                estimator: est.label(),
                ratio: ratio.label(),
                n,
                replications: estimates.len(),
                bias: mean - truth,
                bias_se: mean_se,
                variance: var.value,
                variance_se: var.se,
                mse: mse.value,
                mse_se: mse.se,
                failures,
                valid: (failures as f64) <= 0.01 * config.replications as f64,
                mean_c_hat,
                mean_ess,
                estimates: config.keep_raw.then_some(estimates),
            });
        }
    }
    Ok(SweepReport { truth, truth_se, cells })
}

struct RepOutcome {
    values: Vec<f64>,
    c_hat: f64,
    ess: f64,
}

#[allow(clippy::too_many_arguments)]
fn evaluate_pair(
    ds: &Dataset,
    env: &EnvSpec,
    target: &dyn Policy,
    est: &EstimatorKind,
    ratio: &RatioSpec,
    oracle_weights: Option<&IsWeights>,
    fitted_weights: &[(usize, IsWeights)],
    exact_q: Option<&QFunction>,
    oracle_mis: Option<&(Vec<f64>, usize)>,
    mis_ridge: f64,
    gamma: f64,
) -> Result<f64> {
    if let EstimatorKind::Mis = est {
        return match ratio {
            RatioSpec::Oracle => {
                let (ratios, num_actions) = oracle_mis.expect("validated above");
                let cells = ratios.len() / ds.num_steps();
                let mut total = 0.0;
                for traj in ds.trajectories() {
                    let mut disc = 1.0;
                    for t in 0..traj.num_steps() {
                        let cell = traj.state(t)[0] as usize * num_actions + traj.action(t) as usize;
                        total += disc * ratios[t * cells + cell] * traj.reward(t);
                        disc *= gamma;
                    }
                }
                Ok(total / ds.len() as f64)
            }
            RatioSpec::Fitted { k } => {
                let _ = env;
                let features = MisFeatureSpec::TabularIndicator { k: *k };
                let model = fit_mis_ratios(ds, target, &features, mis_ridge)?;
                Ok(mis(ds, &model, gamma))
            }
        };
    }
    let weights = match ratio {
        RatioSpec::Oracle => oracle_weights.expect("oracle weights precomputed"),
        RatioSpec::Fitted { k } => {
            &fitted_weights.iter().find(|(kk, _)| kk == k).expect("fitted weights precomputed").1
        }
    };
    Ok(match est {
        EstimatorKind::Ois => ois(ds, weights, gamma),
        EstimatorKind::Sis => sis(ds, weights, gamma),
        EstimatorKind::Dr { q } => {
            let qf = match q {
                QMode::Zero => QFunction::zero(),
                QMode::Exact => exact_q.expect("exact Q precomputed").clone(),
                QMode::Offset { offset } => {
                    exact_q.expect("exact Q precomputed").clone().with_offset(*offset)
                }
            };
            dr(ds, weights, &qf, target, gamma)
        }
        EstimatorKind::Mis => unreachable!(),
    })
}

/// One cell of the bandit comparison: estimator mode x sample size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BanditSweepCell {
    pub mode: String,
    pub n: usize,
    pub replications: usize,
    pub bias: f64,
    pub bias_se: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub mse: f64,
    pub mse_se: f64,
    pub log_abs_bias: f64,
    pub log_mse: f64,
    #[serde(skip)]
    pub estimates: Option<Vec<f64>>,
}

/// Replicated comparison of the three bandit IS estimators on one spec.
///
/// Replications are the unit of parallelism here, so each replication draws
/// its triplets from one substream and evaluates all three estimators from
/// cell counts in a single pass; results stay deterministic in (spec, seed)
/// and the count formulas match [`bandit_is`] exactly.
pub fn run_bandit_sweep(
    spec: &BanditSpec,
    ns: &[usize],
    replications: usize,
    seed: u64,
    keep_raw: bool,
) -> Result<Vec<BanditSweepCell>> {
    spec.validate()?;
    if replications < 2 {
        return Err(OpeError::InvalidConfig(
            "at least 2 replications are needed for a variance".into(),
        ));
    }
    let truth = spec.exact_value(&spec.target_probs);
    let modes = ["oracle", "context-agnostic", "context-dependent"];
    let mut cells = Vec::new();
    for &n in ns {
        let estimates: Vec<[f64; 3]> = (0..replications)
            .into_par_iter()
            .map(|rep| -> Result<[f64; 3]> {
                let mut rng =
                    crate::rng::substream(mix(&[seed, n as u64]), rep as u64);
                bandit_replication(spec, n, &mut rng)
            })
            .collect::<Result<_>>()?;
        for (mi, label) in modes.iter().enumerate() {
            let xs: Vec<f64> = estimates.iter().map(|e| e[mi]).collect();
            let (mean, mean_se) = stats::mean_se(&xs);
            let var = stats::jackknife_variance(&xs);
            let mse = stats::mse_about(&xs, truth);
            cells.push(BanditSweepCell {
                mode: label.to_string(),
                n,
                replications,
                bias: mean - truth,
                bias_se: mean_se,
                variance: var.value,
                variance_se: var.se,
                mse: mse.value,
                mse_se: mse.se,
                log_abs_bias: (mean - truth).abs().ln(),
                log_mse: mse.value.ln(),
                estimates: keep_raw.then_some(xs),
            });
        }
    }
    Ok(cells)
}

/// One bandit replication: sample n triplets and evaluate the three IS
/// estimators from cell counts.
fn bandit_replication(spec: &BanditSpec, n: usize, rng: &mut impl rand::Rng) -> Result<[f64; 3]> {
    use rand_distr::Distribution;
    let (nc, na) = (spec.num_contexts(), spec.num_actions());
    let noise = (spec.reward_noise_sd > 0.0)
        .then(|| rand_distr::Normal::new(0.0, spec.reward_noise_sd).unwrap());
    let mut counts = vec![0u64; nc * na];
    let mut reward_sums = vec![0.0f64; nc * na];
    for _ in 0..n {
        let s = crate::env::sample_index_from(&spec.context_probs, rng.gen::<f64>());
        let a = crate::env::sample_index_from(&spec.behavior_probs, rng.gen::<f64>());
        let mut r = spec.reward_mean[s][a];
        if let Some(d) = &noise {
            r += d.sample(rng);
        }
        counts[s * na + a] += 1;
        reward_sums[s * na + a] += r;
    }
    bandit_estimates_from_counts(spec, n, &counts, &reward_sums)
}

/// The three bandit IS estimates from per-cell counts and reward sums; the
/// same arithmetic as [`bandit_is`], grouped by cell.
pub(crate) fn bandit_estimates_from_counts(
    spec: &BanditSpec,
    n: usize,
    counts: &[u64],
    reward_sums: &[f64],
) -> Result<[f64; 3]> {
    let (nc, na) = (spec.num_contexts(), spec.num_actions());
    let mut action_counts = vec![0u64; na];
    let mut context_counts = vec![0u64; nc];
    for s in 0..nc {
        for a in 0..na {
            action_counts[a] += counts[s * na + a];
            context_counts[s] += counts[s * na + a];
        }
    }
    let mut out = [0.0f64; 3];
    for s in 0..nc {
        for a in 0..na {
            let c = counts[s * na + a];
            if c == 0 {
                continue;
            }
            let sum = reward_sums[s * na + a];
            let pe = spec.target_probs[a];
            out[0] += pe / spec.behavior_probs[a] * sum;
            out[1] += pe / (action_counts[a] as f64 / n as f64) * sum;
            out[2] += pe / (c as f64 / context_counts[s] as f64) * sum;
        }
    }
    for v in &mut out {
        *v /= n as f64;
    }
    Ok(out)
}

/// Writes bandit sweep cells in the long CSV format
/// `(n, estimator, log_abs_bias, log_mse)` plus the aggregate columns.
pub fn write_bandit_csv(cells: &[BanditSweepCell], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "n",
        "estimator",
        "log_abs_bias",
        "log_mse",
        "bias",
        "bias_se",
        "variance",
        "variance_se",
        "mse",
        "mse_se",
        "replications",
    ])?;
    for c in cells {
        w.write_record([
            c.n.to_string(),
            c.mode.clone(),
            format!("{}", c.log_abs_bias),
            format!("{}", c.log_mse),
            format!("{}", c.bias),
            format!("{}", c.bias_se),
            format!("{}", c.variance),
            format!("{}", c.variance_se),
            format!("{}", c.mse),
            format!("{}", c.mse_se),
            c.replications.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
