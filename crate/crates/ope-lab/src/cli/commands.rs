//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::analysis::{
    ground_truth, run_bandit_sweep, run_sweep, select_history, write_bandit_csv, EstimatorKind,
    QMode, RatioSpec, SelectEstimator, SelectOptions, SweepConfig, VarianceEstimator,
};
use crate::data::{read_dataset_csv, write_dataset_csv};
use crate::env::{monte_carlo_value, sample_bandit_dataset, sample_trajectories, EnvSpec};
use crate::error::{OpeError, Result};
use crate::estimators::QFunction;

use super::config::ExperimentConfig;
use super::{Cli, Command};

pub fn dispatch(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli)?;
    apply_overrides(&mut config, &cli);
    init_workers(&cli)?;
    let out_dir = PathBuf::from(&config.output.dir);
    fs::create_dir_all(&out_dir)?;
    // Resolved-config snapshot: outputs plus this file re-run any cell.
    fs::write(out_dir.join("resolved-config.toml"), config.to_toml())?;

    match cli.command {
        Command::BanditDemo => cmd_bandit_demo(&config, &out_dir),
        Command::Sweep => cmd_sweep(&config, &out_dir),
        Command::SelectHistory => cmd_select_history(&config, &out_dir),
        Command::Truth => cmd_truth(&config, &out_dir),
        Command::Simulate => cmd_simulate(&config, &out_dir),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                OpeError::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
            })?;
            ExperimentConfig::from_toml(&text)
        }
        None => {
            let mut cfg = ExperimentConfig::default();
            if matches!(cli.command, Command::BanditDemo) {
                cfg.environment.kind = "bandit-example".into();
            }
            Ok(cfg)
        }
    }
}

fn apply_overrides(config: &mut ExperimentConfig, cli: &Cli) {
    if let Some(seed) = cli.seed {
        config.sweep.seed = seed;
    }
    if let Some(reps) = cli.replications {
        config.sweep.replications = reps;
    }
    if let Some(out) = &cli.out {
        config.output.dir = out.display().to_string();
    }
}

fn init_workers(cli: &Cli) -> Result<()> {
    let workers = cli
        .workers
        .or_else(|| std::env::var("OPE_LAB_WORKERS").ok().and_then(|v| v.parse().ok()));
    if let Some(w) = workers {
        if w == 0 {
            return Err(OpeError::InvalidConfig("--workers must be >= 1".into()));
        }
        // A failure here means a pool already exists (e.g. in tests); the
        // existing pool is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    Ok(())
}

fn cmd_bandit_demo(config: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let resolved = config.resolve_environment()?;
    let spec = match &resolved.env {
        EnvSpec::Bandit(s) => s.clone(),
        _ => return Err(OpeError::InvalidConfig("bandit-demo needs a bandit environment".into())),
    };
    let ns = if config.sweep.n_list.is_empty() {
        vec![50, 100, 200, 500, 1000, 2000]
    } else {
        config.sweep.n_list.clone()
    };
    let cells = run_bandit_sweep(&spec, &ns, config.sweep.replications, config.sweep.seed, false)?;
    let csv_path = out_dir.join("bandit_demo.csv");
    write_bandit_csv(&cells, &csv_path)?;
    if config.output.formats.iter().any(|f| f == "json") {
        fs::write(out_dir.join("bandit_demo.json"), serde_json::to_string_pretty(&cells)?)?;
    }
    let largest = *ns.iter().max().unwrap();
    println!("bandit demo: {} replications per n, truth = {}", config.sweep.replications, spec.exact_value(&spec.target_probs));
    for mode in ["oracle", "context-agnostic", "context-dependent"] {
        let cell = cells.iter().find(|c| c.mode == mode && c.n == largest).unwrap();
        println!("  n={largest} {mode:<18} mse={:.6} bias={:+.5}", cell.mse, cell.bias);
    }
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn parse_estimators(config: &ExperimentConfig) -> Result<Vec<EstimatorKind>> {
    let q = match config.estimators.q_mode.as_str() {
        "zero" => QMode::Zero,
        "exact" => QMode::Exact,
        "offset" => QMode::Offset { offset: config.estimators.q_offset },
        other => {
            return Err(OpeError::InvalidConfig(format!(
                "unknown q_mode {other:?} (expected zero, exact, or offset)"
            )))
        }
    };
    config
        .estimators
        .kinds
        .iter()
        .map(|k| match k.as_str() {
            "ois" => Ok(EstimatorKind::Ois),
            "sis" => Ok(EstimatorKind::Sis),
            "dr" => Ok(EstimatorKind::Dr { q }),
            "mis" => Ok(EstimatorKind::Mis),
            other => Err(OpeError::InvalidConfig(format!(
                "unknown estimator {other:?} (expected ois, sis, dr, or mis)"
            ))),
        })
        .collect()
}

fn cmd_sweep(config: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let resolved = config.resolve_environment()?;
    let estimators = parse_estimators(config)?;
    let mut ratios = Vec::new();
    if config.estimators.include_oracle {
        ratios.push(RatioSpec::Oracle);
    }
    ratios.extend(config.policy.k_list.iter().map(|&k| RatioSpec::Fitted { k }));
    let sweep_config = SweepConfig {
        estimators,
        ratios,
        ns: config.sweep.n_list.clone(),
        replications: config.sweep.replications,
        seed: config.sweep.seed,
        policy_class: resolved.policy_class.clone(),
        fit: config.fit_options(),
        mis_ridge: config.estimators.ridge,
        truth_episodes: config.sweep.truth_episodes,
        keep_raw: false,
    };
    let report = run_sweep(&resolved.env, resolved.target.as_ref(), resolved.behavior.as_ref(), &sweep_config)?;
    let csv_path = out_dir.join("sweep.csv");
    report.write_csv(&csv_path)?;
    if config.output.formats.iter().any(|f| f == "json") {
        fs::write(out_dir.join("sweep.json"), serde_json::to_string_pretty(&report)?)?;
    }
    println!(
        "sweep: truth = {:.6} (se {:.2e}), {} cells",
        report.truth,
        report.truth_se,
        report.cells.len()
    );
    for cell in &report.cells {
        println!(
            "  {:<12} {:<7} n={:<6} bias={:+.5} var={:.6} mse={:.6}{}",
            cell.estimator,
            cell.ratio,
            cell.n,
            cell.bias,
            cell.variance,
            cell.mse,
            if cell.valid { "" } else { "  [INVALID: failures]" }
        );
    }
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn cmd_select_history(config: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let resolved = config.resolve_environment()?;
    let dataset = if config.dataset.path.is_empty() {
        match &resolved.env {
            EnvSpec::Bandit(spec) => sample_bandit_dataset(spec, config.dataset.n, config.sweep.seed)?,
            env => sample_trajectories(env, resolved.behavior.as_ref(), config.dataset.n, config.sweep.seed)?,
        }
    } else {
        read_dataset_csv(Path::new(&config.dataset.path))?.0
    };
    let variance = match config.select.variance.as_str() {
        "bootstrap" => VarianceEstimator::Bootstrap { b: config.select.bootstrap_b },
        "sampling-formula" => VarianceEstimator::SamplingFormula,
        other => {
            return Err(OpeError::InvalidConfig(format!(
                "unknown variance estimator {other:?} (expected bootstrap or sampling-formula)"
            )))
        }
    };
    let gamma = match &resolved.env {
        EnvSpec::Tabular(s) => s.discount,
        _ => 1.0,
    };
    let opts = SelectOptions {
        candidates: config.select.candidates.clone(),
        variance,
        class: resolved.policy_class.clone(),
        fit: config.fit_options(),
        gamma,
        seed: config.sweep.seed,
        ridge: config.estimators.ridge,
    };
    let exact_q;
    let estimator = match config.select.estimator.as_str() {
        "ois" => SelectEstimator::Ois,
        "sis" => SelectEstimator::Sis,
        "mis" => SelectEstimator::Mis,
        "dr" => match &resolved.env {
            EnvSpec::Tabular(spec) => {
                exact_q = QFunction::exact_tabular(spec, resolved.target.as_ref());
                SelectEstimator::Dr(&exact_q)
            }
            _ => {
                return Err(OpeError::InvalidConfig(
                    "dr selection needs a tabular environment for its exact Q".into(),
                ))
            }
        },
        other => {
            return Err(OpeError::InvalidConfig(format!(
                "unknown selection estimator {other:?}"
            )))
        }
    };
    let selection = select_history(
        &dataset,
        resolved.target.as_ref(),
        Some(resolved.behavior.as_ref()),
        estimator,
        &opts,
    )?;
    println!("history selection over n = {} trajectories:", dataset.len());
    println!("  {:<4} {:<14} {:<14}", "h", "var_hat", "objective");
    for ((h, v), obj) in selection.candidates.iter().zip(&selection.var_hat).zip(&selection.objective) {
        let marker = if *h == selection.h_star { "  <- h*" } else { "" };
        println!("  {:<4} {:<14.6e} {:<14.4}{marker}", h, v, obj);
    }
    fs::write(out_dir.join("select_history.json"), serde_json::to_string_pretty(&selection)?)?;
    println!("wrote {}", out_dir.join("select_history.json").display());
    Ok(())
}

fn cmd_truth(config: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let resolved = config.resolve_environment()?;
    let gamma = match &resolved.env {
        EnvSpec::Tabular(s) => s.discount,
        _ => 1.0,
    };
    let (mc, se) = monte_carlo_value(
        &resolved.env,
        resolved.target.as_ref(),
        config.truth.episodes,
        gamma,
        config.sweep.seed,
    )?;
    let (closed_form, _) = ground_truth(&resolved.env, resolved.target.as_ref(), 1, 0)
        .map(|(v, se0)| (Some(v).filter(|_| se0 == 0.0), se0))
        .unwrap_or((None, 0.0));
    let record = json!({
        "environment": config.environment.kind,
        "episodes": config.truth.episodes,
        "discount": gamma,
        "monte_carlo_value": mc,
        "standard_error": se,
        "closed_form_value": closed_form,
    });
    fs::write(out_dir.join("truth.json"), serde_json::to_string_pretty(&record)?)?;
    println!("truth: {mc:.6} +/- {se:.6} ({} episodes)", config.truth.episodes);
    if let Some(v) = closed_form {
        println!("closed form: {v:.6}");
    }
    println!("wrote {}", out_dir.join("truth.json").display());
    Ok(())
}

fn cmd_simulate(config: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let resolved = config.resolve_environment()?;
    let dataset = match &resolved.env {
        EnvSpec::Bandit(spec) => sample_bandit_dataset(spec, config.dataset.n, config.sweep.seed)?,
        env => sample_trajectories(env, resolved.behavior.as_ref(), config.dataset.n, config.sweep.seed)?,
    };
    let path = out_dir.join("dataset.csv");
    write_dataset_csv(&dataset, &path, serde_json::to_value(&resolved.env)?)?;
    println!(
        "simulated {} trajectories x {} steps; wrote {} (+ sidecar)",
        dataset.len(),
        dataset.num_steps(),
        path.display()
    );
    Ok(())
}
