//! End-to-end checks of the command-line interface: artifacts, determinism,
//! exit codes.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ope-lab"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn truth_on_the_bandit_recovers_4_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[environment]\nkind = \"bandit-example\"\n\n[truth]\nepisodes = 30000\n",
    );
    let out = dir.path().join("out");
    let status = bin()
        .args(["truth", "--config"])
        .arg(&config)
        .args(["--seed", "5"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("truth.json")).unwrap()).unwrap();
    let mc = record["monte_carlo_value"].as_f64().unwrap();
    let se = record["standard_error"].as_f64().unwrap();
    assert!((mc - 4.2).abs() < 4.0 * se, "mc {mc} se {se}");
    assert_eq!(record["closed_form_value"].as_f64().unwrap(), 4.2);
    // The resolved-config snapshot is always written next to the outputs.
    assert!(out.join("resolved-config.toml").exists());
}

#[test]
fn bandit_demo_is_deterministic_and_ordered() {
    let dir = tempfile::tempdir().unwrap();
    // Small noise makes the MSE ordering decisive at few replications.
    let config = write_config(
        dir.path(),
        r#"
[environment]
kind = "bandit"

[environment.bandit]
context_probs = [0.5, 0.5]
reward_mean = [[0.1, 10.1], [0.3, 10.3]]
reward_noise_sd = 0.15
behavior_probs = [0.7, 0.3]
target_probs = [0.6, 0.4]

[sweep]
n_list = [200]
replications = 400
seed = 12
"#,
    );
    let run = |out: &Path| {
        let status = bin()
            .args(["bandit-demo", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
        fs::read_to_string(out.join("bandit_demo.csv")).unwrap()
    };
    let a = run(&dir.path().join("a"));
    let b = run(&dir.path().join("b"));
    assert_eq!(a, b, "same config and seed must give byte-identical CSV");
    assert!(a.starts_with("n,estimator,log_abs_bias,log_mse"));

    // MSE ordering at the (single) n: cd < ca < oracle.
    let mut mse = std::collections::HashMap::new();
    for line in a.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        mse.insert(fields[1].to_string(), fields[8].parse::<f64>().unwrap());
    }
    assert!(mse["context-dependent"] < mse["context-agnostic"]);
    assert!(mse["context-agnostic"] < mse["oracle"]);
}

#[test]
fn single_replication_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["bandit-demo", "--replications", "1"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1), "variance is undefined at one replication");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[environment]\nkind = \"bandit-example\"\ntypo = 1\n");
    let status = bin()
        .args(["truth", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn missing_dataset_path_fails_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[environment]\nkind = \"reference-mdp\"\n\n[dataset]\npath = \"/nonexistent/data.csv\"\n",
    );
    let status = bin()
        .args(["select-history", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_ne!(status.code(), Some(0));
}

#[test]
fn simulate_writes_a_loadable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[environment]\nkind = \"reference-mdp\"\n\n[dataset]\nn = 40\n",
    );
    let out = dir.path().join("out");
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--seed", "3"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let (ds, meta) = ope_lab::data::read_dataset_csv(&out.join("dataset.csv")).unwrap();
    assert_eq!(ds.len(), 40);
    assert_eq!(ds.num_steps(), 11);
    assert_eq!(meta.num_actions, 2);
}

#[test]
fn sweep_and_select_history_produce_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"
[environment]
kind = "reference-mdp"

[policy]
k_list = [0, 1]

[estimators]
kinds = ["ois", "sis", "dr", "mis"]
q_mode = "exact"
ridge = 0.0

[sweep]
n_list = [120]
replications = 24
seed = 9

[select]
candidates = [0, 1]
estimator = "sis"
bootstrap_b = 24

[dataset]
n = 150
"#,
    );
    let out = dir.path().join("out");
    let status = bin()
        .args(["sweep", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("estimator,ratio,n,replications,bias,bias_se,variance,"));
    // estimators x (oracle + 2 fitted) cells, plus the header line
    assert_eq!(csv.lines().count(), 1 + 4 * 3);

    let status = bin()
        .args(["select-history", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let sel: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("select_history.json")).unwrap())
            .unwrap();
    assert_eq!(sel["candidates"], serde_json::json!([0, 1]));
    assert!(sel["h_star"].is_number());
}
