//! Scratch calibration runs (not part of the test suite).

use ope_lab::analysis::*;
use ope_lab::env::*;
use ope_lab::estimators::*;
use ope_lab::policy::*;
use ope_lab::stats;

#[test]
#[ignore]
fn calibrate_cartpole_value() {
    // Current convention: P(A=1) = sigmoid(-scale * theta), force(1) = +F.
    let spec = CartPoleSpec::default();
    let env = EnvSpec::CartPole(spec.clone());
    let target = spec.target_policy();
    let behavior = spec.behavior_policy();
    let (v_t, se_t) = monte_carlo_value(&env, &target, 100_000, 1.0, 7).unwrap();
    let (v_b, se_b) = monte_carlo_value(&env, &behavior, 100_000, 1.0, 8).unwrap();
    println!("current convention: target {v_t:.3} +/- {se_t:.3}, behavior {v_b:.3} +/- {se_b:.3}");

    // Flipped policy (equivalent to flipping the force sign): stabilizing.
    #[derive(Clone, Copy)]
    struct Flipped {
        scale: f64,
    }
    impl Policy for Flipped {
        fn num_actions(&self) -> usize {
            2
        }
        fn prob(&self, state: &[f64], action: u32) -> f64 {
            let p1 = 1.0 / (1.0 + (-self.scale * state[2]).exp());
            if action == 1 {
                p1
            } else {
                1.0 - p1
            }
        }
    }
    let (v_ft, se_ft) = monte_carlo_value(&env, &Flipped { scale: 20.0 }, 100_000, 1.0, 9).unwrap();
    let (v_fb, se_fb) = monte_carlo_value(&env, &Flipped { scale: 10.0 }, 100_000, 1.0, 10).unwrap();
    println!("flipped convention: target {v_ft:.3} +/- {se_ft:.3}, behavior {v_fb:.3} +/- {se_fb:.3}");

    // Mean episode lengths under both.
    let ds = sample_trajectories(&env, &target, 2000, 11).unwrap();
    let mean_len: f64 = ds
        .trajectories()
        .iter()
        .map(|t| t.term_step().unwrap_or(t.num_steps()) as f64)
        .sum::<f64>()
        / ds.len() as f64;
    println!("current: mean episode length {mean_len:.1}");
    let ds2 = sample_trajectories(&env, &Flipped { scale: 20.0 }, 2000, 12).unwrap();
    let mean_len2: f64 = ds2
        .trajectories()
        .iter()
        .map(|t| t.term_step().unwrap_or(t.num_steps()) as f64)
        .sum::<f64>()
        / ds2.len() as f64;
    println!("flipped: mean episode length {mean_len2:.1}");
}

#[test]
#[ignore]
fn calibrate_reference_mdp() {
    let (spec, behavior, target) = TabularMdpSpec::reference();
    let env = EnvSpec::Tabular(spec.clone());
    let truth = spec.exact_value(&target);
    println!("reference truth = {truth:.4}");

    let class = PolicyClass::new(
        PolicyFeatures::TabularBlocks { num_states: spec.num_states, num_actions: spec.num_actions },
        1e-3,
    );
    let config = SweepConfig {
        estimators: vec![
            EstimatorKind::Ois,
            EstimatorKind::Sis,
            EstimatorKind::Dr { q: QMode::Exact },
            EstimatorKind::Dr { q: QMode::Offset { offset: 2.0 } },
            EstimatorKind::Mis,
        ],
        ratios: vec![
            RatioSpec::Oracle,
            RatioSpec::Fitted { k: 0 },
            RatioSpec::Fitted { k: 1 },
            RatioSpec::Fitted { k: 2 },
        ],
        ns: vec![1000],
        replications: 4000,
        seed: 424242,
        policy_class: class,
        fit: FitOptions::default(),
        mis_ridge: 0.0,
        truth_episodes: 1000,
        keep_raw: true,
    };
    let t0 = std::time::Instant::now();
    let report = run_sweep(&env, &target, &behavior, &config).unwrap();
    println!("sweep took {:?}", t0.elapsed());
    for cell in &report.cells {
        println!(
            "{:<12} {:<7} var={:<12.5} (se {:.5})  bias={:+.4} (se {:.4})  mse={:.5}",
            cell.estimator, cell.ratio, cell.variance, cell.variance_se, cell.bias, cell.bias_se, cell.mse
        );
    }
    // paired variance differences for the OIS chain
    let get = |est: &EstimatorKind, ratio: &RatioSpec| {
        report.cell(est, ratio, 1000).unwrap().estimates.clone().unwrap()
    };
    for est in [EstimatorKind::Ois, EstimatorKind::Sis] {
        let oracle = get(&est, &RatioSpec::Oracle);
        let k0 = get(&est, &RatioSpec::Fitted { k: 0 });
        let k1 = get(&est, &RatioSpec::Fitted { k: 1 });
        let k2 = get(&est, &RatioSpec::Fitted { k: 2 });
        let d0 = stats::jackknife_var_diff(&oracle, &k0);
        let d1 = stats::jackknife_var_diff(&k0, &k1);
        let d2 = stats::jackknife_var_diff(&k1, &k2);
        println!(
            "{:?}: oracle-k0 {:.5} ({:.1} se), k0-k1 {:.5} ({:.1} se), k1-k2 {:.5} ({:.1} se)",
            est,
            d0.value,
            d0.value / d0.se,
            d1.value,
            d1.value / d1.se,
            d2.value,
            d2.value / d2.se
        );
    }
    let mis0 = get(&EstimatorKind::Mis, &RatioSpec::Fitted { k: 0 });
    let mis2 = get(&EstimatorKind::Mis, &RatioSpec::Fitted { k: 2 });
    let dm = stats::jackknife_var_diff(&mis2, &mis0);
    println!("MIS k2-k0 var diff {:.6} ({:.1} se)", dm.value, dm.value / dm.se);
    let dre = get(&EstimatorKind::Dr { q: QMode::Exact }, &RatioSpec::Oracle);
    let dre1 = get(&EstimatorKind::Dr { q: QMode::Exact }, &RatioSpec::Fitted { k: 1 });
    let dd = stats::jackknife_var_diff(&dre, &dre1);
    println!("DR-exact oracle-k1 var diff {:.6} ({:.1} se)", dd.value, dd.value / dd.se);
    let dro = get(&EstimatorKind::Dr { q: QMode::Offset { offset: 2.0 } }, &RatioSpec::Oracle);
    let dro1 = get(&EstimatorKind::Dr { q: QMode::Offset { offset: 2.0 } }, &RatioSpec::Fitted { k: 1 });
    let doff = stats::jackknife_var_diff(&dro, &dro1);
    println!("DR-offset oracle-k1 var diff {:.6} ({:.1} se)", doff.value, doff.value / doff.se);
}

#[test]
#[ignore]
fn calibrate_projection() {
    let (spec, behavior, target) = TabularMdpSpec::reference();
    let env = EnvSpec::Tabular(spec.clone());
    let class = PolicyClass::new(
        PolicyFeatures::TabularBlocks { num_states: spec.num_states, num_actions: spec.num_actions },
        1e-3,
    );
    // Big dataset for the projection estimate.
    let ds = sample_trajectories(&env, &behavior, 20_000, 99).unwrap();
    let (fitted, _) = fit_mle(&ds, &class, 0, &FitOptions::default()).unwrap();
    let report =
        projection_variance(&ds, &target, &behavior, &fitted, EstimatorCore::Ois, 1.0).unwrap();
    println!(
        "var_raw {:.4} var_projected {:.4} (reduction {:.1}%)",
        report.var_raw,
        report.var_projected,
        100.0 * (1.0 - report.var_projected / report.var_raw)
    );

    // Empirical variance of estimated-ratio OIS at n = 2000 over replications.
    let reps = 1000;
    let n = 2000;
    let mut vals = Vec::with_capacity(reps);
    for rep in 0..reps {
        let seed = ope_lab::rng::mix(&[5150, rep as u64]);
        let d = sample_trajectories(&env, &behavior, n, seed).unwrap();
        let (f, _) = fit_mle(&d, &class, 0, &FitOptions::default()).unwrap();
        let w = compute_weights(&d, &target, BehaviorRef::Fitted(&f)).unwrap();
        vals.push(ois(&d, &w, 1.0));
    }
    let var = stats::pop_var(&vals);
    println!(
        "empirical var(OIS(0)) at n={n}: {:.6e}; predicted {:.6e}; ratio {:.3}",
        var,
        report.predicted_estimator_variance(n),
        report.predicted_estimator_variance(n) / var
    );
}
