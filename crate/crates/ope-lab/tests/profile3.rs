//! Scratch: gradient norm trajectory via max_iter caps.
use ope_lab::env::*;
use ope_lab::policy::*;

#[test]
#[ignore]
fn gnorm_trajectory() {
    let (spec, behavior, _) = TabularMdpSpec::reference();
    let env = EnvSpec::Tabular(spec.clone());
    let ds = sample_trajectories(&env, &behavior, 1000, 1).unwrap();
    let class = PolicyClass::new(
        PolicyFeatures::TabularBlocks { num_states: 3, num_actions: 2 },
        1e-3,
    );
    let mut prev_theta: Option<Vec<f64>> = None;
    for cap in [3usize, 4, 5, 6, 8, 12, 20, 50, 200] {
        let opts = FitOptions { grad_tol: 1e-16, max_iter: cap, warm_start: None };
        let (p, rep) = fit_mle(&ds, &class, 0, &opts).unwrap();
        let delta = prev_theta
            .as_ref()
            .map(|t| {
                t.iter()
                    .zip(p.theta())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .unwrap_or(f64::NAN);
        println!(
            "cap={cap:<4} gnorm={:.6e} ll={:.15} dtheta={delta:.2e}",
            rep.gradient_norm_at_solution, rep.log_likelihood
        );
        prev_theta = Some(p.theta().to_vec());
    }
}
