//! Small statistical helpers shared by the estimators, the theory oracles,
//! and the sweep harness: means with standard errors, population variances,
//! delete-one jackknife standard errors for variances and paired variance
//! differences, and a chi-squared goodness-of-fit statistic.
//!
//! Jackknife recomputation is O(1) per deletion; all inputs are first shifted
//! by their mean so the running-sum formulas stay well conditioned.

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample mean and its standard error (sd / sqrt(n)).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    let sd = (ss / (xs.len() - 1) as f64).sqrt();
    (m, sd / (xs.len() as f64).sqrt())
}

/// Population variance (divides by n). Using the population form keeps the
/// decomposition `mse = bias^2 + variance` exact.
pub fn pop_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// A point estimate with a jackknife standard error.
#[derive(Debug, Clone, Copy)]
pub struct Jack {
    pub value: f64,
    pub se: f64,
}

/// Population variance with a delete-one jackknife standard error.
pub fn jackknife_variance(xs: &[f64]) -> Jack {
    let m = mean(xs);
    let centered: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let value = centered.iter().map(|c| c * c).sum::<f64>() / xs.len() as f64;
    let se = jackknife_se(&centered, |s1, s2, n| s2 / n - (s1 / n) * (s1 / n));
    Jack { value, se }
}

/// Difference of population variances, `var(xs) - var(ys)`, with a paired
/// delete-one jackknife standard error. Panics if lengths differ.
pub fn jackknife_var_diff(xs: &[f64], ys: &[f64]) -> Jack {
    assert_eq!(xs.len(), ys.len(), "paired jackknife needs equal lengths");
    let (mx, my) = (mean(xs), mean(ys));
    let cx: Vec<f64> = xs.iter().map(|x| x - mx).collect();
    let cy: Vec<f64> = ys.iter().map(|y| y - my).collect();
    let value = cx.iter().map(|c| c * c).sum::<f64>() / xs.len() as f64
        - cy.iter().map(|c| c * c).sum::<f64>() / ys.len() as f64;

    let n = xs.len() as f64;
    let (s1x, s2x) = sums(&cx);
    let (s1y, s2y) = sums(&cy);
    let mut loo = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        let vx = loo_var(s1x - cx[i], s2x - cx[i] * cx[i], n - 1.0);
        let vy = loo_var(s1y - cy[i], s2y - cy[i] * cy[i], n - 1.0);
        loo.push(vx - vy);
    }
    Jack { value, se: jackknife_spread(&loo) }
}

/// Mean of `(x - truth)^2` (the Monte Carlo MSE) with its standard error.
pub fn mse_about(xs: &[f64], truth: f64) -> Jack {
    let sq: Vec<f64> = xs.iter().map(|x| (x - truth) * (x - truth)).collect();
    let (value, se) = mean_se(&sq);
    Jack { value, se }
}

/// Paired MSE difference `mse(xs) - mse(ys)` about a common truth.
pub fn mse_diff_about(xs: &[f64], ys: &[f64], truth: f64) -> Jack {
    assert_eq!(xs.len(), ys.len());
    let d: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - truth) * (x - truth) - (y - truth) * (y - truth))
        .collect();
    let (value, se) = mean_se(&d);
    Jack { value, se }
}

fn sums(xs: &[f64]) -> (f64, f64) {
    let s1 = xs.iter().sum::<f64>();
    let s2 = xs.iter().map(|x| x * x).sum::<f64>();
    (s1, s2)
}

fn loo_var(s1: f64, s2: f64, n: f64) -> f64 {
    s2 / n - (s1 / n) * (s1 / n)
}

fn jackknife_se(centered: &[f64], stat: impl Fn(f64, f64, f64) -> f64) -> f64 {
    let n = centered.len() as f64;
    let (s1, s2) = sums(centered);
    let loo: Vec<f64> = centered
        .iter()
        .map(|&c| stat(s1 - c, s2 - c * c, n - 1.0))
        .collect();
    jackknife_spread(&loo)
}

fn jackknife_spread(loo: &[f64]) -> f64 {
    let n = loo.len() as f64;
    let m = mean(loo);
    let ss: f64 = loo.iter().map(|v| (v - m) * (v - m)).sum();
    ((n - 1.0) / n * ss).sqrt()
}

/// Least-squares slope of y on x.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Pearson chi-squared statistic for observed counts against expected
/// probabilities (cells with zero expectation are skipped).
pub fn chi_square_statistic(observed: &[u64], expected_probs: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected_probs.len());
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        if p > 0.0 {
            let e = p * total as f64;
            stat += (o as f64 - e) * (o as f64 - e) / e;
        }
    }
    stat
}
