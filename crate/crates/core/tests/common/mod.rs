//! Shared statistics helpers for the integration suites.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Survival probability of a chi-squared statistic.
pub fn chi2_pvalue(chi2: f64, dof: usize) -> f64 {
    let dist = ChiSquared::new(dof as f64).expect("dof > 0");
    1.0 - dist.cdf(chi2)
}

/// Pearson chi-squared against expected counts (bins with tiny expectation
/// are pooled into their neighbor to keep the statistic well behaved).
pub fn pearson_chi2(observed: &[f64], expected: &[f64]) -> (f64, usize) {
    assert_eq!(observed.len(), expected.len());
    let mut chi2 = 0.0;
    let mut used = 0usize;
    let mut obs_pool = 0.0;
    let mut exp_pool = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        obs_pool += o;
        exp_pool += e;
        if exp_pool >= 5.0 {
            chi2 += (obs_pool - exp_pool) * (obs_pool - exp_pool) / exp_pool;
            used += 1;
            obs_pool = 0.0;
            exp_pool = 0.0;
        }
    }
    if exp_pool > 0.0 {
        chi2 += (obs_pool - exp_pool) * (obs_pool - exp_pool) / exp_pool;
        used += 1;
    }
    (chi2, used.saturating_sub(1))
}

/// Two-sided Kolmogorov-Smirnov p-value from the asymptotic distribution.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let lambda = (n as f64).sqrt() * d;
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        sum += (-1.0f64).powi(k as i32 + 1) * (-2.0 * kf * kf * lambda * lambda).exp();
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
