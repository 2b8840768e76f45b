//! Independent reference values shared by the integration tests.
#![allow(dead_code)]

use statrs::function::gamma::ln_gamma;

/// Squared recurrence coefficients `b_1^2..b_n^2` of the orthonormal Jacobi
/// family, from ratios of monic norms written with log-gamma.
pub fn jacobi_b2(n: usize, alpha: f64, beta: f64) -> Vec<f64> {
    let s = alpha + beta;
    // log of the squared norm of the monic degree-k polynomial for the
    // unnormalized weight (1-x)^alpha (1+x)^beta
    let log_monic = |k: f64| {
        if k == 0.0 {
            // total mass; the general formula is 0/0 here when alpha + beta = -1
            return (s + 1.0) * 2f64.ln() + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0) - ln_gamma(s + 2.0);
        }
        let log_h = (s + 1.0) * 2f64.ln() - (2.0 * k + s + 1.0).ln() + ln_gamma(k + alpha + 1.0)
            + ln_gamma(k + beta + 1.0)
            - ln_gamma(k + s + 1.0)
            - ln_gamma(k + 1.0);
        let log_lead = ln_gamma(2.0 * k + s + 1.0) - k * 2f64.ln() - ln_gamma(k + 1.0) - ln_gamma(k + s + 1.0);
        log_h - 2.0 * log_lead
    };
    (1..=n).map(|k| (log_monic(k as f64) - log_monic(k as f64 - 1.0)).exp()).collect()
}

/// All multi-indices of total degree `n` in `d` variables, by brute force.
pub fn level(d: usize, n: usize) -> Vec<Vec<usize>> {
    if d == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in (0..=n).rev() {
        for mut rest in level(d - 1, n - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// `Lambda_n` of a tensor-product Jacobi measure: one entry `sum_{i: a_i >= 1} b^{(i)2}_{a_i}`
/// per multi-index `a` of degree `n`, sorted non-increasing.
pub fn tensor_lambda(n: usize, alphas: &[f64], betas: &[f64]) -> Vec<f64> {
    let d = alphas.len();
    let b2: Vec<Vec<f64>> = (0..d).map(|i| jacobi_b2(n, alphas[i], betas[i])).collect();
    let mut out: Vec<f64> = level(d, n)
        .iter()
        .map(|a| (0..d).filter(|&i| a[i] >= 1).map(|i| b2[i][a[i] - 1]).sum())
        .collect();
    out.sort_by(|x, y| y.total_cmp(x));
    out
}

/// Largest relative deviation between two equally long spectra.
pub fn max_rel_diff(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs() / w.abs())
        .fold(0.0, f64::max)
}
