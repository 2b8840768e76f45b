//! Univariate three-term recurrences
//! `x p_n = b_{n+1} p_{n+1} + a_{n+1} p_n + b_n p_{n-1}`, `p_0 = 1/b_0`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative threshold on `b_{n+1} / b_0` below which a discrete measure is
/// considered exhausted.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Recurrence coefficients `a_1..a_N` and `b_0..b_N` of an orthonormal family.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateRecurrence {
    // a[k] holds a_{k+1}
    a: Vec<f64>,
    // b[k] holds b_k
    b: Vec<f64>,
}

impl UnivariateRecurrence {
    /// Builds from `a_1..a_N` and `b_0..b_N`.
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if b.len() != a.len() + 1 {
            return Err(Error::domain(format!(
                "need one more b than a coefficient, got {} and {}",
                b.len(),
                a.len()
            )));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite recurrence coefficient"));
        }
        if let Some(n) = b.iter().position(|&v| v <= 0.0) {
            return Err(Error::domain(format!("b_{n} must be positive")));
        }
        Ok(UnivariateRecurrence { a, b })
    }

    /// Highest degree `N` reachable by the stored coefficients.
    pub fn max_degree(&self) -> usize {
        self.a.len()
    }

    /// `a_n` for `1 <= n <= N`.
    pub fn a(&self, n: usize) -> f64 {
        assert!(n >= 1, "a_0 is not defined");
        self.a[n - 1]
    }

    /// `b_n` for `0 <= n <= N`.
    pub fn b(&self, n: usize) -> f64 {
        self.b[n]
    }

    /// The symmetric tridiagonal Jacobi matrix of size `n` (`n <= N`).
    pub fn jacobi_matrix(&self, n: usize) -> DMatrix<f64> {
        assert!(n <= self.max_degree());
        let mut j = DMatrix::zeros(n, n);
        for k in 0..n {
            j[(k, k)] = self.a(k + 1);
            if k + 1 < n {
                j[(k, k + 1)] = self.b(k + 1);
                j[(k + 1, k)] = self.b(k + 1);
            }
        }
        j
    }
}

/// Orthonormal Jacobi polynomials for the probability measure proportional to
/// `(1-x)^alpha (1+x)^beta` on `[-1, 1]`.
pub fn jacobi_coeffs(n_max: usize, alpha: f64, beta: f64) -> Result<UnivariateRecurrence> {
    if !(alpha > -1.0 && beta > -1.0) {
        return Err(Error::domain(format!(
            "Jacobi parameters must exceed -1, got alpha={alpha}, beta={beta}"
        )));
    }
    let s = alpha + beta;
    let mut a = Vec::with_capacity(n_max);
    let mut b = Vec::with_capacity(n_max + 1);
    b.push(1.0);
    for k in 0..n_max {
        // a_{k+1} is the k-th monic recurrence center
        let center = if k == 0 {
            (beta - alpha) / (s + 2.0)
        } else {
            let t = 2.0 * k as f64 + s;
            (beta * beta - alpha * alpha) / (t * (t + 2.0))
        };
        a.push(center);

        let n = (k + 1) as f64;
        let sq = if k == 0 {
            4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + s).powi(2) * (3.0 + s))
        } else {
            let t = 2.0 * n + s;
            4.0 * n * (n + alpha) * (n + beta) * (n + s) / (t * t * (t + 1.0) * (t - 1.0))
        };
        b.push(sq.sqrt());
    }
    UnivariateRecurrence::new(a, b)
}

/// Discretized Stieltjes procedure on a one-dimensional discrete measure.
pub fn stieltjes_1d(nodes: &[f64], weights: &[f64], n_max: usize) -> Result<UnivariateRecurrence> {
    if nodes.len() != weights.len() {
        return Err(Error::domain("node and weight counts differ"));
    }
    let mass: f64 = weights.iter().sum();
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::domain("measure must have positive finite mass"));
    }
    let b0 = mass.sqrt();
    let mut a = Vec::with_capacity(n_max);
    let mut b = vec![b0];
    let mut prev = vec![0.0; nodes.len()];
    let mut cur = vec![1.0 / b0; nodes.len()];
    for n in 0..n_max {
        let center: f64 = nodes
            .iter()
            .zip(weights)
            .zip(&cur)
            .map(|((x, w), p)| w * x * p * p)
            .sum();
        let bn = b[n];
        let next: Vec<f64> = nodes
            .iter()
            .zip(&cur)
            .zip(&prev)
            .map(|((x, p), q)| (x - center) * p - if n == 0 { 0.0 } else { bn * q })
            .collect();
        let width = next
            .iter()
            .zip(weights)
            .map(|(v, w)| w * v * v)
            .sum::<f64>()
            .sqrt();
        if !(width >= DEGENERACY_TOL * b0) {
            return Err(Error::Degenerate {
                degree: n + 1,
                detail: format!("b_{} = {width:e} below tolerance", n + 1),
            });
        }
        a.push(center);
        b.push(width);
        prev = cur;
        cur = next.into_iter().map(|v| v / width).collect();
    }
    UnivariateRecurrence::new(a, b)
}

/// Values `p_0..p_n` at `xs`; row `k` of the result holds `p_k`.
pub fn eval_1d(rec: &UnivariateRecurrence, n: usize, xs: &[f64]) -> Result<DMatrix<f64>> {
    if n > rec.max_degree() {
        return Err(Error::domain(format!(
            "degree {n} exceeds stored recurrence degree {}",
            rec.max_degree()
        )));
    }
    let mut out = DMatrix::zeros(n + 1, xs.len());
    for (col, &x) in xs.iter().enumerate() {
        let mut prev = 0.0;
        let mut cur = 1.0 / rec.b(0);
        out[(0, col)] = cur;
        for k in 0..n {
            let next = ((x - rec.a(k + 1)) * cur - rec.b(k) * prev) / rec.b(k + 1);
            prev = cur;
            cur = next;
            out[(k + 1, col)] = cur;
        }
    }
    Ok(out)
}
