//! Experimental solver for the coupled weighted orthogonal Procrustes problem
//!
//! ```text
//! minimize  sum_{i<j} || E_i W_i W_j^T E_j^T - H_ij ||_F^2   over orthogonal W_j,
//! ```
//!
//! with `W_0 = I` fixing the gauge. Each `E_j = (R_j, 0)` is `p x m` with `p <= m`.
//!
//! The iterate is initialized from the pairs involving `W_0`, which pin down the
//! leading `p x p` block of every other `W_j`, and then refined by a Riemannian
//! Levenberg-Marquardt method using the Cayley retraction
//! `W_j <- W_j (I - Omega_j / 2)^{-1} (I + Omega_j / 2)`. When a run stalls, the
//! free trailing block is re-drawn at random and the refinement restarts.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{null_space, sym_eigen_desc};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WoppOptions {
    /// Budget of Levenberg-Marquardt steps across all restarts.
    pub max_iter: usize,
    /// Target for the root of the summed squared Frobenius residuals.
    pub tol: f64,
    /// Steps without progress before the free block is re-drawn.
    pub stall: usize,
    pub seed: u64,
}

impl Default for WoppOptions {
    fn default() -> Self {
        WoppOptions {
            max_iter: 500,
            tol: 1e-8,
            stall: 40,
            seed: 0x5eed,
        }
    }
}

/// Best iterate found by [`solve_wopp`].
#[derive(Debug, Clone)]
pub struct WoppSolution {
    pub w: Vec<DMatrix<f64>>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl WoppSolution {
    /// Non-convergence as an error, keeping the iterate available to the caller.
    pub fn check(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NonConvergence {
                residual: self.residual,
                iterations: self.iterations,
            })
        }
    }
}

/// A coupled WOPP instance: weights `E_j` and targets `H_ij` for `i < j`.
#[derive(Debug, Clone)]
pub struct WoppProblem {
    pub e: Vec<DMatrix<f64>>,
    pub h: Vec<(usize, usize, DMatrix<f64>)>,
}

impl WoppProblem {
    fn validate(&self) -> Result<(usize, usize)> {
        let p = self.e.first().map(|e| e.nrows()).unwrap_or(0);
        let m = self.e.first().map(|e| e.ncols()).unwrap_or(0);
        if self.e.len() < 2 || p == 0 || p > m {
            return Err(Error::domain("WOPP needs at least two weights of shape p x m, p <= m"));
        }
        if self.e.iter().any(|e| e.shape() != (p, m)) {
            return Err(Error::domain("WOPP weights differ in shape"));
        }
        for (i, j, h) in &self.h {
            if !(i < j && *j < self.e.len()) || h.shape() != (p, p) {
                return Err(Error::domain("WOPP target index or shape out of range"));
            }
        }
        Ok((p, m))
    }

    /// Root of the summed squared residuals at `w`.
    pub fn residual(&self, w: &[DMatrix<f64>]) -> f64 {
        let f: Vec<DMatrix<f64>> = self.e.iter().zip(w).map(|(e, w)| e * w).collect();
        self.h
            .iter()
            .map(|(i, j, h)| (&f[*i] * f[*j].transpose() - h).norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

fn cayley(omega: &DMatrix<f64>) -> DMatrix<f64> {
    let n = omega.nrows();
    let half = omega * 0.5;
    let lhs = DMatrix::identity(n, n) - &half;
    let rhs = DMatrix::identity(n, n) + &half;
    lhs.lu().solve(&rhs).expect("I - Omega/2 is invertible for skew Omega")
}

fn polar(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    svd.u.expect("u requested") * svd.v_t.expect("v_t requested")
}

/// Completes a `p x m` matrix with orthonormal rows to an orthogonal `m x m` matrix.
fn complete_rows(q: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, m) = q.shape();
    let mut w = DMatrix::zeros(m, m);
    w.rows_mut(0, p).copy_from(q);
    if p < m {
        let (basis, _) = null_space(q, p);
        w.rows_mut(p, m - p).copy_from(&basis.transpose());
    }
    w
}

/// Pseudo-inverse of a symmetric PSD matrix, dropping tiny eigenvalues.
fn psd_pinv(r: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(r);
    let cut = vals[0].abs() * 1e-12;
    let inv = vals.map(|v| if v > cut { 1.0 / v } else { 0.0 });
    &vecs * DMatrix::from_diagonal(&inv) * vecs.transpose()
}

/// Starting iterate: leading block from the `(0, j)` pairs, trailing block
/// spanning the remaining row norm, optionally rotated by `twist[j]`.
fn initial_guess(prob: &WoppProblem, p: usize, m: usize, twist: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let r0_inv = psd_pinv(&prob.e[0].columns(0, p).into_owned());
    let mut w = vec![DMatrix::identity(m, m)];
    for j in 1..prob.e.len() {
        let rj_inv = psd_pinv(&prob.e[j].columns(0, p).into_owned());
        let h0j = prob
            .h
            .iter()
            .find(|(a, b, _)| *a == 0 && *b == j)
            .map(|(_, _, h)| h.clone());
        let lead = match h0j {
            Some(h) => &rj_inv * h.transpose() * &r0_inv,
            None => DMatrix::identity(p, p),
        };
        let mut q = DMatrix::zeros(p, m);
        q.columns_mut(0, p).copy_from(&lead);
        if m > p {
            let gap = DMatrix::identity(p, p) - &lead * lead.transpose();
            let (vals, vecs) = sym_eigen_desc(&gap);
            let k = p.min(m - p);
            let mut rest = DMatrix::zeros(p, m - p);
            for c in 0..k {
                let s = vals[c].max(0.0).sqrt();
                rest.set_column(c, &(vecs.column(c) * s));
            }
            q.columns_mut(p, m - p).copy_from(&(rest * &twist[j]));
        }
        let wj = complete_rows(&polar(&q));
        w.push(wj);
    }
    w
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).qr().q()
}

struct Lm<'a> {
    prob: &'a WoppProblem,
    m: usize,
    pairs: usize,
    p: usize,
}

impl Lm<'_> {
    fn skew_index(&self) -> Vec<(usize, usize)> {
        let mut idx = Vec::new();
        for a in 0..self.m {
            for b in a + 1..self.m {
                idx.push((a, b));
            }
        }
        idx
    }

    /// Residual vector and Jacobian with respect to the skew generators of `W_1..`.
    fn linearize(&self, w: &[DMatrix<f64>], skew: &[(usize, usize)]) -> (Vec<f64>, DMatrix<f64>) {
        let p = self.p;
        let f: Vec<DMatrix<f64>> = self.prob.e.iter().zip(w).map(|(e, w)| e * w).collect();
        let mut r = Vec::with_capacity(self.pairs * p * p);
        for (i, j, h) in &self.prob.h {
            r.extend((&f[*i] * f[*j].transpose() - h).iter().copied());
        }
        let per = skew.len();
        let unknowns = self.prob.e.len() - 1;
        let mut jac = DMatrix::zeros(r.len(), unknowns * per);
        for (pair, (i, j, _)) in self.prob.h.iter().enumerate() {
            let row0 = pair * p * p;
            for (k, &(a, b)) in skew.iter().enumerate() {
                // F_x Omega F_y^T for Omega = e_a e_b^T - e_b e_a^T
                let term = |x: usize, y: usize| {
                    f[x].column(a) * f[y].column(b).transpose()
                        - &f[x].column(b) * f[y].column(a).transpose()
                };
                if *i > 0 {
                    let t = term(*i, *j);
                    let col = (*i - 1) * per + k;
                    for (o, v) in t.iter().enumerate() {
                        jac[(row0 + o, col)] += v;
                    }
                }
                if *j > 0 {
                    let t = term(*i, *j);
                    let col = (*j - 1) * per + k;
                    for (o, v) in t.iter().enumerate() {
                        jac[(row0 + o, col)] -= v;
                    }
                }
            }
        }
        (r, jac)
    }

    fn step(&self, w: &[DMatrix<f64>], delta: &[f64], skew: &[(usize, usize)]) -> Vec<DMatrix<f64>> {
        let per = skew.len();
        let mut out = vec![w[0].clone()];
        for j in 1..w.len() {
            let mut omega = DMatrix::zeros(self.m, self.m);
            for (k, &(a, b)) in skew.iter().enumerate() {
                let v = delta[(j - 1) * per + k];
                omega[(a, b)] += v;
                omega[(b, a)] -= v;
            }
            out.push(&w[j] * cayley(&omega));
        }
        out
    }
}

/// Solves a coupled WOPP instance; `W_0` stays the identity.
pub fn solve_wopp(prob: &WoppProblem, opts: &WoppOptions) -> Result<WoppSolution> {
    let (p, m) = prob.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let lm = Lm {
        prob,
        m,
        pairs: prob.h.len(),
        p,
    };
    let skew = lm.skew_index();
    let identity_twist = vec![DMatrix::identity(m - p, m - p); prob.e.len()];
    let mut w = initial_guess(prob, p, m, &identity_twist);
    let mut cost = prob.residual(&w);
    let mut best = (w.clone(), cost);
    let mut lambda: f64 = 1e-3;
    let mut since_progress = 0;
    let mut iterations = 0;

    while iterations < opts.max_iter && best.1 > opts.tol {
        iterations += 1;
        let (r, jac) = lm.linearize(&w, &skew);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * nalgebra::DVector::from_vec(r);
        let scale = jtj.diagonal().max().max(1e-300);
        let mut damped = jtj.clone();
        for k in 0..damped.nrows() {
            damped[(k, k)] += lambda * scale;
        }
        let accepted = match damped.cholesky() {
            Some(ch) => {
                let delta = -ch.solve(&jtr);
                let trial = lm.step(&w, delta.as_slice(), &skew);
                let trial_cost = prob.residual(&trial);
                if trial_cost < cost {
                    let gain = (cost - trial_cost) / cost;
                    w = trial;
                    cost = trial_cost;
                    lambda = (lambda / 3.0).max(1e-15);
                    since_progress = if gain > 1e-3 { 0 } else { since_progress + 1 };
                    true
                } else {
                    false
                }
            }
            None => false,
        };
        if !accepted {
            lambda = (lambda * 4.0).min(1e12);
            since_progress += 1;
        }
        if cost < best.1 {
            best = (w.clone(), cost);
        }
        if since_progress >= opts.stall && m > p && best.1 > opts.tol {
            let twist: Vec<DMatrix<f64>> = (0..prob.e.len())
                .map(|_| random_orthogonal(m - p, &mut rng))
                .collect();
            w = initial_guess(prob, p, m, &twist);
            cost = prob.residual(&w);
            lambda = 1e-3;
            since_progress = 0;
        }
    }
    let (w, residual) = best;
    Ok(WoppSolution {
        w,
        residual,
        iterations,
        converged: residual <= opts.tol,
    })
}
