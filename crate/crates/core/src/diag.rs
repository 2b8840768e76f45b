//! Quality metrics: Gram error, commuting-condition residuals, conditioning and
//! the Christoffel function.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::eval_core::{evaluate, BasisEvaluation};
use crate::linalg::{max_abs, weighted_gram};
use crate::measure::DiscreteMeasure;
use crate::mm::{orthonormalize, GramData, MomentFactor, SpanningBasis, NODE_CHUNK};
use crate::ms::MsStats;
use crate::recurrence::RecurrenceData;

/// `E = M - I` for the block Gram matrix `M` of a computed basis.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub e: DMatrix<f64>,
    pub max_abs: f64,
}

impl ErrorReport {
    fn from_gram(mut g: DMatrix<f64>) -> Self {
        for k in 0..g.nrows() {
            g[(k, k)] -= 1.0;
        }
        let max_abs = max_abs(&g);
        ErrorReport { e: g, max_abs }
    }

    /// Largest `|E|` entry within the leading `R_n x R_n` block.
    pub fn max_abs_through(&self, rows: usize) -> f64 {
        max_abs(&self.e.view((0, 0), (rows, rows)).into_owned())
    }
}

/// Gram error of basis values tabulated at the nodes of `measure`.
pub fn gram_error(eval: &BasisEvaluation, measure: &DiscreteMeasure) -> Result<ErrorReport> {
    if eval.n_points() != measure.len() {
        return Err(Error::domain("evaluation and measure have different node counts"));
    }
    let s = eval.stacked();
    Ok(ErrorReport::from_gram(weighted_gram(&s, measure.weights())))
}

/// Anything that can tabulate a stacked basis (`R x M`) at a batch of points.
pub trait BasisSource {
    fn n_functions(&self) -> usize;
    fn eval_chunk(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

/// Basis evaluated through a canonical recurrence.
pub struct RecurrenceSource<'a> {
    pub rec: &'a RecurrenceData,
    pub degree: usize,
}

impl BasisSource for RecurrenceSource<'_> {
    fn n_functions(&self) -> usize {
        crate::mindex::space_size(self.rec.dim(), self.degree)
    }

    fn eval_chunk(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(evaluate(self.rec, points, self.degree)?.stacked())
    }
}

/// Basis given by `L^{-1} Phi`.
pub struct MomentSource<'a> {
    pub basis: &'a SpanningBasis,
    pub factor: &'a MomentFactor,
}

impl BasisSource for MomentSource<'_> {
    fn n_functions(&self) -> usize {
        self.factor.l_inv.nrows()
    }

    fn eval_chunk(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(orthonormalize(self.basis, self.factor, points)?.stacked())
    }
}

/// Gram error accumulated over node chunks, for node sets too large to tabulate at once.
pub fn gram_error_streamed(source: &dyn BasisSource, measure: &DiscreteMeasure) -> Result<ErrorReport> {
    let r = source.n_functions();
    let mut g = DMatrix::zeros(r, r);
    let mut start = 0;
    while start < measure.len() {
        let len = NODE_CHUNK.min(measure.len() - start);
        let vals = source.eval_chunk(&measure.node_rows(start, len))?;
        g += weighted_gram(&vals, &measure.weights()[start..start + len]);
        start += len;
    }
    Ok(ErrorReport::from_gram(g))
}

/// Max-norm defect of one commuting condition at degree `n` for coordinates `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcResidual {
    /// Which of the three conditions (1, 2 or 3).
    pub kind: u8,
    pub n: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Residuals of the three commuting conditions for all available degrees:
/// the first for `0 <= n < N`, the other two for `1 <= n < N`.
pub fn commuting_residuals(rec: &RecurrenceData, n_max: usize) -> Vec<CcResidual> {
    let d = rec.dim();
    let n_max = n_max.min(rec.max_degree());
    let mut out = Vec::new();
    for n in 0..n_max {
        for i in 0..d {
            for j in i + 1..d {
                let (a1i, a1j) = (rec.a(n + 1, i), rec.a(n + 1, j));
                let (b1i, b1j) = (rec.b(n + 1, i), rec.b(n + 1, j));
                let mut lhs = b1i * b1j.transpose() + a1i * a1j;
                let mut rhs = b1j * b1i.transpose() + a1j * a1i;
                if n >= 1 {
                    lhs += rec.b(n, i).transpose() * rec.b(n, j);
                    rhs += rec.b(n, j).transpose() * rec.b(n, i);
                }
                out.push(CcResidual {
                    kind: 1,
                    n,
                    i,
                    j,
                    value: max_abs(&(lhs - rhs)),
                });
                if n >= 1 {
                    let (bi, bj) = (rec.b(n, i), rec.b(n, j));
                    let (ai, aj) = (rec.a(n, i), rec.a(n, j));
                    let second = bi * a1j + ai * bj - bj * a1i - aj * bi;
                    out.push(CcResidual {
                        kind: 2,
                        n,
                        i,
                        j,
                        value: max_abs(&second),
                    });
                    let third = bi * b1j - bj * b1i;
                    out.push(CcResidual {
                        kind: 3,
                        n,
                        i,
                        j,
                        value: max_abs(&third),
                    });
                }
            }
        }
    }
    out
}

/// Largest commuting residual, zero when there is nothing to check.
pub fn max_commuting_residual(res: &[CcResidual]) -> f64 {
    res.iter().map(|r| r.value).fold(0.0, f64::max)
}

/// Where per-degree condition numbers come from.
pub enum CondSource<'a> {
    /// Leading Gram blocks `G_n` of the moment method.
    Gram(&'a GramData),
    /// Mean `cond(T_{n,i,i})` recorded by the Stieltjes procedure.
    Stieltjes(&'a MsStats),
}

/// Per-degree 2-norm condition numbers; singular matrices give `+inf`.
pub fn condition_numbers(source: CondSource<'_>) -> Vec<f64> {
    match source {
        CondSource::Gram(g) => g.condition_numbers(),
        CondSource::Stieltjes(s) => s.cond_t.clone(),
    }
}

/// `K_N(x) = R_N^{-1} sum_n |p_n(x)|^2` and `lambda_N = 1 / K_N` at the tabulated points.
pub fn christoffel(eval: &BasisEvaluation) -> Result<(Vec<f64>, Vec<f64>)> {
    let r = eval.n_functions() as f64;
    let mut k = vec![0.0; eval.n_points()];
    for block in eval.blocks() {
        for (m, col) in block.column_iter().enumerate() {
            k[m] += col.norm_squared();
        }
    }
    for (m, v) in k.iter_mut().enumerate() {
        *v /= r;
        if !(*v > 0.0 && v.is_finite()) {
            return Err(Error::Degenerate {
                degree: eval.max_degree(),
                detail: format!("K_N = {v:e} at point {m}"),
            });
        }
    }
    let lambda = k.iter().map(|v| 1.0 / v).collect();
    Ok((k, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{gauss_points_for_degree, tensor_jacobi};
    use crate::mindex::MultiIndexSet;
    use crate::tensor_oracle::{canonical_permutation, tensor_recurrence};
    use crate::uni_ttr::jacobi_coeffs;
    use approx::assert_relative_eq;

    fn jac2(n: usize) -> (RecurrenceData, DiscreteMeasure) {
        let (al, be) = ([3.80, 0.78], [7.34, 8.26]);
        let set = MultiIndexSet::build(2, n).unwrap();
        let unis: Vec<_> = (0..2).map(|i| jacobi_coeffs(n, al[i], be[i]).unwrap()).collect();
        let rec = canonical_permutation(&tensor_recurrence(&unis, &set, n).unwrap()).unwrap();
        let mu = tensor_jacobi(2, gauss_points_for_degree(n), &al, &be).unwrap();
        (rec, mu)
    }

    #[test]
    fn oracle_gram_error_is_tiny() {
        let (rec, mu) = jac2(10);
        let ev = evaluate(&rec, mu.nodes(), 10).unwrap();
        let rep = gram_error(&ev, &mu).unwrap();
        assert_eq!(rep.e.shape(), (66, 66));
        assert!(rep.max_abs <= 1e-12);
        assert!(max_abs(&(&rep.e - rep.e.transpose())) <= 1e-13);
        let streamed = gram_error_streamed(&RecurrenceSource { rec: &rec, degree: 10 }, &mu).unwrap();
        assert!((streamed.max_abs - rep.max_abs).abs() <= 1e-13);
    }

    #[test]
    fn unnormalized_constant() {
        let mu = tensor_jacobi(2, 3, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        let ev = BasisEvaluation::new(vec![DMatrix::from_element(1, mu.len(), 2.0)]);
        let rep = gram_error(&ev, &mu).unwrap();
        assert_relative_eq!(rep.e[(0, 0)], 3.0, epsilon = 1e-14);
        let exact = BasisEvaluation::new(vec![DMatrix::from_element(1, mu.len(), 1.0)]);
        assert!(gram_error(&exact, &mu).unwrap().max_abs < 1e-15);
    }

    #[test]
    fn oracle_commutes_and_perturbation_shows() {
        let (rec, _) = jac2(12);
        let res = commuting_residuals(&rec, 12);
        assert!(max_commuting_residual(&res) <= 1e-12);
        assert_eq!(res.iter().filter(|r| r.kind == 1).count(), 12);
        assert_eq!(res.iter().filter(|r| r.kind == 3).count(), 11);
        let mut bad = rec.clone();
        bad.degree_mut(4).b[0][(0, 0)] += 1e-3;
        assert!(max_commuting_residual(&commuting_residuals(&bad, 12)) >= 1e-5);
    }

    #[test]
    fn identical_coordinates_commute_trivially() {
        // i = j makes every condition an identity; only i < j is reported
        let (rec, _) = jac2(3);
        let res = commuting_residuals(&rec, 3);
        assert!(res.iter().all(|r| r.i < r.j));
    }

    #[test]
    fn christoffel_identities() {
        let (rec, mu) = jac2(8);
        let ev = evaluate(&rec, mu.nodes(), 8).unwrap();
        let (k, lam) = christoffel(&ev).unwrap();
        let integral: f64 = k.iter().zip(mu.weights()).map(|(a, w)| a * w).sum();
        assert_relative_eq!(integral, 1.0, epsilon = 1e-10);
        for (a, b) in k.iter().zip(&lam) {
            assert_relative_eq!(a * b, 1.0, epsilon = 1e-15);
        }
        let ev0 = evaluate(&rec, mu.nodes(), 0).unwrap();
        assert!(christoffel(&ev0).unwrap().0.iter().all(|&v| v == 1.0));
        let zero = BasisEvaluation::new(vec![DMatrix::zeros(1, 2)]);
        assert!(christoffel(&zero).is_err());
    }

    #[test]
    fn identity_gram_condition() {
        let set = MultiIndexSet::build(2, 0).unwrap();
        let mu = tensor_jacobi(2, 2, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        let g = crate::mm::build_gram(&SpanningBasis::monomial(&set), &mu, false).unwrap();
        assert_eq!(condition_numbers(CondSource::Gram(&g)), vec![1.0]);
    }
}
