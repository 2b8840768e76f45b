//! Canonical form and basis evaluation.
//!
//! In canonical form `B_n^T B_n = Lambda_n` is diagonal, and stacking the `d`
//! three-term relations gives the explicit update
//!
//! ```text
//! Lambda_{n+1} p_{n+1} = (sum_i x_i B_{n+1,i}^T) p_n
//!                      - (sum_i B_{n+1,i}^T A_{n+1,i}) p_n
//!                      - (sum_i B_{n+1,i}^T B_{n,i}^T) p_{n-1}
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{scale_columns, sym_eigen_desc};
use crate::recurrence::{DegreeBlock, RecurrenceData};

/// Smallest admissible `lambda_min / lambda_max` for a canonical diagonal.
pub const LAMBDA_TOL: f64 = 1e-12;

/// Values of `p_0, ..., p_N` at a set of points; block `m` is `r_m x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEvaluation {
    blocks: Vec<DMatrix<f64>>,
}

impl BasisEvaluation {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Self {
        assert!(!blocks.is_empty(), "evaluation needs at least degree 0");
        BasisEvaluation { blocks }
    }

    pub fn max_degree(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn n_points(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn block(&self, n: usize) -> &DMatrix<f64> {
        &self.blocks[n]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn n_functions(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows()).sum()
    }

    /// All blocks stacked into one `R_N x M` matrix.
    pub fn stacked(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_functions(), self.n_points());
        let mut row = 0;
        for b in &self.blocks {
            out.view_mut((row, 0), b.shape()).copy_from(b);
            row += b.nrows();
        }
        out
    }
}

/// Coordinate `i` of a row-per-point matrix as a contiguous slice.
pub(crate) fn point_coord(points: &DMatrix<f64>, i: usize) -> &[f64] {
    let m = points.nrows();
    &points.as_slice()[i * m..(i + 1) * m]
}

/// Rotates the columns of one degree block so that `B_n^T B_n` becomes diagonal
/// with non-increasing entries, assuming the rows are already expressed in the
/// canonical degree-`(n-1)` basis. Returns the rotation `V_n` (`U_n = V_n^T`).
pub fn canonicalize_block(block: &mut DegreeBlock, degree: usize) -> Result<DMatrix<f64>> {
    let (lambda, v) = sym_eigen_desc(&block.btb());
    let hi = lambda[0];
    let lo = lambda[lambda.len() - 1];
    if !(hi > 0.0 && lo > LAMBDA_TOL * hi) {
        return Err(Error::RankDeficient {
            degree,
            coord: None,
            detail: format!("B^T B eigenvalues span [{lo:e}, {hi:e}]"),
        });
    }
    for b in block.b.iter_mut() {
        *b = &*b * &v;
    }
    block.lambda = Some(lambda);
    Ok(v)
}

/// Transforms any valid recurrence data to canonical form with non-increasing `Lambda_n`.
pub fn to_canonical(rec: &RecurrenceData) -> Result<RecurrenceData> {
    let mut out = RecurrenceData::new(rec.dim());
    let mut u_prev = DMatrix::identity(1, 1);
    for n in 1..=rec.max_degree() {
        let src = rec.degree(n);
        let mut block = DegreeBlock {
            a: src.a.iter().map(|a| &u_prev * a * u_prev.transpose()).collect(),
            b: src.b.iter().map(|b| &u_prev * b).collect(),
            lambda: None,
        };
        let v = canonicalize_block(&mut block, n)?;
        out.push(block)?;
        u_prev = v.transpose();
    }
    Ok(out)
}

/// Precomputed matrices for one step of the canonical evaluation.
pub(crate) struct StepOperator {
    bt: Vec<DMatrix<f64>>,
    ba: DMatrix<f64>,
    bb: Option<DMatrix<f64>>,
    inv_lambda: DVector<f64>,
}

impl StepOperator {
    /// Operator producing `p_{n+1}` from `p_n`, `p_{n-1}`.
    pub(crate) fn new(rec: &RecurrenceData, n: usize) -> Result<Self> {
        let next = rec.degree(n + 1);
        let lambda = next.lambda.as_ref().ok_or_else(|| {
            Error::domain(format!("degree {} is not in canonical form", n + 1))
        })?;
        let hi = lambda.max();
        if let Some(k) = lambda.iter().position(|&l| !(l > LAMBDA_TOL * hi)) {
            return Err(Error::RankDeficient {
                degree: n + 1,
                coord: None,
                detail: format!("Lambda entry {k} = {:e} is numerically singular", lambda[k]),
            });
        }
        let d = rec.dim();
        let bt: Vec<DMatrix<f64>> = next.b.iter().map(|b| b.transpose()).collect();
        let cols = bt[0].ncols();
        let mut ba = DMatrix::zeros(bt[0].nrows(), cols);
        for i in 0..d {
            ba += &bt[i] * &next.a[i];
        }
        let bb = (n >= 1).then(|| {
            let cur = rec.degree(n);
            let mut acc = DMatrix::zeros(bt[0].nrows(), cur.b[0].nrows());
            for i in 0..d {
                acc += &bt[i] * cur.b[i].transpose();
            }
            acc
        });
        Ok(StepOperator {
            bt,
            ba,
            bb,
            inv_lambda: lambda.map(|l| 1.0 / l),
        })
    }

    pub(crate) fn apply(
        &self,
        points: &DMatrix<f64>,
        cur: &DMatrix<f64>,
        prev: Option<&DMatrix<f64>>,
    ) -> DMatrix<f64> {
        let mut next = -(&self.ba * cur);
        for (i, bt) in self.bt.iter().enumerate() {
            next += bt * scale_columns(cur, point_coord(points, i));
        }
        if let (Some(bb), Some(prev)) = (&self.bb, prev) {
            next -= bb * prev;
        }
        for (mut row, &s) in next.row_iter_mut().zip(self.inv_lambda.iter()) {
            row *= s;
        }
        next
    }
}

/// Evaluates `p_0..p_{n_max}` at `points` (one point per row) from canonical
/// recurrence data, with `p_0 = 1`.
pub fn evaluate(rec: &RecurrenceData, points: &DMatrix<f64>, n_max: usize) -> Result<BasisEvaluation> {
    if points.ncols() != rec.dim() {
        return Err(Error::domain(format!(
            "points have {} coordinates, recurrence has dimension {}",
            points.ncols(),
            rec.dim()
        )));
    }
    if n_max > rec.max_degree() {
        return Err(Error::domain(format!(
            "degree {n_max} requested but recurrence stops at {}",
            rec.max_degree()
        )));
    }
    let mut blocks = vec![DMatrix::from_element(1, points.nrows(), 1.0)];
    for n in 0..n_max {
        let op = StepOperator::new(rec, n)?;
        let next = op.apply(points, &blocks[n], n.checked_sub(1).map(|k| &blocks[k]));
        blocks.push(next);
    }
    Ok(BasisEvaluation::new(blocks))
}

/// Max-norm over points of `x_i p_n - (B_{n+1,i} p_{n+1} + A_{n+1,i} p_n + B_{n,i}^T p_{n-1})`.
pub fn apply_ttr_residual(
    rec: &RecurrenceData,
    eval: &BasisEvaluation,
    points: &DMatrix<f64>,
    n: usize,
    i: usize,
) -> Result<f64> {
    if n + 1 > eval.max_degree() || n + 1 > rec.max_degree() {
        return Err(Error::domain(format!(
            "residual at degree {n} needs evaluations and matrices through degree {}",
            n + 1
        )));
    }
    let p = eval.block(n);
    let mut r = scale_columns(p, point_coord(points, i));
    r -= rec.b(n + 1, i) * eval.block(n + 1);
    r -= rec.a(n + 1, i) * p;
    if n >= 1 {
        r -= rec.b(n, i).transpose() * eval.block(n - 1);
    }
    Ok(crate::linalg::max_abs(&r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, weighted_cross};
    use crate::measure::{gauss_points_for_degree, tensor_jacobi};
    use crate::mindex::MultiIndexSet;
    use crate::tensor_oracle::{canonical_order, canonical_permutation, tensor_recurrence};
    use crate::uni_ttr::{eval_1d, jacobi_coeffs};
    use approx::assert_relative_eq;

    fn jac2(n: usize) -> (MultiIndexSet, RecurrenceData, Vec<crate::uni_ttr::UnivariateRecurrence>) {
        let set = MultiIndexSet::build(2, n).unwrap();
        let unis = vec![
            jacobi_coeffs(n, 3.80, 7.34).unwrap(),
            jacobi_coeffs(n, 0.78, 8.26).unwrap(),
        ];
        let rec = tensor_recurrence(&unis, &set, n).unwrap();
        (set, rec, unis)
    }

    #[test]
    fn evaluation_matches_explicit_products() {
        let n = 6;
        let set = MultiIndexSet::build(2, n).unwrap();
        let u = jacobi_coeffs(n, 0.0, 0.0).unwrap();
        let raw = tensor_recurrence(&[u.clone(), u.clone()], &set, n).unwrap();
        let can = canonical_permutation(&raw).unwrap();
        let perms = canonical_order(&raw);
        let pts = DMatrix::from_row_slice(4, 2, &[0.1, -0.3, 0.9, 0.2, -0.55, -0.75, 0.33, 0.66]);
        let ev = evaluate(&can, &pts, n).unwrap();
        assert!(ev.block(0).iter().all(|&v| v == 1.0));
        let uni0 = eval_1d(&u, n, point_coord(&pts, 0)).unwrap();
        let uni1 = eval_1d(&u, n, point_coord(&pts, 1)).unwrap();
        for deg in 0..=n {
            for (k, &orig) in perms[deg].iter().enumerate() {
                let alpha = &set.level(deg)[orig];
                for m in 0..pts.nrows() {
                    let expect = uni0[(alpha.entries()[0] as usize, m)]
                        * uni1[(alpha.entries()[1] as usize, m)];
                    assert!((ev.block(deg)[(k, m)] - expect).abs() <= 1e-11);
                }
            }
        }
        // degree one: sqrt(3) x_1 and sqrt(3) x_2
        assert_relative_eq!(ev.block(1)[(0, 0)], 3f64.sqrt() * 0.1, epsilon = 1e-14);
    }

    #[test]
    fn oracle_gram_is_identity() {
        let n = 10;
        let (_, raw, _) = jac2(n);
        let can = canonical_permutation(&raw).unwrap();
        let mu = tensor_jacobi(2, gauss_points_for_degree(n), &[3.80, 0.78], &[7.34, 8.26]).unwrap();
        let ev = evaluate(&can, mu.nodes(), n).unwrap();
        let s = ev.stacked();
        let g = weighted_cross(&s, &s, mu.weights());
        assert!(max_abs(&(g - DMatrix::identity(s.nrows(), s.nrows()))) <= 1e-12);
    }

    #[test]
    fn to_canonical_agrees_with_permutation() {
        let (_, raw, _) = jac2(8);
        let perm = canonical_permutation(&raw).unwrap();
        let can = to_canonical(&raw).unwrap();
        for n in 1..=8 {
            let l1 = perm.degree(n).lambda.as_ref().unwrap();
            let l2 = can.degree(n).lambda.as_ref().unwrap();
            assert_relative_eq!(l1, l2, max_relative = 1e-14);
            let btb = can.degree(n).btb();
            let off = &btb - DMatrix::from_diagonal(&btb.diagonal());
            assert!(max_abs(&off) <= 1e-12);
            assert!(l2.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
        // already canonical input comes back unchanged up to signs
        let twice = to_canonical(&perm).unwrap();
        for n in 1..=8 {
            for i in 0..2 {
                let a = twice.b(n, i).abs();
                assert_relative_eq!(a, perm.b(n, i).abs(), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn canonical_rotation_preserves_span() {
        let n = 5;
        let (_, raw, _) = jac2(n);
        let perm = canonical_permutation(&raw).unwrap();
        let mu = tensor_jacobi(2, gauss_points_for_degree(n), &[3.80, 0.78], &[7.34, 8.26]).unwrap();
        // a non-trivial rotation of each level keeps the recurrence valid
        let mut rotated = RecurrenceData::new(2);
        let rot = |r: usize, seed: f64| {
            let m = DMatrix::from_fn(r, r, |i, j| ((i * 7 + j * 3) as f64 + seed).sin());
            m.qr().q()
        };
        let mut u_prev = DMatrix::identity(1, 1);
        for deg in 1..=n {
            let blk = perm.degree(deg);
            let u = rot(blk.b[0].ncols(), deg as f64);
            rotated
                .push(DegreeBlock {
                    a: blk.a.iter().map(|a| &u_prev * a * u_prev.transpose()).collect(),
                    b: blk.b.iter().map(|b| &u_prev * b * u.transpose()).collect(),
                    lambda: None,
                })
                .unwrap();
            u_prev = u;
        }
        let back = to_canonical(&rotated).unwrap();
        let e1 = evaluate(&perm, mu.nodes(), n).unwrap().stacked();
        let e2 = evaluate(&back, mu.nodes(), n).unwrap().stacked();
        let g1 = weighted_cross(&e1, &e1, mu.weights());
        let g2 = weighted_cross(&e2, &e2, mu.weights());
        assert!(max_abs(&(g1 - g2)) <= 1e-12);
        for deg in 1..=n {
            let l = back.degree(deg).lambda.clone().unwrap();
            let from_d = back.degree(deg).btb().diagonal();
            assert_relative_eq!(l, from_d, epsilon = 1e-12);
        }
    }

    #[test]
    fn residuals_and_sensitivity() {
        let n = 6;
        let (_, raw, _) = jac2(n);
        let can = canonical_permutation(&raw).unwrap();
        let mu = tensor_jacobi(2, gauss_points_for_degree(n), &[3.80, 0.78], &[7.34, 8.26]).unwrap();
        let ev = evaluate(&can, mu.nodes(), n).unwrap();
        for deg in 0..n {
            for i in 0..2 {
                let r = apply_ttr_residual(&can, &ev, mu.nodes(), deg, i).unwrap();
                assert!(r <= 1e-11, "degree {deg} coordinate {i}: {r:e}");
            }
        }
        let mut bad = can.clone();
        bad.degree_mut(3).a[0][(0, 0)] += 1e-3;
        assert!(apply_ttr_residual(&bad, &ev, mu.nodes(), 2, 0).unwrap() >= 1e-4);
        assert!(apply_ttr_residual(&can, &ev, mu.nodes(), n, 0).is_err());
    }

    #[test]
    fn evaluation_requires_canonical_data() {
        let (_, raw, _) = jac2(3);
        let pts = DMatrix::zeros(2, 2);
        assert!(evaluate(&raw, &pts, 2).is_err());
        assert!(evaluate(&canonical_permutation(&raw).unwrap(), &pts, 4).is_err());
    }
}
