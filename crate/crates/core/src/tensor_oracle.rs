//! Exact recurrence matrices for product measures.
//!
//! For `mu = mu_1 x ... x mu_d` the products `prod_j p_{j, alpha_j}(x_j)` are
//! orthonormal, `A_{n+1,i}` is diagonal with entries `a_{i, alpha_i + 1}`, and
//! `B_{n+1,i}` has the single entry `b_{i, alpha_i + 1}` per row, in the column
//! of `alpha + e_i`. Sorting each level by `Lambda_n` then yields canonical form.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mindex::MultiIndexSet;
use crate::recurrence::{DegreeBlock, RecurrenceData};
use crate::uni_ttr::UnivariateRecurrence;

/// Recurrence matrices of the tensor-product basis ordered as in `set`.
pub fn tensor_recurrence(
    unis: &[UnivariateRecurrence],
    set: &MultiIndexSet,
    n_max: usize,
) -> Result<RecurrenceData> {
    let d = set.dim();
    if unis.len() != d {
        return Err(Error::domain(format!(
            "need {d} univariate recurrences, got {}",
            unis.len()
        )));
    }
    if n_max > set.max_degree() {
        return Err(Error::domain(format!(
            "degree {n_max} exceeds index set degree {}",
            set.max_degree()
        )));
    }
    if let Some(short) = unis.iter().position(|u| u.max_degree() < n_max) {
        return Err(Error::domain(format!(
            "univariate recurrence {} stops at degree {}, need {n_max}",
            short + 1,
            unis[short].max_degree()
        )));
    }
    let mut rec = RecurrenceData::new(d);
    for n in 0..n_max {
        let rows = set.level(n).len();
        let cols = set.level(n + 1).len();
        let mut a = vec![DMatrix::zeros(rows, rows); d];
        let mut b = vec![DMatrix::zeros(rows, cols); d];
        for (k, alpha) in set.level(n).iter().enumerate() {
            for i in 0..d {
                let next = alpha.entries()[i] as usize + 1;
                a[i][(k, k)] = unis[i].a(next);
                b[i][(k, set.successor(n, k, i)?)] = unis[i].b(next);
            }
        }
        rec.push(DegreeBlock { a, b, lambda: None })?;
    }
    Ok(rec)
}

/// Stable ordering of each level by non-increasing `diag(B_n^T B_n)`.
/// Entry `n - 1` of the result lists, for each new position, the old position.
fn lambda_orders(rec: &RecurrenceData) -> Vec<(Vec<usize>, DVector<f64>)> {
    rec.blocks()
        .iter()
        .map(|blk| {
            let diag = blk.btb().diagonal();
            let mut order: Vec<usize> = (0..diag.len()).collect();
            order.sort_by(|&p, &q| diag[q].total_cmp(&diag[p]));
            let sorted = DVector::from_iterator(diag.len(), order.iter().map(|&k| diag[k]));
            (order, sorted)
        })
        .collect()
}

/// Level-wise permutations used by [`canonical_permutation`]; `perms[n][k]` is the
/// original position in `J_n` of the `k`-th canonical basis element.
pub fn canonical_order(rec: &RecurrenceData) -> Vec<Vec<usize>> {
    let mut perms = vec![vec![0]];
    perms.extend(lambda_orders(rec).into_iter().map(|(order, _)| order));
    perms
}

/// Permutes every level so `Lambda_n = B_n^T B_n` is diagonal with non-increasing
/// entries. The input must already have diagonal `B_n^T B_n` (true for
/// [`tensor_recurrence`] output).
pub fn canonical_permutation(rec: &RecurrenceData) -> Result<RecurrenceData> {
    let orders = lambda_orders(rec);
    let mut out = RecurrenceData::new(rec.dim());
    let mut prev: Vec<usize> = vec![0];
    for (blk, (order, lambda)) in rec.blocks().iter().zip(orders) {
        let permute_a =
            |a: &DMatrix<f64>| DMatrix::from_fn(prev.len(), prev.len(), |r, c| a[(prev[r], prev[c])]);
        let permute_b = |b: &DMatrix<f64>| {
            DMatrix::from_fn(prev.len(), order.len(), |r, c| b[(prev[r], order[c])])
        };
        out.push(DegreeBlock {
            a: blk.a.iter().map(permute_a).collect(),
            b: blk.b.iter().map(permute_b).collect(),
            lambda: Some(lambda),
        })?;
        prev = order;
    }
    Ok(out)
}
