//! Moment method: orthogonalize a fixed graded spanning basis through the
//! Cholesky factor of its Gram matrix and read off recurrence matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::eval_core::{point_coord, BasisEvaluation};
use crate::linalg::{mul_abt, scale_columns, sym_condition_number, weighted_gram};
use crate::measure::DiscreteMeasure;
use crate::mindex::{space_size, MultiIndexSet};
use crate::recurrence::{DegreeBlock, RecurrenceData};
use crate::uni_ttr::{eval_1d, jacobi_coeffs};

/// Number of nodes processed per Gram accumulation step.
pub const NODE_CHUNK: usize = 16_384;

#[derive(Debug, Clone, PartialEq)]
pub enum BasisKind {
    /// Plain power products `x^alpha` (MM).
    Monomial,
    /// Orthonormal Legendre products on an axis-aligned box (ML).
    TensorLegendre { bounding_box: Vec<(f64, f64)> },
}

/// Graded spanning basis `phi_1, ..., phi_{R_N}` ordered by a multi-index set.
#[derive(Debug, Clone)]
pub struct SpanningBasis {
    kind: BasisKind,
    exponents: Vec<Vec<u32>>,
    dim: usize,
    max_degree: usize,
}

impl SpanningBasis {
    pub fn monomial(set: &MultiIndexSet) -> Self {
        Self::with_kind(BasisKind::Monomial, set)
    }

    /// Legendre products on the tightest box around the nodes of `measure`.
    pub fn legendre_for(measure: &DiscreteMeasure, set: &MultiIndexSet) -> Result<Self> {
        let bounding_box = measure.bounding_box();
        if let Some(i) = bounding_box.iter().position(|&(lo, hi)| !(hi > lo)) {
            return Err(Error::domain(format!("bounding box is flat along axis {}", i + 1)));
        }
        Ok(Self::with_kind(BasisKind::TensorLegendre { bounding_box }, set))
    }

    fn with_kind(kind: BasisKind, set: &MultiIndexSet) -> Self {
        SpanningBasis {
            kind,
            exponents: set.iter().map(|a| a.entries().to_vec()).collect(),
            dim: set.dim(),
            max_degree: set.max_degree(),
        }
    }

    pub fn kind(&self) -> &BasisKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Univariate factor tables: entry `i` is `(N+1) x M` with row `k` the degree-`k` factor.
    fn axis_tables(&self, points: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
        let n = self.max_degree;
        (0..self.dim)
            .map(|i| {
                let xs = point_coord(points, i);
                match &self.kind {
                    BasisKind::Monomial => {
                        let mut t = DMatrix::zeros(n + 1, xs.len());
                        for (m, &x) in xs.iter().enumerate() {
                            let mut v = 1.0;
                            for k in 0..=n {
                                t[(k, m)] = v;
                                v *= x;
                            }
                        }
                        Ok(t)
                    }
                    BasisKind::TensorLegendre { bounding_box } => {
                        let (lo, hi) = bounding_box[i];
                        let mapped: Vec<f64> =
                            xs.iter().map(|&x| (2.0 * x - lo - hi) / (hi - lo)).collect();
                        eval_1d(&jacobi_coeffs(n, 0.0, 0.0)?, n, &mapped)
                    }
                }
            })
            .collect()
    }

    /// Values of the first `count` basis functions at `points` (one point per row), as `count x M`.
    pub fn evaluate(&self, points: &DMatrix<f64>, count: usize) -> Result<DMatrix<f64>> {
        if points.ncols() != self.dim {
            return Err(Error::domain("point dimension does not match the basis"));
        }
        let tables = self.axis_tables(points)?;
        let mut phi = DMatrix::zeros(count, points.nrows());
        for m in 0..points.nrows() {
            for (r, alpha) in self.exponents[..count].iter().enumerate() {
                let mut v = 1.0;
                for (i, &k) in alpha.iter().enumerate() {
                    v *= tables[i][(k as usize, m)];
                }
                phi[(r, m)] = v;
            }
        }
        Ok(phi)
    }
}

/// Gram matrix `G` (`R_N x R_N`) and, when requested, the coordinate-weighted
/// moments `Gx_i` restricted to rows `1..R_{N-1}` (all that extraction needs).
#[derive(Debug, Clone)]
pub struct GramData {
    pub g: DMatrix<f64>,
    pub gx: Option<Vec<DMatrix<f64>>>,
    dim: usize,
    max_degree: usize,
}

impl GramData {
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// 2-norm condition numbers of the leading blocks `G_n`, `n = 0..=N`.
    pub fn condition_numbers(&self) -> Vec<f64> {
        (0..=self.max_degree)
            .map(|n| {
                let r = space_size(self.dim, n);
                sym_condition_number(&self.g.view((0, 0), (r, r)).into_owned())
            })
            .collect()
    }
}

/// Accumulates Gram moments of `basis` over the nodes of `measure`.
pub fn build_gram(basis: &SpanningBasis, measure: &DiscreteMeasure, with_weighted: bool) -> Result<GramData> {
    let d = basis.dim();
    let n = basis.max_degree();
    if measure.dim() != d {
        return Err(Error::domain("measure and basis dimensions differ"));
    }
    let r = basis.len();
    let r_low = if n == 0 { 0 } else { space_size(d, n - 1) };
    let mut g = DMatrix::zeros(r, r);
    let mut gx = vec![DMatrix::zeros(r_low, r); if with_weighted { d } else { 0 }];
    let mut start = 0;
    while start < measure.len() {
        let len = NODE_CHUNK.min(measure.len() - start);
        let pts = measure.node_rows(start, len);
        let phi = basis.evaluate(&pts, r)?;
        let w = &measure.weights()[start..start + len];
        g += weighted_gram(&phi, w);
        if r_low > 0 && with_weighted {
            let low = scale_columns(&phi.rows(0, r_low).into_owned(), w);
            for (i, acc) in gx.iter_mut().enumerate() {
                *acc += mul_abt(&scale_columns(&low, point_coord(&pts, i)), &phi);
            }
        }
        start += len;
    }
    if g.iter().chain(gx.iter().flat_map(|m| m.iter())).any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite moment in Gram assembly"));
    }
    Ok(GramData {
        g,
        gx: with_weighted.then_some(gx),
        dim: d,
        max_degree: n,
    })
}

/// Unpivoted Cholesky factor of a symmetric matrix; `Err(row)` on the first
/// non-positive or non-finite pivot.
pub fn cholesky(g: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, usize> {
    let n = g.nrows();
    // row-major lower triangle for contiguous dot products
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let (head, tail) = l.split_at_mut(j * n);
        let row_j = &mut tail[..n];
        for k in 0..j {
            let row_k = &head[k * n..k * n + k];
            let dot: f64 = row_k.iter().zip(&row_j[..k]).map(|(a, b)| a * b).sum();
            row_j[k] = (g[(j, k)] - dot) / head[k * n + k];
        }
        let pivot = g[(j, j)] - row_j[..j].iter().map(|v| v * v).sum::<f64>();
        if !(pivot > 0.0 && pivot.is_finite()) {
            return Err(j);
        }
        row_j[j] = pivot.sqrt();
    }
    Ok(DMatrix::from_row_slice(n, n, &l))
}

/// Result of factoring a graded Gram matrix as far as it is numerically
/// positive definite.
#[derive(Debug, Clone)]
pub struct MomentFactor {
    /// `L^{-1}` for the leading `R_n x R_n` block, `n` = [`MomentFactor::degree`].
    pub l_inv: DMatrix<f64>,
    degree: usize,
    dim: usize,
    breakdown: Option<(usize, usize)>,
}

impl MomentFactor {
    /// Factors `G`; on breakdown at a row of degree `n`, keeps degrees `< n`.
    pub fn new(gram: &GramData) -> Result<Self> {
        let d = gram.dim;
        let (l, degree, breakdown) = match cholesky(&gram.g) {
            Ok(l) => (l, gram.max_degree, None),
            Err(row) => {
                let fail_deg = (0..=gram.max_degree)
                    .find(|&n| row < space_size(d, n))
                    .expect("row inside the Gram matrix");
                if fail_deg == 0 {
                    return Err(Error::Conditioning { degree: 0, row });
                }
                let keep = space_size(d, fail_deg - 1);
                let l = cholesky(&gram.g.view((0, 0), (keep, keep)).into_owned())
                    .expect("leading block factored before the failing row");
                (l, fail_deg - 1, Some((fail_deg, row)))
            }
        };
        let size = l.nrows();
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(size, size))
            .ok_or(Error::Conditioning { degree, row: 0 })?;
        Ok(MomentFactor {
            l_inv,
            degree,
            dim: d,
            breakdown,
        })
    }

    /// Highest degree whose Gram block was factored.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// The conditioning error for the failing degree, if factorization stopped early.
    pub fn breakdown(&self) -> Option<Error> {
        self.breakdown
            .map(|(degree, row)| Error::Conditioning { degree, row })
    }

    /// `L_n^{-1}` restricted to the last `r_n` rows of the leading `R_n` block.
    fn tail_rows(&self, n: usize) -> DMatrix<f64> {
        let hi = space_size(self.dim, n);
        let lo = if n == 0 { 0 } else { space_size(self.dim, n - 1) };
        self.l_inv.view((lo, 0), (hi - lo, hi)).into_owned()
    }
}

/// Evaluates the orthonormal basis `L^{-1} Phi` at `points`, blocked by degree.
pub fn orthonormalize(
    basis: &SpanningBasis,
    factor: &MomentFactor,
    points: &DMatrix<f64>,
) -> Result<BasisEvaluation> {
    let r = factor.l_inv.nrows();
    let p = &factor.l_inv * basis.evaluate(points, r)?;
    let d = basis.dim();
    let blocks = (0..=factor.degree())
        .map(|n| {
            let lo = if n == 0 { 0 } else { space_size(d, n - 1) };
            p.rows(lo, space_size(d, n) - lo).into_owned()
        })
        .collect();
    Ok(BasisEvaluation::new(blocks))
}

/// `A_{n+1,i} = L~_n^{-1} G_{n,i} L~_n^{-T}`, `B_{n+1,i} = L~_n^{-1} G~_{n+1,i} L~_{n+1}^{-T}`
/// for `n + 1 <= n_max`.
pub fn extract_recurrence(gram: &GramData, factor: &MomentFactor, n_max: usize) -> Result<RecurrenceData> {
    if n_max > factor.degree() {
        return Err(factor.breakdown().unwrap_or_else(|| {
            Error::domain(format!("degree {n_max} exceeds the Gram degree {}", factor.degree()))
        }));
    }
    let gx = gram
        .gx
        .as_ref()
        .ok_or_else(|| Error::domain("weighted moments were not assembled"))?;
    let d = gram.dim;
    let mut rec = RecurrenceData::new(d);
    for n in 0..n_max {
        let rn = space_size(d, n);
        let rn1 = space_size(d, n + 1);
        let ln = factor.tail_rows(n);
        let ln1 = factor.tail_rows(n + 1);
        let mut a = Vec::with_capacity(d);
        let mut b = Vec::with_capacity(d);
        for gxi in gx {
            let a_raw = &ln * gxi.view((0, 0), (rn, rn)) * ln.transpose();
            a.push((&a_raw + a_raw.transpose()) * 0.5);
            b.push(&ln * gxi.view((0, 0), (rn, rn1)) * ln1.transpose());
        }
        rec.push(DegreeBlock { a, b, lambda: None })?;
    }
    Ok(rec)
}
