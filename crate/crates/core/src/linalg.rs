//! Dense linear-algebra helpers shared by the recurrence algorithms.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

/// `a * b^T` through a strided GEMM, without materializing the transpose.
pub fn mul_abt(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.ncols(), "mul_abt: inner dimensions differ");
    let (m, k, n) = (a.nrows(), a.ncols(), b.nrows());
    let mut c = DMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // column-major: element (i, j) of a lives at i + j * m
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            1,
            m as isize,
        );
    }
    c
}

const GRAM_BLOCK: usize = 128;

/// `a diag(w) a^T`, exactly symmetric; only the lower block triangle is multiplied.
pub fn weighted_gram(a: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let (r, k) = a.shape();
    let wa = scale_columns(a, w);
    let mut c = DMatrix::zeros(r, r);
    if r == 0 || k == 0 {
        return c;
    }
    for i0 in (0..r).step_by(GRAM_BLOCK) {
        let bi = GRAM_BLOCK.min(r - i0);
        for j0 in (0..=i0).step_by(GRAM_BLOCK) {
            let bj = GRAM_BLOCK.min(r - j0);
            // rows i0.. of wa against rows j0.. of a, written into c[i0.., j0..]
            unsafe {
                matrixmultiply::dgemm(
                    bi,
                    k,
                    bj,
                    1.0,
                    wa.as_ptr().add(i0),
                    1,
                    r as isize,
                    a.as_ptr().add(j0),
                    r as isize,
                    1,
                    0.0,
                    c.as_mut_ptr().add(i0 + j0 * r),
                    1,
                    r as isize,
                );
            }
        }
    }
    for j in 0..r {
        for i in 0..j {
            c[(i, j)] = c[(j, i)];
        }
    }
    c
}

/// Copy of `a` with column `k` scaled by `s[k]`.
pub fn scale_columns(a: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    assert_eq!(a.ncols(), s.len());
    let mut out = a.clone();
    for (mut col, &sk) in out.column_iter_mut().zip(s) {
        col *= sk;
    }
    out
}

/// `a diag(w) b^T`: the discrete inner-product matrix of two sets of sampled functions.
pub fn weighted_cross(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    mul_abt(&scale_columns(a, w), b)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Flip the vector so that its largest-magnitude entry (lowest index on ties) is positive.
pub fn fix_sign(mut v: nalgebra::DVectorViewMut<'_, f64>) {
    let mut best = 0;
    for k in 1..v.len() {
        if v[k].abs() > v[best].abs() {
            best = k;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Symmetric eigendecomposition with eigenvalues in non-increasing order and
/// sign-fixed eigenvectors (columns).
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
        fix_sign(vectors.column_mut(dst));
    }
    (values, vectors)
}

/// Positive semi-definite square root of a symmetric matrix. Eigenvalues in
/// `[-clip, 0)` are treated as roundoff and clamped; anything more negative is
/// returned as `Err(smallest eigenvalue)`.
pub fn psd_sqrt(m: &DMatrix<f64>, clip: f64) -> Result<DMatrix<f64>, f64> {
    let (vals, vecs) = sym_eigen_desc(m);
    let smallest = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if smallest < -clip {
        return Err(smallest);
    }
    let roots = vals.map(|v| v.max(0.0).sqrt());
    Ok(&vecs * DMatrix::from_diagonal(&roots) * vecs.transpose())
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    SVD::new(m.clone(), false, false).singular_values
}

/// 2-norm condition number; `+inf` when the matrix is singular to working precision.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let s = singular_values(m);
    let (hi, lo) = (s[0], s[s.len() - 1]);
    if !hi.is_finite() {
        return f64::INFINITY;
    }
    if lo <= hi * f64::EPSILON {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Condition number of a symmetric matrix from its eigenvalue magnitudes.
pub fn sym_condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mags: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    let hi = mags.iter().copied().fold(0.0, f64::max);
    let lo = mags.iter().copied().fold(f64::INFINITY, f64::min);
    if lo <= hi * f64::EPSILON {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Orthonormal basis (as columns) of the null space of `m`, together with the
/// full list of singular values (padded with zeros to `m.ncols()` entries).
pub fn null_space(m: &DMatrix<f64>, rank: usize) -> (DMatrix<f64>, DVector<f64>) {
    let c = m.ncols();
    // pad to at least square so the SVD yields a complete right basis
    let rows = m.nrows().max(c);
    let mut padded = DMatrix::zeros(rows, c);
    padded.view_mut((0, 0), (m.nrows(), c)).copy_from(m);
    let svd = SVD::new(padded, false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let mut basis = vt.rows(rank, c - rank).transpose();
    for k in 0..basis.ncols() {
        fix_sign(basis.column_mut(k));
    }
    (basis, svd.singular_values)
}

/// Unit vector orthogonal to the columns of `m` (which must have one fewer column than rows).
pub fn orthogonal_complement_vector(m: &DMatrix<f64>) -> DVector<f64> {
    let (basis, _) = null_space(&m.transpose(), m.ncols());
    basis.column(0).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weighted_gram_matches_general_product() {
        for r in [1, 5, 128, 129, 300] {
            let a = DMatrix::from_fn(r, 37, |i, j| ((i * 7 + j * 3) as f64).sin());
            let w: Vec<f64> = (0..37).map(|j| 0.1 + j as f64 * 0.01).collect();
            let g = weighted_gram(&a, &w);
            assert_relative_eq!(g, weighted_cross(&a, &a, &w), epsilon = 1e-12);
            assert_eq!(g, g.transpose());
        }
    }

    #[test]
    fn mul_abt_matches_naive() {
        let a = DMatrix::from_fn(7, 9, |i, j| (i as f64 + 1.0) * 0.3 - j as f64 * 0.11);
        let b = DMatrix::from_fn(8, 9, |i, j| ((i * j) as f64).sin());
        let c = mul_abt(&a, &b);
        assert_relative_eq!(c, &a * b.transpose(), epsilon = 1e-12);
    }

    #[test]
    fn eigen_order_and_signs() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0]);
        let (vals, vecs) = sym_eigen_desc(&m);
        assert_relative_eq!(vals[0], 5.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 3.0, epsilon = 1e-12);
        assert_relative_eq!(vals[2], 1.0, epsilon = 1e-12);
        let recon = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert_relative_eq!(recon, m, epsilon = 1e-12);
        for k in 0..3 {
            let col = vecs.column(k);
            let imax = col.iamax();
            assert!(col[imax] > 0.0);
        }
    }

    #[test]
    fn psd_sqrt_clamps_roundoff() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-14]);
        let s = psd_sqrt(&m, 1e-10).unwrap();
        assert_relative_eq!(s[(0, 0)], 1.0, epsilon = 1e-14);
        assert_eq!(s[(1, 1)], 0.0);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-3]);
        assert!(psd_sqrt(&bad, 1e-10).is_err());
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let k = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let (basis, _) = null_space(&k, 1);
        assert_eq!(basis.shape(), (3, 2));
        assert!(max_abs(&(&k * &basis)) < 1e-14);
        assert_relative_eq!(basis.transpose() * &basis, DMatrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn conditioning() {
        assert_relative_eq!(condition_number(&DMatrix::identity(4, 4)), 1.0);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(condition_number(&sing).is_infinite());
        assert!(sym_condition_number(&sing).is_infinite());
    }
}
