//! Recovery of the `V~` blocks: the orthonormality closure for `d = 2` and the
//! kernel/Procrustes closure for `d >= 3`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, null_space, orthogonal_complement_vector, sym_eigen_desc};

/// Eigenvalues of matrices that should be PSD are clamped to zero above `-PSD_CLIP`.
pub const PSD_CLIP: f64 = 1e-10;
/// Singular values below `RANK_TOL * sigma_max` count as zero.
pub const RANK_TOL: f64 = 1e-10;
/// Largest accepted `||W^T W - I||` for the assembled d=3 rotation.
pub const CLOSURE_TOL: f64 = 1e-8;

/// `y` with `y y^T = I - V^^T V^`, taken from the dominant eigenpair.
pub fn close_d2(vhat: &DMatrix<f64>, degree: usize) -> Result<DVector<f64>> {
    let r = vhat.ncols();
    let gap = DMatrix::identity(r, r) - vhat.transpose() * vhat;
    let (vals, vecs) = sym_eigen_desc(&gap);
    let smallest = vals[r - 1];
    if smallest < -PSD_CLIP {
        return Err(Error::Consistency {
            degree,
            detail: format!("I - V^T V has eigenvalue {smallest:e}"),
        });
    }
    Ok(vecs.column(0) * vals[0].max(0.0).sqrt())
}

/// Orthonormal basis `Psi_j` of `ker(B_{n,1} U_j Sigma_j)`, of width `r_n - r_{n-1}`.
pub fn kernel_basis(
    b_n1: &DMatrix<f64>,
    u: &DMatrix<f64>,
    sigma: &DVector<f64>,
    degree: usize,
    coord: usize,
) -> Result<DMatrix<f64>> {
    let k = b_n1 * u * DMatrix::from_diagonal(sigma);
    let rank = k.nrows();
    let (psi, sv) = null_space(&k, rank);
    let hi = sv[0];
    if !(sv[rank - 1] > RANK_TOL * hi) {
        return Err(Error::RankDeficient {
            degree,
            coord: Some(coord),
            detail: format!(
                "kernel of K is wider than expected: singular value {:e} of {:e}",
                sv[rank - 1],
                hi
            ),
        });
    }
    Ok(psi)
}

/// The weight `E_j = (sqrt(D_j), 0)` with `D_j = I - Psi^T V^^T V^ Psi`, kept with
/// the eigen-factors `D_j = X_j Y_j^2 X_j^T`.
#[derive(Debug, Clone)]
pub struct WeightFactor {
    pub e: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

pub fn weight_factor(
    psi: &DMatrix<f64>,
    vhat: &DMatrix<f64>,
    width: usize,
    degree: usize,
) -> Result<WeightFactor> {
    let p = psi.ncols();
    let vp = vhat * psi;
    let dmat = DMatrix::identity(p, p) - vp.transpose() * vp;
    let (vals, x) = sym_eigen_desc(&dmat);
    if vals[p - 1] < -PSD_CLIP {
        return Err(Error::Consistency {
            degree,
            detail: format!("D_j has eigenvalue {:e}", vals[p - 1]),
        });
    }
    let y = vals.map(|v| v.max(0.0).sqrt());
    let root = &x * DMatrix::from_diagonal(&y) * x.transpose();
    let mut e = DMatrix::zeros(p, width);
    e.view_mut((0, 0), (p, p)).copy_from(&root);
    Ok(WeightFactor { e, x, y })
}

/// `H_{ij} = Psi_i^T (Sigma_i^{-1} U_i^T T_ij U_j Sigma_j^{-1} - V^_i^T V^_j) Psi_j`.
pub fn mixed_target(
    psi_i: &DMatrix<f64>,
    psi_j: &DMatrix<f64>,
    scaled_t: &DMatrix<f64>,
    vhat_i: &DMatrix<f64>,
    vhat_j: &DMatrix<f64>,
) -> DMatrix<f64> {
    psi_i.transpose() * (scaled_t - vhat_i.transpose() * vhat_j) * psi_j
}

fn block_diag_one(x: &DMatrix<f64>) -> DMatrix<f64> {
    let p = x.nrows();
    let mut z = DMatrix::identity(p + 1, p + 1);
    z.view_mut((0, 0), (p, p)).copy_from(x);
    z
}

/// Solves `E_2 W_3^T E_3^T = H_23` for orthogonal `W_3` when `E_j` has one more
/// column than rows. Returns `W_3` and the orthogonality defect of the assembled
/// rotation.
pub fn close_d3(f2: &WeightFactor, f3: &WeightFactor, h23: &DMatrix<f64>, degree: usize) -> Result<(DMatrix<f64>, f64)> {
    let p = f2.y.len();
    if f2.e.ncols() != p + 1 || f3.y.len() != p {
        return Err(Error::domain("d=3 closure needs E_j of size p x (p+1)"));
    }
    for f in [f2, f3] {
        if !(f.y[p - 1] > RANK_TOL) {
            return Err(Error::Consistency {
                degree,
                detail: format!("D_j is singular (root {:e})", f.y[p - 1]),
            });
        }
    }
    let inv2 = f2.y.map(|v| 1.0 / v);
    let inv3 = f3.y.map(|v| 1.0 / v);
    let core = DMatrix::from_diagonal(&inv2) * f2.x.transpose() * h23 * &f3.x * DMatrix::from_diagonal(&inv3);

    let mut w = DMatrix::zeros(p + 1, p + 1);
    w.view_mut((0, 0), (p, p)).copy_from(&core);
    // the first p columns are unit vectors, so w w^T = I - C^T C; the rank-one
    // factor fixes every entry of w up to one common sign
    let gap = DMatrix::identity(p, p) - core.transpose() * &core;
    let (vals, vecs) = sym_eigen_desc(&gap);
    let w_row = vecs.column(0) * vals[0].max(0.0).sqrt();
    w.view_mut((p, 0), (1, p)).copy_from(&w_row.transpose());
    let v = orthogonal_complement_vector(&w.columns(0, p).into_owned());
    w.set_column(p, &v);

    let defect = max_abs(&(w.transpose() * &w - DMatrix::identity(p + 1, p + 1)));
    if !(defect <= CLOSURE_TOL) {
        return Err(Error::ClosureFailure { degree, defect });
    }
    // W = Z_2^T W_3^T Z_3, so W_3 = Z_3 W^T Z_2^T
    let w3 = block_diag_one(&f3.x) * w.transpose() * block_diag_one(&f2.x).transpose();
    Ok((w3, defect))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        m.qr().q()
    }

    fn random_weight(p: usize, rng: &mut ChaCha8Rng) -> WeightFactor {
        let x = random_orthogonal(p, rng);
        let y = DVector::from_fn(p, |_, _| rng.random_range(0.3..1.0));
        let root = &x * DMatrix::from_diagonal(&y) * x.transpose();
        let mut e = DMatrix::zeros(p, p + 1);
        e.view_mut((0, 0), (p, p)).copy_from(&root);
        WeightFactor { e, x, y }
    }

    #[test]
    fn d2_closure_recovers_rank_one_gap() {
        // V^ with V^T V^ = I - e1 e1^T
        let vhat = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let y = close_d2(&vhat, 1).unwrap();
        assert_relative_eq!(y, DVector::from_vec(vec![1.0, 0.0]), epsilon = 1e-15);
        let bad = DMatrix::identity(2, 2) * 1.1;
        assert!(matches!(close_d2(&bad, 3), Err(Error::Consistency { degree: 3, .. })));
    }

    #[test]
    fn d2_closure_gives_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = random_orthogonal(5, &mut rng);
        let vhat = q.view((0, 0), (4, 4)).into_owned();
        let y = close_d2(&vhat, 4).unwrap();
        let mut v = DMatrix::zeros(5, 4);
        v.rows_mut(0, 4).copy_from(&vhat);
        v.row_mut(4).copy_from(&y.transpose());
        assert!(max_abs(&(v.transpose() * v - DMatrix::identity(4, 4))) <= 1e-12);
    }

    #[test]
    fn kernel_basis_properties() {
        let b = DMatrix::from_row_slice(1, 3, &[0.5, 0.0, 0.2]);
        let u = DMatrix::identity(3, 3);
        let s = DVector::from_vec(vec![1.0, 0.7, 0.3]);
        let psi = kernel_basis(&b, &u, &s, 2, 1).unwrap();
        assert_eq!(psi.shape(), (3, 2));
        assert!(max_abs(&(&b * &u * DMatrix::from_diagonal(&s) * &psi)) <= 1e-14);
        assert!(max_abs(&(psi.transpose() * &psi - DMatrix::identity(2, 2))) <= 1e-14);
        let zero = DMatrix::zeros(1, 3);
        assert!(kernel_basis(&zero, &u, &s, 2, 1).is_err());
    }

    #[test]
    fn d3_closure_recovers_planted_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in 1..6 {
            let f2 = random_weight(p, &mut rng);
            let f3 = random_weight(p, &mut rng);
            let w3 = random_orthogonal(p + 1, &mut rng);
            let h = &f2.e * w3.transpose() * f3.e.transpose();
            let (got, defect) = close_d3(&f2, &f3, &h, 2).unwrap();
            assert!(defect <= 1e-10);
            assert!(max_abs(&(got.transpose() * &got - DMatrix::identity(p + 1, p + 1))) <= 1e-10);
            let back = &f2.e * got.transpose() * f3.e.transpose();
            assert!(max_abs(&(back - &h)) <= 1e-10, "p = {p}");
        }
    }

    #[test]
    fn d3_closure_rejects_inconsistent_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f2 = random_weight(3, &mut rng);
        let f3 = random_weight(3, &mut rng);
        let h = DMatrix::from_element(3, 3, 2.0);
        assert!(matches!(
            close_d3(&f2, &f3, &h, 5),
            Err(Error::ClosureFailure { degree: 5, .. })
        ));
    }
}
