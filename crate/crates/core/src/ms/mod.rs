//! Multivariate Stieltjes procedure.
//!
//! Degree by degree, `A_{n+1,i}` comes from `S_{n,i} = int x_i p_n p_n^T`, and
//! `B_{n+1,i} = U_i Sigma_i V_i^T` is recovered from the moments
//! `T_{n,i,j} = int p~_i p~_j^T` of `p~_i = x_i p_n - A_{n+1,i} p_n - B_{n,i}^T p_{n-1}`.
//! With `V_1 = (I; 0)`, `T_{n,1,j}` fixes the leading block `V^_j`; the trailing
//! block `V~_j` follows from orthonormality (`d = 2`) or from the commuting
//! conditions (`d >= 3`).

pub mod closure;
pub mod wopp;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::eval_core::{canonicalize_block, StepOperator};
use crate::linalg::{mul_abt, scale_columns, sym_condition_number, sym_eigen_desc, weighted_gram};
use crate::measure::DiscreteMeasure;
use crate::mindex::MultiIndexSet;
use crate::mm::{build_gram, extract_recurrence, MomentFactor, SpanningBasis};
use crate::recurrence::{DegreeBlock, RecurrenceData};

pub use closure::{close_d2, close_d3, kernel_basis, weight_factor, WeightFactor};
pub use wopp::{solve_wopp, WoppOptions, WoppProblem, WoppSolution};

#[derive(Debug, Clone, Default)]
pub struct MsOptions {
    /// Enables the `d > 3` path through the numerical WOPP solver.
    pub experimental_wopp: bool,
    pub wopp: WoppOptions,
}

/// Per-run bookkeeping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MsStats {
    /// Mean over `i` of `cond(T_{n,i,i})`, for `n = 0..=N`.
    pub cond_t: Vec<f64>,
    /// Times the degree-one moment fallback ran.
    pub fallback_count: usize,
    /// Degrees produced by the analytic `d = 3` closure.
    pub closure_degrees: Vec<usize>,
    /// Largest `||W^T W - I||` seen in the `d = 3` closure.
    pub closure_defect: f64,
    /// `(degree, residual)` for each WOPP solve.
    pub wopp_residuals: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct MsOutput {
    pub rec: RecurrenceData,
    pub stats: MsStats,
}

/// `S_{n,i} = int x_i p_n p_n^T`, symmetrized.
pub fn compute_s(p: &DMatrix<f64>, x: &[f64], w: &[f64]) -> DMatrix<f64> {
    let wx: Vec<f64> = w.iter().zip(x).map(|(a, b)| a * b).collect();
    weighted_gram(p, &wx)
}

/// `p~_{n+1,i} = x_i p_n - A_{n+1,i} p_n - B_{n,i}^T p_{n-1}` at the nodes.
pub fn modified_basis(
    p: &DMatrix<f64>,
    p_prev: Option<&DMatrix<f64>>,
    x: &[f64],
    a: &DMatrix<f64>,
    b_prev: Option<&DMatrix<f64>>,
) -> DMatrix<f64> {
    let mut out = scale_columns(p, x);
    out -= a * p;
    if let (Some(pp), Some(b)) = (p_prev, b_prev) {
        out -= b.transpose() * pp;
    }
    out
}

/// `T_{n,i,j} = int p~_i p~_j^T`.
pub fn compute_t(pt_i: &DMatrix<f64>, pt_j: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    mul_abt(&scale_columns(pt_i, w), pt_j)
}

/// `T_ii = U Sigma^2 U^T` with `Sigma` non-increasing.
pub fn factor_symmetric(t: &DMatrix<f64>, degree: usize, coord: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (vals, u) = sym_eigen_desc(t);
    let hi = vals[0];
    let lo = vals[vals.len() - 1];
    let sigma = vals.map(|v| v.max(0.0).sqrt());
    if !(hi > 0.0 && sigma[sigma.len() - 1] > closure::RANK_TOL * sigma[0]) {
        return Err(Error::RankDeficient {
            degree,
            coord: Some(coord),
            detail: format!("T_ii eigenvalues span [{lo:e}, {hi:e}]"),
        });
    }
    Ok((u, sigma))
}

/// `Sigma_i^{-1} U_i^T T_ij U_j Sigma_j^{-1}`.
pub fn scaled_mixed(
    t: &DMatrix<f64>,
    (u_i, s_i): (&DMatrix<f64>, &DVector<f64>),
    (u_j, s_j): (&DMatrix<f64>, &DVector<f64>),
) -> DMatrix<f64> {
    let inv_i = DMatrix::from_diagonal(&s_i.map(|v| 1.0 / v));
    let inv_j = DMatrix::from_diagonal(&s_j.map(|v| 1.0 / v));
    inv_i * u_i.transpose() * t * u_j * inv_j
}

/// `B_{1,i}` from the degree-one monomial Gram matrix.
pub fn fallback_n0(measure: &DiscreteMeasure) -> Result<Vec<DMatrix<f64>>> {
    let set = MultiIndexSet::build(measure.dim(), 1)?;
    let gram = build_gram(&SpanningBasis::monomial(&set), measure, true)?;
    let factor = MomentFactor::new(&gram)?;
    if let Some(err) = factor.breakdown() {
        return Err(err);
    }
    Ok(extract_recurrence(&gram, &factor, 1)?.degree(1).b.clone())
}

/// Assembles `B = U Sigma (V^^T  V~^T)` given `V~^T` (`r_n x dr_{n+1}`).
fn assemble_b(u: &DMatrix<f64>, s: &DVector<f64>, vhat: &DMatrix<f64>, vtilde_t: &DMatrix<f64>) -> DMatrix<f64> {
    let r = vhat.nrows();
    let mut vt = DMatrix::zeros(r, r + vtilde_t.ncols());
    vt.columns_mut(0, r).copy_from(&vhat.transpose());
    vt.columns_mut(r, vtilde_t.ncols()).copy_from(vtilde_t);
    u * DMatrix::from_diagonal(s) * vt
}

/// Per-degree moment data for coordinates `0..d`.
struct DegreeMoments {
    a: Vec<DMatrix<f64>>,
    /// `t[i][j]` for `i <= j`.
    t: Vec<Vec<DMatrix<f64>>>,
}

impl DegreeMoments {
    fn t(&self, i: usize, j: usize) -> DMatrix<f64> {
        if i <= j {
            self.t[i][j - i].clone()
        } else {
            self.t[j][i - j].transpose()
        }
    }
}

fn degree_moments(
    measure: &DiscreteMeasure,
    rec: &RecurrenceData,
    p: &DMatrix<f64>,
    p_prev: Option<&DMatrix<f64>>,
    n: usize,
    mixed: bool,
) -> DegreeMoments {
    let d = measure.dim();
    let w = measure.weights();
    let a: Vec<DMatrix<f64>> = (0..d).map(|i| compute_s(p, measure.coord(i), w)).collect();
    let pt: Vec<DMatrix<f64>> = (0..d)
        .map(|i| {
            let b_prev = (n >= 1).then(|| rec.b(n, i));
            modified_basis(p, p_prev, measure.coord(i), &a[i], b_prev)
        })
        .collect();
    let mut t = Vec::with_capacity(d);
    for i in 0..d {
        let upper = if mixed { d } else { i + 1 };
        let wp = (upper > i + 1).then(|| scale_columns(&pt[i], w));
        let row: Vec<DMatrix<f64>> = (i..upper)
            .map(|j| {
                if i == j {
                    weighted_gram(&pt[i], w)
                } else {
                    mul_abt(wp.as_ref().expect("scaled for j > i"), &pt[j])
                }
            })
            .collect();
        t.push(row);
    }
    DegreeMoments { a, t }
}

/// Runs the procedure through degree `n_max` on the nodes of `measure`.
pub fn ms_run(measure: &DiscreteMeasure, n_max: usize, opts: &MsOptions) -> Result<MsOutput> {
    let d = measure.dim();
    if d < 2 {
        return Err(Error::domain(
            "the multivariate procedure needs d >= 2; use the univariate Stieltjes procedure",
        ));
    }
    if d > 3 && !opts.experimental_wopp {
        return Err(Error::domain(
            "d > 3 relies on the experimental WOPP solver; enable it explicitly",
        ));
    }
    let mut rec = RecurrenceData::new(d);
    let mut stats = MsStats::default();
    let mut p_prev: Option<DMatrix<f64>> = None;
    let mut p = DMatrix::from_element(1, measure.len(), 1.0);

    for n in 0..=n_max {
        let last = n == n_max;
        let moments = degree_moments(measure, &rec, &p, p_prev.as_ref(), n, !last);
        let cond: f64 = (0..d).map(|i| sym_condition_number(&moments.t(i, i))).sum::<f64>() / d as f64;
        stats.cond_t.push(cond);
        if last {
            break;
        }
        let degree = n + 1;
        let factors: Vec<(DMatrix<f64>, DVector<f64>)> = (0..d)
            .map(|i| factor_symmetric(&moments.t(i, i), degree, i))
            .collect::<Result<_>>()?;
        let b = if d > 2 && n == 0 {
            stats.fallback_count += 1;
            fallback_n0(measure)?
        } else {
            stieltjes_b(&rec, &moments, &factors, n, opts, &mut stats)?
        };
        let mut block = DegreeBlock {
            a: moments.a,
            b,
            lambda: None,
        };
        canonicalize_block(&mut block, degree)?;
        rec.push(block)?;
        let op = StepOperator::new(&rec, n)?;
        let next = op.apply(measure.nodes(), &p, p_prev.as_ref());
        p_prev = Some(std::mem::replace(&mut p, next));
    }
    Ok(MsOutput { rec, stats })
}

/// `B_{n+1,i}` from the factored moments for `d = 2`, or `n >= 1` and `d >= 3`.
fn stieltjes_b(
    rec: &RecurrenceData,
    moments: &DegreeMoments,
    factors: &[(DMatrix<f64>, DVector<f64>)],
    n: usize,
    opts: &MsOptions,
    stats: &mut MsStats,
) -> Result<Vec<DMatrix<f64>>> {
    let d = factors.len();
    let degree = n + 1;
    let fac = |i: usize| (&factors[i].0, &factors[i].1);
    let r = factors[0].1.len();
    let vhat: Vec<DMatrix<f64>> = (0..d)
        .map(|j| {
            if j == 0 {
                DMatrix::identity(r, r)
            } else {
                scaled_mixed(&moments.t(0, j), fac(0), fac(j))
            }
        })
        .collect();

    let vtilde_t: Vec<DMatrix<f64>> = if d == 2 {
        let y = close_d2(&vhat[1], degree)?;
        vec![DMatrix::zeros(r, 1), DMatrix::from_column_slice(r, 1, y.as_slice())]
    } else {
        let b_n1 = rec.b(n, 0);
        let width = crate::mindex::level_size(d, n + 1) - r;
        let mut psi = vec![DMatrix::zeros(0, 0)];
        let mut wf: Vec<Option<WeightFactor>> = vec![None];
        for j in 1..d {
            let kernel = kernel_basis(b_n1, &factors[j].0, &factors[j].1, degree, j)?;
            wf.push(Some(weight_factor(&kernel, &vhat[j], width, degree)?));
            psi.push(kernel);
        }
        let target = |i: usize, j: usize| {
            closure::mixed_target(
                &psi[i],
                &psi[j],
                &scaled_mixed(&moments.t(i, j), fac(i), fac(j)),
                &vhat[i],
                &vhat[j],
            )
        };
        let e = |j: usize| &wf[j].as_ref().expect("weights for j >= 1").e;
        let mut out = vec![DMatrix::zeros(r, width)];
        if d == 3 {
            let (w3, defect) = close_d3(
                wf[1].as_ref().expect("weight"),
                wf[2].as_ref().expect("weight"),
                &target(1, 2),
                degree,
            )?;
            stats.closure_degrees.push(degree);
            stats.closure_defect = stats.closure_defect.max(defect);
            out.push(&psi[1] * e(1));
            out.push(&psi[2] * e(2) * w3);
        } else {
            let mut h = Vec::new();
            for i in 1..d {
                for j in i + 1..d {
                    h.push((i - 1, j - 1, target(i, j)));
                }
            }
            let prob = WoppProblem {
                e: (1..d).map(|j| e(j).clone()).collect(),
                h,
            };
            let sol = solve_wopp(&prob, &opts.wopp)?;
            stats.wopp_residuals.push((degree, sol.residual));
            sol.check()?;
            for j in 1..d {
                out.push(&psi[j] * e(j) * &sol.w[j - 1]);
            }
        }
        out
    };

    Ok((0..d)
        .map(|i| assemble_b(&factors[i].0, &factors[i].1, &vhat[i], &vtilde_t[i]))
        .collect())
}
