//! Discrete measures realizing the moment functional `<f, g> = sum_m w_m f(x_m) g(x_m)`.
//!
//! Every constructor returns a unit-mass measure, so the degree-0 orthonormal
//! polynomial is the constant 1.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::mindex::{space_size, MultiIndexSet};
use crate::uni_ttr::jacobi_coeffs;

/// Gauss points per axis needed to integrate all products arising at max degree `n`.
pub fn gauss_points_for_degree(n: usize) -> usize {
    n + 2
}

/// Equispaced angular points needed at max degree `n`.
pub fn fourier_points_for_degree(n: usize) -> usize {
    4 * n + 5
}

/// Point set with positive weights in `R^d`.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    // M x d, one node per row so each coordinate column is contiguous
    nodes: DMatrix<f64>,
    weights: Vec<f64>,
    label: String,
}

impl DiscreteMeasure {
    /// Validates and normalizes to unit mass.
    pub fn new(nodes: DMatrix<f64>, weights: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if nodes.nrows() != weights.len() {
            return Err(Error::domain(format!(
                "{} nodes but {} weights",
                nodes.nrows(),
                weights.len()
            )));
        }
        if nodes.nrows() == 0 || nodes.ncols() == 0 {
            return Err(Error::domain("measure needs at least one node in d >= 1"));
        }
        if nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite node coordinate"));
        }
        if let Some(k) = weights.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::domain(format!("weight {k} is not positive and finite")));
        }
        let mass: f64 = weights.iter().sum();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::domain("total mass must be positive and finite"));
        }
        let weights = weights.into_iter().map(|w| w / mass).collect();
        Ok(DiscreteMeasure {
            nodes,
            weights,
            label: label.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.nodes.ncols()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Node matrix, one row per node.
    pub fn nodes(&self) -> &DMatrix<f64> {
        &self.nodes
    }

    /// Coordinate `i` of every node.
    pub fn coord(&self, i: usize) -> &[f64] {
        let m = self.len();
        &self.nodes.as_slice()[i * m..(i + 1) * m]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Tightest axis-aligned box containing the nodes.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        (0..self.dim())
            .map(|i| {
                self.coord(i)
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                        (lo.min(x), hi.max(x))
                    })
            })
            .collect()
    }

    /// Rows `start..start+len` as a standalone node matrix.
    pub fn node_rows(&self, start: usize, len: usize) -> DMatrix<f64> {
        self.nodes.rows(start, len).into_owned()
    }

    /// `sum_m w_m f_m g_m`.
    pub fn moment(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        if f.len() != self.len() || g.len() != self.len() {
            return Err(Error::domain(format!(
                "value arrays of length {} and {} for a measure with {} nodes",
                f.len(),
                g.len(),
                self.len()
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(f)
            .zip(g)
            .map(|((w, a), b)| w * a * b)
            .sum())
    }

    /// Checks `<x^a, x^a> > 0` for all `|a| <= max_degree` and that the support
    /// has enough points to carry `R_{max_degree}` independent polynomials.
    pub fn check_nondegenerate(&self, max_degree: usize) -> Result<()> {
        let needed = space_size(self.dim(), max_degree);
        if self.len() < needed {
            return Err(Error::Degenerate {
                degree: max_degree,
                detail: format!("{} nodes cannot support {needed} polynomials", self.len()),
            });
        }
        let set = MultiIndexSet::build(self.dim(), max_degree)?;
        for alpha in set.iter() {
            let norm: f64 = (0..self.len())
                .map(|m| {
                    let v: f64 = alpha
                        .entries()
                        .iter()
                        .enumerate()
                        .map(|(i, &e)| self.nodes[(m, i)].powi(e as i32))
                        .product();
                    self.weights[m] * v * v
                })
                .sum();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::Degenerate {
                    degree: alpha.degree(),
                    detail: format!("monomial {:?} has norm {norm:e}", alpha.entries()),
                });
            }
        }
        Ok(())
    }
}

/// Gauss-Jacobi rule on `[-1, 1]` for the probability measure proportional to
/// `(1-x)^alpha (1+x)^beta`, via the Golub-Welsch eigenproblem. Nodes ascend.
pub fn gauss_jacobi_1d(n_points: usize, alpha: f64, beta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n_points == 0 {
        return Err(Error::domain("a quadrature rule needs at least one point"));
    }
    let rec = jacobi_coeffs(n_points, alpha, beta)?;
    let (vals, vecs) = sym_eigen_desc(&rec.jacobi_matrix(n_points));
    let mut pairs: Vec<(f64, f64)> = (0..n_points)
        .map(|k| (vals[k], vecs[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mass: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(pairs.into_iter().map(|(x, w)| (x, w / mass)).unzip())
}

/// Gauss-Legendre rule mapped to `[lo, hi]`, weights summing to one.
fn gauss_legendre_on(n: usize, lo: f64, hi: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let (t, w) = gauss_jacobi_1d(n, 0.0, 0.0)?;
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    Ok((t.into_iter().map(|t| mid + half * t).collect(), w))
}

/// Tensor-product Gauss-Jacobi measure on `[-1, 1]^d`; the last axis varies fastest.
pub fn tensor_jacobi(
    d: usize,
    n_points: usize,
    alphas: &[f64],
    betas: &[f64],
) -> Result<DiscreteMeasure> {
    if alphas.len() != d || betas.len() != d {
        return Err(Error::domain(format!(
            "need {d} alpha and beta parameters, got {} and {}",
            alphas.len(),
            betas.len()
        )));
    }
    let rules = alphas
        .iter()
        .zip(betas)
        .map(|(&a, &b)| gauss_jacobi_1d(n_points, a, b))
        .collect::<Result<Vec<_>>>()?;
    let m = n_points.pow(d as u32);
    let mut nodes = DMatrix::zeros(m, d);
    let mut weights = vec![1.0; m];
    for row in 0..m {
        let mut rest = row;
        for axis in (0..d).rev() {
            let k = rest % n_points;
            rest /= n_points;
            nodes[(row, axis)] = rules[axis].0[k];
            weights[row] *= rules[axis].1[k];
        }
    }
    DiscreteMeasure::new(nodes, weights, format!("jacobi-d{d}"))
}

/// Uniform measure on the annulus `0.5 <= r <= 1`: Gauss-Legendre in `r`,
/// equispaced angles in `theta`, polar Jacobian folded into the weights.
pub fn annulus_measure(n_r: usize, n_theta: usize) -> Result<DiscreteMeasure> {
    if n_theta == 0 {
        return Err(Error::domain("annulus needs at least one angle"));
    }
    let (rs, rw) = gauss_legendre_on(n_r, 0.5, 1.0)?;
    let mut nodes = DMatrix::zeros(n_r * n_theta, 2);
    let mut weights = Vec::with_capacity(n_r * n_theta);
    for k in 0..n_theta {
        let theta = 2.0 * PI * k as f64 / n_theta as f64;
        let (s, c) = theta.sin_cos();
        for (j, (&r, &w)) in rs.iter().zip(&rw).enumerate() {
            let row = k * n_r + j;
            nodes[(row, 0)] = r * c;
            nodes[(row, 1)] = r * s;
            weights.push(w * r);
        }
    }
    DiscreteMeasure::new(nodes, weights, "annulus")
}

/// Uniform measure between the Archimedean spirals `r = 0.8 theta` and
/// `r = theta` for `theta in (0, 6 pi)`. The radial integral is Gauss-exact
/// per angle; the angular rule is an equispaced midpoint rule.
pub fn spiral_measure(n_r: usize, n_theta: usize) -> Result<DiscreteMeasure> {
    if n_theta == 0 {
        return Err(Error::domain("spiral needs at least one angle"));
    }
    let (t, tw) = gauss_jacobi_1d(n_r, 0.0, 0.0)?;
    let span = 6.0 * PI;
    let h = span / n_theta as f64;
    let mut nodes = DMatrix::zeros(n_r * n_theta, 2);
    let mut weights = Vec::with_capacity(n_r * n_theta);
    for k in 0..n_theta {
        let theta = (k as f64 + 0.5) * h;
        let (s, c) = theta.sin_cos();
        let (lo, hi) = (0.8 * theta, theta);
        for (j, (&tj, &wj)) in t.iter().zip(&tw).enumerate() {
            let r = 0.5 * (lo + hi) + 0.5 * (hi - lo) * tj;
            let row = k * n_r + j;
            nodes[(row, 0)] = r * c;
            nodes[(row, 1)] = r * s;
            weights.push(h * (hi - lo) * wj * r);
        }
    }
    DiscreteMeasure::new(nodes, weights, "spiral")
}

/// Major radius of the solid torus.
pub const TORUS_MAJOR: f64 = 2.0;
/// Minor radius of the solid torus.
pub const TORUS_MINOR: f64 = 1.0;

/// Uniform measure on the solid torus `(sqrt(x1^2 + x2^2) - 2)^2 + x3^2 < 1`.
/// Gauss-Legendre in the tube radius, equispaced in both angles.
pub fn torus_measure(n_r: usize, n_theta: usize, n_phi: usize) -> Result<DiscreteMeasure> {
    if n_theta == 0 || n_phi == 0 {
        return Err(Error::domain("torus needs at least one angle per direction"));
    }
    let (rhos, rw) = gauss_legendre_on(n_r, 0.0, TORUS_MINOR)?;
    let m = n_r * n_theta * n_phi;
    let mut nodes = DMatrix::zeros(m, 3);
    let mut weights = Vec::with_capacity(m);
    let mut row = 0;
    for kp in 0..n_phi {
        let (sp, cp) = (2.0 * PI * kp as f64 / n_phi as f64).sin_cos();
        for kt in 0..n_theta {
            let (st, ct) = (2.0 * PI * kt as f64 / n_theta as f64).sin_cos();
            for (&rho, &w) in rhos.iter().zip(&rw) {
                let ring = TORUS_MAJOR + rho * ct;
                nodes[(row, 0)] = ring * cp;
                nodes[(row, 1)] = ring * sp;
                nodes[(row, 2)] = rho * st;
                weights.push(w * rho * ring);
                row += 1;
            }
        }
    }
    DiscreteMeasure::new(nodes, weights, "torus")
}

/// `m` iid uniform samples on `[-1,1]^2` outside the open unit disk, by
/// rejection; equal weights `1/m`.
pub fn square_minus_ball(m: usize, seed: u64) -> Result<DiscreteMeasure> {
    if m == 0 {
        return Err(Error::domain("need at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = DMatrix::zeros(m, 2);
    let mut filled = 0;
    while filled < m {
        let x: f64 = rng.random_range(-1.0..1.0);
        let y: f64 = rng.random_range(-1.0..1.0);
        if x * x + y * y >= 1.0 {
            nodes[(filled, 0)] = x;
            nodes[(filled, 1)] = y;
            filled += 1;
        }
    }
    DiscreteMeasure::new(nodes, vec![1.0; m], "square-minus-ball")
}

/// Equal-weight measure from a CSV point file (`x1,x2[,x3]` per line, optional header).
pub fn point_cloud_measure(path: impl AsRef<Path>) -> Result<DiscreteMeasure> {
    let text = fs::read_to_string(path.as_ref())?;
    parse_point_cloud(&text)
}

pub fn parse_point_cloud(text: &str) -> Result<DiscreteMeasure> {
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut seen_content = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let first = !seen_content;
        seen_content = true;
        let values = match parsed {
            Ok(v) => v,
            Err(_) if first => continue, // header row
            Err(e) => {
                return Err(Error::Ingest {
                    line: line_no,
                    detail: format!("cannot parse '{line}': {e}"),
                })
            }
        };
        if !(2..=3).contains(&values.len()) {
            return Err(Error::Ingest {
                line: line_no,
                detail: format!("expected 2 or 3 coordinates, found {}", values.len()),
            });
        }
        if let Some(first_pt) = points.first() {
            if first_pt.len() != values.len() {
                return Err(Error::Ingest {
                    line: line_no,
                    detail: format!(
                        "dimension {} differs from earlier points ({})",
                        values.len(),
                        first_pt.len()
                    ),
                });
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Ingest {
                line: line_no,
                detail: "non-finite coordinate".into(),
            });
        }
        points.push(values);
    }
    if points.is_empty() {
        return Err(Error::Ingest {
            line: 0,
            detail: "no points in file".into(),
        });
    }
    let d = points[0].len();
    let nodes = DMatrix::from_fn(points.len(), d, |m, i| points[m][i]);
    let m = points.len();
    DiscreteMeasure::new(nodes, vec![1.0; m], "point-cloud")
}
