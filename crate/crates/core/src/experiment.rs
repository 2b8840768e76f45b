//! Experiment driver: builds a measure, runs one construction method and
//! collects the diagnostics written by the CLI.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diag::{
    christoffel, commuting_residuals, condition_numbers, gram_error_streamed, max_commuting_residual,
    CcResidual, CondSource, ErrorReport, MomentSource, RecurrenceSource,
};
use crate::error::{Error, Result};
use crate::eval_core::{evaluate, to_canonical};
use crate::linalg::sym_condition_number;
use crate::measure::{
    annulus_measure, parse_point_cloud, spiral_measure, square_minus_ball, tensor_jacobi, torus_measure,
    DiscreteMeasure,
};
use crate::mindex::{space_size, MultiIndexSet};
use crate::mm::{build_gram, extract_recurrence, orthonormalize, MomentFactor, SpanningBasis};
use crate::ms::{ms_run, MsOptions, MsStats, WoppOptions};
use crate::output;
use crate::recurrence::RecurrenceData;
use crate::tensor_oracle::{canonical_permutation, tensor_recurrence};
use crate::uni_ttr::jacobi_coeffs;

/// Synthetic non-convex planar point cloud used when no `--cloud` file is given.
pub const BUNDLED_CLOUD: &str = include_str!("../data/crescent.csv");

pub const JAC2_ALPHA: [f64; 2] = [3.80, 0.78];
pub const JAC2_BETA: [f64; 2] = [7.34, 8.26];
pub const JAC3_ALPHA: [f64; 3] = [1.61, 0.32, 3.01];
pub const JAC3_BETA: [f64; 3] = [-0.89, 9.83, 7.67];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Tensor Jacobi measure on [-1,1]^2
    Jac2,
    /// Tensor Jacobi measure on [-1,1]^3
    Jac3,
    /// Uniform annulus 0.5 <= r <= 1
    Ann,
    /// Region between two Archimedean spirals
    Cur,
    /// Solid torus
    Tor,
    /// Monte Carlo samples of the square minus the unit disk
    Hol,
    /// Equal-weight point cloud from a CSV file
    Cloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Tensor-product oracle (jac2, jac3 only)
    Exact,
    /// Multivariate Stieltjes procedure
    Ms,
    /// Moment method on monomials
    Mm,
    /// Moment method on tensor Legendre polynomials
    Ml,
}

impl Experiment {
    pub fn tag(self) -> &'static str {
        match self {
            Experiment::Jac2 => "jac2",
            Experiment::Jac3 => "jac3",
            Experiment::Ann => "ann",
            Experiment::Cur => "cur",
            Experiment::Tor => "tor",
            Experiment::Hol => "hol",
            Experiment::Cloud => "cloud",
        }
    }

    /// Spatial dimension; clouds report the bundled default.
    pub fn dim(self) -> usize {
        match self {
            Experiment::Jac3 | Experiment::Tor => 3,
            _ => 2,
        }
    }

    pub fn is_tensorial(self) -> bool {
        matches!(self, Experiment::Jac2 | Experiment::Jac3)
    }
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Ms => "ms",
            Method::Mm => "mm",
            Method::Ml => "ml",
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub method: Method,
    #[serde(rename = "N")]
    pub degree: usize,
    /// Gauss points per radial or Jacobi axis.
    pub gauss_points: usize,
    /// Equispaced angles per periodic direction (annulus, torus).
    pub fourier_points: usize,
    /// Midpoint-rule angles along the spiral.
    pub cur_theta: usize,
    pub mc_samples: usize,
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `None` selects the bundled cloud.
    pub cloud_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub experimental_wopp: bool,
    /// Points per axis of the Christoffel grid (2-d only).
    pub christoffel_grid: usize,
}

impl ExperimentConfig {
    /// Defaults for `experiment` at degree `degree` (or the standard degree when `None`).
    pub fn new(experiment: Experiment, method: Method, degree: Option<usize>) -> Self {
        let d = experiment.dim();
        let degree = degree.unwrap_or(if d == 2 { 39 } else { 15 });
        let (alphas, betas) = if d == 2 {
            (JAC2_ALPHA.to_vec(), JAC2_BETA.to_vec())
        } else {
            (JAC3_ALPHA.to_vec(), JAC3_BETA.to_vec())
        };
        ExperimentConfig {
            experiment,
            method,
            degree,
            gauss_points: degree + 2,
            fourier_points: 4 * degree + 5,
            cur_theta: 10_000,
            mc_samples: 1_000_000,
            seed: 0,
            alphas,
            betas,
            cloud_path: None,
            output_dir: PathBuf::from("out"),
            experimental_wopp: false,
            christoffel_grid: 101,
        }
    }

    /// Rejects combinations that cannot run.
    pub fn validate(&self) -> Result<()> {
        if self.method == Method::Exact && !self.experiment.is_tensorial() {
            return Err(Error::domain(format!(
                "the exact method needs a tensor-product measure (jac2, jac3), not {}",
                self.experiment.tag()
            )));
        }
        if self.experiment.is_tensorial() && self.alphas.len() != self.experiment.dim() {
            return Err(Error::domain("alpha and beta vectors must match the dimension"));
        }
        if self.cloud_path.is_some() && self.experiment != Experiment::Cloud {
            return Err(Error::domain("--cloud only applies to the cloud experiment"));
        }
        if self.gauss_points == 0 || self.fourier_points == 0 || self.cur_theta == 0 || self.mc_samples == 0 {
            return Err(Error::domain("quadrature sizes must be positive"));
        }
        Ok(())
    }

    pub fn build_measure(&self) -> Result<DiscreteMeasure> {
        match self.experiment {
            Experiment::Jac2 | Experiment::Jac3 => {
                tensor_jacobi(self.experiment.dim(), self.gauss_points, &self.alphas, &self.betas)
            }
            Experiment::Ann => annulus_measure(self.gauss_points, self.fourier_points),
            Experiment::Cur => spiral_measure(self.gauss_points, self.cur_theta),
            Experiment::Tor => torus_measure(self.gauss_points, self.fourier_points, self.fourier_points),
            Experiment::Hol => square_minus_ball(self.mc_samples, self.seed),
            Experiment::Cloud => match &self.cloud_path {
                Some(p) => parse_point_cloud(&fs::read_to_string(p)?),
                None => parse_point_cloud(BUNDLED_CLOUD),
            },
        }
    }
}

/// Christoffel quantities on a regular grid over the bounding box.
#[derive(Debug, Clone)]
pub struct ChristoffelGrid {
    pub points: DMatrix<f64>,
    pub k: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Everything a run produced. Numerical failures are recorded, not raised,
/// so that partial results can still be written.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub dim: usize,
    /// `R_N` for the requested degree.
    pub n_functions: usize,
    pub n_nodes: usize,
    /// Canonical recurrence through the highest degree reached.
    pub rec: Option<RecurrenceData>,
    pub error: Option<ErrorReport>,
    /// `n = 0..=N`; `+inf` for singular matrices.
    pub cond: Vec<f64>,
    pub cc: Vec<CcResidual>,
    pub christoffel: Option<ChristoffelGrid>,
    /// `int K_N dmu`, equal to `1 + trace(E) / R`.
    pub christoffel_integral: Option<f64>,
    pub ms_stats: Option<MsStats>,
    /// Degree at which the Gram Cholesky factorization broke down.
    pub breakdown_degree: Option<usize>,
    pub failure: Option<Error>,
}

impl ExperimentOutcome {
    pub fn max_error(&self) -> Option<f64> {
        self.error.as_ref().map(|e| e.max_abs)
    }

    pub fn max_cc(&self) -> f64 {
        max_commuting_residual(&self.cc)
    }
}

fn grid_for(measure: &DiscreteMeasure, per_axis: usize) -> DMatrix<f64> {
    let bb = measure.bounding_box();
    let at = |(lo, hi): (f64, f64), k: usize| {
        if per_axis == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (per_axis - 1) as f64
        }
    };
    DMatrix::from_fn(per_axis * per_axis, 2, |row, c| {
        let k = if c == 0 { row / per_axis } else { row % per_axis };
        at(bb[c], k)
    })
}

fn christoffel_integral(report: &ErrorReport) -> f64 {
    1.0 + report.e.trace() / report.e.nrows() as f64
}

/// Per-degree mean of `cond(B_{n+1,i} B_{n+1,i}^T)`, the quantity the Stieltjes
/// procedure factors, read off a recurrence through degree `N + 1`.
fn recurrence_cond(rec: &RecurrenceData, n_max: usize) -> Vec<f64> {
    (0..=n_max)
        .map(|n| {
            let d = rec.dim();
            (0..d)
                .map(|i| {
                    let b = rec.b(n + 1, i);
                    sym_condition_number(&(b * b.transpose()))
                })
                .sum::<f64>()
                / d as f64
        })
        .collect()
}

fn exact_recurrence(cfg: &ExperimentConfig, n_max: usize) -> Result<RecurrenceData> {
    let d = cfg.experiment.dim();
    let set = MultiIndexSet::build(d, n_max)?;
    let unis = (0..d)
        .map(|i| jacobi_coeffs(n_max, cfg.alphas[i], cfg.betas[i]))
        .collect::<Result<Vec<_>>>()?;
    canonical_permutation(&tensor_recurrence(&unis, &set, n_max)?)
}

/// Runs one experiment end to end without touching the file system.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let measure = cfg.build_measure()?;
    let d = measure.dim();
    let n = cfg.degree;
    let mut out = ExperimentOutcome {
        config: cfg.clone(),
        dim: d,
        n_functions: space_size(d, n),
        n_nodes: measure.len(),
        rec: None,
        error: None,
        cond: Vec::new(),
        cc: Vec::new(),
        christoffel: None,
        christoffel_integral: None,
        ms_stats: None,
        breakdown_degree: None,
        failure: None,
    };
    let grid = (d == 2).then(|| grid_for(&measure, cfg.christoffel_grid));

    match cfg.method {
        Method::Exact => {
            let full = exact_recurrence(cfg, n + 1)?;
            out.cond = recurrence_cond(&full, n);
            out.rec = Some(full.truncated(n));
        }
        Method::Ms => {
            let opts = MsOptions {
                experimental_wopp: cfg.experimental_wopp,
                wopp: WoppOptions {
                    seed: cfg.seed,
                    ..WoppOptions::default()
                },
            };
            match ms_run(&measure, n, &opts) {
                Ok(res) => {
                    out.cond = condition_numbers(CondSource::Stieltjes(&res.stats));
                    out.rec = Some(res.rec);
                    out.ms_stats = Some(res.stats);
                }
                Err(e) if e.is_numerical() => {
                    out.failure = Some(e);
                    return Ok(out);
                }
                Err(e) => return Err(e),
            }
        }
        Method::Mm | Method::Ml => {
            let set = MultiIndexSet::build(d, n)?;
            let basis = if cfg.method == Method::Mm {
                SpanningBasis::monomial(&set)
            } else {
                SpanningBasis::legendre_for(&measure, &set)?
            };
            let gram = build_gram(&basis, &measure, true)?;
            out.cond = condition_numbers(CondSource::Gram(&gram));
            let factor = match MomentFactor::new(&gram) {
                Ok(f) => f,
                Err(e) => {
                    out.breakdown_degree = Some(0);
                    out.failure = Some(e);
                    return Ok(out);
                }
            };
            let reached = factor.degree();
            if let Some(e) = factor.breakdown() {
                if let Error::Conditioning { degree, .. } = e {
                    out.breakdown_degree = Some(degree);
                }
                out.failure = Some(e);
            }
            let report = gram_error_streamed(
                &MomentSource {
                    basis: &basis,
                    factor: &factor,
                },
                &measure,
            )?;
            out.christoffel_integral = Some(christoffel_integral(&report));
            out.error = Some(report);
            if let Some(g) = &grid {
                let (k, lambda) = christoffel(&orthonormalize(&basis, &factor, g)?)?;
                out.christoffel = Some(ChristoffelGrid {
                    points: g.clone(),
                    k,
                    lambda,
                });
            }
            let rec = to_canonical(&extract_recurrence(&gram, &factor, reached)?);
            match rec {
                Ok(rec) => {
                    out.cc = commuting_residuals(&rec, reached);
                    out.rec = Some(rec);
                }
                Err(e) if e.is_numerical() => {
                    out.failure.get_or_insert(e);
                }
                Err(e) => return Err(e),
            }
            return Ok(out);
        }
    }

    let rec = out.rec.as_ref().expect("recurrence computed above");
    out.cc = commuting_residuals(rec, n);
    let report = gram_error_streamed(&RecurrenceSource { rec, degree: n }, &measure)?;
    out.christoffel_integral = Some(christoffel_integral(&report));
    out.error = Some(report);
    if let Some(g) = grid {
        match christoffel(&evaluate(rec, &g, n)?) {
            Ok((k, lambda)) => {
                out.christoffel = Some(ChristoffelGrid { points: g, k, lambda })
            }
            Err(e) => {
                out.failure.get_or_insert(e);
            }
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct Summary<'a> {
    status: &'a str,
    failure: Option<String>,
    d: usize,
    #[serde(rename = "R_N")]
    n_functions: usize,
    nodes: usize,
    max_abs_error: Option<f64>,
    max_cc_residual: f64,
    christoffel_integral: Option<f64>,
    breakdown_degree: Option<usize>,
    degree_reached: Option<usize>,
    fallback_count: Option<usize>,
    closure_degrees: Option<&'a [usize]>,
    closure_defect: Option<f64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    outputs: Vec<&'a str>,
    summary: Summary<'a>,
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::write(dir.join(name), text)?;
    Ok(())
}

/// Writes every available artifact into `cfg.output_dir` and returns the file names.
pub fn write_outputs(outcome: &ExperimentOutcome) -> Result<Vec<&'static str>> {
    let dir = &outcome.config.output_dir;
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    if let Some(rec) = &outcome.rec {
        output::serialize_recurrence(rec, &dir.join("recurrence.json"))?;
        files.push("recurrence.json");
    }
    if let Some(rep) = &outcome.error {
        write(dir, "error_matrix.csv", &output::error_matrix_csv(&rep.e))?;
        files.push("error_matrix.csv");
    }
    if !outcome.cond.is_empty() {
        write(dir, "cond.csv", &output::cond_csv(&outcome.cond))?;
        files.push("cond.csv");
    }
    if outcome.rec.is_some() {
        write(dir, "cc_residuals.csv", &output::cc_csv(&outcome.cc))?;
        files.push("cc_residuals.csv");
    }
    if let Some(c) = &outcome.christoffel {
        write(dir, "christoffel.csv", &output::christoffel_csv(&c.points, &c.k, &c.lambda))?;
        files.push("christoffel.csv");
    }
    let stats = outcome.ms_stats.as_ref();
    let manifest = Manifest {
        config: &outcome.config,
        outputs: files.clone(),
        summary: Summary {
            status: if outcome.failure.is_some() { "numerical-failure" } else { "ok" },
            failure: outcome.failure.as_ref().map(|e| e.to_string()),
            d: outcome.dim,
            n_functions: outcome.n_functions,
            nodes: outcome.n_nodes,
            max_abs_error: outcome.max_error(),
            max_cc_residual: outcome.max_cc(),
            christoffel_integral: outcome.christoffel_integral,
            breakdown_degree: outcome.breakdown_degree,
            degree_reached: outcome.rec.as_ref().map(|r| r.max_degree()),
            fallback_count: stats.map(|s| s.fallback_count),
            closure_degrees: stats.map(|s| s.closure_degrees.as_slice()),
            closure_defect: stats.map(|s| s.closure_defect),
        },
    };
    write(dir, "manifest.json", &serde_json::to_string_pretty(&manifest)?)?;
    files.push("manifest.json");
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(exp: Experiment, method: Method, n: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(exp, method, Some(n));
        cfg.cur_theta = 400;
        cfg.mc_samples = 5_000;
        cfg.christoffel_grid = 5;
        cfg
    }

    #[test]
    fn defaults_follow_dimension() {
        let c2 = ExperimentConfig::new(Experiment::Ann, Method::Ms, None);
        assert_eq!((c2.degree, c2.gauss_points, c2.fourier_points), (39, 41, 161));
        let c3 = ExperimentConfig::new(Experiment::Tor, Method::Ms, None);
        assert_eq!(c3.degree, 15);
        assert_eq!(c3.alphas, JAC3_ALPHA.to_vec());
    }

    #[test]
    fn exact_needs_tensor_measure() {
        let cfg = ExperimentConfig::new(Experiment::Ann, Method::Exact, Some(3));
        assert!(matches!(run_experiment(&cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn exact_jac2_is_orthonormal() {
        let out = run_experiment(&small(Experiment::Jac2, Method::Exact, 8)).unwrap();
        assert!(out.failure.is_none());
        assert!(out.max_error().unwrap() <= 1e-12);
        assert_eq!(out.cond.len(), 9);
        assert_eq!(out.n_functions, 45);
        assert!(out.christoffel.is_some());
        assert!((out.christoffel_integral.unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn methods_agree_at_low_degree() {
        for exp in [Experiment::Ann, Experiment::Cur, Experiment::Hol, Experiment::Cloud] {
            for m in [Method::Ms, Method::Mm, Method::Ml] {
                let out = run_experiment(&small(exp, m, 4)).unwrap();
                assert!(out.failure.is_none(), "{exp:?} {m:?}: {:?}", out.failure);
                assert!(out.max_error().unwrap() <= 1e-9, "{exp:?} {m:?}");
                assert_eq!(out.cond.len(), 5);
            }
        }
    }

    #[test]
    fn torus_runs_in_three_dimensions() {
        let out = run_experiment(&small(Experiment::Tor, Method::Ms, 3)).unwrap();
        assert!(out.failure.is_none(), "{:?}", out.failure);
        assert!(out.christoffel.is_none());
        assert_eq!(out.ms_stats.as_ref().unwrap().fallback_count, 1);
        assert!(out.max_error().unwrap() <= 1e-10);
    }

    #[test]
    fn outputs_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Experiment::Jac2, Method::Ms, 5);
        cfg.output_dir = dir.path().to_path_buf();
        let files = write_outputs(&run_experiment(&cfg).unwrap()).unwrap();
        for f in ["manifest.json", "recurrence.json", "error_matrix.csv", "cond.csv", "cc_residuals.csv", "christoffel.csv"] {
            assert!(files.contains(&f));
            assert!(dir.path().join(f).exists());
        }
        let e = fs::read_to_string(dir.path().join("error_matrix.csv")).unwrap();
        assert_eq!(e.lines().count(), 21);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["config"]["experiment"], "jac2");
        assert_eq!(manifest["config"]["N"], 5);
    }
}
