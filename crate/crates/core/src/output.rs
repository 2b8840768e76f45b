//! Serialization of recurrence data and plot-ready CSV files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diag::CcResidual;
use crate::error::{Error, Result};
use crate::mindex::level_size;
use crate::recurrence::{DegreeBlock, RecurrenceData};

pub const FORMAT_VERSION: u32 = 1;

/// On-disk form: `A[n-1][i]` and `B[n-1][i]` are row-major nested arrays for degree `n`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RecurrenceFile {
    pub format_version: u32,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub ordering: String,
    pub lambda_order: String,
    #[serde(rename = "A")]
    pub a: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(rename = "Lambda", default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<Vec<f64>>>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], shape: (usize, usize), what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(Error::Schema(format!("{what} does not have shape {shape:?}")));
    }
    Ok(DMatrix::from_fn(shape.0, shape.1, |i, j| rows[i][j]))
}

impl RecurrenceFile {
    pub fn from_recurrence(rec: &RecurrenceData) -> Self {
        let blocks = rec.blocks();
        let lambda = blocks
            .iter()
            .map(|b| b.lambda.as_ref().map(|l| l.iter().copied().collect()))
            .collect::<Option<Vec<Vec<f64>>>>();
        RecurrenceFile {
            format_version: FORMAT_VERSION,
            d: rec.dim(),
            n: rec.max_degree(),
            ordering: "graded-lex".into(),
            lambda_order: "non-increasing".into(),
            a: blocks.iter().map(|b| b.a.iter().map(to_rows).collect()).collect(),
            b: blocks.iter().map(|b| b.b.iter().map(to_rows).collect()).collect(),
            lambda: if blocks.is_empty() { None } else { lambda },
        }
    }

    pub fn to_recurrence(&self) -> Result<RecurrenceData> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Schema(format!("unsupported format version {}", self.format_version)));
        }
        if self.a.len() != self.n || self.b.len() != self.n {
            return Err(Error::Schema(format!(
                "declared N = {} but found {} A and {} B degrees",
                self.n,
                self.a.len(),
                self.b.len()
            )));
        }
        if let Some(l) = &self.lambda {
            if l.len() != self.n {
                return Err(Error::Schema("Lambda has the wrong number of degrees".into()));
            }
        }
        let mut rec = RecurrenceData::new(self.d);
        for n in 1..=self.n {
            let (rows, cols) = (level_size(self.d, n - 1), level_size(self.d, n));
            let (a, b) = (&self.a[n - 1], &self.b[n - 1]);
            if a.len() != self.d || b.len() != self.d {
                return Err(Error::Schema(format!("degree {n}: expected {} matrices", self.d)));
            }
            let a = a
                .iter()
                .map(|m| from_rows(m, (rows, rows), &format!("A at degree {n}")))
                .collect::<Result<Vec<_>>>()?;
            let b = b
                .iter()
                .map(|m| from_rows(m, (rows, cols), &format!("B at degree {n}")))
                .collect::<Result<Vec<_>>>()?;
            let lambda = self.lambda.as_ref().map(|l| DVector::from_vec(l[n - 1].clone()));
            rec.push(DegreeBlock { a, b, lambda })?;
        }
        Ok(rec)
    }
}

pub fn serialize_recurrence(rec: &RecurrenceData, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&RecurrenceFile::from_recurrence(rec))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn deserialize_recurrence(path: &Path) -> Result<RecurrenceData> {
    let file: RecurrenceFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    file.to_recurrence()
}

/// Formats a value for CSV, spelling infinities as `inf` / `-inf`.
pub fn csv_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:e}")
    }
}

/// `log10 |E_ij|` as an `R x R` grid without header.
pub fn error_matrix_csv(e: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(e.len() * 12);
    for row in e.row_iter() {
        let line: Vec<String> = row.iter().map(|v| csv_value(v.abs().log10())).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn cond_csv(cond: &[f64]) -> String {
    let mut out = String::from("n,cond\n");
    for (n, c) in cond.iter().enumerate() {
        let _ = writeln!(out, "{n},{}", csv_value(*c));
    }
    out
}

pub fn cc_csv(res: &[CcResidual]) -> String {
    let mut out = String::from("condition,n,i,j,residual\n");
    for r in res {
        let _ = writeln!(out, "{},{},{},{},{}", r.kind, r.n, r.i + 1, r.j + 1, csv_value(r.value));
    }
    out
}

pub fn christoffel_csv(points: &DMatrix<f64>, k: &[f64], lambda: &[f64]) -> String {
    let mut out = String::from("x1,x2,K,lambda\n");
    for (m, (kv, lv)) in k.iter().zip(lambda).enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            csv_value(points[(m, 0)]),
            csv_value(points[(m, 1)]),
            csv_value(*kv),
            csv_value(*lv)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mindex::MultiIndexSet;
    use crate::tensor_oracle::{canonical_permutation, tensor_recurrence};
    use crate::uni_ttr::jacobi_coeffs;

    fn oracle() -> RecurrenceData {
        let set = MultiIndexSet::build(2, 5).unwrap();
        let unis = [jacobi_coeffs(5, 3.80, 7.34).unwrap(), jacobi_coeffs(5, 0.78, 8.26).unwrap()];
        canonical_permutation(&tensor_recurrence(&unis, &set, 5).unwrap()).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let rec = oracle();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.json");
        serialize_recurrence(&rec, &path).unwrap();
        assert_eq!(deserialize_recurrence(&path).unwrap(), rec);
        let text = fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["d"], 2);
        assert_eq!(v["N"], 5);
        assert_eq!(v["ordering"], "graded-lex");
        assert_eq!(v["lambda_order"], "non-increasing");
        assert_eq!(v["format_version"], FORMAT_VERSION);
    }

    #[test]
    fn mismatched_dims_are_rejected() {
        let mut file = RecurrenceFile::from_recurrence(&oracle());
        file.n = 6;
        assert!(matches!(file.to_recurrence(), Err(Error::Schema(_))));
        let mut file = RecurrenceFile::from_recurrence(&oracle());
        file.d = 3;
        assert!(matches!(file.to_recurrence(), Err(Error::Schema(_))));
        let mut file = RecurrenceFile::from_recurrence(&oracle());
        file.b[2][0][0].pop();
        assert!(matches!(file.to_recurrence(), Err(Error::Schema(_))));
    }

    #[test]
    fn csv_shapes_and_literals() {
        let e = DMatrix::from_row_slice(2, 2, &[0.0, 1e-3, 1e-3, 2.0]);
        let text = error_matrix_csv(&e);
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].starts_with("-inf,"));
        assert_eq!(rows[0].split(',').count(), 2);
        let c = cond_csv(&[1.0, f64::INFINITY]);
        assert_eq!(c.lines().count(), 3);
        assert!(c.ends_with("1,inf\n"));
    }
}
