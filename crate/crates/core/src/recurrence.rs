//! Recurrence matrices of the vector three-term relation
//! `x_i p_n = B_{n+1,i} p_{n+1} + A_{n+1,i} p_n + B_{n,i}^T p_{n-1}`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, singular_values};
use crate::mindex::level_size;

/// Matrices `A_{n,i}` (`r_{n-1} x r_{n-1}`) and `B_{n,i}` (`r_{n-1} x r_n`) for one degree `n >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeBlock {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    /// Diagonal of `sum_i B_{n,i}^T B_{n,i}` when the block is in canonical form.
    pub lambda: Option<DVector<f64>>,
}

impl DegreeBlock {
    /// `B_n^T B_n = sum_i B_{n,i}^T B_{n,i}`.
    pub fn btb(&self) -> DMatrix<f64> {
        let cols = self.b[0].ncols();
        self.b
            .iter()
            .fold(DMatrix::zeros(cols, cols), |acc, b| acc + b.transpose() * b)
    }
}

/// Recurrence data for degrees `1..=N` in `d` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceData {
    dim: usize,
    // blocks[n - 1] holds degree n
    blocks: Vec<DegreeBlock>,
}

impl RecurrenceData {
    pub fn new(dim: usize) -> Self {
        RecurrenceData {
            dim,
            blocks: Vec::new(),
        }
    }

    /// Checks shapes against `r_{n-1}`, `r_n` and appends degree `N + 1`.
    pub fn push(&mut self, block: DegreeBlock) -> Result<()> {
        let n = self.blocks.len() + 1;
        let (rows, cols) = (level_size(self.dim, n - 1), level_size(self.dim, n));
        if block.a.len() != self.dim || block.b.len() != self.dim {
            return Err(Error::Schema(format!(
                "degree {n}: expected {} A and B matrices, got {} and {}",
                self.dim,
                block.a.len(),
                block.b.len()
            )));
        }
        for (i, (a, b)) in block.a.iter().zip(&block.b).enumerate() {
            if a.shape() != (rows, rows) || b.shape() != (rows, cols) {
                return Err(Error::Schema(format!(
                    "degree {n}, coordinate {}: A is {:?} and B is {:?}, expected {:?} and {:?}",
                    i + 1,
                    a.shape(),
                    b.shape(),
                    (rows, rows),
                    (rows, cols)
                )));
            }
        }
        if let Some(l) = &block.lambda {
            if l.len() != cols {
                return Err(Error::Schema(format!(
                    "degree {n}: Lambda has {} entries, expected {cols}",
                    l.len()
                )));
            }
        }
        self.blocks.push(block);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> usize {
        self.blocks.len()
    }

    /// Block for degree `n` (`1 <= n <= N`).
    pub fn degree(&self, n: usize) -> &DegreeBlock {
        &self.blocks[n - 1]
    }

    pub fn degree_mut(&mut self, n: usize) -> &mut DegreeBlock {
        &mut self.blocks[n - 1]
    }

    pub fn blocks(&self) -> &[DegreeBlock] {
        &self.blocks
    }

    pub fn a(&self, n: usize, i: usize) -> &DMatrix<f64> {
        &self.blocks[n - 1].a[i]
    }

    pub fn b(&self, n: usize, i: usize) -> &DMatrix<f64> {
        &self.blocks[n - 1].b[i]
    }

    pub fn is_canonical(&self) -> bool {
        self.blocks.iter().all(|b| b.lambda.is_some())
    }

    pub fn truncated(&self, n_max: usize) -> RecurrenceData {
        RecurrenceData {
            dim: self.dim,
            blocks: self.blocks[..n_max.min(self.blocks.len())].to_vec(),
        }
    }

    /// Largest `|A - A^T|` entry over all stored degrees.
    pub fn symmetry_defect(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|blk| blk.a.iter())
            .map(|a| max_abs(&(a - a.transpose())))
            .fold(0.0, f64::max)
    }

    /// Smallest `sigma_min / sigma_max` over every `B_{n,i}` and stacked `B_n`.
    pub fn min_rank_ratio(&self) -> f64 {
        let ratio = |m: &DMatrix<f64>| {
            let s = singular_values(m);
            let hi = s.iter().copied().fold(0.0, f64::max);
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            if hi > 0.0 {
                lo / hi
            } else {
                0.0
            }
        };
        let mut worst = f64::INFINITY;
        for blk in &self.blocks {
            for b in &blk.b {
                worst = worst.min(ratio(b));
            }
            let rows = blk.b[0].nrows();
            let cols = blk.b[0].ncols();
            let mut stacked = DMatrix::zeros(rows * self.dim, cols);
            for (i, b) in blk.b.iter().enumerate() {
                stacked.view_mut((i * rows, 0), (rows, cols)).copy_from(b);
            }
            worst = worst.min(ratio(&stacked));
        }
        worst
    }

    /// Eigenvalues of `B_n^T B_n` for every degree, sorted non-increasing.
    /// Basis-independent, so comparable across algorithms.
    pub fn spectra(&self) -> Vec<DVector<f64>> {
        self.blocks
            .iter()
            .map(|blk| {
                let mut v: Vec<f64> = nalgebra::SymmetricEigen::new(blk.btb())
                    .eigenvalues
                    .iter()
                    .copied()
                    .collect();
                v.sort_by(|a, b| b.total_cmp(a));
                DVector::from_vec(v)
            })
            .collect()
    }
}
