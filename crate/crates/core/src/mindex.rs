//! Multi-index bookkeeping for total-degree polynomial spaces.
//!
//! Indices within a degree are stored in degree-graded lexicographic order,
//! descending on the first exponent: for `d = 2` the degree-2 level is
//! `[(2,0), (1,1), (0,2)]`. All positions are zero-based.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Exponent vector of a monomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    /// `self + e_i`.
    pub fn raised(&self, i: usize) -> MultiIndex {
        let mut e = self.0.clone();
        e[i] += 1;
        MultiIndex(e)
    }
}

/// Dimensions of the degree-`n` polynomial spaces in `d` variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// `r_n`, number of monomials of exact degree `n`.
    pub r: u64,
    /// `R_n`, number of monomials of degree at most `n`.
    pub total: u64,
    /// `r_n - r_{n-1}` with `r_{-1} = 0`.
    pub delta: u64,
}

/// Exact binomial coefficient, failing on overflow of `u64`.
pub fn binomial(n: u64, k: u64) -> Result<u64> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 1..=k as u128 {
        // acc * (n - k + j) / j is an integer at every step
        acc = acc
            .checked_mul(n as u128 - k as u128 + j)
            .ok_or_else(|| Error::Overflow(format!("binom({n},{k})")))?
            / j;
        if acc > u64::MAX as u128 {
            return Err(Error::Overflow(format!("binom({n},{k})")));
        }
    }
    Ok(acc as u64)
}

pub fn dims(d: usize, n: usize) -> Result<Dims> {
    if d == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    let (d, n) = (d as u64, n as u64);
    let overflow = || Error::Overflow(format!("dims(d={d}, n={n})"));
    let r = binomial(n.checked_add(d - 1).ok_or_else(overflow)?, n)?;
    let total = binomial(n.checked_add(d).ok_or_else(overflow)?, n)?;
    let prev = if n == 0 { 0 } else { binomial(n - 1 + d - 1, n - 1)? };
    Ok(Dims {
        r,
        total,
        delta: r - prev,
    })
}

/// `r_n` as a `usize`, for sizes already known to be representable.
pub fn level_size(d: usize, n: usize) -> usize {
    dims(d, n).expect("level size overflow").r as usize
}

/// `R_n` as a `usize`.
pub fn space_size(d: usize, n: usize) -> usize {
    dims(d, n).expect("space size overflow").total as usize
}

/// Graded multi-index table `J_0, ..., J_N` with reverse lookup and successor table.
#[derive(Debug, Clone)]
pub struct MultiIndexSet {
    dim: usize,
    max_degree: usize,
    levels: Vec<Vec<MultiIndex>>,
    position: HashMap<MultiIndex, (usize, usize)>,
    // successors[n][k * dim + i] = position of J_n[k] + e_i in J_{n+1}
    successors: Vec<Vec<usize>>,
}

fn push_level(d: usize, n: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if prefix.len() + 1 == d {
        prefix.push(n);
        out.push(MultiIndex(prefix.clone()));
        prefix.pop();
        return;
    }
    for first in (0..=n).rev() {
        prefix.push(first);
        push_level(d, n - first, prefix, out);
        prefix.pop();
    }
}

impl MultiIndexSet {
    pub fn build(d: usize, max_degree: usize) -> Result<Self> {
        // validates d and representability of R_N
        let total = dims(d, max_degree)?.total;
        if total > u32::MAX as u64 {
            return Err(Error::Overflow(format!(
                "index set d={d}, N={max_degree} has {total} entries"
            )));
        }
        let mut levels = Vec::with_capacity(max_degree + 1);
        for n in 0..=max_degree {
            let mut level = Vec::with_capacity(level_size(d, n));
            push_level(d, n as u32, &mut Vec::with_capacity(d), &mut level);
            levels.push(level);
        }
        let mut position = HashMap::with_capacity(total as usize);
        for (n, level) in levels.iter().enumerate() {
            for (k, alpha) in level.iter().enumerate() {
                position.insert(alpha.clone(), (n, k));
            }
        }
        let successors = (0..max_degree)
            .map(|n| {
                levels[n]
                    .iter()
                    .flat_map(|alpha| (0..d).map(|i| position[&alpha.raised(i)].1))
                    .collect()
            })
            .collect();
        Ok(MultiIndexSet {
            dim: d,
            max_degree,
            levels,
            position,
            successors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// `J_n`.
    pub fn level(&self, n: usize) -> &[MultiIndex] {
        &self.levels[n]
    }

    /// `(degree, position within level)` of a stored index.
    pub fn position(&self, alpha: &MultiIndex) -> Option<(usize, usize)> {
        self.position.get(alpha).copied()
    }

    /// Position of `alpha + e_i` within the flattened graded ordering `0..R_N`.
    pub fn flat_position(&self, alpha: &MultiIndex) -> Option<usize> {
        let (n, k) = self.position(alpha)?;
        let offset = if n == 0 { 0 } else { space_size(self.dim, n - 1) };
        Some(offset + k)
    }

    /// Iterates all indices in graded order.
    pub fn iter(&self) -> impl Iterator<Item = &MultiIndex> {
        self.levels.iter().flatten()
    }

    /// Position in `J_{n+1}` of `J_n[k] + e_i`.
    pub fn successor(&self, n: usize, k: usize, i: usize) -> Result<usize> {
        if n >= self.max_degree {
            return Err(Error::domain(format!(
                "successor of degree {n} needs degree {} but set stops at {}",
                n + 1,
                self.max_degree
            )));
        }
        if k >= self.levels[n].len() {
            return Err(Error::domain(format!(
                "position {k} out of range for level {n} of size {}",
                self.levels[n].len()
            )));
        }
        if i >= self.dim {
            return Err(Error::domain(format!(
                "coordinate {i} out of range for dimension {}",
                self.dim
            )));
        }
        Ok(self.successors[n][k * self.dim + i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn idx(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn dims_standard_sizes() {
        assert_eq!(dims(2, 39).unwrap().total, 820);
        assert_eq!(dims(3, 15).unwrap().total, 816);
        for n in 0..50 {
            assert_eq!(dims(2, n).unwrap().delta, 1);
        }
        let d1 = dims(1, 7).unwrap();
        assert_eq!((d1.r, d1.total), (1, 8));
    }

    #[test]
    fn dims_overflow_is_reported() {
        assert!(matches!(dims(200, 200), Err(Error::Overflow(_))));
        assert!(dims(0, 3).is_err());
    }

    #[test]
    fn lex_levels() {
        let set = MultiIndexSet::build(2, 2).unwrap();
        assert_eq!(set.level(0), &[idx(&[0, 0])]);
        assert_eq!(set.level(1), &[idx(&[1, 0]), idx(&[0, 1])]);
        assert_eq!(set.level(2).len(), 3);
        let set3 = MultiIndexSet::build(3, 2).unwrap();
        assert_eq!(set3.level(0), &[idx(&[0, 0, 0])]);
        assert_eq!(
            set3.level(2),
            &[
                idx(&[2, 0, 0]),
                idx(&[1, 1, 0]),
                idx(&[1, 0, 1]),
                idx(&[0, 2, 0]),
                idx(&[0, 1, 1]),
                idx(&[0, 0, 2])
            ]
        );
    }

    #[test]
    fn successor_examples() {
        let set = MultiIndexSet::build(2, 3).unwrap();
        assert_eq!(set.successor(0, 0, 0).unwrap(), 0);
        // (1,0) + e_2 = (1,1), second entry of J_2
        assert_eq!(set.successor(1, 0, 1).unwrap(), 1);
        let set1 = MultiIndexSet::build(1, 5).unwrap();
        for n in 0..5 {
            assert_eq!(set1.successor(n, 0, 0).unwrap(), 0);
        }
        assert!(set.successor(3, 0, 0).is_err());
        assert!(set.successor(1, 2, 0).is_err());
        assert!(set.successor(1, 0, 2).is_err());
    }

    proptest! {
        #[test]
        fn index_set_structure(d in 1usize..5, n_max in 0usize..7) {
            let set = MultiIndexSet::build(d, n_max).unwrap();
            let mut running = 0u64;
            for n in 0..=n_max {
                let dn = dims(d, n).unwrap();
                prop_assert_eq!(set.level(n).len() as u64, dn.r);
                running += dn.r;
                prop_assert_eq!(running, dn.total);
                for (k, alpha) in set.level(n).iter().enumerate() {
                    prop_assert_eq!(alpha.degree(), n);
                    prop_assert_eq!(set.position(alpha), Some((n, k)));
                }
                // strictly descending lexicographic within the level
                for w in set.level(n).windows(2) {
                    prop_assert!(w[0] > w[1]);
                }
            }
            for n in 0..n_max {
                let mut image = HashSet::new();
                for i in 0..d {
                    let mut seen = HashSet::new();
                    for k in 0..set.level(n).len() {
                        let q = set.successor(n, k, i).unwrap();
                        prop_assert_eq!(&set.level(n)[k].raised(i), &set.level(n + 1)[q]);
                        prop_assert!(seen.insert(q), "successor not injective");
                        image.insert(q);
                    }
                }
                prop_assert_eq!(image.len(), set.level(n + 1).len());
            }
        }
    }
}
