//! Sparse vectors, datasets, and the dot-product kernels every backend shares.
//!
//! Term ids are 1-based throughout the public surface: a vector over `D`
//! features uses ids in `1..=D`, and a dense row of length `D` stores term
//! `t` at index `t - 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms this close to one are treated as already normalized, which keeps
/// `normalize_l2` idempotent bit for bit.
const UNIT_NORM_SLACK: f64 = 1.0 / (1u64 << 42) as f64;

/// A sparse vector stored as parallel arrays of ascending term ids and values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    terms: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a vector from `(term_id, value)` pairs that are already sorted.
    ///
    /// Zero values are dropped. Term ids must be strictly ascending and at
    /// least 1, and every value must be finite.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, f64)>,
    {
        let iter = pairs.into_iter();
        let (lo, _) = iter.size_hint();
        let mut terms = Vec::with_capacity(lo);
        let mut values = Vec::with_capacity(lo);
        let mut prev = 0u32;
        for (t, v) in iter {
            if t == 0 {
                return Err(Error::InvalidVector("term ids are 1-based".into()));
            }
            if t <= prev {
                return Err(Error::InvalidVector(format!(
                    "term ids not strictly ascending: {prev} then {t}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidVector(format!("non-finite value at term {t}")));
            }
            prev = t;
            if v != 0.0 {
                terms.push(t);
                values.push(v);
            }
        }
        Ok(Self { terms, values })
    }

    /// Builds a vector from pairs in any order. Duplicate ids are summed.
    pub fn from_unsorted(mut pairs: Vec<(u32, f64)>) -> Result<Self> {
        pairs.sort_by_key(|&(t, _)| t);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (t, v) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == t => last.1 += v,
                _ => merged.push((t, v)),
            }
        }
        Self::from_pairs(merged)
    }

    /// Caller guarantees the invariants (ascending, nonzero, finite).
    pub(crate) fn from_parts_unchecked(terms: Vec<u32>, values: Vec<f64>) -> Self {
        debug_assert_eq!(terms.len(), values.len());
        debug_assert!(terms.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(values.iter().all(|v| v.is_finite() && *v != 0.0));
        Self { terms, values }
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.terms.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    #[inline]
    pub fn terms(&self) -> &[u32] {
        &self.terms
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.terms.iter().copied().zip(self.values.iter().copied())
    }

    /// Largest term id, or 0 for the empty vector.
    pub fn max_term(&self) -> u32 {
        self.terms.last().copied().unwrap_or(0)
    }

    /// Sum of squared values, accumulated in ascending term order.
    pub fn squared_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc + v * v)
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    /// Dense copy of length `dim`.
    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (t, v) in self.iter() {
            out[t as usize - 1] = v;
        }
        out
    }

    /// Divides every value by `by`, keeping the support.
    pub(crate) fn scaled_down(&self, by: f64) -> Self {
        Self {
            terms: self.terms.clone(),
            values: self.values.iter().map(|v| v / by).collect(),
        }
    }
}

/// Returns `v / ||v||_2` with the same support.
pub fn normalize_l2(v: &SparseVector) -> Result<SparseVector> {
    if v.is_empty() {
        return Err(Error::ZeroVector);
    }
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    if (norm - 1.0).abs() <= UNIT_NORM_SLACK {
        return Ok(v.clone());
    }
    Ok(v.scaled_down(norm))
}

/// `sum_h x_h * m[t_h - 1]`, accumulated in ascending term order.
#[inline]
pub fn dot_sparse_dense(x: &SparseVector, m: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&t, &v) in x.terms.iter().zip(&x.values) {
        acc += v * m[t as usize - 1];
    }
    acc
}

/// Sparse-dense dot where each dense coordinate is divided by `norm` before
/// the multiply. This is the exact arithmetic used to form unit means, so it
/// reproduces inverted-file similarities bit for bit.
#[inline]
pub fn dot_sparse_dense_unit(x: &SparseVector, m: &[f64], norm: f64) -> f64 {
    let mut acc = 0.0;
    for (&t, &v) in x.terms.iter().zip(&x.values) {
        acc += v * (m[t as usize - 1] / norm);
    }
    acc
}

/// Merge-based dot product over two ascending supports.
pub fn dot_sparse_sparse(x: &SparseVector, y: &SparseVector) -> f64 {
    let (xt, xv) = (&x.terms, &x.values);
    let (yt, yv) = (&y.terms, &y.values);
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    while i < xt.len() && j < yt.len() {
        match xt[i].cmp(&yt[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += xv[i] * yv[j];
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// Summary statistics over a dataset's entry counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    pub avg_nnz: f64,
    pub max_nnz: usize,
    pub total_nnz: usize,
}

impl SparsityStats {
    fn of(vectors: &[SparseVector]) -> Self {
        let total_nnz: usize = vectors.iter().map(SparseVector::nnz).sum();
        let max_nnz = vectors.iter().map(SparseVector::nnz).max().unwrap_or(0);
        let avg_nnz = if vectors.is_empty() {
            0.0
        } else {
            total_nnz as f64 / vectors.len() as f64
        };
        Self { avg_nnz, max_nnz, total_nnz }
    }
}

/// `N` sparse object vectors over a global dimensionality `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDataset {
    vectors: Vec<SparseVector>,
    dim: usize,
    labels: Option<Vec<i64>>,
    stats: SparsityStats,
}

impl SparseDataset {
    pub fn new(vectors: Vec<SparseVector>, dim: usize) -> Result<Self> {
        Self::with_labels(vectors, dim, None)
    }

    pub fn with_labels(vectors: Vec<SparseVector>, dim: usize, labels: Option<Vec<i64>>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::EmptyFile);
        }
        if let Some(v) = vectors.iter().find(|v| v.max_term() as usize > dim) {
            return Err(Error::InvalidVector(format!(
                "term id {} exceeds dimensionality {dim}",
                v.max_term()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != vectors.len() {
                return Err(Error::InvalidVector(format!(
                    "{} labels for {} vectors",
                    l.len(),
                    vectors.len()
                )));
            }
        }
        let stats = SparsityStats::of(&vectors);
        Ok(Self { vectors, dim, labels, stats })
    }

    /// L2-normalizes every row; fails on the first all-zero row.
    pub fn normalized(self) -> Result<Self> {
        let vectors = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| {
                normalize_l2(v).map_err(|_| Error::InvalidVector(format!("object {} has no nonzero entries", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_labels(vectors, self.dim, self.labels)
    }

    /// The first `n` objects (all of them if `n >= N`).
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        Self::with_labels(
            self.vectors[..n].to_vec(),
            self.dim,
            self.labels.as_ref().map(|l| l[..n].to_vec()),
        )
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn vectors(&self) -> &[SparseVector] {
        &self.vectors
    }

    #[inline]
    pub fn get(&self, i: usize) -> &SparseVector {
        &self.vectors[i]
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn stats(&self) -> SparsityStats {
        self.stats
    }

    pub fn nnz(&self) -> usize {
        self.stats.total_nnz
    }
}

/// Mean set in full (dense) expression: `k` rows of `D` raw mean values plus
/// the L2 norm of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMeanMatrix {
    k: usize,
    dim: usize,
    rows: Vec<f64>,
    norms: Vec<f64>,
}

impl DenseMeanMatrix {
    pub fn zeros(k: usize, dim: usize) -> Self {
        Self { k, dim, rows: vec![0.0; k * dim], norms: vec![0.0; k] }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j * self.dim..(j + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.rows[j * self.dim..(j + 1) * self.dim]
    }

    #[inline]
    pub fn norm(&self, j: usize) -> f64 {
        self.norms[j]
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Recomputes the norm of row `j` in ascending coordinate order.
    pub fn refresh_norm(&mut self, j: usize) {
        self.norms[j] = self.row(j).iter().fold(0.0, |acc, w| acc + w * w).sqrt();
    }

    /// Cosine similarity of `x` to the unit version of row `j`.
    #[inline]
    pub fn unit_dot(&self, j: usize, x: &SparseVector) -> f64 {
        dot_sparse_dense_unit(x, self.row(j), self.norms[j])
    }

    /// Raw row `j` as a sparse vector.
    pub fn raw_sparse(&self, j: usize) -> SparseVector {
        let (terms, values) = self
            .row(j)
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(p, w)| (p as u32 + 1, *w))
            .unzip();
        SparseVector::from_parts_unchecked(terms, values)
    }

    /// Unit-normalized row `j` as a sparse vector, computed as `w_p / ||w||`.
    pub fn unit_sparse(&self, j: usize) -> SparseVector {
        let norm = self.norms[j];
        let (terms, values) = self
            .row(j)
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(p, w)| (p as u32 + 1, *w / norm))
            .unzip();
        SparseVector::from_parts_unchecked(terms, values)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().filter(|w| **w != 0.0).count()
    }
}
