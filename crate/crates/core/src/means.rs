//! Mean computation for both mean-set expressions.
//!
//! Every backend forms a cluster mean the same way: member vectors are summed
//! coordinate-wise in ascending object order, each coordinate is divided by
//! the cluster size, the norm is accumulated over ascending term ids, and the
//! unit mean is `w_p / ||w||`. Dense and sparse paths therefore produce
//! bit-identical unit values.

use crate::sparse::{dot_sparse_sparse, DenseMeanMatrix, SparseDataset, SparseVector};

/// Object indices of each cluster, ascending.
pub fn members_by_cluster(assign: &[u32], k: usize) -> Vec<Vec<u32>> {
    let mut sizes = vec![0usize; k];
    for &a in assign {
        sizes[a as usize] += 1;
    }
    let mut members: Vec<Vec<u32>> = sizes.into_iter().map(Vec::with_capacity).collect();
    for (i, &a) in assign.iter().enumerate() {
        members[a as usize].push(i as u32);
    }
    members
}

/// Sparse mean set: raw means, their norms, and the unit means.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMeans {
    raw: Vec<SparseVector>,
    unit: Vec<SparseVector>,
    norms: Vec<f64>,
}

/// Reusable dense scratch for sparse mean accumulation.
struct Accumulator {
    w: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<u32>,
}

impl Accumulator {
    fn new(dim: usize) -> Self {
        Self { w: vec![0.0; dim + 1], seen: vec![false; dim + 1], touched: Vec::new() }
    }

    /// Mean of the given members as (raw, unit, norm).
    fn mean(&mut self, data: &SparseDataset, members: &[u32]) -> (SparseVector, SparseVector, f64) {
        for &i in members {
            for (t, v) in data.get(i as usize).iter() {
                let t = t as usize;
                if !self.seen[t] {
                    self.seen[t] = true;
                    self.touched.push(t as u32);
                }
                self.w[t] += v;
            }
        }
        self.touched.sort_unstable();
        let count = members.len() as f64;
        let mut terms = Vec::with_capacity(self.touched.len());
        let mut raw = Vec::with_capacity(self.touched.len());
        for &t in &self.touched {
            let w = self.w[t as usize] / count;
            self.w[t as usize] = 0.0;
            self.seen[t as usize] = false;
            if w != 0.0 {
                terms.push(t);
                raw.push(w);
            }
        }
        self.touched.clear();
        let norm = raw.iter().fold(0.0, |acc, w| acc + w * w).sqrt();
        let unit: Vec<f64> = raw.iter().map(|w| w / norm).collect();
        (
            SparseVector::from_parts_unchecked(terms.clone(), raw),
            SparseVector::from_parts_unchecked(terms, unit),
            norm,
        )
    }
}

impl SparseMeans {
    /// Means of explicit member lists. Every list must be nonempty.
    pub fn from_members(data: &SparseDataset, members: &[Vec<u32>]) -> Self {
        let mut acc = Accumulator::new(data.dim());
        let mut out = Self { raw: Vec::new(), unit: Vec::new(), norms: Vec::new() };
        for m in members {
            assert!(!m.is_empty(), "initial clusters must be nonempty");
            let (raw, unit, norm) = acc.mean(data, m);
            out.raw.push(raw);
            out.unit.push(unit);
            out.norms.push(norm);
        }
        out
    }

    /// Recomputes means from `assign`. Empty clusters keep the previous mean;
    /// with `reuse_invariant`, so do clusters flagged in `lambda`.
    pub fn update(
        data: &SparseDataset,
        members: &[Vec<u32>],
        prev: &SparseMeans,
        lambda: &[bool],
        reuse_invariant: bool,
    ) -> Self {
        let mut acc = Accumulator::new(data.dim());
        let k = members.len();
        let mut out = Self {
            raw: Vec::with_capacity(k),
            unit: Vec::with_capacity(k),
            norms: Vec::with_capacity(k),
        };
        for (j, m) in members.iter().enumerate() {
            if m.is_empty() || (reuse_invariant && lambda[j]) {
                out.raw.push(prev.raw[j].clone());
                out.unit.push(prev.unit[j].clone());
                out.norms.push(prev.norms[j]);
            } else {
                let (raw, unit, norm) = acc.mean(data, m);
                out.raw.push(raw);
                out.unit.push(unit);
                out.norms.push(norm);
            }
        }
        out
    }

    pub fn k(&self) -> usize {
        self.unit.len()
    }

    pub fn raw(&self) -> &[SparseVector] {
        &self.raw
    }

    pub fn unit(&self) -> &[SparseVector] {
        &self.unit
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn nnz(&self) -> usize {
        self.unit.iter().map(SparseVector::nnz).sum()
    }
}

/// Seeds a dense mean matrix from explicit member lists.
pub fn dense_from_members(data: &SparseDataset, members: &[Vec<u32>]) -> DenseMeanMatrix {
    let mut m = DenseMeanMatrix::zeros(members.len(), data.dim());
    for (j, mem) in members.iter().enumerate() {
        assert!(!mem.is_empty(), "initial clusters must be nonempty");
        accumulate_dense_row(data, mem, &mut m, j);
    }
    m
}

fn accumulate_dense_row(data: &SparseDataset, members: &[u32], m: &mut DenseMeanMatrix, j: usize) {
    let row = m.row_mut(j);
    row.fill(0.0);
    for &i in members {
        for (t, v) in data.get(i as usize).iter() {
            row[t as usize - 1] += v;
        }
    }
    let count = members.len() as f64;
    for w in row.iter_mut() {
        *w /= count;
    }
    m.refresh_norm(j);
}

/// Full-expression update: overwrites each nonempty cluster's row in place.
pub fn update_dense(
    data: &SparseDataset,
    members: &[Vec<u32>],
    means: &mut DenseMeanMatrix,
    lambda: &[bool],
    reuse_invariant: bool,
) {
    for (j, m) in members.iter().enumerate() {
        if m.is_empty() || (reuse_invariant && lambda[j]) {
            continue;
        }
        accumulate_dense_row(data, m, means, j);
    }
}

/// Read access to a mean set, whichever expression backs it.
pub trait MeanSet {
    fn k(&self) -> usize;
    /// `x . mu_j` with the raw (unnormalized) mean.
    fn raw_dot(&self, j: usize, x: &SparseVector) -> f64;
    /// `||mu_j||^2` of the raw mean.
    fn raw_sq_norm(&self, j: usize) -> f64;
    /// `x . mu_j / ||mu_j||`.
    fn unit_dot(&self, j: usize, x: &SparseVector) -> f64;
}

impl MeanSet for SparseMeans {
    fn k(&self) -> usize {
        self.unit.len()
    }

    fn raw_dot(&self, j: usize, x: &SparseVector) -> f64 {
        dot_sparse_sparse(x, &self.raw[j])
    }

    fn raw_sq_norm(&self, j: usize) -> f64 {
        self.raw[j].squared_norm()
    }

    fn unit_dot(&self, j: usize, x: &SparseVector) -> f64 {
        dot_sparse_sparse(x, &self.unit[j])
    }
}

impl MeanSet for DenseMeanMatrix {
    fn k(&self) -> usize {
        DenseMeanMatrix::k(self)
    }

    fn raw_dot(&self, j: usize, x: &SparseVector) -> f64 {
        crate::sparse::dot_sparse_dense(x, self.row(j))
    }

    fn raw_sq_norm(&self, j: usize) -> f64 {
        self.row(j).iter().fold(0.0, |acc, w| acc + w * w)
    }

    fn unit_dot(&self, j: usize, x: &SparseVector) -> f64 {
        DenseMeanMatrix::unit_dot(self, j, x)
    }
}
