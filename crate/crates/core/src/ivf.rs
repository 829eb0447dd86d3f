//! Inverted files over the mean set and the three assignment steps that scan
//! them.
//!
//! A postings array per term lists `(centroid, value)` for every unit mean
//! with a nonzero at that term. An object's similarity to every centroid is
//! accumulated by walking the postings of the object's own terms, so only
//! centroids sharing a term with the object are touched.
//!
//! The structured variant partitions each postings array: centroids whose
//! cluster is moving come first, invariant ones after a per-term boundary.
//! Objects whose own cluster is invariant stop at the boundary, which applies
//! the invariant centroid-pair filter as a loop bound rather than a branch.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::kmeans::{argmax_all, argmax_moving, AssignOutput, FilterState};
use crate::means::{members_by_cluster, SparseMeans};
use crate::metrics::Counters;
use crate::sparse::{SparseDataset, SparseVector};

/// Postings for terms `1..=D` in compressed (offset) layout. Centroid ids are
/// stored 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedMeanFile {
    k: usize,
    dim: usize,
    offsets: Vec<usize>,
    ids: Vec<u32>,
    values: Vec<f64>,
}

impl InvertedMeanFile {
    /// Builds postings from unit means; each postings array lists centroids
    /// in ascending id order.
    pub fn build(means: &[SparseVector], dim: usize) -> Self {
        let mut counts = vec![0usize; dim + 1];
        for m in means {
            for &t in m.terms() {
                counts[t as usize - 1 + 1] += 1;
            }
        }
        let mut offsets = counts;
        for t in 1..=dim {
            offsets[t] += offsets[t - 1];
        }
        let nnz = offsets[dim];
        let mut cursor = offsets.clone();
        let mut ids = vec![0u32; nnz];
        let mut values = vec![0.0; nnz];
        for (j, m) in means.iter().enumerate() {
            for (t, u) in m.iter() {
                let slot = &mut cursor[t as usize - 1];
                ids[*slot] = j as u32;
                values[*slot] = u;
                *slot += 1;
            }
        }
        Self { k: means.len(), dim, offsets, ids, values }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.ids.len()
    }

    /// Postings of 1-based term `t`.
    #[inline]
    pub fn postings(&self, t: u32) -> (&[u32], &[f64]) {
        let lo = self.offsets[t as usize - 1];
        let hi = self.offsets[t as usize];
        (&self.ids[lo..hi], &self.values[lo..hi])
    }

    /// Postings length of term `t`.
    #[inline]
    pub fn len_of(&self, t: u32) -> usize {
        self.offsets[t as usize] - self.offsets[t as usize - 1]
    }

    /// Rebuilds the unit mean set the file encodes.
    pub fn reconstruct(&self) -> Vec<SparseVector> {
        let mut pairs: Vec<Vec<(u32, f64)>> = vec![Vec::new(); self.k];
        for t in 1..=self.dim as u32 {
            let (ids, us) = self.postings(t);
            for (&c, &u) in ids.iter().zip(us) {
                pairs[c as usize].push((t, u));
            }
        }
        pairs
            .into_iter()
            .map(|p| SparseVector::from_pairs(p).expect("postings visit terms in ascending order"))
            .collect()
    }

    /// Postings as `(centroid, value)` sorted by centroid, per term.
    fn sorted_postings(&self) -> Vec<Vec<(u32, u64)>> {
        (1..=self.dim as u32)
            .map(|t| {
                let (ids, us) = self.postings(t);
                let mut v: Vec<(u32, u64)> = ids.iter().zip(us).map(|(&c, u)| (c, u.to_bits())).collect();
                v.sort_unstable();
                v
            })
            .collect()
    }

    /// Same per-term multisets of `(centroid, value)`, ignoring order.
    pub fn same_multisets(&self, other: &InvertedMeanFile) -> bool {
        self.k == other.k && self.dim == other.dim && self.sorted_postings() == other.sorted_postings()
    }
}

/// Inverted file whose postings are split into a moving front part and an
/// invariant back part.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredInvertedMeanFile {
    file: InvertedMeanFile,
    /// Per term, the number of front (moving) entries.
    front: Vec<u32>,
    lambda: Vec<bool>,
}

impl StructuredInvertedMeanFile {
    /// Places unit means into partitioned postings: a counting pass sizes
    /// both parts of every term, then a placement pass fills moving centroids
    /// from the start and invariant ones from the boundary, each in
    /// ascending centroid order.
    pub fn build(means: &[SparseVector], lambda: &[bool], dim: usize) -> Self {
        assert_eq!(means.len(), lambda.len());
        let mut moving = vec![0u32; dim];
        let mut invariant = vec![0u32; dim];
        for (m, &inv) in means.iter().zip(lambda) {
            let part = if inv { &mut invariant } else { &mut moving };
            for &t in m.terms() {
                part[t as usize - 1] += 1;
            }
        }
        let mut offsets = vec![0usize; dim + 1];
        for s in 0..dim {
            offsets[s + 1] = offsets[s] + (moving[s] + invariant[s]) as usize;
        }
        let nnz = offsets[dim];
        let mut front_cursor: Vec<usize> = offsets[..dim].to_vec();
        let mut back_cursor: Vec<usize> = (0..dim).map(|s| offsets[s] + moving[s] as usize).collect();
        let mut ids = vec![0u32; nnz];
        let mut values = vec![0.0; nnz];
        for (j, (m, &inv)) in means.iter().zip(lambda).enumerate() {
            let cursor = if inv { &mut back_cursor } else { &mut front_cursor };
            for (t, u) in m.iter() {
                let slot = &mut cursor[t as usize - 1];
                ids[*slot] = j as u32;
                values[*slot] = u;
                *slot += 1;
            }
        }
        Self {
            file: InvertedMeanFile { k: means.len(), dim, offsets, ids, values },
            front: moving,
            lambda: lambda.to_vec(),
        }
    }

    pub fn file(&self) -> &InvertedMeanFile {
        &self.file
    }

    pub fn lambda(&self) -> &[bool] {
        &self.lambda
    }

    /// Front-part length of 1-based term `t`.
    #[inline]
    pub fn front_len(&self, t: u32) -> usize {
        self.front[t as usize - 1] as usize
    }

    /// Drops the partition, keeping postings order.
    pub fn strip(&self) -> InvertedMeanFile {
        self.file.clone()
    }

    /// Checks the partition against the stored flags; returns the first
    /// violation found.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let f = &self.file;
        for t in 1..=f.dim as u32 {
            let (ids, _) = f.postings(t);
            let front = self.front_len(t);
            if front > ids.len() {
                return Err(format!("term {t}: boundary {front} exceeds postings length {}", ids.len()));
            }
            let mut seen = std::collections::HashSet::with_capacity(ids.len());
            for (q, &c) in ids.iter().enumerate() {
                if !seen.insert(c) {
                    return Err(format!("term {t}: centroid {} listed twice", c + 1));
                }
                let invariant = self.lambda[c as usize];
                if q < front && invariant {
                    return Err(format!("term {t}: invariant centroid {} in front part at q={}", c + 1, q + 1));
                }
                if q >= front && !invariant {
                    return Err(format!("term {t}: moving centroid {} in back part at q={}", c + 1, q + 1));
                }
            }
        }
        Ok(())
    }

    /// Text dump: one line per term, `s mf0 mf  (c,u) (c,u) ...`, with
    /// 1-based term and centroid ids.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for t in 1..=self.file.dim as u32 {
            let (ids, us) = self.file.postings(t);
            write!(out, "{} {} {} ", t, self.front_len(t), ids.len()).unwrap();
            for (&c, &u) in ids.iter().zip(us) {
                write!(out, " ({},{})", c + 1, u).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`dump`](Self::dump) output back into a structure.
    pub fn parse_dump(text: &str, lambda: &[bool]) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
        let mut offsets = vec![0usize];
        let mut front = Vec::new();
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let s: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(|| bad(ln, "term id"))?;
            if s != ln + 1 {
                return Err(bad(ln, "terms must be listed 1..D in order"));
            }
            let mf0: u32 = parts.next().and_then(|p| p.parse().ok()).ok_or_else(|| bad(ln, "mf0"))?;
            let mf: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(|| bad(ln, "mf"))?;
            let before = ids.len();
            for tok in parts {
                let inner = tok
                    .strip_prefix('(')
                    .and_then(|t| t.strip_suffix(')'))
                    .ok_or_else(|| bad(ln, "expected (c,u)"))?;
                let (c, u) = inner.split_once(',').ok_or_else(|| bad(ln, "expected (c,u)"))?;
                let c: u32 = c.parse().map_err(|_| bad(ln, "centroid id"))?;
                let u: f64 = u.parse().map_err(|_| bad(ln, "value"))?;
                if c == 0 || c as usize > lambda.len() {
                    return Err(bad(ln, "centroid id out of range"));
                }
                ids.push(c - 1);
                values.push(u);
            }
            if ids.len() - before != mf {
                return Err(bad(ln, "mf does not match entry count"));
            }
            front.push(mf0);
            offsets.push(ids.len());
        }
        let dim = front.len();
        Ok(Self {
            file: InvertedMeanFile { k: lambda.len(), dim, offsets, ids, values },
            front,
            lambda: lambda.to_vec(),
        })
    }

    /// Test hook: moves every boundary to zero so moving centroids are
    /// treated as invariant.
    #[doc(hidden)]
    pub fn corrupt_front_boundaries(&mut self) {
        self.front.iter_mut().for_each(|f| *f = 0);
    }
}

/// Builds an inverted file from a unit mean set.
pub fn build_ivf(means: &[SparseVector], dim: usize) -> InvertedMeanFile {
    InvertedMeanFile::build(means, dim)
}

/// Assignment by full postings scans.
pub fn ivf_assign(exec: &Executor, data: &SparseDataset, ivf: &InvertedMeanFile) -> AssignOutput {
    let n = data.len();
    let k = ivf.k();
    let mut out = AssignOutput::with_len(n);
    let counters = exec.for_each_object(k, &mut out.assign, &mut out.cached_sim, |i, rho| {
        let x = data.get(i);
        let madds = scan_full(ivf, x, rho);
        let (j, best) = argmax_all(rho);
        clear(ivf, x, rho);
        (j, best, Counters { pair_evals: k as u64, madds, branch_evals: 0 })
    });
    out.counters = counters;
    out
}

/// Assignment with the filter applied by a branch on every posting entry.
pub fn ivf_cbicp_assign(
    exec: &Executor,
    data: &SparseDataset,
    ivf: &InvertedMeanFile,
    filter: &FilterState<'_>,
) -> AssignOutput {
    let n = data.len();
    let k = ivf.k();
    let lambda = filter.lambda;
    let moving = filter.moving_ids();
    let k_moving = moving.len() as u64;
    let mut out = AssignOutput::with_len(n);
    let counters = exec.for_each_object(k, &mut out.assign, &mut out.cached_sim, |i, rho| {
        let x = data.get(i);
        match filter.invariant_owner(i) {
            Some(a) => {
                let mut madds = 0u64;
                let mut branches = 0u64;
                for (t, v) in x.iter() {
                    let (ids, us) = ivf.postings(t);
                    branches += ids.len() as u64;
                    for (&c, &u) in ids.iter().zip(us) {
                        if !lambda[c as usize] {
                            rho[c as usize] += v * u;
                            madds += 1;
                        }
                    }
                }
                let (j, best) = argmax_moving(rho, &moving, a, filter.cached_sim[i]);
                clear(ivf, x, rho);
                (j, best, Counters { pair_evals: k_moving, madds, branch_evals: branches })
            }
            None => {
                let madds = scan_full(ivf, x, rho);
                let (j, best) = argmax_all(rho);
                clear(ivf, x, rho);
                (j, best, Counters { pair_evals: k as u64, madds, branch_evals: 0 })
            }
        }
    });
    out.counters = counters;
    out
}

/// Assignment over the structured file: objects in invariant clusters scan
/// only the front part of each postings array. Returns the new invariance
/// flags alongside the assignment.
pub fn sivf_assign(
    exec: &Executor,
    data: &SparseDataset,
    sivf: &StructuredInvertedMeanFile,
    filter: &FilterState<'_>,
) -> Result<(AssignOutput, Vec<bool>)> {
    if sivf.lambda() != filter.lambda {
        return Err(Error::StructureMismatch);
    }
    let n = data.len();
    let ivf = sivf.file();
    let k = ivf.k();
    let moving = filter.moving_ids();
    let k_moving = moving.len() as u64;
    let mut out = AssignOutput::with_len(n);
    let counters = exec.for_each_object(k, &mut out.assign, &mut out.cached_sim, |i, rho| {
        let x = data.get(i);
        match filter.invariant_owner(i) {
            Some(a) => {
                let mut madds = 0u64;
                for (t, v) in x.iter() {
                    let front = sivf.front_len(t);
                    let (ids, us) = ivf.postings(t);
                    for (&c, &u) in ids[..front].iter().zip(&us[..front]) {
                        rho[c as usize] += v * u;
                    }
                    madds += front as u64;
                }
                let (j, best) = argmax_moving(rho, &moving, a, filter.cached_sim[i]);
                for &t in x.terms() {
                    let front = sivf.front_len(t);
                    for &c in &ivf.postings(t).0[..front] {
                        rho[c as usize] = 0.0;
                    }
                }
                (j, best, Counters { pair_evals: k_moving, madds, branch_evals: 0 })
            }
            None => {
                let madds = scan_full(ivf, x, rho);
                let (j, best) = argmax_all(rho);
                clear(ivf, x, rho);
                (j, best, Counters { pair_evals: k as u64, madds, branch_evals: 0 })
            }
        }
    });
    out.counters = counters;
    let lambda = crate::kmeans::detect_invariant(&out.assign, filter.prev_assign, k);
    Ok((out, lambda))
}

/// Update step for the structured backend: recomputes means from `assign`
/// and lays them out with moving clusters (per `lambda`) in front.
pub fn sivf_update(
    data: &SparseDataset,
    assign: &[u32],
    lambda: &[bool],
    prev: &SparseMeans,
    reuse_invariant: bool,
) -> (StructuredInvertedMeanFile, SparseMeans) {
    let members = members_by_cluster(assign, prev.k());
    let means = SparseMeans::update(data, &members, prev, lambda, reuse_invariant);
    let sivf = StructuredInvertedMeanFile::build(means.unit(), lambda, data.dim());
    (sivf, means)
}

#[inline]
fn scan_full(ivf: &InvertedMeanFile, x: &SparseVector, rho: &mut [f64]) -> u64 {
    let mut madds = 0u64;
    for (t, v) in x.iter() {
        let (ids, us) = ivf.postings(t);
        for (&c, &u) in ids.iter().zip(us) {
            rho[c as usize] += v * u;
        }
        madds += ids.len() as u64;
    }
    madds
}

/// Zeroes the accumulator by revisiting the postings just scanned.
#[inline]
fn clear(ivf: &InvertedMeanFile, x: &SparseVector, rho: &mut [f64]) {
    for &t in x.terms() {
        for &c in ivf.postings(t).0 {
            rho[c as usize] = 0.0;
        }
    }
}
