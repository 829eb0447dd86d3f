//! Per-iteration instrumentation.
//!
//! Hardware counters are replaced by three deterministic software counts:
//!
//! * `pair_evals`: object-centroid pairs not skipped by the active filter.
//!   This is the "similarity calculation" unit; divided by `N * k` it gives
//!   the normalized rate.
//! * `madds`: multiply-adds actually executed while accumulating similarities.
//! * `branch_evals`: per-entry conditionals executed inside inner loops.

use std::io::{self, Write};
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::config::Backend;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub pair_evals: u64,
    pub madds: u64,
    pub branch_evals: u64,
}

impl Add for Counters {
    type Output = Counters;

    fn add(self, rhs: Counters) -> Counters {
        Counters {
            pair_evals: self.pair_evals + rhs.pair_evals,
            madds: self.madds + rhs.madds,
            branch_evals: self.branch_evals + rhs.branch_evals,
        }
    }
}

impl AddAssign for Counters {
    fn add_assign(&mut self, rhs: Counters) {
        *self = *self + rhs;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub r: usize,
    pub pair_evals: u64,
    pub norm_pair_evals: f64,
    pub madds: u64,
    pub branch_evals: u64,
    /// Clusters whose membership did not change in this iteration.
    pub invariant_clusters: usize,
    pub moved_objects: usize,
    pub empty_clusters: usize,
    pub cos_sum: f64,
    pub sse: f64,
    /// Wall-clock time of the iteration. The only nondeterministic field.
    pub elapsed_ns: u64,
    pub mem_estimate_bytes: u64,
}

pub const CSV_HEADER: &str = "r,pair_evals,norm_pair_evals,madds,branch_evals,invariant_clusters,moved_objects,empty_clusters,cos_sum,sse,elapsed_ns,mem_estimate_bytes";

impl IterationMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.r,
            self.pair_evals,
            self.norm_pair_evals,
            self.madds,
            self.branch_evals,
            self.invariant_clusters,
            self.moved_objects,
            self.empty_clusters,
            self.cos_sum,
            self.sse,
            self.elapsed_ns,
            self.mem_estimate_bytes
        )
    }

    /// Copy with the wall-clock field cleared, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        Self { elapsed_ns: 0, ..self.clone() }
    }
}

pub fn write_csv<W: Write>(mut out: W, rows: &[IterationMetrics]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for m in rows {
        writeln!(out, "{}", m.csv_row())?;
    }
    out.flush()
}

/// Closed-form number of pairs the invariant centroid-pair filter keeps.
///
/// `prev_assign` holds 0-based cluster ids from the previous iteration.
/// Objects in an invariant cluster are compared only against moving
/// centroids; every other object is compared against all `k`.
pub fn pair_eval_count(lambda: &[bool], prev_assign: &[u32], k: usize) -> u64 {
    let k_moving = lambda.iter().filter(|l| !**l).count() as u64;
    prev_assign
        .iter()
        .map(|&a| if lambda[a as usize] { k_moving } else { k as u64 })
        .sum()
}

/// Byte widths used by [`mem_estimate`].
pub const ID_BYTES: u64 = 4;
pub const VALUE_BYTES: u64 = 8;
pub const OFFSET_BYTES: u64 = 8;

/// Analytic memory footprint of one run, split by component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemEstimate {
    /// Object set in standard sparse expression.
    pub objects: u64,
    /// Assignments, previous assignments, cached similarities, flags.
    pub state: u64,
    /// Mean set: dense matrix or (structured) inverted file.
    pub means: u64,
    /// One length-`k` similarity accumulator.
    pub scratch: u64,
}

impl MemEstimate {
    pub fn total(&self) -> u64 {
        self.objects + self.state + self.means + self.scratch
    }
}

/// Memory estimate for a backend.
///
/// * objects: `nnz_x * (id + value) + (N + 1) * offset`
/// * state: `N * (2 * id + value) + k` flag bytes
/// * dense means: `k * D * value + k * value` (raw rows plus norms)
/// * inverted means: `nnz_m * (id + value) + (D + 1) * offset + k * value`
/// * structured inverted means add one `id`-wide boundary per term
/// * scratch: `k * value`
pub fn mem_estimate(backend: Backend, n: u64, dim: u64, k: u64, nnz_x: u64, nnz_m: u64) -> MemEstimate {
    let objects = nnz_x * (ID_BYTES + VALUE_BYTES) + (n + 1) * OFFSET_BYTES;
    let state = n * (2 * ID_BYTES + VALUE_BYTES) + k;
    let means = match backend {
        Backend::Lloyd | Backend::LloydIcp => k * dim * VALUE_BYTES + k * VALUE_BYTES,
        Backend::Ivf | Backend::IvfCbicp => postings_bytes(dim, nnz_m) + k * VALUE_BYTES,
        Backend::Sivf => postings_bytes(dim, nnz_m) + dim * ID_BYTES + k * VALUE_BYTES,
    };
    MemEstimate { objects, state, means, scratch: k * VALUE_BYTES }
}

/// Bytes of an inverted file with `nnz_m` postings over `dim` terms.
pub fn postings_bytes(dim: u64, nnz_m: u64) -> u64 {
    nnz_m * (ID_BYTES + VALUE_BYTES) + (dim + 1) * OFFSET_BYTES
}
