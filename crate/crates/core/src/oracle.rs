//! Brute-force reference implementations.
//!
//! Nothing here touches the backends' kernels, mean layouts, or argmax
//! helpers; only [`SparseVector`] is shared. Everything is single-threaded
//! and quadratic on purpose.

use crate::sparse::SparseVector;

/// Near-tie allowance when comparing a backend's choice with the oracle's.
pub const NEAR_TIE: f64 = 1e-9;

fn dense(v: &SparseVector, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (&t, &x) in v.terms().iter().zip(v.values()) {
        out[t as usize - 1] = x;
    }
    out
}

fn merge_dot(x: &SparseVector, y: &SparseVector) -> f64 {
    let mut acc = 0.0;
    let mut yi = y.terms().iter().zip(y.values()).peekable();
    for (&t, &v) in x.terms().iter().zip(x.values()) {
        while let Some(&(&s, _)) = yi.peek() {
            if s < t {
                yi.next();
            } else {
                break;
            }
        }
        if let Some(&(&s, &w)) = yi.peek() {
            if s == t {
                acc += v * w;
            }
        }
    }
    acc
}

/// Similarity of every object to every unit mean.
pub fn similarity_table(objects: &[SparseVector], means: &[SparseVector]) -> Vec<Vec<f64>> {
    objects
        .iter()
        .map(|x| means.iter().map(|m| merge_dot(x, m)).collect())
        .collect()
}

/// Most similar unit mean per object, lowest index on ties (0-based ids).
pub fn oracle_assign(objects: &[SparseVector], means: &[SparseVector]) -> Vec<u32> {
    similarity_table(objects, means)
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect()
}

/// `(sse, cos_sum)` recomputed with dense arithmetic from raw means.
pub fn oracle_objective(objects: &[SparseVector], assign: &[u32], raw_means: &[SparseVector], dim: usize) -> (f64, f64) {
    let dense_means: Vec<Vec<f64>> = raw_means.iter().map(|m| dense(m, dim)).collect();
    let mut sse = 0.0;
    let mut cos_sum = 0.0;
    for (x, &a) in objects.iter().zip(assign) {
        let xd = dense(x, dim);
        let mu = &dense_means[a as usize];
        let norm = mu.iter().map(|w| w * w).sum::<f64>().sqrt();
        let mut dot = 0.0;
        for (p, q) in xd.iter().zip(mu) {
            sse += (p - q) * (p - q);
            dot += p * q;
        }
        cos_sum += dot / norm;
    }
    (sse, cos_sum)
}

/// Checks a candidate assignment against the oracle. Returns the first
/// object whose choice is worse than the oracle's by at least [`NEAR_TIE`].
pub fn first_real_disagreement(objects: &[SparseVector], means: &[SparseVector], assign: &[u32]) -> Option<usize> {
    let table = similarity_table(objects, means);
    let reference = oracle_assign(objects, means);
    (0..objects.len()).find(|&i| {
        let (a, b) = (assign[i] as usize, reference[i] as usize);
        a != b && (table[i][b] - table[i][a]).abs() >= NEAR_TIE
    })
}
