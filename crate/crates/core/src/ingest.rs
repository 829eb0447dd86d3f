//! Loading, saving, tf-idf weighting, and synthetic generation of sparse
//! datasets in svmlight-style text.
//!
//! Each line is `label idx:val idx:val ...` with 1-based, strictly ascending
//! indices. An optional first line `#N D` fixes the object count and the
//! dimensionality.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{normalize_l2, SparseDataset, SparseVector};

/// Rows of a sparse text file exactly as read.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseText {
    pub rows: Vec<SparseVector>,
    pub labels: Vec<i64>,
    pub dim: usize,
}

/// Raw term counts per document. Values are integers `>= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    rows: Vec<SparseVector>,
    labels: Option<Vec<i64>>,
    dim: usize,
}

impl CountMatrix {
    pub fn new(rows: Vec<SparseVector>, dim: usize, labels: Option<Vec<i64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyFile);
        }
        for (i, r) in rows.iter().enumerate() {
            if r.max_term() as usize > dim {
                return Err(Error::InvalidVector(format!("document {} exceeds dimensionality {dim}", i + 1)));
            }
            if let Some(v) = r.values().iter().find(|v| **v < 1.0 || v.fract() != 0.0) {
                return Err(Error::InvalidVector(format!(
                    "document {} has non-count value {v}",
                    i + 1
                )));
            }
        }
        Ok(Self { rows, labels, dim })
    }

    pub fn rows(&self) -> &[SparseVector] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl SparseText {
    pub fn into_counts(self) -> Result<CountMatrix> {
        CountMatrix::new(self.rows, self.dim, Some(self.labels))
    }

    /// Keeps values as read. Rows are not renormalized.
    pub fn into_dataset(self) -> Result<SparseDataset> {
        SparseDataset::with_labels(self.rows, self.dim, Some(self.labels))
    }

    /// True when every value is a positive integer.
    pub fn looks_like_counts(&self) -> bool {
        self.rows
            .iter()
            .flat_map(|r| r.values())
            .all(|v| *v >= 1.0 && v.fract() == 0.0)
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Parses svmlight-style text from any reader.
pub fn read_sparse_text<R: BufRead>(reader: R) -> Result<SparseText> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut header: Option<(usize, usize)> = None;
    let mut max_term = 0u32;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if rows.is_empty() && header.is_none() {
                let nums: Vec<&str> = rest.split_whitespace().collect();
                if nums.len() != 2 {
                    return Err(parse_err(lineno, "header must be `#N D`"));
                }
                let n = nums[0].parse().map_err(|_| parse_err(lineno, "bad N in header"))?;
                let d = nums[1].parse().map_err(|_| parse_err(lineno, "bad D in header"))?;
                header = Some((n, d));
            }
            continue;
        }

        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: i64 = match label_tok.parse::<i64>() {
            Ok(l) => l,
            Err(_) => label_tok
                .parse::<f64>()
                .ok()
                .filter(|f| f.fract() == 0.0)
                .map(|f| f as i64)
                .ok_or_else(|| parse_err(lineno, format!("bad label `{label_tok}`")))?,
        };

        let mut terms = Vec::new();
        let mut values = Vec::new();
        let mut prev = 0u32;
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected idx:val, got `{tok}`")))?;
            let t: u32 = i.parse().map_err(|_| parse_err(lineno, format!("bad index `{i}`")))?;
            let v: f64 = v.parse().map_err(|_| parse_err(lineno, format!("bad value `{v}`")))?;
            if t == 0 {
                return Err(parse_err(lineno, "indices are 1-based"));
            }
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("non-finite value at index {t}")));
            }
            if t <= prev {
                return Err(Error::NonAscendingIndex { line: lineno, prev, next: t });
            }
            prev = t;
            if v != 0.0 {
                terms.push(t);
                values.push(v);
            }
        }
        max_term = max_term.max(prev);
        rows.push(SparseVector::from_parts_unchecked(terms, values));
        labels.push(label);
    }

    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    let dim = match header {
        Some((n, d)) => {
            if n != rows.len() {
                return Err(parse_err(1, format!("header says N = {n} but {} rows follow", rows.len())));
            }
            if (max_term as usize) > d {
                return Err(parse_err(1, format!("header says D = {d} but index {max_term} occurs")));
            }
            d
        }
        None => max_term as usize,
    };
    Ok(SparseText { rows, labels, dim })
}

pub fn load_sparse_text(path: impl AsRef<Path>) -> Result<SparseText> {
    let file = fs::File::open(path)?;
    read_sparse_text(BufReader::new(file))
}

/// Writes rows with a `#N D` header. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_sparse_text<W: Write>(
    mut out: W,
    rows: &[SparseVector],
    labels: Option<&[i64]>,
    dim: usize,
) -> Result<()> {
    writeln!(out, "#{} {}", rows.len(), dim)?;
    let mut line = String::new();
    for (i, row) in rows.iter().enumerate() {
        line.clear();
        let label = labels.map_or(0, |l| l[i]);
        write!(line, "{label}").unwrap();
        for (t, v) in row.iter() {
            write!(line, " {t}:{v}").unwrap();
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, data: &SparseDataset) -> Result<()> {
    let file = BufWriter::new(fs::File::create(path)?);
    write_sparse_text(file, data.vectors(), data.labels(), data.dim())
}

pub fn save_labels(path: impl AsRef<Path>, labels: &[i64]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for l in labels {
        writeln!(out, "{l}")?;
    }
    out.flush()?;
    Ok(())
}

/// Result of tf-idf weighting.
#[derive(Debug, Clone)]
pub struct TfidfOutput {
    pub dataset: SparseDataset,
    /// 0-based indices (into the input) of documents that lost every term.
    pub removed: Vec<usize>,
}

/// Weights counts by `tf * ln(N / df)` and L2-normalizes each row.
///
/// Terms present in every document get weight zero and vanish. Documents
/// left with no terms are removed and listed in `removed`.
pub fn tfidf_normalize(c: &CountMatrix) -> Result<TfidfOutput> {
    let n = c.len();
    let mut df = vec![0u32; c.dim + 1];
    for row in &c.rows {
        for &t in row.terms() {
            df[t as usize] += 1;
        }
    }
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| if d == 0 { 0.0 } else { (n as f64 / d as f64).ln() })
        .collect();

    let mut vectors = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut removed = Vec::new();
    for (i, row) in c.rows.iter().enumerate() {
        let weighted = SparseVector::from_pairs(row.iter().map(|(t, tf)| (t, tf * idf[t as usize])))?;
        match normalize_l2(&weighted) {
            Ok(v) => {
                vectors.push(v);
                if let Some(l) = &c.labels {
                    labels.push(l[i]);
                }
            }
            Err(Error::ZeroVector) => {
                log::warn!("document {} has no terms left after idf weighting; removed", i + 1);
                removed.push(i);
            }
            Err(e) => return Err(e),
        }
    }
    let labels = c.labels.as_ref().map(|_| labels);
    let dataset = SparseDataset::with_labels(vectors, c.dim, labels)?;
    Ok(TfidfOutput { dataset, removed })
}

/// Parameters of the synthetic corpus generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub dim: usize,
    pub k_true: usize,
    pub avg_nnz: f64,
    pub zipf_exponent: f64,
    /// Expected fraction of each object's terms drawn from its prototype.
    pub cluster_separation: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            dim: 10_000,
            k_true: 20,
            avg_nnz: 59.0,
            zipf_exponent: 1.0,
            cluster_separation: 0.8,
            seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.n == 0 || self.dim == 0 {
            return bad("N and D must be positive");
        }
        if self.k_true == 0 || self.k_true > self.n {
            return bad("k_true must lie in [1, N]");
        }
        if !(self.avg_nnz >= 1.0 && self.avg_nnz <= self.dim as f64) {
            return bad("avg_nnz must lie in [1, D]");
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent > 0.0) {
            return bad("zipf_exponent must be positive");
        }
        if !(self.cluster_separation > 0.0 && self.cluster_separation <= 1.0) {
            return bad("cluster_separation must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Draws `count` distinct indices in `0..n` with Zipf-distributed rank
/// popularity. Falls back to uniform fill once rejection stalls.
fn zipf_distinct<R: Rng>(rng: &mut R, n: usize, exponent: f64, count: usize, taken: &mut HashSet<usize>) -> Vec<usize> {
    let count = count.min(n - taken.len().min(n));
    let zipf = Zipf::new(n as u64, exponent).expect("validated zipf parameters");
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    let budget = 64 * count + 256;
    while out.len() < count && attempts < budget {
        attempts += 1;
        let r = zipf.sample(rng) as usize - 1;
        if taken.insert(r) {
            out.push(r);
        }
    }
    while out.len() < count {
        let r = rng.gen_range(0..n);
        if taken.insert(r) {
            out.push(r);
        }
    }
    out
}

/// Generates a planted-cluster corpus with Zipf term popularity.
///
/// Each of the `k_true` prototypes owns a pool of popular terms in a random
/// order of importance. An object draws about `avg_nnz` distinct terms, each
/// from its prototype's pool with probability `cluster_separation` and from
/// the global background otherwise, and gets small integer counts weighted
/// by prototype importance. Rows come out L2-normalized; labels are 0-based
/// prototype ids.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(SparseDataset, Vec<i64>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.dim;

    // rank -> term id
    let mut popularity: Vec<u32> = (1..=dim as u32).collect();
    popularity.shuffle(&mut rng);

    let pool_size = ((3.0 * spec.avg_nnz).ceil() as usize).clamp(1, dim);
    let prototypes: Vec<Vec<u32>> = (0..spec.k_true)
        .map(|_| {
            let mut taken = HashSet::new();
            let mut pool: Vec<u32> = zipf_distinct(&mut rng, dim, spec.zipf_exponent, pool_size, &mut taken)
                .into_iter()
                .map(|r| popularity[r])
                .collect();
            pool.shuffle(&mut rng);
            pool
        })
        .collect();

    let lo = (spec.avg_nnz * 0.5).ceil().max(1.0) as usize;
    let hi = ((spec.avg_nnz * 1.5).floor() as usize).clamp(lo, dim);
    let mut vectors = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let label = rng.gen_range(0..spec.k_true);
        let pool = &prototypes[label];
        let nnz = rng.gen_range(lo..=hi);
        let from_pool = (0..nnz).filter(|_| rng.gen_bool(spec.cluster_separation)).count().min(pool.len());

        let mut taken_pos = HashSet::new();
        let mut seen_terms = HashSet::with_capacity(nnz);
        let mut pairs = Vec::with_capacity(nnz);
        for pos in zipf_distinct(&mut rng, pool.len(), spec.zipf_exponent, from_pool, &mut taken_pos) {
            let t = pool[pos];
            seen_terms.insert(t);
            let importance = 1.0 + 1.0 / (1.0 + pos as f64).sqrt();
            let tf = 1 + rng.gen_range(0..3) as u32;
            pairs.push((t, tf as f64 * importance));
        }
        let mut taken_rank: HashSet<usize> = HashSet::new();
        let background = nnz - pairs.len();
        let mut added = 0;
        while added < background {
            let ranks = zipf_distinct(&mut rng, dim, spec.zipf_exponent, background - added, &mut taken_rank);
            if ranks.is_empty() {
                break;
            }
            for r in ranks {
                let t = popularity[r];
                if seen_terms.insert(t) {
                    let tf = 1 + rng.gen_range(0..2) as u32;
                    pairs.push((t, tf as f64));
                    added += 1;
                }
            }
        }
        let v = normalize_l2(&SparseVector::from_unsorted(pairs)?)?;
        vectors.push(v);
        labels.push(label as i64);
    }
    let data = SparseDataset::with_labels(vectors, dim, Some(labels.clone()))?;
    Ok((data, labels))
}
