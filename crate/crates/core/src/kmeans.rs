//! Iteration driver shared by all backends, plus the full-expression
//! (Lloyd) assignment step and the pieces every backend uses: seeding,
//! invariance detection, objectives, and the argmax rule.
//!
//! One iteration `r` assigns every object to the most similar centroid of
//! iteration `r - 1`, marks clusters whose membership did not change, and
//! recomputes the means. The run stops at the first iteration where no
//! object moves.
//!
//! Filtered backends skip the pair `(i, j)` when both `j` and the object's
//! previous cluster `a(i)` were invariant. Such a centroid did not move, so
//! its similarity equals last iteration's value, which was no better than
//! the cached similarity to `a(i)`. The argmax is seeded with that cached
//! value at index `a(i)`, which keeps the filtered result identical to a
//! full scan, including lowest-index tie-breaking.

use std::time::Instant;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::config::{Backend, Init, RunConfig};
use crate::error::Result;
use crate::exec::Executor;
use crate::ivf::{build_ivf, ivf_assign, ivf_cbicp_assign, sivf_assign, sivf_update, InvertedMeanFile, StructuredInvertedMeanFile};
use crate::means::{dense_from_members, members_by_cluster, update_dense, MeanSet, SparseMeans};
use crate::metrics::{mem_estimate, Counters, IterationMetrics};
use crate::sparse::{dot_sparse_sparse, DenseMeanMatrix, SparseDataset, SparseVector};

/// Result of one assignment step. Cluster ids are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignOutput {
    pub assign: Vec<u32>,
    /// Similarity of each object to the centroid it was assigned to.
    pub cached_sim: Vec<f64>,
    pub counters: Counters,
}

impl AssignOutput {
    pub(crate) fn with_len(n: usize) -> Self {
        Self { assign: vec![0; n], cached_sim: vec![0.0; n], counters: Counters::default() }
    }
}

/// Previous-iteration state consumed by the filtered backends.
#[derive(Debug, Clone, Copy)]
pub struct FilterState<'a> {
    /// `None` on the first iteration; the filter is then inactive.
    pub prev_assign: Option<&'a [u32]>,
    pub lambda: &'a [bool],
    pub cached_sim: &'a [f64],
}

impl<'a> FilterState<'a> {
    /// First-iteration state: nothing is invariant.
    pub fn initial(lambda: &'a [bool], cached_sim: &'a [f64]) -> Self {
        Self { prev_assign: None, lambda, cached_sim }
    }

    /// The object's previous cluster, if that cluster is invariant.
    #[inline]
    pub fn invariant_owner(&self, i: usize) -> Option<u32> {
        let a = self.prev_assign?[i];
        self.lambda[a as usize].then_some(a)
    }

    pub fn moving_ids(&self) -> Vec<u32> {
        self.lambda
            .iter()
            .enumerate()
            .filter(|(_, l)| !**l)
            .map(|(j, _)| j as u32)
            .collect()
    }
}

/// Strict `>` scan from index 0: the lowest index wins ties.
#[inline]
pub(crate) fn argmax_all(rho: &[f64]) -> (u32, f64) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0u32;
    for (j, &r) in rho.iter().enumerate() {
        if r > best {
            best = r;
            arg = j as u32;
        }
    }
    (arg, best)
}

/// Argmax over the moving centroids plus the invariant owner `a`, whose
/// similarity is taken from the cache. Candidates are visited in ascending
/// id order so ties resolve exactly as in [`argmax_all`].
#[inline]
pub(crate) fn argmax_moving(rho: &[f64], moving: &[u32], a: u32, cached: f64) -> (u32, f64) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = a;
    let mut owner_done = false;
    for &j in moving {
        if !owner_done && a < j {
            if cached > best {
                best = cached;
                arg = a;
            }
            owner_done = true;
        }
        let r = rho[j as usize];
        if r > best {
            best = r;
            arg = j;
        }
    }
    if !owner_done && cached > best {
        best = cached;
        arg = a;
    }
    (arg, best)
}

/// `lambda_j` is true iff no object entered or left cluster `j`. With no
/// previous assignment (first iteration) every flag is false.
pub fn detect_invariant(assign: &[u32], prev_assign: Option<&[u32]>, k: usize) -> Vec<bool> {
    let Some(prev) = prev_assign else {
        return vec![false; k];
    };
    let mut lambda = vec![true; k];
    for (&a, &p) in assign.iter().zip(prev) {
        if a != p {
            lambda[a as usize] = false;
            lambda[p as usize] = false;
        }
    }
    lambda
}

/// Chooses `k` distinct seed objects (0-based indices).
pub fn init_centroids(data: &SparseDataset, cfg: &RunConfig) -> Result<Vec<u32>> {
    let n = data.len();
    cfg.validate(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let picks = match cfg.init {
        Init::RandomSample => rand::seq::index::sample(&mut rng, n, cfg.k)
            .into_iter()
            .map(|i| i as u32)
            .collect(),
        Init::Kmeanspp => kmeanspp(data, cfg.k, &mut rng),
    };
    Ok(picks)
}

/// Seeding with probability proportional to cosine distance `1 - cos` to
/// the nearest seed chosen so far.
fn kmeanspp(data: &SparseDataset, k: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let n = data.len();
    let mut picks = Vec::with_capacity(k);
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    picks.push(first as u32);
    chosen[first] = true;
    let mut dist: Vec<f64> = vec![f64::INFINITY; n];
    while picks.len() < k {
        let last = data.get(*picks.last().unwrap() as usize);
        for (i, d) in dist.iter_mut().enumerate() {
            let cd = (1.0 - dot_sparse_sparse(data.get(i), last)).max(0.0);
            if cd < *d {
                *d = cd;
            }
        }
        let weights: Vec<f64> = dist.iter().zip(&chosen).map(|(d, c)| if *c { 0.0 } else { *d }).collect();
        let next = match WeightedIndex::new(&weights) {
            Ok(w) => w.sample(rng),
            Err(_) => {
                // every remaining object coincides with a seed
                let free: Vec<usize> = (0..n).filter(|i| !chosen[*i]).collect();
                free[rng.gen_range(0..free.len())]
            }
        };
        picks.push(next as u32);
        chosen[next] = true;
    }
    picks
}

/// Assignment against a full-expression mean set. With `filter`, pairs whose
/// centroid and owner cluster are both invariant are skipped; each skipped
/// candidate still costs one flag check, counted in `branch_evals`.
pub fn assign_full(
    exec: &Executor,
    data: &SparseDataset,
    means: &DenseMeanMatrix,
    filter: Option<&FilterState<'_>>,
) -> AssignOutput {
    let n = data.len();
    let k = means.k();
    let mut out = AssignOutput::with_len(n);
    let counters = exec.for_each_object(0, &mut out.assign, &mut out.cached_sim, |i, _| {
        let x = data.get(i);
        let nnz = x.nnz() as u64;
        let owner = filter.and_then(|f| f.invariant_owner(i).map(|a| (f, a)));
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0u32;
        match owner {
            Some((f, a)) => {
                let mut evaluated = 0u64;
                for j in 0..k {
                    let s = if j == a as usize {
                        f.cached_sim[i]
                    } else if f.lambda[j] {
                        continue;
                    } else {
                        evaluated += 1;
                        means.unit_dot(j, x)
                    };
                    if s > best {
                        best = s;
                        arg = j as u32;
                    }
                }
                (arg, best, Counters { pair_evals: evaluated, madds: evaluated * nnz, branch_evals: k as u64 })
            }
            None => {
                for j in 0..k {
                    let s = means.unit_dot(j, x);
                    if s > best {
                        best = s;
                        arg = j as u32;
                    }
                }
                (arg, best, Counters { pair_evals: k as u64, madds: k as u64 * nnz, branch_evals: 0 })
            }
        }
    });
    out.counters = counters;
    out
}

/// `(sse, cos_sum)`: squared Euclidean error against the raw means and the
/// summed cosine similarity against the unit means.
pub fn objective(data: &SparseDataset, assign: &[u32], means: &dyn MeanSet) -> (f64, f64) {
    let mut sse = 0.0;
    let mut cos_sum = 0.0;
    for (x, &a) in data.vectors().iter().zip(assign) {
        let j = a as usize;
        sse += x.squared_norm() - 2.0 * means.raw_dot(j, x) + means.raw_sq_norm(j);
        cos_sum += means.unit_dot(j, x);
    }
    (sse, cos_sum)
}

/// Assignment state carried between iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub r: usize,
    pub assign: Vec<u32>,
    pub prev_assign: Vec<u32>,
    pub lambda: Vec<bool>,
    pub cached_sim: Vec<f64>,
}

enum MeanStore {
    Dense(DenseMeanMatrix),
    Inverted { means: SparseMeans, ivf: InvertedMeanFile },
    Structured { means: SparseMeans, sivf: StructuredInvertedMeanFile },
}

impl MeanStore {
    fn as_mean_set(&self) -> &dyn MeanSet {
        match self {
            MeanStore::Dense(m) => m,
            MeanStore::Inverted { means, .. } | MeanStore::Structured { means, .. } => means,
        }
    }

    fn nnz(&self) -> usize {
        match self {
            MeanStore::Dense(m) => m.nnz(),
            MeanStore::Inverted { means, .. } | MeanStore::Structured { means, .. } => means.nnz(),
        }
    }
}

/// Deliberate corruption for exercising the comparison tooling.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Zero every structured boundary once some but not all clusters are
    /// invariant.
    ZeroFrontBoundary,
}

/// Stepwise k-means run over one dataset.
pub struct Engine<'a> {
    data: &'a SparseDataset,
    cfg: RunConfig,
    exec: Executor,
    state: ClusterState,
    store: MeanStore,
    metrics: Vec<IterationMetrics>,
    converged: bool,
    fault: Option<Fault>,
}

impl<'a> Engine<'a> {
    pub fn new(data: &'a SparseDataset, cfg: RunConfig) -> Result<Self> {
        let exec = Executor::new(cfg.threads)?;
        Self::with_executor(data, cfg, exec)
    }

    pub fn with_executor(data: &'a SparseDataset, cfg: RunConfig, exec: Executor) -> Result<Self> {
        let seeds = init_centroids(data, &cfg)?;
        let members: Vec<Vec<u32>> = seeds.iter().map(|&i| vec![i]).collect();
        let k = cfg.k;
        let store = match cfg.backend {
            Backend::Lloyd | Backend::LloydIcp => MeanStore::Dense(dense_from_members(data, &members)),
            Backend::Ivf | Backend::IvfCbicp => {
                let means = SparseMeans::from_members(data, &members);
                let ivf = build_ivf(means.unit(), data.dim());
                MeanStore::Inverted { means, ivf }
            }
            Backend::Sivf => {
                let means = SparseMeans::from_members(data, &members);
                let sivf = StructuredInvertedMeanFile::build(means.unit(), &vec![false; k], data.dim());
                MeanStore::Structured { means, sivf }
            }
        };
        let n = data.len();
        Ok(Self {
            data,
            cfg,
            exec,
            state: ClusterState {
                r: 0,
                assign: vec![0; n],
                prev_assign: vec![0; n],
                lambda: vec![false; k],
                cached_sim: vec![0.0; n],
            },
            store,
            metrics: Vec::new(),
            converged: false,
            fault: None,
        })
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = Some(fault);
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ClusterState {
        &self.state
    }

    pub fn metrics(&self) -> &[IterationMetrics] {
        &self.metrics
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// The structured inverted file, for the structured backend.
    pub fn structure(&self) -> Option<&StructuredInvertedMeanFile> {
        match &self.store {
            MeanStore::Structured { sivf, .. } => Some(sivf),
            _ => None,
        }
    }

    /// Current unit means.
    pub fn unit_means(&self) -> Vec<SparseVector> {
        match &self.store {
            MeanStore::Dense(m) => (0..m.k()).map(|j| m.unit_sparse(j)).collect(),
            MeanStore::Inverted { means, .. } | MeanStore::Structured { means, .. } => means.unit().to_vec(),
        }
    }

    /// Current raw (unnormalized) means.
    pub fn raw_means(&self) -> Vec<SparseVector> {
        match &self.store {
            MeanStore::Dense(m) => (0..m.k()).map(|j| m.raw_sparse(j)).collect(),
            MeanStore::Inverted { means, .. } | MeanStore::Structured { means, .. } => means.raw().to_vec(),
        }
    }

    pub fn mean_set(&self) -> &dyn MeanSet {
        self.store.as_mean_set()
    }

    /// Runs one assignment + update iteration. Stepping past convergence is
    /// allowed and performs the (filtered) work of a fixpoint iteration.
    pub fn step(&mut self) -> Result<&IterationMetrics> {
        let start = Instant::now();
        let data = self.data;
        let k = self.cfg.k;
        let n = data.len();
        let r = self.state.r + 1;
        let prev_assign = (r > 1).then_some(self.state.assign.as_slice());
        let filter = FilterState { prev_assign, lambda: &self.state.lambda, cached_sim: &self.state.cached_sim };

        let (out, lambda) = match &self.store {
            MeanStore::Dense(m) => {
                let f = self.cfg.backend.uses_filter().then_some(&filter);
                let out = assign_full(&self.exec, data, m, f);
                let lambda = detect_invariant(&out.assign, prev_assign, k);
                (out, lambda)
            }
            MeanStore::Inverted { ivf, .. } => {
                let out = if self.cfg.backend == Backend::IvfCbicp {
                    ivf_cbicp_assign(&self.exec, data, ivf, &filter)
                } else {
                    ivf_assign(&self.exec, data, ivf)
                };
                let lambda = detect_invariant(&out.assign, prev_assign, k);
                (out, lambda)
            }
            MeanStore::Structured { sivf, .. } => sivf_assign(&self.exec, data, sivf, &filter)?,
        };

        let moved_objects = match prev_assign {
            Some(prev) => out.assign.iter().zip(prev).filter(|(a, b)| a != b).count(),
            None => n,
        };
        let converged = prev_assign.is_some_and(|p| p == out.assign.as_slice());

        let reuse = self.cfg.cache_invariant_means;
        let members = members_by_cluster(&out.assign, k);
        let empty_clusters = members.iter().filter(|m| m.is_empty()).count();
        match &mut self.store {
            MeanStore::Dense(m) => update_dense(data, &members, m, &lambda, reuse),
            MeanStore::Inverted { means, ivf } => {
                *means = SparseMeans::update(data, &members, means, &lambda, reuse);
                *ivf = build_ivf(means.unit(), data.dim());
            }
            MeanStore::Structured { means, sivf } => {
                let (s, m) = sivf_update(data, &out.assign, &lambda, means, reuse);
                *sivf = s;
                *means = m;
                let mixed = lambda.iter().any(|l| *l) && lambda.iter().any(|l| !*l);
                if self.fault == Some(Fault::ZeroFrontBoundary) && mixed {
                    sivf.corrupt_front_boundaries();
                }
            }
        }

        let (sse, cos_sum) = objective(data, &out.assign, self.store.as_mean_set());
        let mem = mem_estimate(
            self.cfg.backend,
            n as u64,
            data.dim() as u64,
            k as u64,
            data.nnz() as u64,
            self.store.nnz() as u64,
        );

        let c = out.counters;
        let metrics = IterationMetrics {
            r,
            pair_evals: c.pair_evals,
            norm_pair_evals: c.pair_evals as f64 / (n as f64 * k as f64),
            madds: c.madds,
            branch_evals: c.branch_evals,
            invariant_clusters: lambda.iter().filter(|l| **l).count(),
            moved_objects,
            empty_clusters,
            cos_sum,
            sse,
            elapsed_ns: start.elapsed().as_nanos() as u64,
            mem_estimate_bytes: mem.total(),
        };

        let state = &mut self.state;
        state.prev_assign = std::mem::replace(&mut state.assign, out.assign);
        state.cached_sim = out.cached_sim;
        state.lambda = lambda;
        state.r = r;
        self.converged = converged;
        self.metrics.push(metrics);
        Ok(self.metrics.last().unwrap())
    }

    /// Steps until convergence or `max_iter` iterations.
    pub fn run_to_end(&mut self) -> Result<()> {
        while !self.converged && self.state.r < self.cfg.max_iter {
            self.step()?;
        }
        Ok(())
    }

    pub fn into_result(self) -> RunResult {
        RunResult {
            unit_means: self.unit_means(),
            raw_means: self.raw_means(),
            iterations: self.state.r,
            converged: self.converged,
            assign: self.state.assign,
            metrics: self.metrics,
        }
    }
}

/// Final state of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// 0-based cluster id per object.
    pub assign: Vec<u32>,
    pub unit_means: Vec<SparseVector>,
    pub raw_means: Vec<SparseVector>,
    pub metrics: Vec<IterationMetrics>,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs k-means to convergence (or `max_iter`).
pub fn run(data: &SparseDataset, cfg: &RunConfig) -> Result<RunResult> {
    let mut engine = Engine::new(data, cfg.clone())?;
    engine.run_to_end()?;
    Ok(engine.into_result())
}
