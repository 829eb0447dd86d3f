#![allow(dead_code)]

use sivf::ingest::{generate_synthetic, SynthSpec};
use sivf::{Backend, RunConfig, SparseDataset};

/// N=2000, D=10000, 20 planted clusters, ~59 terms per object, seed 42.
pub fn standard_fixture() -> SparseDataset {
    let spec = SynthSpec { n: 2000, dim: 10_000, k_true: 20, avg_nnz: 59.0, seed: 42, ..SynthSpec::default() };
    generate_synthetic(&spec).unwrap().0
}

pub fn random_instance(n: usize, dim: usize, k_true: usize, seed: u64) -> SparseDataset {
    let spec = SynthSpec {
        n,
        dim,
        k_true,
        avg_nnz: 25.0,
        cluster_separation: 0.6,
        seed,
        ..SynthSpec::default()
    };
    generate_synthetic(&spec).unwrap().0
}

pub fn config(k: usize, backend: Backend, seed: u64, threads: usize) -> RunConfig {
    RunConfig { max_iter: 200, seed, threads, ..RunConfig::new(k, backend) }
}
