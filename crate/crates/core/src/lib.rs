//! Sparse spherical k-means with inverted-file mean sets.
//!
//! Five interchangeable backends produce identical assignments:
//!
//! | backend     | mean set                    | invariant-pair filter         |
//! |-------------|-----------------------------|-------------------------------|
//! | `lloyd`     | dense `k x D` matrix        | none                          |
//! | `lloyd-icp` | dense `k x D` matrix        | per-centroid flag check       |
//! | `ivf`       | inverted file               | none                          |
//! | `ivf-cbicp` | inverted file               | branch on every posting entry |
//! | `sivf`      | structured inverted file    | loop bound per term           |
//!
//! ```
//! use sivf::{generate_synthetic, run, Backend, RunConfig, SynthSpec};
//!
//! let spec = SynthSpec { n: 200, dim: 1000, k_true: 5, avg_nnz: 20.0, ..SynthSpec::default() };
//! let (data, _labels) = generate_synthetic(&spec).unwrap();
//! let result = run(&data, &RunConfig::new(5, Backend::Sivf)).unwrap();
//! assert!(result.converged);
//! ```

pub mod config;
pub mod error;
pub mod exec;
pub mod ingest;
pub mod ivf;
pub mod kmeans;
pub mod means;
pub mod metrics;
pub mod oracle;
pub mod sparse;

pub use config::{Backend, Init, RunConfig};
pub use error::{Error, Result};
pub use exec::Executor;
pub use ingest::{generate_synthetic, load_sparse_text, tfidf_normalize, CountMatrix, SynthSpec};
pub use ivf::{build_ivf, ivf_assign, ivf_cbicp_assign, sivf_assign, sivf_update, InvertedMeanFile, StructuredInvertedMeanFile};
pub use kmeans::{assign_full, detect_invariant, init_centroids, objective, run, Engine, RunResult};
pub use means::SparseMeans;
pub use metrics::{mem_estimate, pair_eval_count, IterationMetrics};
pub use sparse::{dot_sparse_dense, dot_sparse_sparse, normalize_l2, DenseMeanMatrix, SparseDataset, SparseVector};
