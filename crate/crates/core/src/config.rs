use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clustering backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Full-expression means, every pair evaluated.
    Lloyd,
    /// Full-expression means with the invariant centroid-pair filter.
    LloydIcp,
    /// Inverted file over the mean set.
    Ivf,
    /// Inverted file with the filter applied by a per-posting branch.
    IvfCbicp,
    /// Structured inverted file: the filter is a loop bound.
    Sivf,
}

impl Backend {
    pub const ALL: [Backend; 5] = [Backend::Lloyd, Backend::LloydIcp, Backend::Ivf, Backend::IvfCbicp, Backend::Sivf];

    pub fn name(self) -> &'static str {
        match self {
            Backend::Lloyd => "lloyd",
            Backend::LloydIcp => "lloyd-icp",
            Backend::Ivf => "ivf",
            Backend::IvfCbicp => "ivf-cbicp",
            Backend::Sivf => "sivf",
        }
    }

    /// Whether the backend skips invariant centroid pairs.
    pub fn uses_filter(self) -> bool {
        matches!(self, Backend::LloydIcp | Backend::IvfCbicp | Backend::Sivf)
    }

    pub fn is_dense(self) -> bool {
        matches!(self, Backend::Lloyd | Backend::LloydIcp)
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Backend::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown backend `{s}`")))
    }
}

/// Centroid seeding strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// Uniform sample of `k` distinct objects.
    #[default]
    RandomSample,
    /// k-means++ style seeding with probability proportional to cosine distance.
    Kmeanspp,
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-sample" | "random" => Ok(Init::RandomSample),
            "kmeanspp" | "kmeans++" => Ok(Init::Kmeanspp),
            _ => Err(Error::InvalidConfig(format!("unknown init `{s}`"))),
        }
    }
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Init::RandomSample => "random-sample",
            Init::Kmeanspp => "kmeanspp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub k: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub backend: Backend,
    pub threads: usize,
    pub init: Init,
    /// Copy invariant clusters' means forward instead of recomputing them.
    /// Results are identical either way.
    #[serde(default)]
    pub cache_invariant_means: bool,
}

impl RunConfig {
    pub fn new(k: usize, backend: Backend) -> Self {
        Self {
            k,
            max_iter: 100,
            seed: 0,
            backend,
            threads: 1,
            init: Init::RandomSample,
            cache_invariant_means: false,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.k > n {
            return Err(Error::KTooLarge { k: self.k, n });
        }
        if self.k > u32::MAX as usize {
            return Err(Error::InvalidConfig("k does not fit in 32 bits".into()));
        }
        if self.threads == 0 {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}
