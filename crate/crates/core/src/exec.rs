//! Object-parallel execution of assignment steps.
//!
//! With the `parallel` feature, work is split over a dedicated rayon pool.
//! Each worker owns a private length-`k` accumulator and writes only the
//! output slots of its own objects, so results do not depend on the thread
//! count. Without the feature every executor runs sequentially.

use crate::error::{Error, Result};
use crate::metrics::Counters;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Objects handed to a worker at a time.
#[cfg(feature = "parallel")]
const MIN_CHUNK: usize = 32;

pub struct Executor {
    threads: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor").field("threads", &self.threads).finish()
    }
}

impl Executor {
    pub fn sequential() -> Self {
        Self {
            threads: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// A pool with `threads` workers; `threads == 1` runs inline.
    pub fn new(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        if threads == 1 {
            return Ok(Self::sequential());
        }
        #[cfg(feature = "parallel")]
        {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .thread_name(|i| format!("sivf-worker-{i}"))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(Self { threads, pool: Some(pool) })
        }
        #[cfg(not(feature = "parallel"))]
        {
            log::debug!("built without the `parallel` feature; ignoring threads = {threads}");
            Ok(Self { threads: 1 })
        }
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// Runs `f(i, rho)` for every object `i`, storing the returned cluster id
    /// and similarity in `assign[i]` and `sims[i]`, and sums the counters.
    ///
    /// `rho` is a zeroed accumulator of length `k`; `f` must leave it zeroed.
    pub fn for_each_object<F>(&self, k: usize, assign: &mut [u32], sims: &mut [f64], f: F) -> Counters
    where
        F: Fn(usize, &mut [f64]) -> (u32, f64, Counters) + Sync,
    {
        debug_assert_eq!(assign.len(), sims.len());
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| {
                assign
                    .par_iter_mut()
                    .zip(sims.par_iter_mut())
                    .enumerate()
                    .with_min_len(MIN_CHUNK)
                    .map_init(
                        || vec![0.0; k],
                        |rho, (i, (a, s))| {
                            let (j, sim, c) = f(i, rho);
                            *a = j;
                            *s = sim;
                            c
                        },
                    )
                    .reduce(Counters::default, |x, y| x + y)
            });
        }
        let mut rho = vec![0.0; k];
        let mut total = Counters::default();
        for (i, (a, s)) in assign.iter_mut().zip(sims.iter_mut()).enumerate() {
            let (j, sim, c) = f(i, &mut rho);
            *a = j;
            *s = sim;
            total += c;
        }
        total
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::sequential()
    }
}
