//! Rayon-backed certificate batches and grid scans.
//!
//! `INVARISET_THREADS` caps the worker count. Results do not depend on it:
//! every solve is seeded independently and output order is preserved.

use std::sync::Arc;

use invariset_core::certify::solve_certificate_refs;
use invariset_core::oracle::GridScan;
use invariset_core::{BatchSolver, Certificate, Error, HomForm, InvariantSetDescription, SolverOptions};
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

pub const THREADS_ENV: &str = "INVARISET_THREADS";

/// The thread cap from `INVARISET_THREADS`, if set to a positive integer.
pub fn thread_limit() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

#[derive(Clone)]
pub struct RayonSolver {
    pool: Arc<ThreadPool>,
}

impl RayonSolver {
    pub fn with_threads(threads: Option<usize>) -> Self {
        let mut builder = ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n);
        }
        Self { pool: Arc::new(builder.build().expect("thread pool")) }
    }

    pub fn from_env() -> Self {
        Self::with_threads(thread_limit())
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    /// Membership verdict at every grid point, in the order of [`GridScan::point`].
    pub fn grid_scan(
        &self,
        desc: &InvariantSetDescription,
        lo: &[f64],
        hi: &[f64],
        resolution: usize,
    ) -> invariset_core::Result<GridScan> {
        if lo.len() != desc.n() || hi.len() != desc.n() {
            return Err(Error::DimensionMismatch { expected: desc.n(), found: lo.len().max(hi.len()) });
        }
        let count = GridScan::point_count(lo.len(), resolution);
        let verdicts = self.install(|| {
            (0..count)
                .into_par_iter()
                .map(|i| desc.contains(&GridScan::point(lo, hi, resolution, i)))
                .collect::<invariset_core::Result<Vec<bool>>>()
        })?;
        Ok(GridScan { lo: lo.to_vec(), hi: hi.to_vec(), resolution, verdicts })
    }
}

impl std::fmt::Debug for RayonSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RayonSolver").field("threads", &self.threads()).finish()
    }
}

impl BatchSolver for RayonSolver {
    fn solve_batch(
        &self,
        targets: &[&HomForm],
        family: &[&HomForm],
        opts: &SolverOptions,
    ) -> invariset_core::Result<Vec<Certificate>> {
        if targets.len() < 2 {
            return targets.iter().map(|t| solve_certificate_refs(t, family, opts)).collect();
        }
        self.install(|| targets.par_iter().map(|t| solve_certificate_refs(t, family, opts)).collect())
    }
}
