use std::time::Instant;

use cvxreg_core::admm::{Clock, EdgeSweep, Sequential};
use cvxreg_core::local_qcqp::QcqpError;
use rayon::prelude::*;

/// Environment variable consulted when `--workers` is not given.
pub const WORKERS_ENV: &str = "CVXREG_WORKERS";

/// `--workers`, then `CVXREG_WORKERS`, then the machine's parallelism.
pub fn resolve_workers(flag: Option<usize>) -> Result<usize, String> {
    let workers = match flag {
        Some(w) => w,
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| format!("{WORKERS_ENV}={v:?} is not a positive integer"))?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if workers == 0 {
        return Err("worker count must be at least 1".into());
    }
    Ok(workers)
}

/// Edge sweep on a dedicated rayon pool. Each edge writes only its own slot, so the result
/// does not depend on the worker count.
pub struct PoolSweep {
    pool: Option<rayon::ThreadPool>,
}

impl PoolSweep {
    pub fn new(workers: usize) -> Result<Self, String> {
        let pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| e.to_string())?,
            )
        } else {
            None
        };
        Ok(Self { pool })
    }
}

impl EdgeSweep for PoolSweep {
    fn sweep(
        &self,
        stride: usize,
        out: &mut [f64],
        solve: &(dyn Fn(usize, &mut [f64]) -> Result<(), QcqpError> + Sync),
    ) -> Result<(), (usize, QcqpError)> {
        let Some(pool) = &self.pool else {
            return Sequential.sweep(stride, out, solve);
        };
        pool.install(|| {
            out.par_chunks_mut(stride)
                .enumerate()
                .filter_map(|(e, slot)| solve(e, slot).err().map(|err| (e, err)))
                .min_by_key(|(e, _)| *e)
                .map_or(Ok(()), Err)
        })
    }
}

/// Seconds since construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}
