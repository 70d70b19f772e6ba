//! Multi-threaded execution of a [`FeaturePlan`].
//!
//! Every `(cell, scale, k)` unit writes its own disjoint block of the output
//! buffer and its floating-point work is independent of scheduling, so the
//! result is bitwise identical for any worker count.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use hsse_core::embed::{target_dim_rule, BuiltinProvider, ExpressionMatrix, ScaleEmbedding};
use hsse_core::features::{DegeneratePatch, FeaturePlan, FeatureRun, PipelineConfig};
use hsse_core::Error;
use rayon::prelude::*;

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {workers} worker threads: {e}")))
}

/// Builtin embeddings for all configured scales, computed concurrently and
/// returned in scale order.
pub fn builtin_embeddings_parallel(
    x: &ExpressionMatrix,
    cfg: &PipelineConfig,
    pool: &rayon::ThreadPool,
) -> Result<Vec<ScaleEmbedding>, Error> {
    let provider = BuiltinProvider::new(x)?;
    let dim = cfg.embedding_dim.unwrap_or_else(|| target_dim_rule(x.n_cells()));
    pool.install(|| cfg.scales.par_iter().map(|&s| provider.embed(s, dim)).collect())
}

/// Runs every unit of `plan` on `pool`.
///
/// The first failure stops the remaining units; the reported error is the
/// one with the lowest unit index among those that actually failed. When
/// `deadline` passes first the run ends with [`Error::Cancelled`].
pub fn run_plan(
    plan: &FeaturePlan,
    cell_ids: Vec<String>,
    pool: &rayon::ThreadPool,
    deadline: Option<Instant>,
) -> Result<FeatureRun, Error> {
    let width = plan.config().block_width();
    let mut values = vec![0.0; plan.n_units() * width];
    let stop = AtomicBool::new(false);

    let outcomes: Vec<(usize, Result<DegeneratePatch, Error>)> = std::thread::scope(|scope| {
        let (done_tx, done_rx) = mpsc::channel::<()>();
        if let Some(deadline) = deadline {
            let stop = &stop;
            scope.spawn(move || {
                let wait = deadline.saturating_duration_since(Instant::now());
                if let Err(mpsc::RecvTimeoutError::Timeout) = done_rx.recv_timeout(wait) {
                    stop.store(true, Ordering::Relaxed);
                }
            });
        }
        let outcomes = pool.install(|| {
            values
                .par_chunks_mut(width)
                .enumerate()
                .filter_map(|(index, block)| match plan.compute_block(index, block, Some(&stop)) {
                    Ok(None) => None,
                    Ok(Some(patch)) => Some((index, Ok(patch))),
                    Err(e) => {
                        stop.store(true, Ordering::Relaxed);
                        Some((index, Err(e)))
                    }
                })
                .collect()
        });
        drop(done_tx);
        outcomes
    });

    let mut degenerate = Vec::new();
    let mut cancelled = false;
    for (_, outcome) in outcomes {
        match outcome {
            Ok(patch) => degenerate.push(patch),
            Err(Error::Cancelled) => cancelled = true,
            Err(e) => return Err(e),
        }
    }
    if cancelled {
        return Err(Error::Cancelled);
    }
    plan.assemble(cell_ids, values, degenerate)
}
