//! File formats, configuration, the parallel executor and the `hsse`
//! command line around [`hsse_core`].

pub mod cli;
pub mod config;
pub mod io;
pub mod parallel;

use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use hsse_core::embed::{ExpressionMatrix, ScaleEmbedding};
use hsse_core::features::{EmbeddingProvider, FeaturePlan, FeatureRun, PipelineConfig};

/// Per-scale embeddings from the configured provider: computed with the
/// builtin provider on `pool`, or read from `embedding_s{scale}.csv` files.
pub fn scale_embeddings(
    x: &ExpressionMatrix,
    cfg: &PipelineConfig,
    pool: &rayon::ThreadPool,
) -> anyhow::Result<Vec<ScaleEmbedding>> {
    match &cfg.embedding_provider {
        EmbeddingProvider::Builtin => {
            parallel::builtin_embeddings_parallel(x, cfg, pool).context("builtin embedding failed")
        }
        EmbeddingProvider::External(dir) => cfg
            .scales
            .iter()
            .map(|&s| Ok(io::read_embedding(&io::embedding_path(Path::new(dir), s), s, x.n_cells())?))
            .collect(),
    }
}

/// Wall-clock seconds of the two compute stages of [`extract_features`].
#[derive(Debug, Clone, Copy, Default)]
pub struct StageSeconds {
    pub embed: f64,
    pub features: f64,
}

/// The full pipeline on `cfg.workers` threads.
///
/// Produces the same values as [`hsse_core::features::hsse_features`] for
/// any worker count; a `deadline` turns an overlong run into
/// [`hsse_core::Error::Cancelled`].
pub fn extract_features(
    x: &ExpressionMatrix,
    cfg: &PipelineConfig,
    deadline: Option<Instant>,
) -> anyhow::Result<(FeatureRun, StageSeconds)> {
    cfg.validate_for(x.n_cells())?;
    let pool = parallel::thread_pool(cfg.workers)?;
    let t0 = Instant::now();
    let embeddings = scale_embeddings(x, cfg, &pool)?;
    let t1 = Instant::now();
    let plan = FeaturePlan::from_embeddings(cfg.clone(), &embeddings)?;
    let run = parallel::run_plan(&plan, x.cell_ids().to_vec(), &pool, deadline)?;
    for patch in &run.degenerate {
        log::warn!(
            "cell {} ({}), scale {}, k {}: all neighbors coincide; features set to zero",
            patch.cell,
            x.cell_ids()[patch.cell],
            patch.scale,
            patch.k
        );
    }
    let seconds = StageSeconds {
        embed: (t1 - t0).as_secs_f64(),
        features: t1.elapsed().as_secs_f64(),
    };
    Ok((run, seconds))
}
