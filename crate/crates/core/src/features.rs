//! Per-cell feature matrix over scales, neighborhood sizes, filtration
//! segments and Laplacian degrees.
//!
//! The unit of work is one `(cell, scale, k)` patch. Its statistics fill one
//! contiguous block of the cell's feature row, so units can be evaluated in
//! any order, or concurrently, into disjoint slices of the output.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicBool, Ordering};

use crate::complex::{build_rips, uniform_segments, MaxRadius};
use crate::embed::{
    knn_neighborhood, pairwise_distances, target_dim_rule, BuiltinProvider, DistanceMatrix,
    ExpressionMatrix, Metric, ScaleEmbedding,
};
use crate::linalg::Matrix;
use crate::psl::{persistent_laplacian, spectral_stats, spectral_stats_nonzero, spectrum, STAT_NAMES};
use crate::sheaf::{build_sheaf, median_eta, SheafParams, VertexLabeling};
use crate::{Error, Result};

pub const DEFAULT_SCALES: [usize; 5] = [5, 14, 25, 37, 50];
pub const DEFAULT_K_SIZES: [usize; 10] = [5, 10, 15, 20, 30, 40, 50, 60, 70, 80];
pub const DEFAULT_SEGMENTS: usize = 5;
pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingProvider {
    Builtin,
    /// Directory of `embedding_s{scale}.csv` files.
    External(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub scales: Vec<usize>,
    pub k_sizes: Vec<usize>,
    pub segments: usize,
    pub alpha: f64,
    pub metric: Metric,
    pub degrees: Vec<usize>,
    /// Summarize only the nonzero eigenvalues.
    pub nonzero_only: bool,
    /// Fixed kernel scale instead of the per-patch median; may be infinite.
    pub eta_override: Option<f64>,
    /// Builtin embedding dimension; defaults to [`target_dim_rule`].
    pub embedding_dim: Option<usize>,
    pub embedding_provider: EmbeddingProvider,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scales: DEFAULT_SCALES.to_vec(),
            k_sizes: DEFAULT_K_SIZES.to_vec(),
            segments: DEFAULT_SEGMENTS,
            alpha: DEFAULT_ALPHA,
            metric: Metric::Chordal,
            degrees: vec![0, 1],
            nonzero_only: false,
            eta_override: None,
            embedding_dim: None,
            embedding_provider: EmbeddingProvider::Builtin,
            workers: 1,
        }
    }
}

fn strictly_increasing(xs: &[usize]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

impl PipelineConfig {
    /// Checks the configuration on its own.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.scales.is_empty() || !strictly_increasing(&self.scales) {
            return bad(format!("scales must be non-empty and strictly increasing: {:?}", self.scales));
        }
        if self.k_sizes.is_empty() || !strictly_increasing(&self.k_sizes) || self.k_sizes[0] == 0 {
            return bad(format!(
                "k sizes must be positive, non-empty and strictly increasing: {:?}",
                self.k_sizes
            ));
        }
        if self.segments == 0 {
            return bad("segment count must be at least 1".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be finite and nonnegative, got {}", self.alpha));
        }
        if self.degrees.is_empty() || !strictly_increasing(&self.degrees) || self.degrees.iter().any(|&q| q > 1) {
            return bad(format!("degrees must be a non-empty subset of {{0, 1}}: {:?}", self.degrees));
        }
        if let Some(eta) = self.eta_override {
            if !(eta > 0.0) {
                return bad(format!("eta override must be positive, got {eta}"));
            }
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }

    /// Checks the configuration against a dataset of `cells` cells.
    pub fn validate_for(&self, cells: usize) -> Result<()> {
        self.validate()?;
        let k_max = *self.k_sizes.last().expect("validated non-empty");
        if k_max >= cells {
            return Err(Error::InvalidArgument(format!(
                "largest neighborhood size {k_max} must be below the cell count {cells}"
            )));
        }
        Ok(())
    }

    /// Number of feature columns: `|S| · |K| · L · |degrees| · 5`.
    pub fn feature_dim(&self) -> usize {
        self.scales.len() * self.k_sizes.len() * self.block_width()
    }

    /// Columns contributed by one `(cell, scale, k)` patch.
    pub fn block_width(&self) -> usize {
        self.segments * self.degrees.len() * STAT_NAMES.len()
    }
}

/// Column names `s{scale}_k{k}_seg{ℓ}_q{q}_{stat}` in canonical order
/// scale → k → segment → degree → statistic; segments count from 1.
pub fn feature_header(cfg: &PipelineConfig) -> Vec<String> {
    let mut names = Vec::with_capacity(cfg.feature_dim());
    for s in &cfg.scales {
        for k in &cfg.k_sizes {
            for l in 1..=cfg.segments {
                for q in &cfg.degrees {
                    for stat in STAT_NAMES {
                        names.push(format!("s{s}_k{k}_seg{l}_q{q}_{stat}"));
                    }
                }
            }
        }
    }
    names
}

/// Parsed form of a feature column name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnKey<'a> {
    pub scale: usize,
    pub k: usize,
    pub segment: usize,
    pub degree: usize,
    pub stat: &'a str,
}

pub fn parse_column_name(name: &str) -> Option<ColumnKey<'_>> {
    let mut parts = name.splitn(5, '_');
    let mut num = |prefix: &str| parts.next()?.strip_prefix(prefix)?.parse::<usize>().ok();
    let scale = num("s")?;
    let k = num("k")?;
    let segment = num("seg")?;
    let degree = num("q")?;
    let stat = parts.next()?;
    STAT_NAMES.contains(&stat).then_some(ColumnKey {
        scale,
        k,
        segment,
        degree,
        stat,
    })
}

/// Cells × features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub cell_ids: Vec<String>,
    pub columns: Vec<String>,
    /// `cell_ids.len() × columns.len()`, row-major.
    pub values: Matrix,
}

impl FeatureMatrix {
    pub fn row(&self, cell: usize) -> &[f64] {
        self.values.row(cell)
    }

    /// Keeps the columns whose scale and neighborhood size are listed; used
    /// for sweeps over the number of scales or neighborhood sizes.
    pub fn restrict(&self, scales: &[usize], k_sizes: &[usize]) -> FeatureMatrix {
        let keep: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .filter(|(_, name)| {
                parse_column_name(name).is_some_and(|key| scales.contains(&key.scale) && k_sizes.contains(&key.k))
            })
            .map(|(j, _)| j)
            .collect();
        let rows: Vec<usize> = (0..self.cell_ids.len()).collect();
        FeatureMatrix {
            cell_ids: self.cell_ids.clone(),
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            values: self.values.select(&rows, &keep),
        }
    }
}

/// A patch whose local distances are all zero; its block is zero-filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegeneratePatch {
    pub cell: usize,
    pub scale: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRun {
    pub features: FeatureMatrix,
    /// Degenerate patches in unit order.
    pub degenerate: Vec<DegeneratePatch>,
}

/// Identifies one `(cell, scale, k)` patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkUnit {
    pub cell: usize,
    pub scale_index: usize,
    pub k_index: usize,
}

/// Everything needed to evaluate work units: the configuration and one
/// distance matrix per scale.
#[derive(Debug, Clone)]
pub struct FeaturePlan {
    cfg: PipelineConfig,
    distances: Vec<DistanceMatrix>,
}

impl FeaturePlan {
    /// `distances[i]` belongs to `cfg.scales[i]`.
    pub fn new(cfg: PipelineConfig, distances: Vec<DistanceMatrix>) -> Result<Self> {
        if distances.len() != cfg.scales.len() {
            return Err(Error::InvalidArgument(format!(
                "{} distance matrices for {} scales",
                distances.len(),
                cfg.scales.len()
            )));
        }
        let m = distances.first().map_or(0, DistanceMatrix::size);
        if distances.iter().any(|d| d.size() != m) {
            return Err(Error::InvalidArgument("distance matrices differ in size".into()));
        }
        cfg.validate_for(m)?;
        Ok(Self { cfg, distances })
    }

    /// Builds the per-scale distances from embeddings given in scale order.
    pub fn from_embeddings(cfg: PipelineConfig, embeddings: &[ScaleEmbedding]) -> Result<Self> {
        for (e, &s) in embeddings.iter().zip(&cfg.scales) {
            if e.scale != s {
                return Err(Error::InvalidArgument(format!(
                    "embedding for scale {} supplied where scale {s} was expected",
                    e.scale
                )));
            }
        }
        let distances = embeddings
            .iter()
            .map(|e| pairwise_distances(e, cfg.metric))
            .collect::<Result<Vec<_>>>()?;
        Self::new(cfg, distances)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn n_cells(&self) -> usize {
        self.distances[0].size()
    }

    pub fn n_units(&self) -> usize {
        self.n_cells() * self.cfg.scales.len() * self.cfg.k_sizes.len()
    }

    /// Unit `index` owns block `index` of width [`PipelineConfig::block_width`]
    /// in the row-major feature buffer.
    pub fn unit(&self, index: usize) -> WorkUnit {
        let nk = self.cfg.k_sizes.len();
        let per_cell = self.cfg.scales.len() * nk;
        WorkUnit {
            cell: index / per_cell,
            scale_index: (index % per_cell) / nk,
            k_index: index % nk,
        }
    }

    /// Evaluates unit `index` into `out`, which must have length
    /// [`PipelineConfig::block_width`].
    ///
    /// Returns the patch if it was degenerate. `cancel` is polled between
    /// segments.
    pub fn compute_block(
        &self,
        index: usize,
        out: &mut [f64],
        cancel: Option<&AtomicBool>,
    ) -> Result<Option<DegeneratePatch>> {
        let unit = self.unit(index);
        let scale = self.cfg.scales[unit.scale_index];
        let k = self.cfg.k_sizes[unit.k_index];
        self.patch_block(unit, out, cancel).map_err(|e| match e {
            Error::Cancelled => Error::Cancelled,
            other => Error::Patch {
                cell: unit.cell,
                scale,
                k,
                source: Box::new(other),
            },
        })
    }

    fn patch_block(
        &self,
        unit: WorkUnit,
        out: &mut [f64],
        cancel: Option<&AtomicBool>,
    ) -> Result<Option<DegeneratePatch>> {
        let cfg = &self.cfg;
        assert_eq!(out.len(), cfg.block_width(), "output block has the wrong width");
        let cancelled = || cancel.is_some_and(|c| c.load(Ordering::Relaxed));
        if cancelled() {
            return Err(Error::Cancelled);
        }
        let k = cfg.k_sizes[unit.k_index];
        let dist = &self.distances[unit.scale_index];
        let hood = knn_neighborhood(dist, unit.cell, k)?;
        let local = dist.local(&hood.members)?;
        let Some(r_max) = local.max_positive() else {
            out.fill(0.0);
            return Ok(Some(DegeneratePatch {
                cell: unit.cell,
                scale: cfg.scales[unit.scale_index],
                k,
            }));
        };
        let complex = build_rips(&local, MaxRadius::Fixed(r_max), 2)?;
        let eta = match cfg.eta_override {
            Some(eta) => eta,
            None => median_eta(&local)?,
        };
        let labels = VertexLabeling::centered(hood.members.len(), 0)?;
        let sheaf = build_sheaf(&complex, &local, &labels, SheafParams::new(eta, cfg.alpha)?)?;

        let mut chunks = out.chunks_exact_mut(STAT_NAMES.len());
        for interval in uniform_segments(r_max, cfg.segments)? {
            if cancelled() {
                return Err(Error::Cancelled);
            }
            for &q in &cfg.degrees {
                let op = persistent_laplacian(&sheaf, interval, q)?;
                let spec = spectrum(&op)?;
                let stats = if cfg.nonzero_only {
                    spectral_stats_nonzero(&spec)
                } else {
                    spectral_stats(&spec)
                };
                chunks
                    .next()
                    .expect("block width matches segments × degrees")
                    .copy_from_slice(&stats.to_array());
            }
        }
        Ok(None)
    }

    /// Evaluates every unit in order on the calling thread.
    pub fn run_sequential(&self, cell_ids: Vec<String>, cancel: Option<&AtomicBool>) -> Result<FeatureRun> {
        let width = self.cfg.block_width();
        let mut values = vec![0.0; self.n_cells() * self.cfg.feature_dim()];
        let mut degenerate = Vec::new();
        for (index, block) in values.chunks_exact_mut(width).enumerate() {
            if let Some(patch) = self.compute_block(index, block, cancel)? {
                degenerate.push(patch);
            }
        }
        self.assemble(cell_ids, values, degenerate)
    }

    /// Wraps a filled row-major buffer into a [`FeatureRun`].
    pub fn assemble(
        &self,
        cell_ids: Vec<String>,
        values: Vec<f64>,
        degenerate: Vec<DegeneratePatch>,
    ) -> Result<FeatureRun> {
        let (m, d) = (self.n_cells(), self.cfg.feature_dim());
        if cell_ids.len() != m || values.len() != m * d {
            return Err(Error::InvalidArgument("feature buffer does not match the plan".into()));
        }
        Ok(FeatureRun {
            features: FeatureMatrix {
                cell_ids,
                columns: feature_header(&self.cfg),
                values: Matrix::from_row_major(m, d, values),
            },
            degenerate,
        })
    }
}

/// Builtin embeddings for every configured scale.
pub fn builtin_embeddings(x: &ExpressionMatrix, cfg: &PipelineConfig) -> Result<Vec<ScaleEmbedding>> {
    let provider = BuiltinProvider::new(x)?;
    let dim = cfg.embedding_dim.unwrap_or_else(|| target_dim_rule(x.n_cells()));
    cfg.scales.iter().map(|&s| provider.embed(s, dim)).collect()
}

/// The full feature pipeline on the calling thread with builtin embeddings.
pub fn hsse_features(x: &ExpressionMatrix, cfg: &PipelineConfig) -> Result<FeatureRun> {
    if cfg.embedding_provider != EmbeddingProvider::Builtin {
        return Err(Error::InvalidArgument(
            "external embeddings must be loaded by the caller; use FeaturePlan::from_embeddings".into(),
        ));
    }
    cfg.validate_for(x.n_cells())?;
    let embeddings = builtin_embeddings(x, cfg)?;
    let plan = FeaturePlan::from_embeddings(cfg.clone(), &embeddings)?;
    plan.run_sequential(x.cell_ids().to_vec(), None)
}
