//! Run configuration: TOML files, command-line overrides and the effective
//! configuration echoed next to every feature table.
//!
//! Precedence, highest first: command-line flags (including `HSSE_WORKERS`,
//! which clap reads as the default of `--workers`), the config file, then the
//! built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use hsse_core::embed::Metric;
use hsse_core::features::{EmbeddingProvider, PipelineConfig};
use serde::{Deserialize, Serialize};

use crate::io::Layout;

/// The `[config]` table. Every field is optional; absent fields fall back to
/// the defaults. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ids: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segments: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degrees: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonzero_only: Option<bool>,
    /// Fixed kernel scale; `inf` selects the constant-weight limit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
    /// Directory of precomputed `embedding_s{scale}.csv` files.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl ConfigSection {
    /// Fields of `other` that are set replace those of `self`.
    pub fn overlay(mut self, other: ConfigSection) -> ConfigSection {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(input, layout, ids, scales, k_sizes, segments, alpha, metric, degrees, nonzero_only, eta, embedding_dim, embeddings, workers);
        self
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.input, &mut self.ids, &mut self.embeddings].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// A config file. Only `[config]` is read; other tables (such as the
/// provenance and timings of a metadata sidecar) are ignored.
#[derive(Debug, Default, Deserialize)]
struct ConfigFile {
    #[serde(default)]
    config: ConfigSection,
}

pub fn load_config_file(path: &Path) -> anyhow::Result<ConfigSection> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let file: ConfigFile = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    let mut section = file.config;
    section.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(section)
}

/// Everything a run needs besides the data itself.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveConfig {
    pub input: Option<PathBuf>,
    pub layout: Layout,
    pub ids: Option<PathBuf>,
    pub pipeline: PipelineConfig,
}

impl EffectiveConfig {
    pub fn resolve(section: &ConfigSection) -> anyhow::Result<EffectiveConfig> {
        let mut p = PipelineConfig::default();
        let layout = match &section.layout {
            Some(s) => s.parse::<Layout>().map_err(anyhow::Error::msg)?,
            None => Layout::default(),
        };
        if let Some(v) = &section.scales {
            p.scales = v.clone();
        }
        if let Some(v) = &section.k_sizes {
            p.k_sizes = v.clone();
        }
        if let Some(v) = section.segments {
            p.segments = v;
        }
        if let Some(v) = section.alpha {
            p.alpha = v;
        }
        if let Some(v) = &section.metric {
            p.metric = v.parse::<Metric>()?;
        }
        if let Some(v) = &section.degrees {
            let mut v = v.clone();
            v.sort_unstable();
            v.dedup();
            p.degrees = v;
        }
        if let Some(v) = section.nonzero_only {
            p.nonzero_only = v;
        }
        p.eta_override = section.eta;
        p.embedding_dim = section.embedding_dim;
        if let Some(dir) = &section.embeddings {
            let Some(s) = dir.to_str() else {
                bail!("embedding directory {} is not valid UTF-8", dir.display());
            };
            p.embedding_provider = EmbeddingProvider::External(s.to_string());
        }
        if let Some(v) = section.workers {
            p.workers = v;
        }
        p.validate()?;
        Ok(EffectiveConfig {
            input: section.input.clone(),
            layout,
            ids: section.ids.clone(),
            pipeline: p,
        })
    }

    /// The fully populated `[config]` table; paths are made absolute so the
    /// echo stays valid wherever it is moved.
    pub fn to_section(&self) -> ConfigSection {
        let p = &self.pipeline;
        ConfigSection {
            input: self.input.as_deref().map(absolute),
            layout: Some(self.layout.name().to_string()),
            ids: self.ids.as_deref().map(absolute),
            scales: Some(p.scales.clone()),
            k_sizes: Some(p.k_sizes.clone()),
            segments: Some(p.segments),
            alpha: Some(p.alpha),
            metric: Some(p.metric.name().to_string()),
            degrees: Some(p.degrees.clone()),
            nonzero_only: Some(p.nonzero_only),
            eta: p.eta_override,
            embedding_dim: p.embedding_dim,
            embeddings: match &p.embedding_provider {
                EmbeddingProvider::Builtin => None,
                EmbeddingProvider::External(dir) => Some(absolute(Path::new(dir))),
            },
            workers: Some(p.workers),
        }
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// `builtin` or `external`.
    pub embedding_provider: String,
    pub cells: usize,
    pub genes: usize,
    pub feature_columns: usize,
    pub degenerate_patches: usize,
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub load: f64,
    pub embed: f64,
    pub features: f64,
    pub write: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metadata {
    pub config: ConfigSection,
    pub provenance: Provenance,
    pub timings: Timings,
}

/// `features.csv` → `features.meta.toml`.
pub fn metadata_path(out: &Path) -> PathBuf {
    sibling(out, "meta.toml")
}

/// `features.csv` → `features.labels.csv`.
pub fn labels_output_path(out: &Path) -> PathBuf {
    sibling(out, "labels.csv")
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = match out.extension().and_then(|e| e.to_str()) {
        Some("csv") => out.with_extension(""),
        _ => out.to_path_buf(),
    };
    let mut s = stem.into_os_string();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub fn write_metadata(path: &Path, meta: &Metadata) -> anyhow::Result<()> {
    let text = toml::to_string(meta).context("cannot serialize run metadata")?;
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_metadata(path: &Path) -> anyhow::Result<Metadata> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid metadata {}", path.display()))
}
