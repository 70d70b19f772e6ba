//! The `hsse` command line.
//!
//! Exit codes: 0 on success, 1 when the pipeline fails (the message carries
//! the failing file, cell or patch), 2 for usage errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use hsse_core::complex::{build_rips, uniform_segments, MaxRadius};
use hsse_core::embed::{knn_neighborhood, pairwise_distances, target_dim_rule, BuiltinProvider, ExpressionMatrix, ScaleEmbedding};
use hsse_core::features::{EmbeddingProvider, FeaturePlan, PipelineConfig};
use hsse_core::psl::{persistent_laplacian, spectral_stats, spectral_stats_nonzero, spectrum};
use hsse_core::sheaf::{build_sheaf, median_eta, SheafParams, VertexLabeling};

use crate::config::{self, ConfigSection, EffectiveConfig, Metadata, Provenance, Timings};
use crate::{io, parallel};

#[derive(Debug, Parser)]
#[command(name = "hsse", version, about = "Hierarchical sheaf spectral embeddings for single-cell expression data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the builtin per-scale embeddings and write them as CSV.
    Embed(EmbedArgs),
    /// Compute the per-cell feature table.
    Features(FeaturesArgs),
    /// Dump the complex, sheaf and spectra of one patch.
    Inspect(InspectArgs),
    /// Time each pipeline stage on a sample of cells.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Expression matrix: CSV/TSV with a header row and an ID column, or MatrixMarket `.mtx`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_parser = ["cells_x_genes", "genes_x_cells"])]
    layout: Option<String>,
    /// Cell IDs of a MatrixMarket input, one per line [default: <input>.ids].
    #[arg(long)]
    ids: Option<PathBuf>,
    /// TOML file with a [config] table; a previous run's .meta.toml works too.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Comma-separated diffusion scales.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    scales: Option<Vec<usize>>,
    /// Comma-separated neighborhood sizes.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    k_sizes: Option<Vec<usize>>,
    /// Number of filtration segments.
    #[arg(long)]
    segments: Option<usize>,
    /// Label-discrepancy penalty of the restriction maps.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_parser = ["chordal", "euclidean"])]
    metric: Option<String>,
    /// Comma-separated Laplacian degrees (0, 1).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    degrees: Option<Vec<usize>>,
    /// Summarize only nonzero eigenvalues.
    #[arg(long)]
    nonzero_only: bool,
    /// Fixed kernel scale instead of the per-patch median (`inf` allowed).
    #[arg(long)]
    eta: Option<f64>,
    /// Builtin embedding dimension [default: 15 below 400 cells, 20 up to 1200, 50 above].
    #[arg(long)]
    embedding_dim: Option<usize>,
    /// Directory of precomputed embedding_s{scale}.csv files.
    #[arg(long)]
    embeddings_dir: Option<PathBuf>,
    #[arg(long, env = "HSSE_WORKERS")]
    workers: Option<usize>,
}

impl PipelineArgs {
    fn to_section(&self) -> ConfigSection {
        ConfigSection {
            scales: self.scales.clone(),
            k_sizes: self.k_sizes.clone(),
            segments: self.segments,
            alpha: self.alpha,
            metric: self.metric.clone(),
            degrees: self.degrees.clone(),
            nonzero_only: self.nonzero_only.then_some(true),
            eta: self.eta,
            embedding_dim: self.embedding_dim,
            embeddings: self.embeddings_dir.clone(),
            workers: self.workers,
            ..ConfigSection::default()
        }
    }
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Output directory for embedding_s{scale}.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Feature CSV; run metadata goes to <out>.meta.toml.
    #[arg(long)]
    out: PathBuf,
    /// `cell_id,label` CSV, validated and written aligned to <out>.labels.csv.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Abort the feature stage after this many seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Cell ID, or zero-based row index when no ID matches.
    #[arg(long)]
    cell: String,
    #[arg(long)]
    scale: usize,
    #[arg(long)]
    k: usize,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Number of center cells to time (the first ones in file order).
    #[arg(long, default_value_t = 8)]
    cells: usize,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Embed(a) => embed(a),
        Command::Features(a) => features(a),
        Command::Inspect(a) => inspect(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn effective_config(data: &DataArgs, pipeline: &PipelineArgs) -> anyhow::Result<EffectiveConfig> {
    let file = match &data.config {
        Some(path) => config::load_config_file(path)?,
        None => ConfigSection::default(),
    };
    let cli = ConfigSection {
        input: data.input.clone(),
        layout: data.layout.clone(),
        ids: data.ids.clone(),
        ..pipeline.to_section()
    };
    EffectiveConfig::resolve(&file.overlay(cli))
}

fn load_input(eff: &EffectiveConfig) -> anyhow::Result<ExpressionMatrix> {
    let input = eff
        .input
        .as_deref()
        .ok_or_else(|| anyhow!("no input: pass --input or set `input` in the config file"))?;
    Ok(io::load_expression(input, eff.layout, eff.ids.as_deref())?)
}

fn embed(args: EmbedArgs) -> anyhow::Result<()> {
    let eff = effective_config(&args.data, &args.pipeline)?;
    let x = load_input(&eff)?;
    let cfg = PipelineConfig {
        embedding_provider: EmbeddingProvider::Builtin,
        ..eff.pipeline
    };
    let pool = parallel::thread_pool(cfg.workers)?;
    let embeddings = crate::scale_embeddings(&x, &cfg, &pool)?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    for e in &embeddings {
        io::write_embedding(&io::embedding_path(&args.out_dir, e.scale), e)?;
    }
    log::info!("wrote {} embeddings to {}", embeddings.len(), args.out_dir.display());
    Ok(())
}

fn features(args: FeaturesArgs) -> anyhow::Result<()> {
    let eff = effective_config(&args.data, &args.pipeline)?;
    let t0 = Instant::now();
    let x = load_input(&eff)?;
    let labels = match &args.labels {
        Some(path) => Some(io::load_labels(path, x.cell_ids())?),
        None => None,
    };
    let load = t0.elapsed().as_secs_f64();

    let deadline = match args.time_limit {
        Some(s) if s.is_finite() && s >= 0.0 => Some(Instant::now() + std::time::Duration::from_secs_f64(s)),
        Some(s) => bail!("time limit must be a nonnegative number of seconds, got {s}"),
        None => None,
    };
    let (run, seconds) = crate::extract_features(&x, &eff.pipeline, deadline).map_err(|e| {
        if matches!(e.downcast_ref(), Some(hsse_core::Error::Cancelled)) {
            anyhow!("time limit of {} s exceeded", args.time_limit.unwrap_or(0.0))
        } else {
            e
        }
    })?;

    let t1 = Instant::now();
    io::write_features(&args.out, &run.features)?;
    if let Some(labels) = &labels {
        io::write_labels(&config::labels_output_path(&args.out), x.cell_ids(), labels)?;
    }
    let write = t1.elapsed().as_secs_f64();
    let meta = Metadata {
        config: eff.to_section(),
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            embedding_provider: match eff.pipeline.embedding_provider {
                EmbeddingProvider::Builtin => "builtin".into(),
                EmbeddingProvider::External(_) => "external".into(),
            },
            cells: x.n_cells(),
            genes: x.n_genes(),
            feature_columns: run.features.columns.len(),
            degenerate_patches: run.degenerate.len(),
        },
        timings: Timings {
            load,
            embed: seconds.embed,
            features: seconds.features,
            write,
        },
    };
    config::write_metadata(&config::metadata_path(&args.out), &meta)?;
    log::info!(
        "{} cells × {} features written to {}",
        run.features.cell_ids.len(),
        run.features.columns.len(),
        args.out.display()
    );
    Ok(())
}

fn resolve_cell(x: &ExpressionMatrix, cell: &str) -> anyhow::Result<usize> {
    if let Some(i) = x.cell_ids().iter().position(|id| id == cell) {
        return Ok(i);
    }
    match cell.parse::<usize>() {
        Ok(i) if i < x.n_cells() => Ok(i),
        _ => bail!("no cell with id or index {cell:?} ({} cells)", x.n_cells()),
    }
}

fn single_embedding(x: &ExpressionMatrix, cfg: &PipelineConfig, scale: usize) -> anyhow::Result<ScaleEmbedding> {
    match &cfg.embedding_provider {
        EmbeddingProvider::Builtin => {
            let dim = cfg.embedding_dim.unwrap_or_else(|| target_dim_rule(x.n_cells()));
            Ok(BuiltinProvider::new(x)?.embed(scale, dim)?)
        }
        EmbeddingProvider::External(dir) => {
            Ok(io::read_embedding(&io::embedding_path(Path::new(dir), scale), scale, x.n_cells())?)
        }
    }
}

/// A human-readable dump of one `(cell, scale, k)` patch.
pub fn inspect_report(
    x: &ExpressionMatrix,
    cfg: &PipelineConfig,
    cell: usize,
    scale: usize,
    k: usize,
) -> anyhow::Result<String> {
    let ids = x.cell_ids();
    let y = single_embedding(x, cfg, scale)?;
    let d = pairwise_distances(&y, cfg.metric)?;
    let hood = knn_neighborhood(&d, cell, k)?;
    let local = d.local(&hood.members)?;

    let mut out = String::new();
    writeln!(out, "cell {} (index {cell}), scale {scale}, k {k}, metric {}", ids[cell], cfg.metric.name())?;
    let names: Vec<&str> = hood.members.iter().map(|&i| ids[i].as_str()).collect();
    writeln!(out, "members: {}", names.join(" "))?;
    let Some(r_max) = local.max_positive() else {
        writeln!(out, "degenerate: all members coincide; features are zero")?;
        return Ok(out);
    };
    let complex = build_rips(&local, MaxRadius::Fixed(r_max), 2)?;
    let eta = match cfg.eta_override {
        Some(eta) => eta,
        None => median_eta(&local)?,
    };
    writeln!(out, "r_max: {r_max}")?;
    writeln!(out, "eta: {eta}")?;
    writeln!(out, "alpha: {}", cfg.alpha)?;
    writeln!(
        out,
        "simplices: {} vertices, {} edges, {} triangles",
        complex.count(0),
        complex.count(1),
        complex.count(2)
    )?;
    let labels = VertexLabeling::centered(hood.members.len(), 0)?;
    let sheaf = build_sheaf(&complex, &local, &labels, SheafParams::new(eta, cfg.alpha)?)?;
    for (l, interval) in uniform_segments(r_max, cfg.segments)?.into_iter().enumerate() {
        writeln!(out, "segment {} [{}, {}]", l + 1, interval.a, interval.b)?;
        for &q in &cfg.degrees {
            let spec = spectrum(&persistent_laplacian(&sheaf, interval, q)?)?;
            let stats = if cfg.nonzero_only {
                spectral_stats_nonzero(&spec)
            } else {
                spectral_stats(&spec)
            };
            let values: Vec<String> = spec.eigenvalues.iter().map(|v| format!("{v:.6e}")).collect();
            writeln!(out, "  q{q}: {} eigenvalues, {} zero", spec.eigenvalues.len(), spec.zero_count())?;
            writeln!(out, "    spectrum: [{}]", values.join(", "))?;
            writeln!(
                out,
                "    sum {} mean {} max {} min {} std {}",
                stats.sum, stats.mean, stats.max, stats.min, stats.std
            )?;
        }
    }
    Ok(out)
}

fn inspect(args: InspectArgs) -> anyhow::Result<()> {
    let eff = effective_config(&args.data, &args.pipeline)?;
    let x = load_input(&eff)?;
    let cell = resolve_cell(&x, &args.cell)?;
    if args.k == 0 || args.k >= x.n_cells() {
        bail!("k must lie in 1..{} for this dataset, got {}", x.n_cells(), args.k);
    }
    print!("{}", inspect_report(&x, &eff.pipeline, cell, args.scale, args.k)?);
    Ok(())
}

#[derive(Default)]
struct StageClock {
    rows: Vec<(&'static str, usize, f64)>,
}

impl StageClock {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        let dt = t.elapsed().as_secs_f64();
        match self.rows.iter_mut().find(|r| r.0 == stage) {
            Some(row) => {
                row.1 += 1;
                row.2 += dt;
            }
            None => self.rows.push((stage, 1, dt)),
        }
        out
    }
}

fn bench(args: BenchArgs) -> anyhow::Result<()> {
    let eff = effective_config(&args.data, &args.pipeline)?;
    let cfg = &eff.pipeline;
    let mut clock = StageClock::default();
    let x = clock.time("load", || load_input(&eff))?;
    cfg.validate_for(x.n_cells())?;
    let embeddings = match &cfg.embedding_provider {
        EmbeddingProvider::Builtin => {
            let provider = clock.time("pca", || BuiltinProvider::new(&x))?;
            let dim = cfg.embedding_dim.unwrap_or_else(|| target_dim_rule(x.n_cells()));
            cfg.scales
                .iter()
                .map(|&s| clock.time("diffusion embedding", || provider.embed(s, dim)))
                .collect::<Result<Vec<_>, _>>()?
        }
        EmbeddingProvider::External(_) => {
            let pool = parallel::thread_pool(1)?;
            clock.time("read embeddings", || crate::scale_embeddings(&x, cfg, &pool))?
        }
    };
    let distances = embeddings
        .iter()
        .map(|y| clock.time("distances", || pairwise_distances(y, cfg.metric)))
        .collect::<Result<Vec<_>, _>>()?;

    let sample = args.cells.min(x.n_cells());
    let mut units = 0usize;
    for d in &distances {
        for &k in &cfg.k_sizes {
            for cell in 0..sample {
                units += 1;
                let local = clock.time("neighborhood", || knn_neighborhood(d, cell, k).and_then(|h| d.local(&h.members)))?;
                let Some(r_max) = local.max_positive() else { continue };
                let complex = clock.time("rips complex", || build_rips(&local, MaxRadius::Fixed(r_max), 2))?;
                let sheaf = clock.time("sheaf", || {
                    let eta = match cfg.eta_override {
                        Some(eta) => Ok(eta),
                        None => median_eta(&local),
                    }?;
                    let labels = VertexLabeling::centered(local.size(), 0)?;
                    build_sheaf(&complex, &local, &labels, SheafParams::new(eta, cfg.alpha)?)
                })?;
                for interval in uniform_segments(r_max, cfg.segments)? {
                    for &q in &cfg.degrees {
                        let op = clock.time(if q == 0 { "laplacian q0" } else { "laplacian q1" }, || {
                            persistent_laplacian(&sheaf, interval, q)
                        })?;
                        clock.time(if q == 0 { "eigenvalues q0" } else { "eigenvalues q1" }, || spectrum(&op))?;
                    }
                }
            }
        }
    }

    println!("{:<22} {:>8} {:>12} {:>12}", "stage", "calls", "total s", "mean ms");
    for (stage, calls, total) in &clock.rows {
        println!("{stage:<22} {calls:>8} {total:>12.4} {:>12.4}", 1e3 * total / *calls as f64);
    }
    let patch_seconds: f64 = clock
        .rows
        .iter()
        .filter(|r| !matches!(r.0, "load" | "pca" | "diffusion embedding" | "read embeddings" | "distances"))
        .map(|r| r.2)
        .sum();
    if units > 0 {
        let plan_units = FeaturePlan::from_embeddings(cfg.clone(), &embeddings)?.n_units();
        let estimate = patch_seconds / units as f64 * plan_units as f64 / cfg.workers as f64;
        println!(
            "{units} of {plan_units} patches timed; estimated feature stage {estimate:.1} s on {} workers",
            cfg.workers
        );
    }
    Ok(())
}
