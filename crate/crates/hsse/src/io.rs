//! File formats: expression matrices (CSV/TSV and MatrixMarket), label
//! tables, per-scale embeddings and feature tables.
//!
//! Every number is written with Rust's shortest round-trip decimal rendering,
//! so a written table reloads bit for bit.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hsse_core::embed::{ExpressionMatrix, ScaleEmbedding};
use hsse_core::features::FeatureMatrix;
use hsse_core::linalg::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot open {}", path.display())]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
}

type Result<T> = std::result::Result<T, IoError>;

/// Orientation of an expression table on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    #[default]
    CellsXGenes,
    GenesXCells,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::CellsXGenes => "cells_x_genes",
            Layout::GenesXCells => "genes_x_cells",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cells_x_genes" => Ok(Layout::CellsXGenes),
            "genes_x_cells" => Ok(Layout::GenesXCells),
            other => Err(format!("unknown layout {other:?} (expected cells_x_genes or genes_x_cells)")),
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| IoError::Open {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Write {
        path: path.to_path_buf(),
        source,
    }
}

fn is_mtx(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".mtx") || name.ends_with(".mtx.txt")
}

fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv" | "tab" | "txt") => b'\t',
        _ => b',',
    }
}

/// The IDs sidecar of a MatrixMarket file: `<path>.ids`.
pub fn default_ids_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

/// Loads an expression matrix and normalizes it to cells × genes.
///
/// `.mtx` files are read as MatrixMarket coordinate data with cell IDs from
/// `ids` (one per line, default `<path>.ids`); anything else is a delimited
/// table with one header row and one ID column, tab-separated for `.tsv`,
/// `.tab` and `.txt`, comma-separated otherwise.
pub fn load_expression(path: &Path, layout: Layout, ids: Option<&Path>) -> Result<ExpressionMatrix> {
    let (cell_ids, values) = if is_mtx(path) {
        let ids_path = ids.map_or_else(|| default_ids_path(path), Path::to_path_buf);
        let (rows, cols, entries) = read_matrix_market(path)?;
        let (m, n) = match layout {
            Layout::CellsXGenes => (rows, cols),
            Layout::GenesXCells => (cols, rows),
        };
        let mut values = Matrix::zeros(m, n);
        for (i, j, v) in entries {
            let (c, g) = match layout {
                Layout::CellsXGenes => (i, j),
                Layout::GenesXCells => (j, i),
            };
            values[(c, g)] += v;
        }
        let cell_ids = read_id_list(&ids_path)?;
        if cell_ids.len() != m {
            return Err(IoError::Invalid {
                path: ids_path,
                message: format!("{} ids for {m} cells", cell_ids.len()),
            });
        }
        (cell_ids, values)
    } else {
        let table = read_table(path, delimiter_for(path))?;
        match layout {
            Layout::CellsXGenes => (table.row_ids, table.values),
            Layout::GenesXCells => (table.column_ids, table.values.transpose()),
        }
    };
    let mut seen = HashMap::new();
    for (i, id) in cell_ids.iter().enumerate() {
        if let Some(first) = seen.insert(id.as_str(), i) {
            return Err(IoError::Invalid {
                path: path.to_path_buf(),
                message: format!("cell id {id:?} appears at positions {first} and {i}"),
            });
        }
    }
    ExpressionMatrix::new(cell_ids, values).map_err(|e| IoError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

struct Table {
    row_ids: Vec<String>,
    column_ids: Vec<String>,
    values: Matrix,
}

fn parse_value(path: &Path, line: u64, field: &str) -> Result<f64> {
    let parse_error = |message: String| IoError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_error(format!("non-numeric entry {field:?}")))?;
    if !v.is_finite() {
        return Err(parse_error(format!("non-finite entry {field:?}")));
    }
    Ok(v)
}

fn read_table(path: &Path, delimiter: u8) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .from_reader(open(path)?);
    let mut records = reader.records();
    let csv_error = |e: csv::Error| IoError::Parse {
        path: path.to_path_buf(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let header = match records.next() {
        Some(r) => r.map_err(csv_error)?,
        None => {
            return Err(IoError::Invalid {
                path: path.to_path_buf(),
                message: "empty file".into(),
            })
        }
    };
    let column_ids: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let width = column_ids.len();
    let mut row_ids = Vec::new();
    let mut data = Vec::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != width + 1 {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, found {}", width + 1, record.len()),
            });
        }
        row_ids.push(record[0].trim().to_string());
        for field in record.iter().skip(1) {
            data.push(parse_value(path, line, field)?);
        }
    }
    let values = Matrix::from_row_major(row_ids.len(), width, data);
    Ok(Table {
        row_ids,
        column_ids,
        values,
    })
}

/// Rows, columns and 0-based `(row, column, value)` entries.
type Coordinates = (usize, usize, Vec<(usize, usize, f64)>);

/// Reads a MatrixMarket coordinate file. Duplicate coordinates are summed
/// when densified.
fn read_matrix_market(path: &Path) -> Result<Coordinates> {
    let reader = BufReader::new(open(path)?);
    let parse_error = |line: u64, message: String| IoError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i as u64 + 1, l));
    let read = |(n, l): (u64, std::io::Result<String>)| {
        l.map(|s| (n, s)).map_err(|source| IoError::Open {
            path: path.to_path_buf(),
            source,
        })
    };

    let (_, banner) = match lines.next() {
        Some(l) => read(l)?,
        None => return Err(parse_error(1, "empty file".into())),
    };
    let tokens: Vec<String> = banner.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_error(1, format!("not a MatrixMarket header: {banner:?}")));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_error(1, format!("unsupported format {:?}, expected coordinate", tokens[2])));
    }
    let pattern = match tokens[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" => true,
        other => return Err(parse_error(1, format!("unsupported field type {other:?}"))),
    };
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_error(1, format!("unsupported symmetry {other:?}"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut entries = Vec::new();
    for item in lines {
        let (n, line) = read(item)?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let index = |s: &str, bound: usize| -> Result<usize> {
            let i: usize = s.parse().map_err(|_| parse_error(n, format!("bad index {s:?}")))?;
            if i == 0 || i > bound {
                return Err(parse_error(n, format!("index {i} outside 1..={bound}")));
            }
            Ok(i - 1)
        };
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(parse_error(n, "size line must hold rows, columns and entries".into()));
                }
                let dims: Vec<usize> = fields
                    .iter()
                    .map(|f| f.parse().map_err(|_| parse_error(n, format!("bad size {f:?}"))))
                    .collect::<Result<_>>()?;
                size = Some((dims[0], dims[1], dims[2]));
                entries.reserve(dims[2]);
            }
            Some((rows, cols, _)) => {
                let expected = if pattern { 2 } else { 3 };
                if fields.len() != expected {
                    return Err(parse_error(n, format!("expected {expected} fields, found {}", fields.len())));
                }
                let i = index(fields[0], rows)?;
                let j = index(fields[1], cols)?;
                let v = if pattern { 1.0 } else { parse_value(path, n, fields[2])? };
                entries.push((i, j, v));
                if symmetric && i != j {
                    entries.push((j, i, v));
                }
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| parse_error(1, "missing size line".into()))?;
    let stored = if symmetric {
        entries.iter().filter(|(i, j, _)| i <= j).count()
    } else {
        entries.len()
    };
    if stored != nnz {
        return Err(IoError::Invalid {
            path: path.to_path_buf(),
            message: format!("header declares {nnz} entries, file holds {stored}"),
        });
    }
    Ok((rows, cols, entries))
}

fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let reader = BufReader::new(open(path)?);
    let mut ids = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|source| IoError::Open {
            path: path.to_path_buf(),
            source,
        })?;
        // 10x-style sidecars carry extra tab-separated columns; the first is the id.
        let id = line.split('\t').next().unwrap_or("").trim();
        if !id.is_empty() {
            ids.push(id.to_string());
        }
    }
    Ok(ids)
}

/// Reads `cell_id,label` rows and aligns them to `cell_ids`.
///
/// A header row whose first field is `cell_id` is skipped. Duplicate ids,
/// ids absent from `cell_ids` and cells without a label are errors.
pub fn load_labels(path: &Path, cell_ids: &[String]) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(open(path)?);
    let mut by_id: HashMap<String, (String, u64)> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if i == 0 && record.get(0).map(str::trim) == Some("cell_id") {
            continue;
        }
        if record.len() != 2 {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected cell_id,label, found {} fields", record.len()),
            });
        }
        let id = record[0].trim().to_string();
        let label = record[1].trim().to_string();
        if let Some((_, first)) = by_id.get(&id) {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("duplicate id {id:?} (first on line {first})"),
            });
        }
        by_id.insert(id, (label, line));
    }
    let mut labels = Vec::with_capacity(cell_ids.len());
    for id in cell_ids {
        match by_id.remove(id) {
            Some((label, _)) => labels.push(label),
            None => {
                return Err(IoError::Invalid {
                    path: path.to_path_buf(),
                    message: format!("no label for cell {id:?}"),
                })
            }
        }
    }
    if let Some((id, (_, line))) = by_id.into_iter().min_by_key(|(_, (_, line))| *line) {
        return Err(IoError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("id {id:?} does not match any cell"),
        });
    }
    Ok(labels)
}

/// Writes aligned `cell_id,label` rows with a header.
pub fn write_labels(path: &Path, cell_ids: &[String], labels: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| IoError::Write {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(["cell_id", "label"]).map_err(err)?;
    for (id, label) in cell_ids.iter().zip(labels) {
        w.write_record([id, label]).map_err(err)?;
    }
    w.flush().map_err(write_err(path))
}

/// `embedding_s{scale}.csv` inside `dir`.
pub fn embedding_path(dir: &Path, scale: usize) -> PathBuf {
    dir.join(format!("embedding_s{scale}.csv"))
}

/// Reads a headerless numeric CSV of `cells` rows as the embedding of `scale`.
pub fn read_embedding(path: &Path, scale: usize, cells: usize) -> Result<ScaleEmbedding> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(open(path)?);
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(IoError::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("expected {w} fields, found {}", record.len()),
                })
            }
            Some(_) => {}
        }
        for field in &record {
            data.push(parse_value(path, line, field)?);
        }
        rows += 1;
    }
    if rows != cells {
        return Err(IoError::Invalid {
            path: path.to_path_buf(),
            message: format!("{rows} rows, expected one per cell ({cells})"),
        });
    }
    let coords = Matrix::from_row_major(rows, width.unwrap_or(0), data);
    ScaleEmbedding::new(scale, coords).map_err(|e| IoError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_embedding(path: &Path, embedding: &ScaleEmbedding) -> Result<()> {
    let mut w = create(path)?;
    let c = &embedding.coords;
    for i in 0..c.nrows() {
        let line = c.row(i).iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        writeln!(w, "{line}").map_err(write_err(path))?;
    }
    w.flush().map_err(write_err(path))
}

/// Writes `cell_id` plus one column per feature, one row per cell.
pub fn write_features(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| IoError::Write {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(std::iter::once("cell_id").chain(features.columns.iter().map(String::as_str)))
        .map_err(err)?;
    let mut record = Vec::with_capacity(features.columns.len() + 1);
    for (i, id) in features.cell_ids.iter().enumerate() {
        record.clear();
        record.push(id.clone());
        record.extend(features.row(i).iter().map(f64::to_string));
        w.write_record(&record).map_err(err)?;
    }
    w.flush().map_err(write_err(path))
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let table = read_table(path, b',')?;
    Ok(FeatureMatrix {
        cell_ids: table.row_ids,
        columns: table.column_ids,
        values: table.values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_parse() {
        assert_eq!("genes_x_cells".parse::<Layout>().unwrap(), Layout::GenesXCells);
        assert!("rows".parse::<Layout>().is_err());
        assert_eq!(Layout::default().to_string(), "cells_x_genes");
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(default_ids_path(Path::new("a/m.mtx")), PathBuf::from("a/m.mtx.ids"));
        assert_eq!(embedding_path(Path::new("e"), 14), PathBuf::from("e/embedding_s14.csv"));
        assert!(is_mtx(Path::new("x.mtx")));
        assert_eq!(delimiter_for(Path::new("x.tsv")), b'\t');
        assert_eq!(delimiter_for(Path::new("x.csv")), b',');
    }
}
