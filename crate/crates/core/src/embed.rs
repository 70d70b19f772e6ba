//! Scale-dependent representations, distances and cell-centered neighborhoods.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::complex::LocalDistanceMatrix;
use crate::linalg::{symmetric_eigen, Matrix};
use crate::{Error, Result};

/// Cells × genes expression values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    cell_ids: Vec<String>,
    values: Matrix,
}

impl ExpressionMatrix {
    pub fn new(cell_ids: Vec<String>, values: Matrix) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "at least two cells are required, got {}",
                values.nrows()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidArgument("expression matrix has no genes".into()));
        }
        if cell_ids.len() != values.nrows() {
            return Err(Error::InvalidArgument(format!(
                "{} cell ids for {} rows",
                cell_ids.len(),
                values.nrows()
            )));
        }
        if let Some(pos) = values.as_slice().iter().position(|x| !x.is_finite()) {
            let (r, c) = (pos / values.ncols(), pos % values.ncols());
            return Err(Error::InvalidArgument(format!("non-finite value at cell {r}, gene {c}")));
        }
        Ok(Self { cell_ids, values })
    }

    pub fn n_cells(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.values.ncols()
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }
}

/// A representation `Y^(s)` with one row per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleEmbedding {
    pub scale: usize,
    pub coords: Matrix,
}

impl ScaleEmbedding {
    pub fn new(scale: usize, coords: Matrix) -> Result<Self> {
        if coords.ncols() < 2 {
            return Err(Error::InvalidArgument(format!(
                "embedding for scale {scale} has {} columns, at least 2 required",
                coords.ncols()
            )));
        }
        if coords.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("embedding for scale {scale} is not finite")));
        }
        Ok(Self { scale, coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    /// Euclidean distance between unit-normalized rows, `2 sin(θ/2)`.
    Chordal,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Chordal => "chordal",
        }
    }
}

impl core::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "chordal" => Ok(Metric::Chordal),
            other => Err(Error::InvalidArgument(format!("unknown metric {other:?}"))),
        }
    }
}

/// Symmetric cell × cell distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    size: usize,
    entries: Vec<f64>,
    pub metric: Metric,
}

impl DistanceMatrix {
    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }

    /// The submatrix on `members`, in the given order.
    pub fn local(&self, members: &[usize]) -> Result<LocalDistanceMatrix> {
        let mut entries = Vec::with_capacity(members.len() * members.len());
        for &i in members {
            let row = self.row(i);
            entries.extend(members.iter().map(|&j| row[j]));
        }
        LocalDistanceMatrix::new(members.len(), entries)
    }
}

/// A center cell and its `k` nearest neighbors, nearest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    pub center: usize,
    pub k: usize,
    /// `k + 1` cell indices; `members[0]` is the center.
    pub members: Vec<usize>,
}

/// Principal components of an expression matrix.
#[derive(Debug, Clone)]
pub struct Pca {
    /// `m × d` projections onto the leading components.
    pub scores: Matrix,
    /// `d × n` unit components, leading first.
    pub components: Matrix,
    /// Variance captured by each component.
    pub variances: Vec<f64>,
    pub total_variance: f64,
}

impl Pca {
    pub fn explained_variance_ratio(&self) -> f64 {
        if self.total_variance == 0.0 {
            return 0.0;
        }
        self.variances.iter().sum::<f64>() / self.total_variance
    }
}

/// Flips `v` so its largest-magnitude entry (lowest index on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Projects the column-centered data onto its top `d` principal components.
///
/// Uses the `n × n` covariance when there are no more genes than cells and
/// the `m × m` Gram matrix otherwise.
pub fn pca(x: &ExpressionMatrix, d: usize) -> Result<Pca> {
    let (m, n) = (x.n_cells(), x.n_genes());
    if d == 0 || d > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "PCA dimension {d} out of range 1..={}",
            m.min(n)
        )));
    }
    let mut centered = x.values().clone();
    for j in 0..n {
        let mean = (0..m).map(|i| centered[(i, j)]).sum::<f64>() / m as f64;
        for i in 0..m {
            centered[(i, j)] -= mean;
        }
    }
    let denom = (m - 1) as f64;
    let total_variance = centered.as_slice().iter().map(|v| v * v).sum::<f64>() / denom;

    let mut components = Matrix::zeros(d, n);
    let mut variances = Vec::with_capacity(d);
    if n <= m {
        let mut cov = centered.gram();
        cov.scale(1.0 / denom);
        let eig = symmetric_eigen(&cov, true)?;
        for c in 0..d {
            let j = n - 1 - c;
            variances.push(eig.values[j].max(0.0));
            components.row_mut(c).copy_from_slice(eig.vector(j));
        }
    } else {
        let mut gram = centered.outer_gram();
        gram.scale(1.0 / denom);
        let eig = symmetric_eigen(&gram, true)?;
        for c in 0..d {
            let j = m - 1 - c;
            variances.push(eig.values[j].max(0.0));
            let u = eig.vector(j);
            let comp = components.row_mut(c);
            for (i, &ui) in u.iter().enumerate() {
                for (cg, xg) in comp.iter_mut().zip(centered.row(i)) {
                    *cg += ui * xg;
                }
            }
            let norm = libm::sqrt(comp.iter().map(|v| v * v).sum());
            if norm > 0.0 {
                comp.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
    for c in 0..d {
        fix_sign(components.row_mut(c));
    }
    let scores = centered.mul(&components.transpose());
    Ok(Pca {
        scores,
        components,
        variances,
        total_variance,
    })
}

/// Deterministic multi-scale provider: PCA followed by Laplacian eigenmaps of
/// an `s`-nearest-neighbor graph, where `s` is the scale.
#[derive(Debug, Clone)]
pub struct BuiltinProvider {
    pca_coords: Matrix,
    distances: DistanceMatrix,
}

/// PCA dimension used before the neighbor graph.
pub const BUILTIN_PCA_DIM: usize = 50;

impl BuiltinProvider {
    pub fn new(x: &ExpressionMatrix) -> Result<Self> {
        let d = BUILTIN_PCA_DIM.min(x.n_genes()).min(x.n_cells());
        let pca_coords = pca(x, d)?.scores;
        let distances = euclidean_distances(&pca_coords);
        Ok(Self {
            pca_coords,
            distances,
        })
    }

    pub fn pca_coords(&self) -> &Matrix {
        &self.pca_coords
    }

    /// `dim` nontrivial eigenvectors of the normalized Laplacian of the
    /// symmetrized `scale`-nearest-neighbor graph, each scaled by `1/√λ`.
    pub fn embed(&self, scale: usize, dim: usize) -> Result<ScaleEmbedding> {
        let m = self.distances.size();
        if scale >= m {
            return Err(Error::ScaleExceedsDataset { scale, cells: m });
        }
        if scale < 2 {
            return Err(Error::InvalidArgument(format!("scale must be at least 2, got {scale}")));
        }
        if dim < 2 {
            return Err(Error::InvalidArgument(format!("embedding dimension must be at least 2, got {dim}")));
        }

        let knn: Vec<Vec<usize>> = (0..m).map(|i| nearest(&self.distances, i, scale)).collect();
        let sigma: Vec<f64> = (0..m).map(|i| self.distances.get(i, knn[i][scale - 1])).collect();

        let mut w = Matrix::zeros(m, m);
        for i in 0..m {
            for &j in &knn[i] {
                let dij = self.distances.get(i, j);
                let wij = if dij == 0.0 {
                    1.0
                } else {
                    libm::exp(-(dij * dij) / (sigma[i] * sigma[j]))
                };
                w[(i, j)] = wij;
                w[(j, i)] = wij;
            }
        }

        let components = components_of(&w);
        let mut component_sizes = vec![0usize; components.iter().max().map_or(0, |c| c + 1)];
        components.iter().for_each(|&c| component_sizes[c] += 1);
        let trivial = component_sizes.len();
        if m - trivial < dim {
            return Err(Error::DisconnectedGraph {
                requested: dim,
                available: m - trivial,
                component_sizes,
            });
        }

        let inv_sqrt_deg: Vec<f64> = (0..m)
            .map(|i| {
                let deg: f64 = w.row(i).iter().sum();
                if deg > 0.0 {
                    1.0 / libm::sqrt(deg)
                } else {
                    0.0
                }
            })
            .collect();
        let lap = Matrix::from_fn(m, m, |i, j| {
            let off = -w[(i, j)] * inv_sqrt_deg[i] * inv_sqrt_deg[j];
            if i == j {
                1.0 + off
            } else {
                off
            }
        });
        let eig = symmetric_eigen(&lap, true)?;

        let mut coords = Matrix::zeros(m, dim);
        for c in 0..dim {
            let j = trivial + c;
            let lambda = eig.values[j];
            if !(lambda > 0.0) {
                return Err(Error::DisconnectedGraph {
                    requested: dim,
                    available: c,
                    component_sizes,
                });
            }
            let mut v = eig.vector(j).to_vec();
            fix_sign(&mut v);
            let s = 1.0 / libm::sqrt(lambda);
            for i in 0..m {
                coords[(i, c)] = v[i] * s;
            }
        }
        ScaleEmbedding::new(scale, coords)
    }
}

/// One-shot form of [`BuiltinProvider::embed`].
pub fn builtin_scale_embedding(x: &ExpressionMatrix, scale: usize, dim: usize) -> Result<ScaleEmbedding> {
    if scale >= x.n_cells() {
        return Err(Error::ScaleExceedsDataset {
            scale,
            cells: x.n_cells(),
        });
    }
    BuiltinProvider::new(x)?.embed(scale, dim)
}

/// Component label of every vertex of the graph with positive weights `w`,
/// numbered in order of first appearance.
fn components_of(w: &Matrix) -> Vec<usize> {
    let m = w.nrows();
    let mut label = vec![usize::MAX; m];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..m {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        stack.push(start);
        while let Some(u) = stack.pop() {
            for (v, &x) in w.row(u).iter().enumerate() {
                if x > 0.0 && label[v] == usize::MAX {
                    label[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    label
}

fn euclidean_distances(y: &Matrix) -> DistanceMatrix {
    let m = y.nrows();
    let mut entries = vec![0.0; m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            let d2: f64 = y.row(i).iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            let d = libm::sqrt(d2);
            entries[i * m + j] = d;
            entries[j * m + i] = d;
        }
    }
    DistanceMatrix {
        size: m,
        entries,
        metric: Metric::Euclidean,
    }
}

/// Pairwise distances between the rows of `y`.
pub fn pairwise_distances(y: &ScaleEmbedding, metric: Metric) -> Result<DistanceMatrix> {
    match metric {
        Metric::Euclidean => Ok(euclidean_distances(&y.coords)),
        Metric::Chordal => {
            let mut unit = y.coords.clone();
            for i in 0..unit.nrows() {
                let row = unit.row_mut(i);
                let norm = libm::sqrt(row.iter().map(|v| v * v).sum());
                if norm == 0.0 {
                    return Err(Error::ZeroNormRow { row: i });
                }
                row.iter_mut().for_each(|v| *v /= norm);
            }
            let mut d = euclidean_distances(&unit);
            d.metric = Metric::Chordal;
            Ok(d)
        }
    }
}

/// The `k` cells nearest to `i` (excluding `i`), ties broken by index.
fn nearest(d: &DistanceMatrix, i: usize, k: usize) -> Vec<usize> {
    let row = d.row(i);
    let mut order: Vec<usize> = (0..d.size()).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// `{i}` together with its `k` nearest cells; the center comes first and the
/// neighbors follow in order of distance.
pub fn knn_neighborhood(d: &DistanceMatrix, i: usize, k: usize) -> Result<Neighborhood> {
    let m = d.size();
    if i >= m {
        return Err(Error::InvalidArgument(format!("cell {i} out of range for {m} cells")));
    }
    if k == 0 || k >= m {
        return Err(Error::InvalidArgument(format!(
            "neighborhood size {k} out of range 1..={}",
            m - 1
        )));
    }
    let mut members = Vec::with_capacity(k + 1);
    members.push(i);
    members.extend(nearest(d, i, k));
    Ok(Neighborhood { center: i, k, members })
}

/// Target embedding dimension by dataset size: 15 below 400 cells, 20 up to
/// 1200, 50 above.
pub fn target_dim_rule(m: usize) -> usize {
    if m < 400 {
        15
    } else if m <= 1200 {
        20
    } else {
        50
    }
}
