//! Cell-centered cellular sheaves with one-dimensional stalks.
//!
//! Every stalk is `ℝ`, so a restriction map is a positive scalar. The
//! vertex-to-edge scalar of `(u, v)` is `k(D_uv) · exp(-α m(u, v))` with the
//! Gaussian kernel `k(d) = exp(-d²/η²)` and the binary center/neighbor label
//! discrepancy `m`. The edge-to-triangle scalar of `(u, v) ≤ (u, v, w)` is the
//! mean of the vertex-to-edge scalars of the two edges joining `w` to the face.
//! Composite relations are never materialized.

use alloc::format;
use alloc::vec::Vec;

use crate::complex::{FilteredComplex, LocalDistanceMatrix, NO_INDEX};
use crate::linalg::Matrix;
use crate::{Error, Result};

/// Label `0` marks the center cell, `1` a neighbor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexLabeling {
    labels: Vec<u8>,
}

impl VertexLabeling {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        let centers = labels.iter().filter(|&&l| l == 0).count();
        if centers != 1 {
            return Err(Error::InvalidArgument(format!(
                "expected exactly one center vertex, found {centers}"
            )));
        }
        Ok(Self { labels })
    }

    /// `n` vertices with `center` labeled 0 and every other vertex labeled 1.
    pub fn centered(n: usize, center: usize) -> Result<Self> {
        if center >= n {
            return Err(Error::InvalidArgument(format!("center {center} out of range for {n} vertices")));
        }
        Self::new((0..n).map(|u| u8::from(u != center)).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn label(&self, u: usize) -> u8 {
        self.labels[u]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SheafParams {
    /// Kernel scale. `f64::INFINITY` turns the kernel into the constant 1.
    pub eta: f64,
    /// Label modulation strength.
    pub alpha: f64,
}

impl SheafParams {
    pub fn new(eta: f64, alpha: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be finite and nonnegative, got {alpha}"
            )));
        }
        Ok(Self { eta, alpha })
    }
}

/// Median of the nonzero upper-triangle distances; even counts average the
/// two middle values.
pub fn median_eta(d: &LocalDistanceMatrix) -> Result<f64> {
    let mut xs: Vec<f64> = d.positive_pairs().collect();
    if xs.is_empty() {
        return Err(Error::DegeneratePatch);
    }
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    Ok(if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    })
}

/// `exp(-d² / η²)`.
#[inline]
pub fn kernel_weight(d: f64, eta: f64) -> f64 {
    libm::exp(-(d * d) / (eta * eta))
}

#[inline]
pub fn label_discrepancy(lu: u8, lv: u8) -> u8 {
    lu.abs_diff(lv)
}

/// Codimension-one restriction scalars on a [`FilteredComplex`].
#[derive(Debug, Clone)]
pub struct SheafAssignment<'a> {
    complex: &'a FilteredComplex,
    /// Per edge `(u, v)`: the scalars of `u ≤ e` and `v ≤ e`.
    vertex_edge: Vec<[f64; 2]>,
    /// Per triangle: the scalar of the face omitting vertex position `j`.
    edge_triangle: Vec<[f64; 3]>,
}

impl<'a> SheafAssignment<'a> {
    pub fn complex(&self) -> &'a FilteredComplex {
        self.complex
    }

    /// Scalar of `vertex ≤ edge`, where `endpoint` is 0 for the lower vertex.
    #[inline]
    pub fn vertex_edge_weight(&self, edge: usize, endpoint: usize) -> f64 {
        self.vertex_edge[edge][endpoint]
    }

    /// Scalar of `face ≤ triangle`, where the face omits vertex position `omitted`.
    #[inline]
    pub fn edge_triangle_weight(&self, triangle: usize, omitted: usize) -> f64 {
        self.edge_triangle[triangle][omitted]
    }

    /// Every restriction scalar, vertex-to-edge first.
    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.vertex_edge
            .iter()
            .flatten()
            .chain(self.edge_triangle.iter().flatten())
            .copied()
    }

    /// The same sheaf with every restriction scalar multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            complex: self.complex,
            vertex_edge: self.vertex_edge.iter().map(|w| w.map(|x| c * x)).collect(),
            edge_triangle: self.edge_triangle.iter().map(|w| w.map(|x| c * x)).collect(),
        }
    }

    /// Builds a sheaf from explicit scalars; used for hand-made examples.
    pub fn from_weights(
        complex: &'a FilteredComplex,
        vertex_edge: Vec<[f64; 2]>,
        edge_triangle: Vec<[f64; 3]>,
    ) -> Result<Self> {
        if vertex_edge.len() != complex.count(1) || edge_triangle.len() != complex.count(2) {
            return Err(Error::InvalidArgument("one weight per face relation is required".into()));
        }
        Ok(Self {
            complex,
            vertex_edge,
            edge_triangle,
        })
    }

    /// The sheaf with every restriction scalar equal to 1.
    pub fn constant(complex: &'a FilteredComplex) -> Self {
        Self {
            complex,
            vertex_edge: alloc::vec![[1.0; 2]; complex.count(1)],
            edge_triangle: alloc::vec![[1.0; 3]; complex.count(2)],
        }
    }
}

/// Computes the restriction scalars of the cell-centered sheaf on `k`.
pub fn build_sheaf<'a>(
    k: &'a FilteredComplex,
    d: &LocalDistanceMatrix,
    labels: &VertexLabeling,
    params: SheafParams,
) -> Result<SheafAssignment<'a>> {
    let n = k.n_vertices();
    if d.size() != n {
        return Err(Error::InvalidArgument(format!(
            "distance matrix has {} vertices, complex has {n}",
            d.size()
        )));
    }
    if labels.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {n} vertices",
            labels.len()
        )));
    }
    let weight = |u: usize, v: usize| {
        let m = label_discrepancy(labels.label(u), labels.label(v));
        kernel_weight(d.get(u, v), params.eta) * libm::exp(-params.alpha * f64::from(m))
    };

    let vertex_edge = k
        .simplices(1)
        .iter()
        .map(|e| {
            let [u, v] = [e.vertices()[0] as usize, e.vertices()[1] as usize];
            let w = weight(u, v);
            [w, w]
        })
        .collect();

    let edge_triangle = k
        .simplices(2)
        .iter()
        .map(|t| {
            let vs = t.vertices();
            let mut out = [0.0; 3];
            for (j, slot) in out.iter_mut().enumerate() {
                let w = vs[j] as usize;
                let (x, y) = match j {
                    0 => (vs[1], vs[2]),
                    1 => (vs[0], vs[2]),
                    _ => (vs[0], vs[1]),
                };
                *slot = 0.5 * (weight(x as usize, w) + weight(y as usize, w));
            }
            out
        })
        .collect();

    Ok(SheafAssignment {
        complex: k,
        vertex_edge,
        edge_triangle,
    })
}

/// The signed, weighted coboundary `δ_q(t): C^q(X_t) → C^{q+1}(X_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoboundaryMatrix {
    pub degree: usize,
    pub threshold: f64,
    /// Rows index `(q+1)`-simplices, columns `q`-simplices, both in
    /// lexicographic order of the slice at `threshold`.
    pub matrix: Matrix,
}

/// Assembles `δ_q` over the lexicographic bases of the slice at `t`.
pub fn assemble_coboundary(sheaf: &SheafAssignment<'_>, t: f64, q: usize) -> Result<CoboundaryMatrix> {
    let k = sheaf.complex();
    let (ncols, col_pos) = match q {
        0 | 1 => k.slice_positions(t, q),
        _ => return Err(Error::InvalidArgument(format!("coboundary degree {q} not supported"))),
    };
    let (nrows, row_pos) = k.slice_positions(t, q + 1);
    let mut m = Matrix::zeros(nrows, ncols);
    if q == 0 {
        for (e, edge) in k.simplices(1).iter().enumerate() {
            let r = row_pos[e];
            if r == NO_INDEX {
                continue;
            }
            let [u, v] = [edge.vertices()[0] as usize, edge.vertices()[1] as usize];
            m[(r as usize, col_pos[u] as usize)] = -sheaf.vertex_edge_weight(e, 0);
            m[(r as usize, col_pos[v] as usize)] = sheaf.vertex_edge_weight(e, 1);
        }
    } else {
        for t_id in 0..k.count(2) {
            let r = row_pos[t_id];
            if r == NO_INDEX {
                continue;
            }
            for (j, &face) in k.triangle_faces(t_id).iter().enumerate() {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                m[(r as usize, col_pos[face as usize] as usize)] =
                    sign * sheaf.edge_triangle_weight(t_id, j);
            }
        }
    }
    Ok(CoboundaryMatrix {
        degree: q,
        threshold: t,
        matrix: m,
    })
}
