//! Brute-force reference implementations shared by the integration tests.
//!
//! Nothing here calls into the library's linear algebra: coboundaries are
//! rebuilt from the sheaf scalars, and every decomposition goes through
//! nalgebra.
#![allow(dead_code)]

use hsse_core::complex::{build_rips, simplices_at, FilteredComplex, LocalDistanceMatrix, MaxRadius, Simplex};
use hsse_core::linalg::Matrix;
use hsse_core::sheaf::SheafAssignment;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.nrows(), m.ncols(), m.as_slice())
}

/// Euclidean distances between `n` uniform points in the unit cube of
/// dimension `dim`.
pub fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect()
}

pub fn euclidean_matrix(points: &[Vec<f64>]) -> LocalDistanceMatrix {
    let n = points.len();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                entries[i * n + j] = d2.sqrt();
            }
        }
    }
    // Symmetrize bit-for-bit.
    for i in 0..n {
        for j in 0..i {
            entries[i * n + j] = entries[j * n + i];
        }
    }
    LocalDistanceMatrix::new(n, entries).unwrap()
}

/// A random metric on `n` points, occasionally with a duplicated point.
pub fn random_patch(rng: &mut ChaCha8Rng, n: usize) -> LocalDistanceMatrix {
    let dim = rng.random_range(2..=3);
    let mut pts = random_points(rng, n, dim);
    if n >= 3 && rng.random_bool(0.2) {
        pts[n - 1] = pts[0].clone();
    }
    euclidean_matrix(&pts)
}

pub fn random_complex(rng: &mut ChaCha8Rng, n_range: std::ops::RangeInclusive<usize>) -> (LocalDistanceMatrix, FilteredComplex) {
    let n = rng.random_range(n_range);
    let d = random_patch(rng, n);
    let k = build_rips(&d, MaxRadius::Auto, 2).unwrap();
    (d, k)
}

/// Random `a ≤ b` within `[0, r_max]`.
pub fn random_interval(rng: &mut ChaCha8Rng, r_max: f64) -> (f64, f64) {
    let x = rng.random::<f64>() * r_max;
    let y = rng.random::<f64>() * r_max;
    (x.min(y), x.max(y))
}

fn position(basis: &[Simplex], vertices: &[u32]) -> Option<usize> {
    basis.iter().position(|s| s.vertices() == vertices)
}

fn global_index(k: &FilteredComplex, q: usize, vertices: &[u32]) -> usize {
    k.simplices(q)
        .iter()
        .position(|s| s.vertices() == vertices)
        .expect("simplex belongs to the complex")
}

/// `δ_q(t)` rebuilt from the sheaf scalars: rows are `(q+1)`-simplices,
/// columns `q`-simplices, both in lexicographic order of the slice.
pub fn coboundary(sheaf: &SheafAssignment<'_>, t: f64, q: usize) -> DMatrix<f64> {
    let k = sheaf.complex();
    let rows = simplices_at(k, t, q + 1);
    let cols = simplices_at(k, t, q);
    let mut m = DMatrix::zeros(rows.len(), cols.len());
    for (r, cofacet) in rows.iter().enumerate() {
        let vs = cofacet.vertices();
        let id = global_index(k, q + 1, vs);
        for j in 0..vs.len() {
            let face: Vec<u32> = vs.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, &v)| v).collect();
            let c = position(&cols, &face).expect("faces enter no later than cofacets");
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let weight = if q == 0 {
                // Face omitting position j is the vertex at position 1 - j.
                sheaf.vertex_edge_weight(id, 1 - j)
            } else {
                sheaf.edge_triangle_weight(id, j)
            };
            m[(r, c)] = sign * weight;
        }
    }
    m
}

/// `δ_0(t)`: `−ρ` on the lower vertex of each edge, `+ρ` on the upper.
pub fn delta0(sheaf: &SheafAssignment<'_>, t: f64) -> DMatrix<f64> {
    coboundary(sheaf, t, 0)
}

/// Positions within the `X_b` basis of `q`-simplices already present at `a`.
pub fn kept_positions(k: &FilteredComplex, a: f64, b: f64, q: usize) -> Vec<usize> {
    simplices_at(k, b, q)
        .iter()
        .enumerate()
        .filter(|(_, s)| s.filtration() <= a)
        .map(|(i, _)| i)
        .collect()
}

pub const ORACLE_MAX_COFACETS: usize = 200;

/// The persistent up-operator from its subspace definition: restrict the
/// `b`-coboundary transpose `D = δ_q(b)ᵀ` to the cochains `c` with
/// `D_B c = 0` (no boundary on simplices absent at `a`), then compress onto
/// the `q`-simplices of `X_a`.
///
/// Returns `None` for instances with more than 200 `(q+1)`-simplices.
pub fn subspace_persistent_up(sheaf: &SheafAssignment<'_>, a: f64, b: f64, q: usize) -> Option<DMatrix<f64>> {
    let k = sheaf.complex();
    let d = coboundary(sheaf, b, q).transpose();
    if d.ncols() > ORACLE_MAX_COFACETS {
        return None;
    }
    let keep = kept_positions(k, a, b, q);
    let drop: Vec<usize> = (0..d.nrows()).filter(|i| !keep.contains(i)).collect();
    let d_a = d.select_rows(keep.iter());
    let d_b = d.select_rows(drop.iter());
    let n = d.ncols();

    let mut projector = DMatrix::<f64>::identity(n, n);
    if d_b.nrows() > 0 && n > 0 {
        let svd = d_b.clone().svd(false, true);
        let v_t = svd.v_t.unwrap();
        let s_max = svd.singular_values.max();
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s > 1e-10 * s_max.max(1e-300) {
                let v = v_t.row(i).transpose();
                projector -= &v * v.transpose();
            }
        }
    }
    Some(&d_a * projector * d_a.transpose())
}

/// The full interval operator by the subspace definition.
pub fn subspace_persistent_laplacian(sheaf: &SheafAssignment<'_>, a: f64, b: f64, q: usize) -> Option<DMatrix<f64>> {
    let up = subspace_persistent_up(sheaf, a, b, q)?;
    if q == 1 {
        let d0 = delta0(sheaf, a);
        Some(up + &d0 * d0.transpose())
    } else {
        Some(up)
    }
}

pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spectra differ in length");
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Number of connected components of the graph with edges `D_uv ≤ t`.
pub fn union_find_components(d: &LocalDistanceMatrix, t: f64) -> usize {
    let n = d.size();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for u in 0..n {
        for v in u + 1..n {
            if d.get(u, v) <= t {
                let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
                if ru != rv {
                    parent[ru] = rv;
                }
            }
        }
    }
    (0..n).filter(|&x| find(&mut parent, x) == x).count()
}

/// Largest principal angle (as its sine) between the column spaces of two
/// matrices with orthonormal columns.
pub fn max_principal_sine(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    assert_eq!(u.ncols(), v.ncols());
    if u.ncols() == 0 {
        return 0.0;
    }
    let residual = u - v * (v.transpose() * u);
    residual.singular_values().max()
}

/// Groups ascending eigenvalues into clusters of numerically equal values.
pub fn eigen_clusters(values: &[f64], rtol: f64) -> Vec<std::ops::Range<usize>> {
    let scale = values.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > rtol * scale {
            out.push(start..i);
            start = i;
        }
    }
    out
}
