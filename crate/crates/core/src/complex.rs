//! Distance-induced Vietoris–Rips filtrations truncated at dimension two.
//!
//! Simplices are stored as sorted vertex tuples and every per-dimension list
//! is kept in lexicographic order. Filtration slices preserve that order, so
//! the position of a simplex in a slice is its index in every cochain basis.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Marker for "no simplex" in dense index tables.
pub(crate) const NO_INDEX: u32 = u32::MAX;

/// A validated symmetric, nonnegative distance matrix on the vertices of a patch.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDistanceMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl LocalDistanceMatrix {
    /// Validates row-major `entries` of an `size × size` matrix.
    pub fn new(size: usize, entries: Vec<f64>) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidDistances("empty matrix".into()));
        }
        if entries.len() != size * size {
            return Err(Error::InvalidDistances(format!(
                "{} entries for a {size}x{size} matrix",
                entries.len()
            )));
        }
        for i in 0..size {
            if entries[i * size + i] != 0.0 {
                return Err(Error::InvalidDistances(format!("nonzero diagonal at {i}")));
            }
            for j in 0..size {
                let x = entries[i * size + j];
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::InvalidDistances(format!(
                        "entry ({i}, {j}) = {x} is not a finite nonnegative number"
                    )));
                }
                if x != entries[j * size + i] {
                    return Err(Error::InvalidDistances(format!(
                        "not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { size, entries })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let size = rows.len();
        let mut entries = Vec::with_capacity(size * size);
        for r in rows {
            if r.as_ref().len() != size {
                return Err(Error::InvalidDistances("matrix is not square".into()));
            }
            entries.extend_from_slice(r.as_ref());
        }
        Self::new(size, entries)
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    /// Upper-triangle distances `D_uv`, `u < v`, that are strictly positive.
    pub fn positive_pairs(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.size;
        (0..n).flat_map(move |u| ((u + 1)..n).map(move |v| self.get(u, v)).filter(|&d| d > 0.0))
    }

    /// `max { D_uv : D_uv > 0 }`, or `None` if every distance is zero.
    pub fn max_positive(&self) -> Option<f64> {
        self.positive_pairs().fold(None, |m, d| Some(m.map_or(d, |m: f64| m.max(d))))
    }

    /// Multiplies every distance by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            size: self.size,
            entries: self.entries.iter().map(|x| x * c).collect(),
        }
    }
}

/// A simplex of dimension at most two as a strictly increasing vertex tuple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simplex {
    vertices: [u32; 3],
    len: u8,
    filtration: f64,
}

impl Simplex {
    /// Panics unless `vertices` has length 1–3 and is strictly increasing.
    pub fn new(vertices: &[u32], filtration: f64) -> Self {
        assert!((1..=3).contains(&vertices.len()), "simplex dimension out of range");
        assert!(
            vertices.windows(2).all(|w| w[0] < w[1]),
            "simplex vertices must be strictly increasing"
        );
        let mut buf = [0; 3];
        buf[..vertices.len()].copy_from_slice(vertices);
        Self {
            vertices: buf,
            len: vertices.len() as u8,
            filtration,
        }
    }

    #[inline]
    pub fn vertices(&self) -> &[u32] {
        &self.vertices[..self.len as usize]
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.len as usize - 1
    }

    #[inline]
    pub fn filtration(&self) -> f64 {
        self.filtration
    }
}

/// Maximum edge length of a Rips construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxRadius {
    /// `max { D_uv : D_uv > 0 }`.
    Auto,
    Fixed(f64),
}

/// A closed sub-range `[a, b]` of a filtration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiltrationInterval {
    pub a: f64,
    pub b: f64,
}

impl FiltrationInterval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0 && b >= a && b.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid interval [{a}, {b}]")));
        }
        Ok(Self { a, b })
    }
}

/// A Rips filtration with simplices of dimension at most two.
#[derive(Debug, Clone)]
pub struct FilteredComplex {
    n_vertices: usize,
    r_max: f64,
    simplices: [Vec<Simplex>; 3],
    /// `n × n` table of edge ids, `NO_INDEX` where there is no edge.
    edge_ids: Vec<u32>,
    /// Per triangle, the edge id of the face that omits vertex position `j`.
    triangle_faces: Vec<[u32; 3]>,
}

impl FilteredComplex {
    #[inline]
    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    /// The maximum edge length; also the end of the filtration range.
    #[inline]
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// All simplices of dimension `q`, lexicographically ordered.
    pub fn simplices(&self, q: usize) -> &[Simplex] {
        self.simplices.get(q).map_or(&[], |s| s.as_slice())
    }

    pub fn count(&self, q: usize) -> usize {
        self.simplices(q).len()
    }

    /// Id of the edge `(u, v)` in [`simplices`](Self::simplices)`(1)`.
    pub fn edge_id(&self, u: usize, v: usize) -> Option<usize> {
        if u >= self.n_vertices || v >= self.n_vertices {
            return None;
        }
        let id = self.edge_ids[u * self.n_vertices + v];
        (id != NO_INDEX).then_some(id as usize)
    }

    /// Edge ids of the faces of triangle `t`; entry `j` omits vertex position `j`.
    #[inline]
    pub fn triangle_faces(&self, t: usize) -> [u32; 3] {
        self.triangle_faces[t]
    }

    /// Ids of the `q`-simplices with filtration value `≤ t`, ascending.
    pub fn ids_at(&self, t: f64, q: usize) -> Vec<usize> {
        self.simplices(q)
            .iter()
            .enumerate()
            .filter(|(_, s)| s.filtration <= t)
            .map(|(i, _)| i)
            .collect()
    }

    /// Position of every `q`-simplex in the slice at `t`, `NO_INDEX` if absent.
    pub(crate) fn slice_positions(&self, t: f64, q: usize) -> (usize, Vec<u32>) {
        let mut next = 0u32;
        let positions = self
            .simplices(q)
            .iter()
            .map(|s| {
                if s.filtration <= t {
                    next += 1;
                    next - 1
                } else {
                    NO_INDEX
                }
            })
            .collect();
        (next as usize, positions)
    }
}

/// Builds the Rips filtration of `d` up to dimension `d_max ∈ {1, 2}`.
pub fn build_rips(d: &LocalDistanceMatrix, r_max: MaxRadius, d_max: usize) -> Result<FilteredComplex> {
    if !(1..=2).contains(&d_max) {
        return Err(Error::InvalidArgument(format!("d_max must be 1 or 2, got {d_max}")));
    }
    let r_max = match r_max {
        MaxRadius::Auto => d.max_positive().ok_or(Error::DegeneratePatch)?,
        MaxRadius::Fixed(r) if r > 0.0 && r.is_finite() => r,
        MaxRadius::Fixed(r) => {
            return Err(Error::InvalidArgument(format!("r_max must be positive, got {r}")))
        }
    };
    let n = d.size();
    if n > NO_INDEX as usize {
        return Err(Error::InvalidArgument("patch too large".into()));
    }

    let vertices = (0..n as u32).map(|u| Simplex::new(&[u], 0.0)).collect();

    // Upper adjacency lists, sorted ascending by construction.
    let mut upper: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut edges = Vec::new();
    let mut edge_ids = vec![NO_INDEX; n * n];
    for u in 0..n {
        for v in (u + 1)..n {
            let duv = d.get(u, v);
            if duv <= r_max {
                let id = edges.len() as u32;
                edge_ids[u * n + v] = id;
                edge_ids[v * n + u] = id;
                edges.push(Simplex::new(&[u as u32, v as u32], duv));
                upper[u].push(v as u32);
            }
        }
    }

    let mut triangles = Vec::new();
    let mut triangle_faces = Vec::new();
    if d_max >= 2 {
        for u in 0..n {
            let nu = &upper[u];
            for (pos, &v) in nu.iter().enumerate() {
                let v = v as usize;
                let duv = d.get(u, v);
                // w ranges over the common upper neighbors of u and v that exceed v.
                let mut a = &nu[pos + 1..];
                let mut b = upper[v].as_slice();
                while let (Some(&x), Some(&y)) = (a.first(), b.first()) {
                    if x < y {
                        a = &a[1..];
                    } else if y < x {
                        b = &b[1..];
                    } else {
                        let w = x as usize;
                        let f = duv.max(d.get(u, w)).max(d.get(v, w));
                        triangles.push(Simplex::new(&[u as u32, v as u32, x], f));
                        triangle_faces.push([
                            edge_ids[v * n + w],
                            edge_ids[u * n + w],
                            edge_ids[u * n + v],
                        ]);
                        a = &a[1..];
                        b = &b[1..];
                    }
                }
            }
        }
    }

    Ok(FilteredComplex {
        n_vertices: n,
        r_max,
        simplices: [vertices, edges, triangles],
        edge_ids,
        triangle_faces,
    })
}

/// The `q`-simplices present at threshold `t` (closed sublevel), in lexicographic order.
pub fn simplices_at(k: &FilteredComplex, t: f64, q: usize) -> Vec<Simplex> {
    k.simplices(q).iter().filter(|s| s.filtration <= t).copied().collect()
}

/// Incidence sign `(-1)^j`, where `j` is the position in `cofacet` of the
/// vertex missing from `face`.
pub fn orientation_sign(face: &Simplex, cofacet: &Simplex) -> Result<i8> {
    let f = face.vertices();
    let c = cofacet.vertices();
    let not_a_face = || Error::NotAFace {
        face: f.to_vec(),
        cofacet: c.to_vec(),
    };
    if f.len() + 1 != c.len() {
        return Err(not_a_face());
    }
    let j = (0..c.len())
        .find(|&j| c.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, x)| x).eq(f.iter()))
        .ok_or_else(not_a_face)?;
    Ok(if j % 2 == 0 { 1 } else { -1 })
}

/// Splits `[0, b_max]` into `segments` contiguous intervals of equal width.
///
/// Breakpoints are computed in closed form, and the last one is exactly `b_max`.
pub fn uniform_segments(b_max: f64, segments: usize) -> Result<Vec<FiltrationInterval>> {
    if segments == 0 {
        return Err(Error::InvalidArgument("segment count must be positive".into()));
    }
    if !(b_max > 0.0 && b_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("b_max must be positive, got {b_max}")));
    }
    let breakpoint = |l: usize| {
        if l == segments {
            b_max
        } else {
            b_max * l as f64 / segments as f64
        }
    };
    Ok((0..segments)
        .map(|l| FiltrationInterval {
            a: breakpoint(l),
            b: breakpoint(l + 1),
        })
        .collect())
}
