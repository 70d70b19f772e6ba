//! Sheaf Laplacians, `(a, b)`-persistent sheaf Laplacians and their spectra.
//!
//! The persistent up-operator across `X_a ↪ X_b` is the generalized Schur
//! complement of the up-Laplacian of `X_b` that eliminates the `q`-simplices
//! absent from `X_a`. Since the up-Laplacian is positive semidefinite, the
//! range of the off-diagonal block lies in the range of the eliminated block
//! and the result does not depend on the choice of generalized inverse.
//!
//! [`persistent_up_schur`] works on the assembled up-Laplacian with an
//! eigenvalue-based pseudo-inverse. The pipeline uses [`persistent_up`],
//! which forms the same complement from orthogonal factorizations of the
//! coboundary: squaring the coboundary into `L_BB` would push singular values
//! below about `1e-5` of the largest into the pseudo-inverse cutoff.

use alloc::format;
use alloc::vec::Vec;

use crate::complex::{FiltrationInterval, NO_INDEX};
use crate::linalg::{pivoted_qr, symmetric_eigen, symmetric_eigenvalues, Matrix, StreamingQr};
use crate::sheaf::SheafAssignment;
use crate::{Error, Result};

/// Relative singular-value cutoff of the Schur-complement pseudo-inverse.
pub const PINV_RTOL: f64 = 1e-10;
/// Eigenvalues within `ZERO_RTOL · max(1, ‖M‖)` of zero are reported as 0.
pub const ZERO_RTOL: f64 = 1e-10;
/// Largest relative asymmetry accepted by [`eigenvalues_sym`].
pub const SYMMETRY_RTOL: f64 = 1e-9;

/// Names of the [`SpectralStats`] fields, in feature order.
pub const STAT_NAMES: [&str; 5] = ["sum", "mean", "max", "min", "std"];

#[derive(Debug, Clone, PartialEq)]
pub struct PslOperator {
    pub degree: usize,
    pub interval: FiltrationInterval,
    /// Symmetric operator on the `degree`-cochains of `X_a`.
    pub matrix: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PslSpectrum {
    pub degree: usize,
    pub interval: FiltrationInterval,
    /// Ascending, with near-zero values clipped to exactly 0.
    pub eigenvalues: Vec<f64>,
}

impl PslSpectrum {
    pub fn zero_count(&self) -> usize {
        self.eigenvalues.iter().filter(|&&x| x == 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpectralStats {
    pub sum: f64,
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    pub std: f64,
}

impl SpectralStats {
    /// `[sum, mean, max, min, std]`.
    pub fn to_array(self) -> [f64; 5] {
        [self.sum, self.mean, self.max, self.min, self.std]
    }
}

fn check_degree(q: usize) -> Result<()> {
    if q > 1 {
        return Err(Error::InvalidArgument(format!("Laplacian degree {q} not supported")));
    }
    Ok(())
}

/// `δ_q(t)ᵀ δ_q(t)` on the `q`-simplices of `X_t`, accumulated simplex by simplex.
pub fn up_laplacian_at(sheaf: &SheafAssignment<'_>, t: f64, q: usize) -> Result<Matrix> {
    check_degree(q)?;
    let k = sheaf.complex();
    let (n, pos) = k.slice_positions(t, q);
    let mut out = Matrix::zeros(n, n);
    if q == 0 {
        for (e, edge) in k.simplices(1).iter().enumerate() {
            if edge.filtration() > t {
                continue;
            }
            let u = pos[edge.vertices()[0] as usize] as usize;
            let v = pos[edge.vertices()[1] as usize] as usize;
            let (wu, wv) = (sheaf.vertex_edge_weight(e, 0), sheaf.vertex_edge_weight(e, 1));
            out[(u, u)] += wu * wu;
            out[(v, v)] += wv * wv;
            out[(u, v)] -= wu * wv;
            out[(v, u)] -= wu * wv;
        }
    } else {
        for (tri, simplex) in k.simplices(2).iter().enumerate() {
            if simplex.filtration() > t {
                continue;
            }
            let faces = k.triangle_faces(tri);
            let mut idx = [0usize; 3];
            let mut coef = [0.0; 3];
            for j in 0..3 {
                idx[j] = pos[faces[j] as usize] as usize;
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                coef[j] = sign * sheaf.edge_triangle_weight(tri, j);
            }
            for i in 0..3 {
                for j in 0..3 {
                    out[(idx[i], idx[j])] += coef[i] * coef[j];
                }
            }
        }
    }
    Ok(out)
}

/// `δ_0(t) δ_0(t)ᵀ` on the edges of `X_t`.
pub fn down_laplacian_at(sheaf: &SheafAssignment<'_>, t: f64) -> Matrix {
    let k = sheaf.complex();
    let (n, pos) = k.slice_positions(t, 1);
    let mut out = Matrix::zeros(n, n);
    // Per vertex, the incident edges of X_t with their δ_0 coefficient.
    let mut incident: Vec<Vec<(usize, f64)>> = alloc::vec![Vec::new(); k.n_vertices()];
    for (e, edge) in k.simplices(1).iter().enumerate() {
        let p = pos[e];
        if p == NO_INDEX {
            continue;
        }
        let p = p as usize;
        let (u, v) = (edge.vertices()[0] as usize, edge.vertices()[1] as usize);
        incident[u].push((p, -sheaf.vertex_edge_weight(e, 0)));
        incident[v].push((p, sheaf.vertex_edge_weight(e, 1)));
    }
    for list in &incident {
        for &(p, cp) in list {
            for &(r, cr) in list {
                out[(p, r)] += cp * cr;
            }
        }
    }
    out
}

/// The sheaf Laplacian `L_q(t)`; the down term is omitted for `q = 0`.
pub fn laplacian_at(sheaf: &SheafAssignment<'_>, t: f64, q: usize) -> Result<Matrix> {
    let up = up_laplacian_at(sheaf, t, q)?;
    Ok(if q == 0 {
        up
    } else {
        up.add(&down_laplacian_at(sheaf, t))
    })
}

/// Generalized Schur complement `L_AA − L_AB L_BB⁺ L_BA` with `A = keep` and
/// `B` its complement. `keep` must be strictly increasing.
pub fn persistent_up_schur(l_up_b: &Matrix, keep: &[usize]) -> Result<Matrix> {
    let n = l_up_b.nrows();
    if !l_up_b.is_square() {
        return Err(Error::InvalidArgument("up-Laplacian must be square".into()));
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) || keep.last().is_some_and(|&i| i >= n) {
        return Err(Error::InvalidArgument(
            "kept indices must be strictly increasing and in range".into(),
        ));
    }
    if keep.len() == n {
        return Ok(l_up_b.clone());
    }
    let mut kept = alloc::vec![false; n];
    keep.iter().for_each(|&i| kept[i] = true);
    let elim: Vec<usize> = (0..n).filter(|&i| !kept[i]).collect();

    let mut out = l_up_b.select(keep, keep);
    if keep.is_empty() {
        return Ok(out);
    }
    let l_ab = l_up_b.select(keep, &elim);
    let eig = symmetric_eigen(&l_up_b.select(&elim, &elim), true)?;
    let top = eig.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let cutoff = PINV_RTOL * top;

    // Y = L_AB · V_r · Λ_r^{-1/2}, so that L_AB L_BB⁺ L_BA = Y Yᵀ.
    let retained: Vec<usize> = (0..elim.len()).filter(|&j| eig.values[j] > cutoff).collect();
    let mut y = Matrix::zeros(keep.len(), retained.len());
    for (c, &j) in retained.iter().enumerate() {
        let v = eig.vector(j);
        let inv_sqrt = 1.0 / libm::sqrt(eig.values[j]);
        for i in 0..keep.len() {
            let dot: f64 = l_ab.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
            y[(i, c)] = dot * inv_sqrt;
        }
    }
    let correction = y.outer_gram();
    for i in 0..keep.len() {
        for (o, c) in out.row_mut(i).iter_mut().zip(correction.row(i)) {
            *o -= c;
        }
    }
    // L_AA is symmetric and so is Y Yᵀ; mirror to make that exact.
    out.mirror_upper();
    Ok(out)
}

/// The persistent up-operator of degree `q` across `X_a ↪ X_b`, on `C^q(X_a)`.
///
/// This is the Schur complement [`persistent_up_schur`] would compute from
/// `L^b_{q,up}`, evaluated from the coboundary instead: with `D = δ_q(b)ᵀ`
/// split into kept rows `D_A` and eliminated rows `D_B`, a streaming QR of
/// `D_Bᵀ` gives `R` with `RᵀR = L_BB`, and a column-pivoted QR of `R`
/// gives `D_Bᵀ Π_r = Q_r R_11`. Then
/// `L_AB L_BB⁺ L_BA = Y Yᵀ` with `Y = L_AB Π_r R_11⁻¹`. Working with `R`
/// rather than `L_BB` keeps the conditioning of `D_B` instead of squaring
/// it; the numerical rank uses the cutoff [`PINV_RTOL`] relative to the
/// leading pivot of `R`, the largest singular value of `D_B` up to a small
/// factor.
pub fn persistent_up(sheaf: &SheafAssignment<'_>, interval: FiltrationInterval, q: usize) -> Result<Matrix> {
    check_degree(q)?;
    let FiltrationInterval { a, b } = interval;
    if !(a >= 0.0 && b >= a) {
        return Err(Error::InvalidArgument(format!("invalid interval [{a}, {b}]")));
    }
    let k = sheaf.complex();
    let up_b = up_laplacian_at(sheaf, b, q)?;
    // Positions within the X_b basis, which is the lexicographic order
    // restricted to X_b, so both lists are increasing.
    let (n_b, pos_b) = k.slice_positions(b, q);
    let mut keep = Vec::new();
    let mut elim = Vec::new();
    let mut elim_pos = alloc::vec![NO_INDEX; n_b];
    for (id, s) in k.simplices(q).iter().enumerate() {
        let p = pos_b[id];
        if p == NO_INDEX {
            continue;
        }
        if s.filtration() <= a {
            keep.push(p as usize);
        } else {
            elim_pos[p as usize] = elim.len() as u32;
            elim.push(p as usize);
        }
    }
    let mut out = up_b.select(&keep, &keep);
    if elim.is_empty() || keep.is_empty() {
        return Ok(out);
    }

    // Rows of D_Bᵀ: cofacets in X_b \ X_a. Cofacets already in X_a have
    // all their faces kept and contribute nothing to D_B.
    let mut qr = StreamingQr::new(elim.len());
    let mut row = alloc::vec![0.0; elim.len()];
    let mut push = |entries: &[(usize, f64)]| {
        let mut any = false;
        for &(face, coef) in entries {
            let e = elim_pos[pos_b[face] as usize];
            if e != NO_INDEX {
                row[e as usize] = coef;
                any = true;
            }
        }
        if any {
            qr.push(&mut row);
            row.iter_mut().for_each(|x| *x = 0.0);
        }
    };
    if q == 0 {
        for (e, edge) in k.simplices(1).iter().enumerate() {
            if edge.filtration() > a && edge.filtration() <= b {
                let [u, v] = [edge.vertices()[0] as usize, edge.vertices()[1] as usize];
                push(&[
                    (u, -sheaf.vertex_edge_weight(e, 0)),
                    (v, sheaf.vertex_edge_weight(e, 1)),
                ]);
            }
        }
    } else {
        for (t, tri) in k.simplices(2).iter().enumerate() {
            if tri.filtration() > a && tri.filtration() <= b {
                let f = k.triangle_faces(t);
                let w = |j: usize| sheaf.edge_triangle_weight(t, j);
                push(&[(f[0] as usize, w(0)), (f[1] as usize, -w(1)), (f[2] as usize, w(2))]);
            }
        }
    }

    let pqr = pivoted_qr(&qr.into_r());
    let rank = pqr.rank(PINV_RTOL);
    if rank == 0 {
        return Ok(out);
    }
    let l_ab = up_b.select(&keep, &elim);
    let mut y = Matrix::zeros(keep.len(), rank);
    for i in 0..keep.len() {
        let rhs = l_ab.row(i);
        let yi = y.row_mut(i);
        // Forward substitution on y R_11 = rhs Π.
        for j in 0..rank {
            let col = &pqr.rt.row(j)[..j];
            let dot: f64 = yi[..j].iter().zip(col).map(|(a, b)| a * b).sum();
            yi[j] = (rhs[pqr.perm[j]] - dot) / pqr.rt[(j, j)];
        }
    }
    let correction = y.outer_gram();
    for i in 0..keep.len() {
        for (o, c) in out.row_mut(i).iter_mut().zip(correction.row(i)) {
            *o -= c;
        }
    }
    out.mirror_upper();
    Ok(out)
}

/// The `(a, b)`-persistent sheaf Laplacian of degree `q` on `C^q(X_a)`:
/// [`persistent_up`] plus, for `q = 1`, the down term `δ_0(a) δ_0(a)ᵀ`.
pub fn persistent_laplacian(
    sheaf: &SheafAssignment<'_>,
    interval: FiltrationInterval,
    q: usize,
) -> Result<PslOperator> {
    let up = persistent_up(sheaf, interval, q)?;
    let matrix = if q == 0 {
        up
    } else {
        up.add(&down_laplacian_at(sheaf, interval.a))
    };
    Ok(PslOperator {
        degree: q,
        interval,
        matrix,
    })
}

/// Ascending eigenvalues with values in `[−τ, τ]` clipped to 0, where
/// `τ = ZERO_RTOL · max(1, spectral norm)`.
pub fn eigenvalues_sym(m: &Matrix) -> Result<Vec<f64>> {
    let deviation = m.symmetry_deviation();
    if deviation > SYMMETRY_RTOL {
        return Err(Error::NotSymmetric { deviation });
    }
    let mut values = symmetric_eigenvalues(m)?;
    let norm = values.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let tau = ZERO_RTOL * norm.max(1.0);
    for x in &mut values {
        if x.abs() <= tau {
            *x = 0.0;
        }
    }
    Ok(values)
}

pub fn spectrum(op: &PslOperator) -> Result<PslSpectrum> {
    Ok(PslSpectrum {
        degree: op.degree,
        interval: op.interval,
        eigenvalues: eigenvalues_sym(&op.matrix)?,
    })
}

/// Sum, mean, max, min and population standard deviation over all
/// eigenvalues; an empty spectrum gives all zeros.
pub fn spectral_stats(spectrum: &PslSpectrum) -> SpectralStats {
    stats_of(&spectrum.eigenvalues)
}

/// [`spectral_stats`] restricted to the nonzero eigenvalues.
pub fn spectral_stats_nonzero(spectrum: &PslSpectrum) -> SpectralStats {
    let nonzero: Vec<f64> = spectrum.eigenvalues.iter().copied().filter(|&x| x != 0.0).collect();
    stats_of(&nonzero)
}

pub(crate) fn stats_of(xs: &[f64]) -> SpectralStats {
    if xs.is_empty() {
        return SpectralStats::default();
    }
    let n = xs.len() as f64;
    let sum: f64 = xs.iter().sum();
    let mean = sum / n;
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    SpectralStats {
        sum,
        mean: mean.clamp(min, max),
        max,
        min,
        std: libm::sqrt(var),
    }
}
