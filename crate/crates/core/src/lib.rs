//! Cell-centered persistent sheaf Laplacian spectra.
//!
//! The crate is `no_std` (with `alloc`) and contains the numerical core:
//!
//! - [`complex`]: Vietoris–Rips filtrations truncated at dimension two.
//! - [`sheaf`]: one-dimensional cellular sheaves with kernel-weighted,
//!   label-modulated restriction maps, and their coboundary matrices.
//! - [`psl`]: per-scale and interval (persistent) sheaf Laplacians, spectra
//!   and summary statistics.
//! - [`embed`]: PCA, a deterministic Laplacian-eigenmaps scale provider,
//!   pairwise distances and cell-centered neighborhoods.
//! - [`features`]: the per-cell feature matrix over scales, neighborhood
//!   sizes, filtration segments and degrees.
//! - [`linalg`]: the dense matrix type and symmetric eigensolver used
//!   throughout.
//!
//! IO, the parallel executor and the command line live in the `hsse` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod complex;
pub mod embed;
mod error;
pub mod features;
pub mod linalg;
pub mod psl;
pub mod sheaf;

pub use error::{Error, Result};
