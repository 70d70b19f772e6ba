use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate patch: no nonzero pairwise distance")]
    DegeneratePatch,

    #[error("invalid distance matrix: {0}")]
    InvalidDistances(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{face:?} is not a codimension-one face of {cofacet:?}")]
    NotAFace { face: Vec<u32>, cofacet: Vec<u32> },

    #[error("matrix is not symmetric (relative deviation {deviation:e})")]
    NotSymmetric { deviation: f64 },

    #[error("symmetric eigensolver did not converge")]
    NoConvergence,

    #[error("scale exceeds dataset: scale {scale} with {cells} cells")]
    ScaleExceedsDataset { scale: usize, cells: usize },

    #[error(
        "neighbor graph yields only {available} nontrivial eigenpairs for {requested} embedding \
         dimensions (component sizes {component_sizes:?}); request a smaller embedding dimension"
    )]
    DisconnectedGraph {
        requested: usize,
        available: usize,
        component_sizes: Vec<usize>,
    },

    #[error("row {row} has zero norm, chordal distance is undefined")]
    ZeroNormRow { row: usize },

    #[error("patch at cell {cell}, scale {scale}, k {k}")]
    Patch {
        cell: usize,
        scale: usize,
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("run cancelled")]
    Cancelled,
}
