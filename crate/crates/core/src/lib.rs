//! Dual-graph regularized foreground/background separation for static-camera
//! video.
//!
//! A video of `m` grayscale frames of size `n1 x n2` is flattened into an
//! `n x m` matrix `D` (one column per frame) and split into a low-rank
//! background `L` and a sparse foreground `S` by minimizing
//!
//! ```text
//! ||D - L - S||_1 + lambda1 ||L||_{W,*} + lambda2 ||S||_1
//!     + gamma1/2 tr(L' Phi_s L) + gamma2/2 tr(L Phi_t L')
//! ```
//!
//! where `||.||_{W,*}` is a weighted nuclear norm with Gaussian-of-singular-value
//! weights and `Phi_s`, `Phi_t` are sparse normalized graph Laplacians built
//! from patch similarities between neighbouring pixels and frames.
//!
//! Modules:
//! - [`videoio`]: frame ingest, synthesis, matrix/frame file formats
//! - [`graph`]: sparse adjacency and normalized Laplacian construction
//! - [`proxops`]: shrinkage, weighted singular value thresholding, weights
//! - [`solver`]: the ADMM iteration
//! - [`metrics`]: RE, PSNR, precision/recall/F-measure
//! - [`cli`]: config parsing and the `dualgraph` subcommands

pub mod cli;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod proxops;
pub mod solver;
pub mod videoio;

pub use error::{Error, Result};
pub use graph::{
    normalized_laplacian, spatial_adjacency, temporal_adjacency, NeighborhoodPolicy,
    SimilarityKernel, SparseLaplacian, SparseMatrix,
};
pub use metrics::{EvalReport, MaskVolume, PrReFm};
pub use proxops::{erf_weights, shrink, weighted_nuclear_norm, weighted_svt, SvdTriple, WeightVector};
pub use solver::{solve, SeparationResult, SolverConfig, SolverState};
pub use videoio::{DataMatrix, Frame, SyntheticSpec, VideoFrames};
