//! Stochastic Poisson surface reconstruction on a uniform grid.
//!
//! An oriented point cloud is turned into a Gaussian distribution over the
//! implicit function: a mean field from a Poisson solve and a covariance
//! propagated through a truncated cosine eigenbasis. On top of that sit
//! pointwise and joint statistical queries and a few applications (point
//! repair, probabilistic ray casting, scan simulation, next-view scoring).

pub mod apps;
pub mod cloud;
pub mod covariance;
pub mod error;
pub mod gp_field;
pub mod grid;
pub mod mesh;
pub mod poisson;
pub mod priors;
pub mod queries;
pub mod reconstruct;
pub mod sparse;

pub use cloud::OrientedPointCloud;
pub use covariance::{CovarianceModel, LumpedCovariance};
pub use error::{Error, Result};
pub use gp_field::VectorFieldPosterior;
pub use grid::{Kernel, UniformGrid};
pub use mesh::{Polyline, TriangleMesh};
pub use poisson::{EigenBasis, StochasticField};
pub use priors::{MeanPrior, PriorSpec};
pub use reconstruct::{Reconstruction, ReconstructionConfig, Reconstructor};
pub use sparse::SparseMatrix;

/// Points and vectors; planar problems leave `z` at zero.
pub type Vec3 = nalgebra::Vector3<f64>;
