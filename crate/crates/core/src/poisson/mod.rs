//! Poisson solve for the mean and eigenspace propagation of the covariance.

pub mod basis;
pub mod field;
pub mod krylov;
pub mod propagate;

pub use basis::EigenBasis;
pub use field::{shift_mean_to_samples, shift_variance, solve_mean, StochasticField};
pub use krylov::{solve_neumann, SolveReport, SolverOptions};
pub use propagate::{reduced_covariance, selected_covariance, variance_diagonal, variance_diagonal_rowwise, DEFAULT_JOINT_CAP};
