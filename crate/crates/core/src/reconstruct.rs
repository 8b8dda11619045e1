//! End-to-end pipeline from an oriented cloud to a [`StochasticField`].

use std::sync::Arc;

use crate::cloud::OrientedPointCloud;
use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::gp_field::VectorFieldPosterior;
use crate::grid::{Kernel, UniformGrid};
use crate::poisson::{
    reduced_covariance, shift_mean_to_samples, solve_mean, EigenBasis, SolveReport, SolverOptions, StochasticField,
    DEFAULT_JOINT_CAP,
};
use crate::priors::{MeanPrior, PriorSpec};

pub const DEFAULT_SIGMA_G: f64 = 0.02;
pub const DEFAULT_RESOLUTION: usize = 100;
pub const DEFAULT_EIGEN_K: usize = 3000;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionConfig {
    pub sigma_g: f64,
    /// Kernel width; `None` means the grid spacing.
    pub kernel_width: Option<f64>,
    /// Requested basis size, clamped to `|O| - 1`.
    pub eigen_k: usize,
    pub prior: PriorSpec,
    /// Negate the mean so that `f > 0` counts as inside.
    pub flip_sign: bool,
    pub solver: SolverOptions,
    pub joint_cap: usize,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            sigma_g: DEFAULT_SIGMA_G,
            kernel_width: None,
            eigen_k: DEFAULT_EIGEN_K,
            prior: PriorSpec::Zero,
            flip_sign: false,
            solver: SolverOptions::default(),
            joint_cap: DEFAULT_JOINT_CAP,
        }
    }
}

/// A field together with the intermediate results that produced it.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub field: StochasticField,
    pub posterior: VectorFieldPosterior,
    pub solve: SolveReport,
    pub mean_shift: f64,
}

/// Basis size actually used for a request on `grid`, and whether it was clamped.
pub fn effective_k(grid: &UniformGrid, requested: usize) -> (usize, bool) {
    let max = grid.node_count() - 1;
    if requested > max {
        (max, true)
    } else {
        (requested.max(1), requested == 0)
    }
}

/// Reusable pipeline for one grid; the eigenbasis is built once.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    grid: UniformGrid,
    config: ReconstructionConfig,
    kernel: Kernel,
    basis: Arc<EigenBasis>,
}

impl Reconstructor {
    pub fn new(grid: UniformGrid, config: ReconstructionConfig) -> Result<Self> {
        let (k, clamped) = effective_k(&grid, config.eigen_k);
        if clamped {
            log::warn!("eigen basis size {} clamped to {k}", config.eigen_k);
        }
        let kernel = match config.kernel_width {
            Some(w) => Kernel::with_width(w, grid.dimension())?,
            None => Kernel::for_grid(&grid),
        };
        let basis = Arc::new(EigenBasis::build(&grid, k)?);
        Ok(Reconstructor {
            grid,
            config: ReconstructionConfig { eigen_k: k, ..config },
            kernel,
            basis,
        })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn config(&self) -> &ReconstructionConfig {
        &self.config
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn covariance_model(&self) -> Result<CovarianceModel> {
        CovarianceModel::new(self.grid.clone(), self.kernel, self.config.sigma_g)
    }

    pub fn reconstruct(&self, cloud: &OrientedPointCloud) -> Result<Reconstruction> {
        let prior = self.config.prior.resolve(cloud, self.grid.is_planar())?;
        self.reconstruct_with_prior(cloud, prior)
    }

    pub fn reconstruct_with_prior(&self, cloud: &OrientedPointCloud, prior: MeanPrior) -> Result<Reconstruction> {
        if let Some(p) = cloud.positions().iter().find(|p| !self.grid.contains(p)) {
            return Err(Error::outside(p));
        }
        let started = std::time::Instant::now();
        let posterior = VectorFieldPosterior::new(self.covariance_model()?, cloud.clone(), prior)?;
        let (mut mean, solve) = solve_mean(&self.grid, &posterior.node_means(), self.config.solver)?;
        let mean_shift = shift_mean_to_samples(&self.grid, &mut mean, cloud.positions())?;
        log::info!(
            "mean solve: {} iterations, relative residual {:.2e}, {:.2?}",
            solve.iterations,
            solve.relative_residual,
            started.elapsed()
        );
        let started = std::time::Instant::now();
        let reduced = reduced_covariance(&posterior, &self.basis)?;
        let mut field = StochasticField::new(self.grid.clone(), mean, reduced, self.basis.clone())?
            .with_joint_cap(self.config.joint_cap);
        if self.config.flip_sign {
            field = field.flipped();
        }
        log::info!("covariance (k = {}): {:.2?}", self.basis.len(), started.elapsed());
        Ok(Reconstruction {
            field,
            posterior,
            solve,
            mean_shift,
        })
    }
}
