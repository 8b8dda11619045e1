//! The implicit-function distribution: shifted mean, pointwise variance and
//! the reduced covariance factor for joint queries.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::basis::EigenBasis;
use super::krylov::{solve_neumann, SolveReport, SolverOptions};
use super::propagate::{selected_covariance, variance_diagonal, DEFAULT_JOINT_CAP};
use crate::error::{Error, Result};
use crate::grid::{build_centered_divergence, build_laplacian, UniformGrid};
use crate::Vec3;

#[derive(Debug, Clone)]
pub struct StochasticField {
    grid: UniformGrid,
    mean: Vec<f64>,
    variance: Vec<f64>,
    variance_shift: f64,
    reduced: DMatrix<f64>,
    basis: Arc<EigenBasis>,
    joint_cap: usize,
}

/// Solves `L f = sum_a Z_a A_a V_a` for the node vector field `v`, with
/// `A_a` the face averaging (see [`build_centered_divergence`]).
pub fn solve_mean(grid: &UniformGrid, v: &[Vec3], options: SolverOptions) -> Result<(Vec<f64>, SolveReport)> {
    if v.len() != grid.node_count() {
        return Err(Error::InvalidArgument("vector field size does not match the grid".into()));
    }
    if let Some(bad) = v.iter().find(|x| !x.iter().all(|c| c.is_finite())) {
        return Err(Error::Numerical(format!("non-finite vector field value {bad:?}")));
    }
    let mut rhs = vec![0.0; grid.node_count()];
    let mut comp = vec![0.0; grid.node_count()];
    for (a, z) in build_centered_divergence(grid).iter().enumerate() {
        comp.iter_mut().zip(v).for_each(|(c, x)| *c = x[a]);
        for (r, zv) in rhs.iter_mut().zip(z.mul_vec(&comp)) {
            *r += zv;
        }
    }
    solve_neumann(&build_laplacian(grid), &rhs, options)
}

/// Subtracts the average interpolated value at `points`; returns the amount
/// removed. No-op for an empty point set.
pub fn shift_mean_to_samples(grid: &UniformGrid, f: &mut [f64], points: &[Vec3]) -> Result<f64> {
    if points.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for p in points {
        sum += grid.interpolate(f, p)?;
    }
    let shift = sum / points.len() as f64;
    f.iter_mut().for_each(|x| *x -= shift);
    Ok(shift)
}

/// Clamps negative entries to zero and subtracts the minimum; returns the
/// amount removed.
pub fn shift_variance(var: &mut [f64]) -> f64 {
    var.iter_mut().for_each(|v| *v = v.max(0.0));
    let min = var.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() || min == 0.0 {
        return 0.0;
    }
    var.iter_mut().for_each(|v| *v = (*v - min).max(0.0));
    min
}

impl StochasticField {
    /// Assembles a field from a (shifted) mean and the reduced factor,
    /// computing and shifting the pointwise variance.
    pub fn new(grid: UniformGrid, mean: Vec<f64>, reduced: DMatrix<f64>, basis: Arc<EigenBasis>) -> Result<Self> {
        Self::check_shapes(&grid, mean.len(), &reduced, &basis)?;
        let mut variance = variance_diagonal(&reduced, &basis);
        let variance_shift = shift_variance(&mut variance);
        Ok(StochasticField {
            grid,
            mean,
            variance,
            variance_shift,
            reduced,
            basis,
            joint_cap: DEFAULT_JOINT_CAP,
        })
    }

    /// Reassembles a field from stored parts without recomputing anything.
    pub fn from_parts(
        grid: UniformGrid,
        mean: Vec<f64>,
        variance: Vec<f64>,
        variance_shift: f64,
        reduced: DMatrix<f64>,
        basis: Arc<EigenBasis>,
    ) -> Result<Self> {
        Self::check_shapes(&grid, mean.len(), &reduced, &basis)?;
        if variance.len() != grid.node_count() {
            return Err(Error::InvalidArgument("variance size does not match the grid".into()));
        }
        Ok(StochasticField {
            grid,
            mean,
            variance,
            variance_shift,
            reduced,
            basis,
            joint_cap: DEFAULT_JOINT_CAP,
        })
    }

    fn check_shapes(grid: &UniformGrid, n_mean: usize, reduced: &DMatrix<f64>, basis: &EigenBasis) -> Result<()> {
        if n_mean != grid.node_count() {
            return Err(Error::InvalidArgument("mean size does not match the grid".into()));
        }
        if basis.dims() != grid.dims() {
            return Err(Error::InvalidArgument("basis built on a different grid".into()));
        }
        if reduced.nrows() != basis.len() || reduced.ncols() != basis.len() {
            return Err(Error::InvalidArgument("reduced factor does not match the basis size".into()));
        }
        Ok(())
    }

    pub fn with_joint_cap(mut self, cap: usize) -> Self {
        self.joint_cap = cap;
        self
    }

    /// Negates the mean, swapping which side counts as inside.
    pub fn flipped(mut self) -> Self {
        self.mean.iter_mut().for_each(|v| *v = -*v);
        self
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Shifted pointwise variance (minimum zero).
    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn variance_shift(&self) -> f64 {
        self.variance_shift
    }

    pub fn reduced(&self) -> &DMatrix<f64> {
        &self.reduced
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn joint_cap(&self) -> usize {
        self.joint_cap
    }

    /// Unshifted covariance `E' C E'^T` between the given nodes.
    pub fn node_covariance(&self, nodes: &[usize]) -> Result<DMatrix<f64>> {
        selected_covariance(&self.reduced, &self.basis, nodes, self.joint_cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_gives_zero_mean() {
        let g = UniformGrid::planar(9, 9, [0.0, 0.0], 0.125).unwrap();
        let (f, _) = solve_mean(&g, &vec![Vec3::zeros(); 81], SolverOptions::default()).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn divergence_free_input_gives_zero() {
        // a component alternating in sign along its own axis averages to
        // zero on every face
        let g = UniformGrid::planar(7, 7, [0.0, 0.0], 0.2).unwrap();
        let v: Vec<Vec3> = (0..g.node_count())
            .map(|o| {
                let [i, j, _] = g.coords(o);
                let sx = if i % 2 == 0 { 1.0 } else { -1.0 };
                let sy = if j % 2 == 0 { 1.0 } else { -1.0 };
                Vec3::new(sx * (j as f64).sin(), sy * (i as f64).cos(), 0.0)
            })
            .collect();
        let (mut f, _) = solve_mean(&g, &v, SolverOptions::default()).unwrap();
        shift_mean_to_samples(&g, &mut f, &[Vec3::new(0.3, 0.4, 0.0)]).unwrap();
        assert!(f.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn midline_normals_give_monotone_field() {
        let g = UniformGrid::planar(33, 33, [0.0, 0.0], 1.0 / 32.0).unwrap();
        let model = crate::covariance::CovarianceModel::for_grid(g.clone(), 0.02).unwrap();
        let pts: Vec<Vec3> = (0..=64).map(|i| Vec3::new(i as f64 / 64.0, 0.5, 0.0)).collect();
        let cloud = crate::cloud::OrientedPointCloud::new(pts.clone(), vec![Vec3::y(); pts.len()], 0.0).unwrap();
        let post = crate::gp_field::VectorFieldPosterior::new(model, cloud, crate::priors::MeanPrior::Zero).unwrap();
        let (mut f, rep) = solve_mean(&g, &post.node_means(), SolverOptions::default()).unwrap();
        assert!(rep.relative_residual <= 1e-8);
        shift_mean_to_samples(&g, &mut f, &pts).unwrap();
        for i in 4..29 {
            let col: Vec<f64> = (0..33).map(|j| f[g.index(i, j, 0)]).collect();
            // the lumped density tapers at the ends of the line, which leaves
            // a ripple of well under 1% of the jump
            let tol = 1e-2 * (col[32] - col[0]);
            assert!(col.windows(2).all(|w| w[1] >= w[0] - tol), "column {i} not monotone: {col:?}");
            let crossing = col.windows(2).position(|w| w[0] <= 0.0 && w[1] > 0.0).unwrap();
            assert!((crossing as f64 - 16.0).abs() <= 2.0, "column {i} crosses at {crossing}");
        }
    }

    #[test]
    fn shifts_are_idempotent() {
        let g = UniformGrid::planar(5, 5, [0.0, 0.0], 0.25).unwrap();
        let mut f: Vec<f64> = (0..25).map(|i| (i as f64).sin()).collect();
        let pts = [Vec3::new(0.3, 0.6, 0.0), Vec3::new(0.9, 0.1, 0.0)];
        shift_mean_to_samples(&g, &mut f, &pts).unwrap();
        let once = f.clone();
        shift_mean_to_samples(&g, &mut f, &pts).unwrap();
        assert!(once.iter().zip(&f).all(|(a, b)| (a - b).abs() < 1e-15));

        let mut v = vec![3.0, -1e-18, 2.5, 4.0];
        assert_eq!(shift_variance(&mut v), 0.0);
        let mut w = vec![3.0, 2.0, 2.5];
        assert_eq!(shift_variance(&mut w), 2.0);
        let once = w.clone();
        assert_eq!(shift_variance(&mut w), 0.0);
        assert_eq!(once, w);
    }
}
