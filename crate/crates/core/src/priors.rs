//! Primitive mean priors for the vector field.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen};

use crate::cloud::OrientedPointCloud;
use crate::error::{Error, Result};
use crate::Vec3;

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Mean function `m(x)` of the vector-field prior.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum MeanPrior {
    #[default]
    Zero,
    /// `alpha (x - c) / |x - c|`
    Sphere { center: Vec3, alpha: f64 },
    /// `alpha A(x - c) / |A(x - c)|` with `A` symmetric positive definite.
    Ellipsoid { center: Vec3, alpha: f64, axes: Matrix3<f64> },
}

impl MeanPrior {
    pub fn sphere(center: Vec3, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(MeanPrior::Sphere { center, alpha })
    }

    /// Sphere prior centred on the centroid of the cloud.
    pub fn sphere_at_centroid(cloud: &OrientedPointCloud, alpha: f64) -> Result<Self> {
        let center = cloud
            .centroid()
            .ok_or_else(|| Error::InvalidArgument("sphere prior needs at least one sample".into()))?;
        Self::sphere(center, alpha)
    }

    /// Ellipsoid prior fitted to the cloud positions. Falls back to a sphere
    /// (and says so in the returned flag) when the fit is degenerate.
    pub fn fit_ellipsoid(cloud: &OrientedPointCloud, center: Option<Vec3>, alpha: f64, planar: bool) -> Result<(Self, bool)> {
        check_alpha(alpha)?;
        let center = match center.or_else(|| cloud.centroid()) {
            Some(c) => c,
            None => return Err(Error::InvalidArgument("ellipsoid prior needs samples".into())),
        };
        match fit_ellipsoid_axes(cloud.positions(), planar) {
            Some(axes) => Ok((MeanPrior::Ellipsoid { center, alpha, axes }, false)),
            None => {
                log::warn!("degenerate point distribution for ellipsoid fit; using a sphere prior");
                Ok((MeanPrior::Sphere { center, alpha }, true))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, MeanPrior::Zero)
    }

    pub fn eval(&self, x: &Vec3) -> Vec3 {
        match self {
            MeanPrior::Zero => Vec3::zeros(),
            MeanPrior::Sphere { center, alpha } => scaled_direction(x - center, *alpha),
            MeanPrior::Ellipsoid { center, alpha, axes } => scaled_direction(axes * (x - center), *alpha),
        }
    }
}

/// Prior choice before it is resolved against a particular cloud.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PriorSpec {
    #[default]
    Zero,
    Sphere { center: Option<Vec3>, alpha: f64 },
    Ellipsoid { center: Option<Vec3>, alpha: f64 },
}

impl PriorSpec {
    /// Missing centres default to the centroid of the cloud.
    pub fn resolve(&self, cloud: &OrientedPointCloud, planar: bool) -> Result<MeanPrior> {
        match *self {
            PriorSpec::Zero => Ok(MeanPrior::Zero),
            PriorSpec::Sphere { center: Some(c), alpha } => MeanPrior::sphere(c, alpha),
            PriorSpec::Sphere { center: None, alpha } => MeanPrior::sphere_at_centroid(cloud, alpha),
            PriorSpec::Ellipsoid { center, alpha } => Ok(MeanPrior::fit_ellipsoid(cloud, center, alpha, planar)?.0),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("prior strength {alpha} must be nonnegative")))
    }
}

fn scaled_direction(v: Vec3, alpha: f64) -> Vec3 {
    let n = v.norm();
    if n == 0.0 {
        Vec3::zeros()
    } else {
        v * (alpha / n)
    }
}

/// `A = R diag(1 / extent) R^T` from the principal axes of the positions.
/// Returns `None` for too few points or a (near) flat distribution.
pub fn fit_ellipsoid_axes(points: &[Vec3], planar: bool) -> Option<Matrix3<f64>> {
    let d = if planar { 2 } else { 3 };
    if points.len() < d + 1 {
        return None;
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let q = p - mean;
        cov += q * q.transpose();
    }
    cov /= n;

    if planar {
        let c2 = Matrix2::new(cov[(0, 0)], cov[(0, 1)], cov[(1, 0)], cov[(1, 1)]);
        let eig = SymmetricEigen::new(c2);
        let max = eig.eigenvalues.max();
        if !(max > 0.0) || eig.eigenvalues.min() <= 1e-10 * max {
            return None;
        }
        let inv = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
        let a2 = eig.eigenvectors * Matrix2::from_diagonal(&inv) * eig.eigenvectors.transpose();
        let mut a = Matrix3::zeros();
        a.fixed_view_mut::<2, 2>(0, 0).copy_from(&a2);
        a[(2, 2)] = inv.mean();
        Some(a)
    } else {
        let eig = SymmetricEigen::new(cov);
        let max = eig.eigenvalues.max();
        if !(max > 0.0) || eig.eigenvalues.min() <= 1e-10 * max {
            return None;
        }
        let inv = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
        Some(eig.eigenvectors * Matrix3::from_diagonal(&inv) * eig.eigenvectors.transpose())
    }
}
