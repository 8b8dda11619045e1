//! Joint probability that any point of a region lies inside the surface.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{TrilinearWeights, UniformGrid};
use crate::poisson::StochasticField;
use crate::Vec3;

/// Points of a region and their interpolation rows.
#[derive(Debug, Clone)]
pub struct RegionSamples {
    points: Vec<Vec3>,
    rows: Vec<TrilinearWeights>,
}

impl RegionSamples {
    pub fn new(grid: &UniformGrid, points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("region needs at least one point".into()));
        }
        let rows = points.iter().map(|p| grid.trilinear_weights(p)).collect::<Result<_>>()?;
        Ok(RegionSamples { points, rows })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn rows(&self) -> &[TrilinearWeights] {
        &self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub samples: usize,
}

const MAX_JITTER_STEPS: usize = 8;

/// Cholesky factor with growing diagonal jitter, starting at
/// `1e-10 * max(diag)`.
fn jittered_cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    let scale = (0..n).map(|i| cov[(i, i)]).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let mut jitter = 1e-10 * scale;
    for _ in 0..MAX_JITTER_STEPS {
        let mut m = cov.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            return Ok(c.l());
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!(
        "joint covariance not positive definite even with jitter {:.1e}",
        jitter / 10.0
    )))
}

/// Joint normal of the field values at the region points. Marginal
/// standard deviations are the interpolated pointwise ones (as used by
/// `p_inside`); correlations come from the unshifted `W E C E^T W^T`.
pub fn region_distribution(field: &StochasticField, region: &RegionSamples) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let s = region.len();
    if s > field.joint_cap() {
        return Err(Error::InvalidArgument(format!(
            "{s} region points exceed the joint-query cap of {}; subsample the region",
            field.joint_cap()
        )));
    }
    let mut slot = BTreeMap::new();
    for row in region.rows() {
        for (o, _) in row.iter() {
            let next = slot.len();
            slot.entry(o).or_insert(next);
        }
    }
    let mut nodes = vec![0; slot.len()];
    for (&o, &i) in &slot {
        nodes[i] = o;
    }
    let node_cov = crate::poisson::selected_covariance(field.reduced(), field.basis(), &nodes, usize::MAX)?;
    let w = DMatrix::<f64>::from_fn(s, nodes.len(), |r, c| {
        region.rows()[r].iter().filter(|(o, _)| *o == nodes[c]).map(|(_, w)| w).sum::<f64>()
    });
    let raw = &w * node_cov * w.transpose();

    let mut mean = DVector::<f64>::zeros(s);
    let mut sd = vec![0.0; s];
    for (i, p) in region.points().iter().enumerate() {
        mean[i] = field.mean_at(p)?;
        sd[i] = field.std_at(p)?;
    }
    let cov = DMatrix::from_fn(s, s, |i, j| {
        if i == j {
            sd[i] * sd[i]
        } else {
            let denom = (raw[(i, i)] * raw[(j, j)]).sqrt();
            let rho = if denom > 0.0 { (raw[(i, j)] / denom).clamp(-1.0, 1.0) } else { 0.0 };
            rho * sd[i] * sd[j]
        }
    });
    Ok((mean, cov))
}

/// Monte-Carlo estimate of `P(min_i f(r_i) <= 0)` with antithetic pairs.
/// The standard error is computed from the pair averages.
pub fn region_collision_probability(
    field: &StochasticField,
    region: &RegionSamples,
    mc_samples: usize,
    seed: u64,
) -> Result<CollisionEstimate> {
    if mc_samples < 2 {
        return Err(Error::InvalidArgument("need at least two Monte-Carlo samples".into()));
    }
    let (mean, cov) = region_distribution(field, region)?;
    let l = jittered_cholesky(&cov)?;
    let s = region.len();
    let pairs = mc_samples.div_ceil(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = DVector::<f64>::zeros(s);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..pairs {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let dz = &l * &z;
        let plus = (0..s).any(|i| mean[i] + dz[i] <= 0.0);
        let minus = (0..s).any(|i| mean[i] - dz[i] <= 0.0);
        let y = 0.5 * (plus as u8 as f64 + minus as u8 as f64);
        sum += y;
        sum_sq += y * y;
    }
    let n = pairs as f64;
    let probability = sum / n;
    let var = if pairs > 1 { ((sum_sq - n * probability * probability) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(CollisionEstimate {
        probability,
        std_error: (var / n).sqrt(),
        samples: 2 * pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_handles_rank_deficiency() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = jittered_cholesky(&m).unwrap();
        assert!((&l * l.transpose() - m).abs().max() < 1e-8);
        assert_eq!(jittered_cholesky(&DMatrix::zeros(3, 3)).unwrap(), DMatrix::zeros(3, 3));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(jittered_cholesky(&bad).is_err());
    }
}
