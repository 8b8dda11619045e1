//! Next-view scoring: expected change in total uncertainty from one more
//! scan ray.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::apps::raycast::{sample_free_path, RayHit};
use crate::apps::scan::Camera;
use crate::cloud::OrientedPointCloud;
use crate::error::Result;
use crate::poisson::StochasticField;
use crate::reconstruct::Reconstructor;
use crate::Vec3;

pub const DEFAULT_REPEATS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraScore {
    /// Mean of `values`.
    pub score: f64,
    pub repeats: usize,
    /// `|U(P) - U(P + p)|` per repeat; 0 for rays that missed.
    pub values: Vec<f64>,
    /// Signed `U(P + p) - U(P)` per repeat.
    pub signed: Vec<f64>,
}

/// Outward normal estimate at `p`: the normalized mean gradient, pointing
/// from the inside sign to the outside sign.
pub fn mean_normal(field: &StochasticField, p: &Vec3, flipped: bool) -> Option<Vec3> {
    let g = field.grid().interpolate_gradient(field.mean(), p).ok()?;
    let g = if flipped { -g } else { g };
    let n = g.norm();
    (n > 0.0 && n.is_finite()).then(|| g / n)
}

/// Scores `camera` for the cloud `cloud` whose reconstruction is `field`
/// (built by `reconstructor`). Each repeat samples one probabilistic ray
/// from the camera cone, adds the hit with its mean-gradient normal to the
/// cloud, rebuilds, and records the change in total uncertainty over the
/// grid box.
pub fn camera_score(
    reconstructor: &Reconstructor,
    cloud: &OrientedPointCloud,
    field: &StochasticField,
    camera: &Camera,
    repeats: usize,
    seed: u64,
) -> Result<CameraScore> {
    let u0 = field.total_uncertainty_grid();
    let planar = field.grid().is_planar();
    let flipped = reconstructor.config().flip_sign;
    let signed = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let dir = if planar {
                camera.sample_direction_planar(&mut rng)
            } else {
                camera.sample_direction(&mut rng)
            };
            let RayHit::Hit { point, .. } = sample_free_path(field, &camera.position(), &dir, &mut rng)? else {
                return Ok(None);
            };
            let Some(normal) = mean_normal(field, &point, flipped) else {
                log::warn!("flat mean field at the sampled hit; repeat {r} counts as a miss");
                return Ok(None);
            };
            let mut grown = cloud.clone();
            grown.push(point, normal)?;
            let u1 = reconstructor.reconstruct(&grown)?.field.total_uncertainty_grid();
            Ok(Some(u1 - u0))
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    if repeats > 0 && signed.iter().all(Option::is_none) {
        log::warn!("every ray from the camera missed; score is 0");
    }
    let signed: Vec<f64> = signed.into_iter().map(|d| d.unwrap_or(0.0)).collect();
    let values: Vec<f64> = signed.iter().map(|d| d.abs()).collect();
    let score = if repeats == 0 { 0.0 } else { values.iter().sum::<f64>() / repeats as f64 };
    Ok(CameraScore {
        score,
        repeats,
        values,
        signed,
    })
}
