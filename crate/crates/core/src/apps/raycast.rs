//! Free-path sampling of rays through a field of inside-probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::poisson::StochasticField;
use crate::Vec3;

/// Anything that can act as a per-step opacity along a ray.
pub trait OccupancyField {
    /// Axis-aligned box the field is defined on.
    fn bounds(&self) -> (Vec3, Vec3);
    /// Number of axes the box spans (2 for planar fields).
    fn dimension(&self) -> usize;
    /// March step.
    fn step(&self) -> f64;
    /// Probability that `p` is occupied; `p` lies in the box.
    fn occupancy(&self, p: &Vec3) -> f64;
}

impl OccupancyField for StochasticField {
    fn bounds(&self) -> (Vec3, Vec3) {
        self.grid().bounds()
    }

    fn dimension(&self) -> usize {
        self.grid().dimension()
    }

    fn step(&self) -> f64 {
        0.5 * self.grid().spacing()
    }

    fn occupancy(&self, p: &Vec3) -> f64 {
        self.p_inside(p).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RayHit {
    Hit { distance: f64, point: Vec3 },
    Miss,
}

impl RayHit {
    pub fn point(&self) -> Option<Vec3> {
        match self {
            RayHit::Hit { point, .. } => Some(*point),
            RayHit::Miss => None,
        }
    }
}

/// Parameter interval `[t0, t1]` (with `t0 >= 0`) where the ray is in the
/// box, by slab clipping over the active axes.
pub fn clip_to_box(origin: &Vec3, dir: &Vec3, lo: &Vec3, hi: &Vec3, dimension: usize) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for a in 0..dimension {
        if dir[a] == 0.0 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
            continue;
        }
        let (ta, tb) = ((lo[a] - origin[a]) / dir[a], (hi[a] - origin[a]) / dir[a]);
        t0 = t0.max(ta.min(tb));
        t1 = t1.min(ta.max(tb));
    }
    (t0 <= t1).then_some((t0, t1))
}

fn unit_direction<F: OccupancyField + ?Sized>(field: &F, direction: &Vec3) -> Result<Vec3> {
    let mut d = *direction;
    for a in field.dimension()..3 {
        d[a] = 0.0;
    }
    let n = d.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidArgument("ray direction must be nonzero in the grid plane".into()));
    }
    Ok(d / n)
}

/// Sample positions `t_i` along the clipped ray and their opacities.
fn march<F: OccupancyField + ?Sized>(field: &F, origin: &Vec3, dir: &Vec3) -> Vec<(f64, f64)> {
    let (lo, hi) = field.bounds();
    let Some((t0, t1)) = clip_to_box(origin, dir, &lo, &hi, field.dimension()) else {
        return Vec::new();
    };
    let delta = field.step();
    let n = ((t1 - t0) / delta).floor() as usize;
    (0..=n)
        .map(|i| {
            let t = t0 + i as f64 * delta;
            (t, field.occupancy(&(origin + dir * t)).clamp(0.0, 1.0))
        })
        .collect()
}

/// Marches from `origin` along `direction` with the field's step, hitting
/// at each sample with its occupancy (so step `i` is the first hit with
/// probability `T_{i-1} p_i`). Rays that never enter the box miss.
pub fn sample_free_path<F, R>(field: &F, origin: &Vec3, direction: &Vec3, rng: &mut R) -> Result<RayHit>
where
    F: OccupancyField + ?Sized,
    R: Rng + ?Sized,
{
    let dir = unit_direction(field, direction)?;
    for (t, p) in march(field, origin, &dir) {
        if p > 0.0 && rng.random::<f64>() < p {
            return Ok(RayHit::Hit {
                distance: t,
                point: origin + dir * t,
            });
        }
    }
    Ok(RayHit::Miss)
}

/// [`sample_free_path`] with its own seeded generator.
pub fn cast_ray_probabilistic<F: OccupancyField + ?Sized>(field: &F, origin: &Vec3, direction: &Vec3, seed: u64) -> Result<RayHit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_free_path(field, origin, direction, &mut rng)
}

/// Exact distribution of the sampled distance: `(t_i, P(hit at or before t_i))`.
pub fn free_path_cdf<F: OccupancyField + ?Sized>(field: &F, origin: &Vec3, direction: &Vec3) -> Result<Vec<(f64, f64)>> {
    let dir = unit_direction(field, direction)?;
    let mut transmittance = 1.0;
    Ok(march(field, origin, &dir)
        .into_iter()
        .map(|(t, p)| {
            transmittance *= 1.0 - p;
            (t, 1.0 - transmittance)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Analytic<F: Fn(&Vec3) -> f64>(F);

    impl<F: Fn(&Vec3) -> f64> OccupancyField for Analytic<F> {
        fn bounds(&self) -> (Vec3, Vec3) {
            (Vec3::zeros(), Vec3::new(1.0, 1.0, 0.0))
        }
        fn dimension(&self) -> usize {
            2
        }
        fn step(&self) -> f64 {
            0.005
        }
        fn occupancy(&self, p: &Vec3) -> f64 {
            (self.0)(p)
        }
    }

    #[test]
    fn clipping() {
        let (lo, hi) = (Vec3::zeros(), Vec3::repeat(1.0));
        let (t0, t1) = clip_to_box(&Vec3::new(-1.0, 0.5, 0.5), &Vec3::x(), &lo, &hi, 3).unwrap();
        assert_eq!((t0, t1), (1.0, 2.0));
        assert!(clip_to_box(&Vec3::new(-1.0, 2.0, 0.5), &Vec3::x(), &lo, &hi, 3).is_none());
        assert_eq!(clip_to_box(&Vec3::repeat(0.5), &Vec3::y(), &lo, &hi, 3), Some((0.0, 0.5)));
    }

    #[test]
    fn opaque_wall_and_empty_space() {
        let wall = Analytic(|p: &Vec3| if p.x >= 0.6 { 1.0 } else { 0.0 });
        let origin = Vec3::new(-0.5, 0.3, 0.0);
        for seed in 0..50 {
            match cast_ray_probabilistic(&wall, &origin, &Vec3::x(), seed).unwrap() {
                RayHit::Hit { distance, .. } => assert!((distance - 1.1).abs() <= wall.step()),
                RayHit::Miss => panic!("opaque wall missed"),
            }
        }
        let empty = Analytic(|_: &Vec3| 0.0);
        for seed in 0..50 {
            assert_eq!(cast_ray_probabilistic(&empty, &origin, &Vec3::x(), seed).unwrap(), RayHit::Miss);
        }
        // never enters the box
        assert_eq!(cast_ray_probabilistic(&wall, &Vec3::new(-0.5, 3.0, 0.0), &Vec3::x(), 0).unwrap(), RayHit::Miss);
        assert!(cast_ray_probabilistic(&wall, &origin, &Vec3::z(), 0).is_err());
    }

    #[test]
    fn half_opacity_is_geometric() {
        let half = Analytic(|_: &Vec3| 0.5);
        let origin = Vec3::new(0.0, 0.5, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mut total = 0.0;
        for _ in 0..n {
            let RayHit::Hit { distance, .. } = sample_free_path(&half, &origin, &Vec3::x(), &mut rng).unwrap() else {
                panic!("200 half-opaque steps all missed")
            };
            total += (distance / half.step()).round();
        }
        // failures before the first success, p = 1/2: mean 1
        let mean = total / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean step {mean}");
    }

    #[test]
    fn empirical_cdf_within_dkw_band() {
        let field = Analytic(|p: &Vec3| 0.02 + 0.1 * (p.x * 7.0).sin().abs());
        let origin = Vec3::new(0.0, 0.4, 0.0);
        let cdf = free_path_cdf(&field, &origin, &Vec3::x()).unwrap();
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = vec![0usize; cdf.len()];
        for _ in 0..n {
            if let RayHit::Hit { distance, .. } = sample_free_path(&field, &origin, &Vec3::x(), &mut rng).unwrap() {
                counts[(distance / field.step()).round() as usize] += 1;
            }
        }
        // two-sided DKW band at 99.9%
        let eps = ((2.0f64 / 1e-3).ln() / (2.0 * n as f64)).sqrt();
        let mut cum = 0;
        for (i, (_, f)) in cdf.iter().enumerate() {
            cum += counts[i];
            assert!((cum as f64 / n as f64 - f).abs() < eps, "step {i}");
        }
    }
}
