//! Pointwise probabilities, confidence intervals and total uncertainty.

use libm::erfc;

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::poisson::StochasticField;
use crate::Vec3;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(f <= 0)` for `f ~ N(mu, sigma^2)`; the indicator of `mu <= 0` when
/// `sigma == 0`.
pub fn inside_probability(mu: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        normal_cdf(-mu / sigma)
    } else if mu <= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Density of `f` at 0. With `sigma == 0` this is `+inf` on the surface
/// (`mu == 0`) and 0 elsewhere.
pub fn surface_density_value(mu: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        normal_pdf(mu / sigma) / sigma
    } else if mu == 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// The 68-95-99.7 levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfidenceLevel {
    P68,
    P95,
    P997,
}

impl ConfidenceLevel {
    pub fn from_level(level: f64) -> Result<Self> {
        [(0.68, Self::P68), (0.95, Self::P95), (0.997, Self::P997)]
            .into_iter()
            .find(|(l, _)| (level - l).abs() < 1e-9)
            .map(|(_, c)| c)
            .ok_or_else(|| Error::InvalidArgument(format!("unsupported confidence level {level}; use 0.68, 0.95 or 0.997")))
    }

    pub fn level(self) -> f64 {
        match self {
            Self::P68 => 0.68,
            Self::P95 => 0.95,
            Self::P997 => 0.997,
        }
    }

    pub fn z(self) -> f64 {
        match self {
            Self::P68 => 1.0,
            Self::P95 => 2.0,
            Self::P997 => 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Inside,
    Outside,
    Uncertain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn around(mu: f64, sigma: f64, level: ConfidenceLevel) -> Self {
        let z = level.z();
        Interval {
            lo: mu - z * sigma,
            hi: mu + z * sigma,
        }
    }

    /// Inside when the whole interval is negative, outside when it is
    /// positive.
    pub fn classify(&self) -> Classification {
        if self.hi < 0.0 {
            Classification::Inside
        } else if self.lo > 0.0 {
            Classification::Outside
        } else {
            Classification::Uncertain
        }
    }
}

impl StochasticField {
    pub fn mean_at(&self, p: &Vec3) -> Result<f64> {
        self.grid().interpolate(self.mean(), p)
    }

    /// Interpolated (shifted) variance.
    pub fn variance_at(&self, p: &Vec3) -> Result<f64> {
        Ok(self.grid().interpolate(self.variance(), p)?.max(0.0))
    }

    pub fn std_at(&self, p: &Vec3) -> Result<f64> {
        Ok(self.variance_at(p)?.sqrt())
    }

    pub fn p_inside(&self, p: &Vec3) -> Result<f64> {
        Ok(inside_probability(self.mean_at(p)?, self.std_at(p)?))
    }

    pub fn surface_density(&self, p: &Vec3) -> Result<f64> {
        Ok(surface_density_value(self.mean_at(p)?, self.std_at(p)?))
    }

    pub fn confidence_interval(&self, p: &Vec3, level: ConfidenceLevel) -> Result<Interval> {
        Ok(Interval::around(self.mean_at(p)?, self.std_at(p)?, level))
    }

    /// `p_inside` at every node.
    pub fn p_inside_nodes(&self) -> Vec<f64> {
        self.mean()
            .iter()
            .zip(self.variance())
            .map(|(m, v)| inside_probability(*m, v.max(0.0).sqrt()))
            .collect()
    }

    /// Total uncertainty over the axis-aligned box `[lo, hi]`.
    pub fn total_uncertainty(&self, lo: &Vec3, hi: &Vec3) -> f64 {
        total_uncertainty(self.grid(), &self.p_inside_nodes(), lo, hi)
    }

    /// Total uncertainty over the whole grid.
    pub fn total_uncertainty_grid(&self) -> f64 {
        let (lo, hi) = self.grid().bounds();
        self.total_uncertainty(&lo, &hi)
    }
}

/// `sum_nodes (0.5 - |p - 0.5|) * vol`, where each node carries its
/// half-cell control volume clipped to the box, so a constant integrand is
/// integrated exactly.
pub fn total_uncertainty(grid: &UniformGrid, p_inside: &[f64], lo: &Vec3, hi: &Vec3) -> f64 {
    let h = grid.spacing();
    let d = grid.dimension();
    let dims = grid.dims();
    // per-axis node weights
    let weights: Vec<Vec<f64>> = (0..3)
        .map(|a| {
            (0..dims[a])
                .map(|i| {
                    if a >= d {
                        return 1.0;
                    }
                    let x = grid.axis_coord(a, i);
                    ((x + 0.5 * h).min(hi[a]) - (x - 0.5 * h).max(lo[a])).max(0.0)
                })
                .collect()
        })
        .collect();
    let mut total = 0.0;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            let wjk = weights[1][j] * weights[2][k];
            if wjk == 0.0 {
                continue;
            }
            for i in 0..dims[0] {
                let w = weights[0][i] * wjk;
                if w > 0.0 {
                    let p = p_inside[grid.index(i, j, k)];
                    total += (0.5 - (p - 0.5).abs()) * w;
                }
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Abramowitz-Stegun style series for erf, independent of statrs.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        2.0 / std::f64::consts::PI.sqrt() * sum
    }

    #[test]
    fn cdf_matches_series() {
        for x in [-3.0, -1.0, -0.3, 0.0, 0.7, 1.0, 2.5] {
            let series = 0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2));
            assert!((normal_cdf(x) - series).abs() < 1e-13, "{x}: {} vs {series}", normal_cdf(x));
        }
        assert!((inside_probability(-1.0, 1.0) - 0.841345).abs() < 1e-6);
        assert_eq!(inside_probability(0.0, 0.3), 0.5);
        assert_eq!(inside_probability(1.0, 0.0), 0.0);
        assert_eq!(inside_probability(0.0, 0.0), 1.0);
    }

    #[test]
    fn density_cases() {
        let s = 0.2;
        assert!((surface_density_value(0.0, s) - 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-14);
        assert!((surface_density_value(s, s) - (-0.5f64).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-14);
        assert!(surface_density_value(100.0, 1.0) < 1e-300);
        assert_eq!(surface_density_value(0.0, 0.0), f64::INFINITY);
        assert_eq!(surface_density_value(0.1, 0.0), 0.0);
    }

    #[test]
    fn intervals() {
        let lvl = ConfidenceLevel::from_level(0.95).unwrap();
        assert_eq!(Interval::around(0.0, 1.0, lvl), Interval { lo: -2.0, hi: 2.0 });
        assert_eq!(Interval::around(0.4, 0.0, ConfidenceLevel::P68), Interval { lo: 0.4, hi: 0.4 });
        assert_eq!(Interval::around(-1.0, 0.1, ConfidenceLevel::P997).classify(), Classification::Inside);
        assert_eq!(Interval::around(1.0, 0.1, ConfidenceLevel::P997).classify(), Classification::Outside);
        assert_eq!(Interval::around(0.1, 0.1, ConfidenceLevel::P95).classify(), Classification::Uncertain);
        assert!(ConfidenceLevel::from_level(0.9).is_err());
    }

    #[test]
    fn uncertainty_bounds() {
        let g = UniformGrid::planar(21, 21, [0.0, 0.0], 0.05).unwrap();
        let lo = Vec3::zeros();
        let hi = Vec3::new(1.0, 1.0, 0.0);
        let half = vec![0.5; g.node_count()];
        assert!((total_uncertainty(&g, &half, &lo, &hi) - 0.5).abs() < 1e-12);
        let crisp: Vec<f64> = (0..g.node_count()).map(|i| (i % 2) as f64).collect();
        assert_eq!(total_uncertainty(&g, &crisp, &lo, &hi), 0.0);
        let sub = total_uncertainty(&g, &half, &Vec3::new(0.2, 0.3, 0.0), &Vec3::new(0.6, 0.5, 0.0));
        assert!((sub - 0.5 * 0.4 * 0.2).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn cdf_bounded_and_monotone(mu in -50.0f64..50.0, d in 0.0f64..10.0, sigma in 1e-6f64..10.0) {
            let a = inside_probability(mu, sigma);
            let b = inside_probability(mu + d, sigma);
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b <= a);
        }

        #[test]
        fn uncertainty_in_range(ps in proptest::collection::vec(0.0f64..=1.0, 36)) {
            let g = UniformGrid::planar(6, 6, [0.0, 0.0], 0.2).unwrap();
            let u = total_uncertainty(&g, &ps, &Vec3::zeros(), &Vec3::new(1.0, 1.0, 0.0));
            prop_assert!(u >= 0.0 && u <= 0.5 + 1e-12);
        }
    }
}
