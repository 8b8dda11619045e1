//! Statistical queries over a [`StochasticField`](crate::poisson::StochasticField).

pub mod collision;
pub mod levelset;
pub mod pointwise;

pub use collision::{region_collision_probability, CollisionEstimate, RegionSamples};
pub use levelset::{extract_levelset, LevelSet};
pub use pointwise::{
    inside_probability, normal_cdf, normal_pdf, surface_density_value, total_uncertainty, Classification,
    ConfidenceLevel, Interval,
};
