//! Random-walk Metropolis-Hastings and surface-point repair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::cloud::OrientedPointCloud;
use crate::error::{Error, Result};
use crate::poisson::StochasticField;
use crate::Vec3;

/// Post-burn-in states of one chain.
#[derive(Debug, Clone)]
pub struct Chain {
    pub samples: Vec<Vec3>,
    pub accepted: usize,
    pub steps: usize,
}

impl Chain {
    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }

    pub fn last(&self) -> Option<&Vec3> {
        self.samples.last()
    }
}

/// Gaussian random walk on the first `active_axes` coordinates. The first
/// `steps / 5` states are discarded as burn-in. `log_density` may return
/// `-inf` to reject a proposal.
pub fn random_walk<F, R>(log_density: F, start: Vec3, steps: usize, sigma: f64, active_axes: usize, rng: &mut R) -> Result<Chain>
where
    F: Fn(&Vec3) -> f64,
    R: Rng + ?Sized,
{
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("proposal sigma {sigma} must be positive")));
    }
    let step = Normal::new(0.0, sigma).expect("sigma checked");
    let burn_in = steps / 5;
    let mut x = start;
    let mut lx = log_density(&x);
    let mut chain = Chain {
        samples: Vec::with_capacity(steps - burn_in),
        accepted: 0,
        steps,
    };
    for s in 0..steps {
        let mut y = x;
        for a in 0..active_axes.min(3) {
            y[a] += step.sample(rng);
        }
        let ly = log_density(&y);
        let u: f64 = rng.random();
        // also moves off a zero-density start
        if ly > f64::NEG_INFINITY && (lx == f64::NEG_INFINITY || u.ln() < ly - lx) {
            x = y;
            lx = ly;
            chain.accepted += 1;
        }
        if s >= burn_in {
            chain.samples.push(x);
        }
    }
    Ok(chain)
}

/// Log of the surface density of `field` at `p`; `-inf` outside the grid.
pub fn surface_log_density(field: &StochasticField, p: &Vec3) -> f64 {
    let (Ok(mu), Ok(sd)) = (field.mean_at(p), field.std_at(p)) else {
        return f64::NEG_INFINITY;
    };
    if sd > 0.0 {
        let z = mu / sd;
        -0.5 * z * z - sd.ln()
    } else if mu == 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

/// Draws `n_points` samples from the density proportional to the surface
/// density of `field`, one chain per output point. Each chain starts at a
/// randomly chosen cloud point and returns its final state; `steps == 0`
/// returns the starting points.
pub fn mh_repair(
    field: &StochasticField,
    cloud: &OrientedPointCloud,
    n_points: usize,
    steps: usize,
    sigma_prop: f64,
    seed: u64,
) -> Result<Vec<Vec3>> {
    if n_points == 0 {
        return Err(Error::InvalidArgument("n_points must be at least 1".into()));
    }
    if cloud.is_empty() {
        return Err(Error::InvalidArgument("chains are initialized from the cloud, which is empty".into()));
    }
    let mean = field.mean();
    let var = field.variance();
    if !mean.iter().zip(var).any(|(m, v)| crate::queries::surface_density_value(*m, v.max(0.0).sqrt()) > 0.0) {
        return Err(Error::Numerical("surface density vanishes on the whole grid".into()));
    }
    let active = field.grid().dimension();
    let chains: Vec<(Vec3, usize)> = (0..n_points)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let start = cloud.positions()[rng.random_range(0..cloud.len())];
            if steps == 0 {
                return Ok((start, 0));
            }
            let chain = random_walk(|p| surface_log_density(field, p), start, steps, sigma_prop, active, &mut rng)?;
            Ok((*chain.last().expect("steps > 0"), chain.accepted))
        })
        .collect::<Result<_>>()?;
    if steps > 0 {
        let accepted: usize = chains.iter().map(|c| c.1).sum();
        log::info!(
            "metropolis-hastings acceptance rate {:.3} over {n_points} chains",
            accepted as f64 / (steps * n_points) as f64
        );
    }
    Ok(chains.into_iter().map(|c| c.0).collect())
}
