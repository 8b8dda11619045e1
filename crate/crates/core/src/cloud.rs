use crate::error::{Error, Result};
use crate::Vec3;

/// Oriented samples: positions, unit normals and the standard deviation
/// of the noise assumed on the normal vectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrientedPointCloud {
    positions: Vec<Vec3>,
    normals: Vec<Vec3>,
    noise_sigma: f64,
}

impl OrientedPointCloud {
    /// Builds a cloud, normalizing every normal. Zero-length normals and
    /// non-finite coordinates are rejected.
    pub fn new(positions: Vec<Vec3>, normals: Vec<Vec3>, noise_sigma: f64) -> Result<Self> {
        if positions.len() != normals.len() {
            return Err(Error::InvalidArgument(format!(
                "{} positions but {} normals",
                positions.len(),
                normals.len()
            )));
        }
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise sigma {noise_sigma} must be >= 0")));
        }
        let mut unit = Vec::with_capacity(normals.len());
        for (i, (p, n)) in positions.iter().zip(&normals).enumerate() {
            if !p.iter().chain(n.iter()).all(|c| c.is_finite()) {
                return Err(Error::InvalidArgument(format!("sample {i} has non-finite coordinates")));
            }
            let len = n.norm();
            if len == 0.0 {
                return Err(Error::InvalidArgument(format!("sample {i} has a zero normal")));
            }
            unit.push(n / len);
        }
        Ok(OrientedPointCloud {
            positions,
            normals: unit,
            noise_sigma,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn with_noise_sigma(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma.max(0.0);
        self
    }

    /// Average of all sample positions.
    pub fn centroid(&self) -> Option<Vec3> {
        if self.is_empty() {
            return None;
        }
        Some(self.positions.iter().sum::<Vec3>() / self.len() as f64)
    }

    /// Appends one sample; the normal is normalized.
    pub fn push(&mut self, position: Vec3, normal: Vec3) -> Result<()> {
        let len = normal.norm();
        if len == 0.0 || !len.is_finite() || !position.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument("invalid sample".into()));
        }
        self.positions.push(position);
        self.normals.push(normal / len);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normals_are_normalized() {
        let c = OrientedPointCloud::new(vec![Vec3::zeros()], vec![Vec3::new(0.0, 3.0, 4.0)], 0.0).unwrap();
        assert!((c.normals()[0].norm() - 1.0).abs() < 1e-12);
        assert!(OrientedPointCloud::new(vec![Vec3::zeros()], vec![Vec3::zeros()], 0.0).is_err());
        assert!(OrientedPointCloud::new(vec![Vec3::zeros()], vec![], 0.0).is_err());
    }
}
