//! Posterior of the interpolated vector field at the grid nodes.
//!
//! Components are modelled as independent and share one scalar covariance
//! `K_V = K1 - K2 D^-1 K2^T`, with `D` the lumped sample covariance.

use nalgebra::DMatrix;

use crate::cloud::OrientedPointCloud;
use crate::covariance::{CovarianceModel, LumpedCovariance, PointStencil};
use crate::error::{Error, Result};
use crate::priors::MeanPrior;
use crate::Vec3;

#[derive(Debug, Clone)]
pub struct VectorFieldPosterior {
    model: CovarianceModel,
    cloud: OrientedPointCloud,
    prior: MeanPrior,
    lumped: LumpedCovariance,
    stencils: Vec<PointStencil>,
    /// `(N_s - m(p_s)) / d_s`
    weights: Vec<Vec3>,
}

impl VectorFieldPosterior {
    pub fn new(model: CovarianceModel, cloud: OrientedPointCloud, prior: MeanPrior) -> Result<Self> {
        let lumped = model.lumped_covariance(&cloud)?;
        if let Some(d) = lumped.entries().iter().find(|d| !(**d > 0.0)) {
            return Err(Error::Numerical(format!("nonpositive lumped covariance entry {d}")));
        }
        let stencils = model.stencils(&cloud)?;
        let weights = cloud
            .positions()
            .iter()
            .zip(cloud.normals())
            .zip(lumped.entries())
            .map(|((p, n), d)| (n - prior.eval(p)) / *d)
            .collect();
        Ok(VectorFieldPosterior {
            model,
            cloud,
            prior,
            lumped,
            stencils,
            weights,
        })
    }

    pub fn model(&self) -> &CovarianceModel {
        &self.model
    }

    pub fn cloud(&self) -> &OrientedPointCloud {
        &self.cloud
    }

    pub fn prior(&self) -> &MeanPrior {
        &self.prior
    }

    pub fn lumped(&self) -> &LumpedCovariance {
        &self.lumped
    }

    pub fn stencils(&self) -> &[PointStencil] {
        &self.stencils
    }

    /// `m(q) + sum_s k_spsr(p_s, q) (N_s - m(p_s)) / d_s`.
    pub fn mean_at(&self, q: &Vec3) -> Result<Vec3> {
        if !self.model.grid().contains(q) {
            return Err(Error::outside(q));
        }
        let mut v = self.prior.eval(q);
        for (p, w) in self.cloud.positions().iter().zip(&self.weights) {
            let k = self.model.k_spsr_unchecked(p, q);
            if k != 0.0 {
                v += w * k;
            }
        }
        Ok(v)
    }

    /// Posterior mean at every grid node.
    pub fn node_means(&self) -> Vec<Vec3> {
        let grid = self.model.grid();
        let mut out: Vec<Vec3> = (0..grid.node_count()).map(|o| self.prior.eval(&grid.node_position(o))).collect();
        let sg = self.model.sigma_g();
        for (st, w) in self.stencils.iter().zip(&self.weights) {
            st.for_each_node(grid, |o, k| out[o] += w * (sg * k));
        }
        out
    }

    /// `K1 - K2 D^-1 K2^T` on the requested nodes, negative diagonal entries clamped to 0.
    pub fn node_covariance(&self, nodes: &[usize]) -> DMatrix<f64> {
        let grid = self.model.grid();
        let d = self.lumped.entries();
        let positions: Vec<Vec3> = nodes.iter().map(|&o| grid.node_position(o)).collect();
        // K2 restricted to the requested rows, kept sparse per row
        let rows: Vec<Vec<(usize, f64)>> = positions
            .iter()
            .map(|x| {
                self.cloud
                    .positions()
                    .iter()
                    .enumerate()
                    .filter_map(|(s, p)| {
                        let k = self.model.k_spsr_unchecked(x, p);
                        (k != 0.0).then_some((s, k))
                    })
                    .collect()
            })
            .collect();
        let n = nodes.len();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut reduction = 0.0;
                let (mut a, mut b) = (rows[i].iter().peekable(), rows[j].iter().peekable());
                while let (Some(&&(sa, ka)), Some(&&(sb, kb))) = (a.peek(), b.peek()) {
                    match sa.cmp(&sb) {
                        std::cmp::Ordering::Less => {
                            a.next();
                        }
                        std::cmp::Ordering::Greater => {
                            b.next();
                        }
                        std::cmp::Ordering::Equal => {
                            reduction += ka * kb / d[sa];
                            a.next();
                            b.next();
                        }
                    }
                }
                let v = self.model.k_nodes(nodes[i], nodes[j]) - reduction;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
            out[(i, i)] = out[(i, i)].max(0.0);
        }
        out
    }
}

/// The unsymmetrized vector field `sum_s k_psr(p_s, o) N_s / d_s` at every
/// node, i.e. classic splatting with the same density weights.
pub fn psr_node_means(model: &CovarianceModel, cloud: &OrientedPointCloud) -> Result<Vec<Vec3>> {
    let lumped = model.lumped_covariance(cloud)?;
    let grid = model.grid();
    let mut out = vec![Vec3::zeros(); grid.node_count()];
    for ((p, n), d) in cloud.positions().iter().zip(cloud.normals()).zip(lumped.entries()) {
        let st = model.stencil(p)?;
        let [ax, ay, az] = &st.axes;
        for k in 0..az.len() {
            for j in 0..ay.len() {
                for i in 0..ax.len() {
                    let w = ax.from_node[i] * ay.from_node[j] * az.from_node[k];
                    if w != 0.0 {
                        out[grid.index(ax.start + i, ay.start + j, az.start + k)] += n * (model.sigma_g() * w / d);
                    }
                }
            }
        }
    }
    Ok(out)
}
