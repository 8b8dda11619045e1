//! The grid-induced covariance of the interpolated vector field.
//!
//! `k_psr(x, y) = sigma_g * sum_{o in B(x)} alpha_{o,x} F_o(y)` splats `x`
//! onto its cell corners and smooths from there; it is not symmetric. Its
//! symmetrization `k_spsr` is the covariance used everywhere downstream.
//! Both factor over axes, which the reduced-covariance code relies on.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::cloud::OrientedPointCloud;
use crate::error::{Error, Result};
use crate::grid::{Kernel, UniformGrid};
use crate::sparse::SparseMatrix;
use crate::Vec3;

/// Grid, kernel and prior scale `sigma_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    grid: UniformGrid,
    kernel: Kernel,
    sigma_g: f64,
}

/// Per-axis factors of `k(node, p)` and `k(p, node)` over a contiguous
/// range of node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisStencil {
    pub start: usize,
    /// `B3((p - x_i) / w)`: the factor of `k_psr(node_i, p)`.
    pub to_node: Vec<f64>,
    /// `sum_c alpha_c B3((x_i - x_c) / w)`: the factor of `k_psr(p, node_i)`.
    pub from_node: Vec<f64>,
}

impl AxisStencil {
    pub fn len(&self) -> usize {
        self.to_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_node.is_empty()
    }
}

/// Separable description of the column of `K2` belonging to one point:
/// `K2(o, p) = sigma_g / 2 * (prod_a to_node_a[o_a] + prod_a from_node_a[o_a])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointStencil {
    pub axes: [AxisStencil; 3],
}

impl PointStencil {
    /// Visits every `(node, k_spsr(node, p) / sigma_g)` pair with a nonzero weight.
    pub fn for_each_node(&self, grid: &UniformGrid, mut f: impl FnMut(usize, f64)) {
        let [ax, ay, az] = &self.axes;
        for k in 0..az.len() {
            for j in 0..ay.len() {
                let tu = ay.to_node[j] * az.to_node[k];
                let tv = ay.from_node[j] * az.from_node[k];
                if tu == 0.0 && tv == 0.0 {
                    continue;
                }
                for i in 0..ax.len() {
                    let w = 0.5 * (ax.to_node[i] * tu + ax.from_node[i] * tv);
                    if w != 0.0 {
                        f(grid.index(ax.start + i, ay.start + j, az.start + k), w);
                    }
                }
            }
        }
    }
}

/// Diagonal approximation of the sample covariance `K3`:
/// `d_s = sum_{s'} k_spsr(p_s, p_s') + sigma_n^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedCovariance {
    entries: Vec<f64>,
    sigma_g: f64,
}

impl LumpedCovariance {
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn sigma_g(&self) -> f64 {
        self.sigma_g
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl CovarianceModel {
    pub fn new(grid: UniformGrid, kernel: Kernel, sigma_g: f64) -> Result<Self> {
        if !(sigma_g.is_finite() && sigma_g > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma_g {sigma_g} must be positive")));
        }
        if kernel.dimension() != grid.dimension() {
            return Err(Error::InvalidArgument("kernel and grid dimensions differ".into()));
        }
        Ok(CovarianceModel {
            grid,
            kernel,
            sigma_g,
        })
    }

    /// Model with the kernel width equal to the grid spacing.
    pub fn for_grid(grid: UniformGrid, sigma_g: f64) -> Result<Self> {
        let kernel = Kernel::for_grid(&grid);
        Self::new(grid, kernel, sigma_g)
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn sigma_g(&self) -> f64 {
        self.sigma_g
    }

    /// Number of grid cells beyond the enclosing cell touched by the kernel.
    fn reach(&self) -> usize {
        (self.kernel.support_radius() / self.grid.spacing() - 1e-12).ceil() as usize
    }

    /// Asymmetric semicovariance `k_psr(x, y)`.
    pub fn k_psr(&self, x: &Vec3, y: &Vec3) -> Result<f64> {
        if !self.grid.contains(x) {
            return Err(Error::outside(x));
        }
        Ok(self.k_psr_unchecked(x, y))
    }

    fn k_psr_unchecked(&self, x: &Vec3, y: &Vec3) -> f64 {
        let h = self.grid.spacing();
        let mut prod = self.sigma_g;
        for a in 0..self.grid.dimension() {
            let (c, t) = self.grid.cell_fraction(a, x[a]);
            let x0 = self.grid.axis_coord(a, c);
            let f = (1.0 - t) * self.kernel.eval_1d(y[a] - x0) + t * self.kernel.eval_1d(y[a] - (x0 + h));
            if f == 0.0 {
                return 0.0;
            }
            prod *= f;
        }
        prod
    }

    /// Symmetrized covariance `k_spsr(x, y) = (k_psr(x, y) + k_psr(y, x)) / 2`.
    /// Bitwise symmetric in its arguments.
    pub fn k_spsr(&self, x: &Vec3, y: &Vec3) -> Result<f64> {
        if !self.grid.contains(x) {
            return Err(Error::outside(x));
        }
        if !self.grid.contains(y) {
            return Err(Error::outside(y));
        }
        Ok(self.k_spsr_unchecked(x, y))
    }

    pub(crate) fn k_spsr_unchecked(&self, x: &Vec3, y: &Vec3) -> f64 {
        let a = self.k_psr_unchecked(x, y);
        let b = self.k_psr_unchecked(y, x);
        // addition commutes exactly, so this is symmetric bitwise
        0.5 * (a + b)
    }

    /// `k_spsr` between two grid nodes, `sigma_g * F_o(o')`.
    pub fn k_nodes(&self, o: usize, o2: usize) -> f64 {
        let a = self.grid.coords(o);
        let b = self.grid.coords(o2);
        let h = self.grid.spacing();
        self.sigma_g
            * (0..self.grid.dimension())
                .map(|ax| self.kernel.eval_1d((b[ax] as f64 - a[ax] as f64) * h))
                .product::<f64>()
    }

    /// Separable stencil of `k_spsr(., p)` over the nodes near `p`.
    pub fn stencil(&self, p: &Vec3) -> Result<PointStencil> {
        if !self.grid.contains(p) {
            return Err(Error::outside(p));
        }
        let axes = [0, 1, 2].map(|a| self.axis_stencil(a, p[a]));
        Ok(PointStencil { axes })
    }

    fn axis_stencil(&self, axis: usize, x: f64) -> AxisStencil {
        let n = self.grid.dims()[axis];
        if n == 1 {
            return AxisStencil {
                start: 0,
                to_node: vec![1.0],
                from_node: vec![1.0],
            };
        }
        let h = self.grid.spacing();
        let r = self.reach();
        let (c, t) = self.grid.cell_fraction(axis, x);
        let start = c.saturating_sub(r);
        let end = (c + 1 + r).min(n - 1);
        let mut to_node = Vec::with_capacity(end - start + 1);
        let mut from_node = Vec::with_capacity(end - start + 1);
        for i in start..=end {
            to_node.push(self.kernel.eval_1d(x - self.grid.axis_coord(axis, i)));
            let di = i as f64 - c as f64;
            from_node.push(
                (1.0 - t) * self.kernel.eval_1d(di * h) + t * self.kernel.eval_1d((di - 1.0) * h),
            );
        }
        AxisStencil {
            start,
            to_node,
            from_node,
        }
    }

    /// Stencils for every sample of the cloud.
    pub fn stencils(&self, cloud: &OrientedPointCloud) -> Result<Vec<PointStencil>> {
        cloud.positions().par_iter().map(|p| self.stencil(p)).collect()
    }

    /// Lumped (row-sum) covariance of the samples plus the noise variance.
    pub fn lumped_covariance(&self, cloud: &OrientedPointCloud) -> Result<LumpedCovariance> {
        let positions = cloud.positions();
        if let Some(p) = positions.iter().find(|p| !self.grid.contains(p)) {
            return Err(Error::outside(p));
        }
        let d = self.grid.dimension();
        let cell = |p: &Vec3| -> [i64; 3] {
            let mut c = [0i64; 3];
            for (a, slot) in c.iter_mut().enumerate().take(d) {
                *slot = self.grid.cell_fraction(a, p[a]).0 as i64;
            }
            c
        };
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (s, p) in positions.iter().enumerate() {
            buckets.entry(cell(p)).or_default().push(s);
        }
        let reach = self.reach() as i64 + 1;
        let zr = if d == 3 { reach } else { 0 };
        let noise = cloud.noise_sigma() * cloud.noise_sigma();
        let entries = positions
            .par_iter()
            .map(|p| {
                let c = cell(p);
                let mut sum = 0.0;
                for dz in -zr..=zr {
                    for dy in -reach..=reach {
                        for dx in -reach..=reach {
                            if let Some(list) = buckets.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                                for &t in list {
                                    sum += self.k_spsr_unchecked(p, &positions[t]);
                                }
                            }
                        }
                    }
                }
                sum + noise
            })
            .collect();
        Ok(LumpedCovariance {
            entries,
            sigma_g: self.sigma_g,
        })
    }

    /// Sparse `|O| x |S|` matrix with entries `k_spsr(o, p_s)`.
    pub fn build_k2(&self, cloud: &OrientedPointCloud) -> Result<SparseMatrix> {
        let stencils = self.stencils(cloud)?;
        let mut triplets = Vec::new();
        for (s, st) in stencils.iter().enumerate() {
            st.for_each_node(&self.grid, |o, w| triplets.push((o, s, self.sigma_g * w)));
        }
        Ok(SparseMatrix::from_triplets(self.grid.node_count(), cloud.len(), triplets))
    }
}
