//! Uniform grid geometry, the cubic B-spline smoothing kernel, trilinear
//! interpolation and the finite-difference Laplacian / divergence pair.
//!
//! Nodes are flattened x-fastest: `index = i + nx * (j + ny * k)`. A planar
//! (2D) grid is a grid with `nz == 1`; every z stencil is then disabled and
//! the z coordinate of query points is ignored.

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::Vec3;

/// Axis-aligned lattice of nodes with isotropic spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    dims: [usize; 3],
    origin: Vec3,
    spacing: f64,
}

impl UniformGrid {
    pub fn new(dims: [usize; 3], origin: Vec3, spacing: f64) -> Result<Self> {
        if dims[0] < 2 || dims[1] < 2 || dims[2] == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid dims {dims:?}: need nx, ny >= 2 and nz >= 1"
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidArgument(format!("grid spacing {spacing} must be positive")));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument("grid origin must be finite".into()));
        }
        Ok(UniformGrid {
            dims,
            origin,
            spacing,
        })
    }

    pub fn planar(nx: usize, ny: usize, origin: [f64; 2], spacing: f64) -> Result<Self> {
        Self::new([nx, ny, 1], Vec3::new(origin[0], origin[1], 0.0), spacing)
    }

    /// Square (2D) or cubic (3D) grid with `resolution` nodes per axis whose
    /// node hull contains the bounding box of `points`, enlarged by
    /// `padding` (a fraction of the largest extent) on every side.
    pub fn fit_to_points(points: &[Vec3], resolution: usize, padding: f64, planar: bool) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("cannot fit a grid to an empty point set".into()));
        }
        if resolution < 2 {
            return Err(Error::InvalidArgument("resolution must be at least 2".into()));
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let axes = if planar { 2 } else { 3 };
        let extent = (0..axes).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        let extent = if extent > 0.0 { extent } else { 1.0 };
        let side = extent * (1.0 + 2.0 * padding.max(0.0));
        let center = (lo + hi) * 0.5;
        let mut origin = center.add_scalar(-0.5 * side);
        if planar {
            origin.z = center.z;
        }
        let nz = if planar { 1 } else { resolution };
        Self::new([resolution, resolution, nz], origin, side / (resolution - 1) as f64)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Number of active axes (2 or 3).
    pub fn dimension(&self) -> usize {
        if self.dims[2] == 1 {
            2
        } else {
            3
        }
    }

    pub fn is_planar(&self) -> bool {
        self.dims[2] == 1
    }

    pub fn node_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Volume (area in 2D) attributed to a single node, `h^d`.
    pub fn cell_measure(&self) -> f64 {
        self.spacing.powi(self.dimension() as i32)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let rest = index / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    /// World coordinate of node `i` along `axis`.
    #[inline]
    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing
    }

    pub fn node_position(&self, index: usize) -> Vec3 {
        let c = self.coords(index);
        Vec3::new(
            self.axis_coord(0, c[0]),
            self.axis_coord(1, c[1]),
            self.axis_coord(2, c[2]),
        )
    }

    /// Corners of the node hull.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut hi = self.origin;
        for a in 0..3 {
            hi[a] += (self.dims[a] - 1) as f64 * self.spacing;
        }
        (self.origin, hi)
    }

    fn tolerance(&self) -> f64 {
        1e-9 * self.spacing
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let (lo, hi) = self.bounds();
        let tol = self.tolerance();
        (0..self.dimension()).all(|a| p[a] >= lo[a] - tol && p[a] <= hi[a] + tol)
    }

    /// Cell index along `axis` and the fractional offset inside that cell.
    /// The last node row maps to the last cell with fraction 1.
    #[inline]
    pub(crate) fn cell_fraction(&self, axis: usize, x: f64) -> (usize, f64) {
        let n = self.dims[axis];
        if n == 1 {
            return (0, 0.0);
        }
        let s = (x - self.origin[axis]) / self.spacing;
        let c = (s.floor().max(0.0) as usize).min(n - 2);
        let t = (s - c as f64).clamp(0.0, 1.0);
        (c, t)
    }

    /// Trilinear interpolation weights of `p` on the corners of its
    /// enclosing cell (four corners on a planar grid).
    pub fn trilinear_weights(&self, p: &Vec3) -> Result<TrilinearWeights> {
        if !self.contains(p) {
            return Err(Error::outside(p));
        }
        let mut axis = [(0usize, 0.0f64); 3];
        for (a, slot) in axis.iter_mut().enumerate() {
            *slot = self.cell_fraction(a, p[a]);
        }
        let mut out = TrilinearWeights {
            entries: [(0, 0.0); 8],
            len: 0,
        };
        let nk = if self.is_planar() { 1 } else { 2 };
        for dk in 0..nk {
            for dj in 0..2 {
                for di in 0..2 {
                    let w = lerp_weight(axis[0].1, di) * lerp_weight(axis[1].1, dj) * lerp_weight(axis[2].1, dk);
                    let idx = self.index(axis[0].0 + di, axis[1].0 + dj, axis[2].0 + dk);
                    out.entries[out.len] = (idx, w);
                    out.len += 1;
                }
            }
        }
        Ok(out)
    }

    /// Trilinear interpolation of a node field at `p`.
    pub fn interpolate(&self, values: &[f64], p: &Vec3) -> Result<f64> {
        debug_assert_eq!(values.len(), self.node_count());
        Ok(self.trilinear_weights(p)?.iter().map(|(o, w)| w * values[o]).sum())
    }

    /// Gradient of the trilinear interpolant of a node field at `p`.
    pub fn interpolate_gradient(&self, values: &[f64], p: &Vec3) -> Result<Vec3> {
        if !self.contains(p) {
            return Err(Error::outside(p));
        }
        let cf: Vec<(usize, f64)> = (0..3).map(|a| self.cell_fraction(a, p[a])).collect();
        let mut g = Vec3::zeros();
        let nk = if self.is_planar() { 1 } else { 2 };
        for dk in 0..nk {
            for dj in 0..2 {
                for di in 0..2 {
                    let v = values[self.index(cf[0].0 + di, cf[1].0 + dj, cf[2].0 + dk)];
                    let w = [
                        lerp_weight(cf[0].1, di),
                        lerp_weight(cf[1].1, dj),
                        lerp_weight(cf[2].1, dk),
                    ];
                    let dw = [sign(di), sign(dj), sign(dk)];
                    g.x += v * dw[0] * w[1] * w[2];
                    g.y += v * w[0] * dw[1] * w[2];
                    if nk == 2 {
                        g.z += v * w[0] * w[1] * dw[2];
                    }
                }
            }
        }
        Ok(g / self.spacing)
    }
}

#[inline]
fn lerp_weight(t: f64, corner: usize) -> f64 {
    if corner == 0 {
        1.0 - t
    } else {
        t
    }
}

#[inline]
fn sign(corner: usize) -> f64 {
    if corner == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Up to eight `(node, weight)` pairs.
#[derive(Debug, Clone, Copy)]
pub struct TrilinearWeights {
    entries: [(usize, f64); 8],
    len: usize,
}

impl TrilinearWeights {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries[..self.len].iter().copied()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Uniform cubic B-spline (four unit boxes convolved together), argument in
/// units of the kernel width. `B3(0) = 2/3`, `B3(±1) = 1/6`, zero for `|t| >= 2`.
#[inline]
pub fn kernel_eval_1d(t: f64) -> f64 {
    let a = t.abs();
    if a < 1.0 {
        2.0 / 3.0 - a * a + 0.5 * a * a * a
    } else if a < 2.0 {
        let b = 2.0 - a;
        b * b * b / 6.0
    } else {
        0.0
    }
}

/// Derivative of [`kernel_eval_1d`] with respect to `t`.
#[inline]
pub fn kernel_derivative_1d(t: f64) -> f64 {
    let a = t.abs();
    let d = if a < 1.0 {
        -2.0 * a + 1.5 * a * a
    } else if a < 2.0 {
        -0.5 * (2.0 - a) * (2.0 - a)
    } else {
        0.0
    };
    d * t.signum()
}

/// Separable smoothing kernel `F_o(y) = prod_a B3((y_a - o_a) / width)`.
///
/// The width is the grid spacing in the reconstruction pipeline; it is a
/// separate parameter so that the grid can be refined under a fixed kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    width: f64,
    dimension: usize,
}

impl Kernel {
    pub fn for_grid(grid: &UniformGrid) -> Self {
        Kernel {
            width: grid.spacing(),
            dimension: grid.dimension(),
        }
    }

    pub fn with_width(width: f64, dimension: usize) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) || !(1..=3).contains(&dimension) {
            return Err(Error::InvalidArgument(format!(
                "kernel width {width} / dimension {dimension} invalid"
            )));
        }
        Ok(Kernel { width, dimension })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Per-axis support radius in world units.
    pub fn support_radius(&self) -> f64 {
        2.0 * self.width
    }

    /// Lipschitz constant of `F`: `|B3'| <= 1/2` and `B3 <= 2/3` bound every
    /// partial derivative, so `|grad F| <= sqrt(d) (2/3)^(d-1) / (2 w)`.
    pub fn lipschitz(&self) -> f64 {
        let d = self.dimension as f64;
        d.sqrt() * (2.0f64 / 3.0).powi(self.dimension as i32 - 1) / (2.0 * self.width)
    }

    /// One-dimensional factor for a world-space offset.
    #[inline]
    pub fn eval_1d(&self, offset: f64) -> f64 {
        kernel_eval_1d(offset / self.width)
    }

    /// `F` centred at `center` evaluated at `y`.
    pub fn eval(&self, center: &Vec3, y: &Vec3) -> f64 {
        (0..self.dimension).map(|a| self.eval_1d(y[a] - center[a])).product()
    }

    /// `F_o(y)` for grid node `o`.
    pub fn at_node(&self, grid: &UniformGrid, node: usize, y: &Vec3) -> f64 {
        self.eval(&grid.node_position(node), y)
    }
}

/// Forward difference along one axis, `(f[i+1] - f[i]) / h`, with a zero
/// last row (no flux through the boundary).
fn forward_difference_triplets(grid: &UniformGrid, axis: usize) -> Vec<(usize, usize, f64)> {
    let inv_h = 1.0 / grid.spacing();
    let dims = grid.dims();
    let mut t = Vec::with_capacity(2 * grid.node_count());
    for idx in 0..grid.node_count() {
        let c = grid.coords(idx);
        if c[axis] + 1 < dims[axis] {
            let mut n = c;
            n[axis] += 1;
            t.push((idx, idx, -inv_h));
            t.push((idx, grid.index(n[0], n[1], n[2]), inv_h));
        }
    }
    t
}

/// Forward-difference gradient stencil `G_a` per active axis.
pub fn build_gradient(grid: &UniformGrid) -> Vec<SparseMatrix> {
    let n = grid.node_count();
    (0..grid.dimension())
        .map(|a| SparseMatrix::from_triplets(n, n, forward_difference_triplets(grid, a)))
        .collect()
}

/// Divergence `Z_a = -G_a^T` per active axis: a backward difference
/// `(v[i] - v[i-1]) / h` in the interior and one-sided `v[0] / h`,
/// `-v[n-2] / h` in the boundary rows. By construction
/// `L = sum_a Z_a G_a` holds on every row.
pub fn build_divergence(grid: &UniformGrid) -> Vec<SparseMatrix> {
    build_gradient(grid)
        .into_iter()
        .map(|g| g.transpose().scaled(-1.0))
        .collect()
}

/// Face averaging `A_a`: row `i` holds `(v[i] + v[i+1]) / 2`, the value on
/// the face between nodes `i` and `i+1`; the last row along the axis is zero.
pub fn build_face_average(grid: &UniformGrid) -> Vec<SparseMatrix> {
    let n = grid.node_count();
    (0..grid.dimension())
        .map(|a| {
            let t = forward_difference_triplets(grid, a)
                .into_iter()
                .map(|(r, c, _)| (r, c, 0.5))
                .collect();
            SparseMatrix::from_triplets(n, n, t)
        })
        .collect()
}

/// Right-hand-side divergence `Z_a A_a`: node vectors are averaged onto the
/// faces before the backward difference, giving the centered
/// `(v[i+1] - v[i-1]) / 2h` in the interior. Pairing `Z_a` directly with
/// node values would shift the solution by half a cell along every axis.
pub fn build_centered_divergence(grid: &UniformGrid) -> Vec<SparseMatrix> {
    build_divergence(grid)
        .into_iter()
        .zip(build_face_average(grid))
        .map(|(z, a)| z.matmul(&a))
        .collect()
}

/// Finite-difference Laplacian with zero-Neumann (reflecting) boundary
/// rows. Sign convention: negative semidefinite, interior diagonal
/// `-2d/h^2`, off-diagonals `+1/h^2`, every row sums to zero.
pub fn build_laplacian(grid: &UniformGrid) -> SparseMatrix {
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let dims = grid.dims();
    let d = grid.dimension();
    let mut t = Vec::with_capacity((2 * d + 1) * grid.node_count());
    for idx in 0..grid.node_count() {
        let c = grid.coords(idx);
        let mut diag = 0.0;
        for a in 0..d {
            for step in [-1i64, 1] {
                let m = c[a] as i64 + step;
                if m >= 0 && (m as usize) < dims[a] {
                    let mut n = c;
                    n[a] = m as usize;
                    t.push((idx, grid.index(n[0], n[1], n[2]), inv_h2));
                    diag -= inv_h2;
                }
            }
        }
        t.push((idx, idx, diag));
    }
    SparseMatrix::from_triplets(grid.node_count(), grid.node_count(), t)
}

/// Human-readable statement of the Laplacian sign convention, written to
/// field metadata.
pub const LAPLACIAN_CONVENTION: &str = "negative-semidefinite; interior diagonal -2d/h^2, off-diagonal +1/h^2, Neumann rows sum to zero";
