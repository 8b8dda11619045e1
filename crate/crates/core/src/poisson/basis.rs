//! Tensor-product cosine eigenbasis of the Neumann Laplacian.
//!
//! The columns are never stored: each is a product of three 1D tables
//! `c_m(i) = s_m cos(m pi (i + 1/2) / n)`, which are exact eigenvectors of the
//! finite-difference Neumann Laplacian.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::UniformGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    dims: [usize; 3],
    spacing: f64,
    modes: Vec<[usize; 3]>,
    eigenvalues: Vec<f64>,
    /// Per axis, `n * n` values with `tables[a][m * n + i] = c_m(i)`.
    tables: [Vec<f64>; 3],
}

/// Eigenvalue of `-L` in 1D for mode `m`.
fn axis_eigenvalue(m: usize, n: usize, h: f64) -> f64 {
    if m == 0 {
        0.0
    } else {
        (2.0 - 2.0 * (std::f64::consts::PI * m as f64 / n as f64).cos()) / (h * h)
    }
}

/// Sum of the per-axis eigenvalues in ascending order, so that permuted
/// modes on cubic grids tie bitwise.
fn mode_eigenvalue(per_axis: [f64; 3]) -> f64 {
    let mut v = per_axis;
    v.sort_by(f64::total_cmp);
    v[0] + v[1] + v[2]
}

fn cosine_table(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * n];
    for m in 0..n {
        let s = if m == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            t[m * n + i] = s * (std::f64::consts::PI * m as f64 * (i as f64 + 0.5) / n as f64).cos();
        }
    }
    t
}

impl EigenBasis {
    /// The `k` lowest nonconstant modes, ordered by eigenvalue and then
    /// lexicographically by mode index.
    pub fn build(grid: &UniformGrid, k: usize) -> Result<Self> {
        let dims = grid.dims();
        let total = grid.node_count();
        if k == 0 || k >= total {
            return Err(Error::InvalidArgument(format!(
                "basis size {k} must lie in [1, {}]",
                total - 1
            )));
        }
        let h = grid.spacing();
        let axis_vals: Vec<Vec<f64>> = (0..3)
            .map(|a| (0..dims[a]).map(|m| axis_eigenvalue(m, dims[a], h)).collect())
            .collect();
        let mut all: Vec<(f64, [usize; 3])> = Vec::with_capacity(total - 1);
        for mz in 0..dims[2] {
            for my in 0..dims[1] {
                for mx in 0..dims[0] {
                    if mx == 0 && my == 0 && mz == 0 {
                        continue;
                    }
                    let lam = mode_eigenvalue([axis_vals[0][mx], axis_vals[1][my], axis_vals[2][mz]]);
                    all.push((lam, [mx, my, mz]));
                }
            }
        }
        let cmp = |a: &(f64, [usize; 3]), b: &(f64, [usize; 3])| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < all.len() {
            all.select_nth_unstable_by(k, cmp);
            all.truncate(k);
        }
        all.sort_by(cmp);
        Ok(EigenBasis {
            dims,
            spacing: h,
            eigenvalues: all.iter().map(|m| m.0).collect(),
            modes: all.iter().map(|m| m.1).collect(),
            tables: [cosine_table(dims[0]), cosine_table(dims[1]), cosine_table(dims[2])],
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Mode triples `(M, N, N~)` per column.
    pub fn modes(&self) -> &[[usize; 3]] {
        &self.modes
    }

    /// Positive eigenvalues of `-L`, one per column, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Normalized 1D cosine `c_m` along `axis`.
    pub fn axis_mode(&self, axis: usize, m: usize) -> &[f64] {
        let n = self.dims[axis];
        &self.tables[axis][m * n..(m + 1) * n]
    }

    /// Entry `E[node, j]`.
    #[inline]
    pub fn value(&self, node: usize, j: usize) -> f64 {
        let [nx, ny, _] = self.dims;
        let (i, r) = (node % nx, node / nx);
        let (jj, kk) = (r % ny, r / ny);
        let [mx, my, mz] = self.modes[j];
        self.tables[0][mx * nx + i] * (self.tables[1][my * ny + jj] * self.tables[2][mz * self.dims[2] + kk])
    }

    /// Row `node` of `E`.
    pub fn row(&self, node: usize) -> Vec<f64> {
        (0..self.len()).map(|j| self.value(node, j)).collect()
    }

    /// Column `j` of `E` over all nodes.
    pub fn column(&self, j: usize) -> Vec<f64> {
        let [nx, ny, nz] = self.dims;
        let [mx, my, mz] = self.modes[j];
        let (cx, cy, cz) = (self.axis_mode(0, mx), self.axis_mode(1, my), self.axis_mode(2, mz));
        let mut out = Vec::with_capacity(nx * ny * nz);
        for z in cz {
            for y in cy {
                let yz = y * z;
                out.extend(cx.iter().map(|x| x * yz));
            }
        }
        out
    }

    /// Dense `|O| x k` matrix; for small grids and tests.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.node_count(), self.len());
        for j in 0..self.len() {
            e.set_column(j, &nalgebra::DVector::from_vec(self.column(j)));
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_laplacian;
    use crate::Vec3;

    #[test]
    fn full_basis_is_orthonormal_complement() {
        let g = UniformGrid::planar(8, 8, [0.0, 0.0], 1.0 / 7.0).unwrap();
        let b = EigenBasis::build(&g, 63).unwrap();
        let e = b.to_dense();
        let gram = e.transpose() * &e;
        assert!((gram - DMatrix::identity(63, 63)).abs().max() < 1e-10);
        let ones = DMatrix::from_element(64, 1, 1.0);
        assert!((e.transpose() * ones).abs().max() < 1e-12);
        assert!(EigenBasis::build(&g, 64).is_err());
        assert!(EigenBasis::build(&g, 0).is_err());
    }

    #[test]
    fn lowest_modes_tie_and_break_lexicographically() {
        let g = UniformGrid::planar(10, 10, [0.0, 0.0], 0.1).unwrap();
        let b = EigenBasis::build(&g, 5).unwrap();
        assert_eq!(b.modes()[0], [0, 1, 0]);
        assert_eq!(b.modes()[1], [1, 0, 0]);
        assert_eq!(b.eigenvalues()[0].to_bits(), b.eigenvalues()[1].to_bits());
        assert!(b.eigenvalues().windows(2).all(|w| w[0] <= w[1]));

        let g3 = UniformGrid::new([6, 6, 6], Vec3::zeros(), 0.2).unwrap();
        let b3 = EigenBasis::build(&g3, 6).unwrap();
        assert_eq!(&b3.modes()[..3], &[[0, 0, 1], [0, 1, 0], [1, 0, 0]]);
        assert_eq!(b3.modes()[3], [0, 1, 1]);
    }

    #[test]
    fn columns_are_exact_eigenvectors() {
        let g = UniformGrid::new([9, 7, 5], Vec3::zeros(), 0.125).unwrap();
        let l = build_laplacian(&g);
        let b = EigenBasis::build(&g, 100).unwrap();
        for j in [0, 3, 11, 17, 29, 42, 55, 63, 80, 99] {
            let e = b.column(j);
            let le = l.mul_vec(&e);
            let lam = b.eigenvalues()[j];
            let res = le.iter().zip(&e).map(|(a, v)| (a + lam * v).abs()).fold(0.0, f64::max);
            assert!(res <= 1e-10 * lam, "column {j}: residual {res}");
            let norm: f64 = e.iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_selection_matches_full_sort() {
        let g = UniformGrid::new([7, 5, 4], Vec3::zeros(), 0.3).unwrap();
        let full = EigenBasis::build(&g, g.node_count() - 1).unwrap();
        let part = EigenBasis::build(&g, 23).unwrap();
        assert_eq!(&full.modes()[..23], part.modes());
        let e = part.to_dense();
        for node in [0, 17, 139] {
            for j in 0..23 {
                assert_eq!(e[(node, j)], part.value(node, j));
            }
        }
    }
}
