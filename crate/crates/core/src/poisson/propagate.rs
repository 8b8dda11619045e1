//! Propagation of the vector-field covariance through the Poisson solve,
//! restricted to the span of an [`EigenBasis`].
//!
//! With `L = -E diag(lambda) E^T` on the basis span,
//! `K_f ~ E C E^T` where
//! `C = diag(1/lambda) [sum_a (D_a^T E)^T K_V (D_a^T E)] diag(1/lambda)`
//! where `D_a = Z_a A_a` is the centered divergence; `D_a^T c_m` is the
//! centered difference of a cosine. Both parts of
//! `K_V = K1 - K2 D^-1 K2^T` are separable over axes, so nothing of size
//! `|O|` is ever formed.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::basis::EigenBasis;
use crate::error::{Error, Result};
use crate::gp_field::VectorFieldPosterior;

/// Default cap on the number of nodes in a joint query.
pub const DEFAULT_JOINT_CAP: usize = 512;

const SAMPLE_BLOCK: usize = 256;

/// Per-axis 1D factors: cosine and differenced-cosine tables and their
/// Gram matrices under the 1D kernel matrix `T`.
struct AxisFactors {
    n: usize,
    /// `g_m = -D^T c_m = A^T G c_m`, same layout as the cosine table.
    diff: Vec<f64>,
    tcc: Vec<f64>,
    tgg: Vec<f64>,
}

impl AxisFactors {
    fn new(basis: &EigenBasis, axis: usize, active: bool, kernel_1d: impl Fn(f64) -> f64) -> Self {
        let n = basis.dims()[axis];
        let h = basis.spacing();
        if !active {
            return AxisFactors {
                n,
                diff: vec![0.0; n * n],
                tcc: vec![1.0; n * n],
                tgg: vec![0.0; n * n],
            };
        }
        let mut diff = vec![0.0; n * n];
        for m in 0..n {
            let c = basis.axis_mode(axis, m);
            // half-sums of the forward differences either side of node i
            for i in 0..n {
                let fwd = |j: usize| if j + 1 < n { (c[j + 1] - c[j]) / h } else { 0.0 };
                diff[m * n + i] = 0.5 * (fwd(i) + if i > 0 { fwd(i - 1) } else { 0.0 });
            }
        }
        // banded 1D kernel matrix
        let band: Vec<f64> = (0..n).map(|d| kernel_1d(d as f64 * h)).take_while(|v| *v != 0.0).collect();
        let apply_t = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let lo = i.saturating_sub(band.len() - 1);
                    let hi = (i + band.len()).min(n);
                    (lo..hi).map(|l| band[i.abs_diff(l)] * x[l]).sum()
                })
                .collect()
        };
        let gram = |table: &dyn Fn(usize) -> Vec<f64>| -> Vec<f64> {
            let cols: Vec<Vec<f64>> = (0..n).map(table).collect();
            let tcols: Vec<Vec<f64>> = cols.iter().map(|c| apply_t(c)).collect();
            let mut out = vec![0.0; n * n];
            for a in 0..n {
                for b in a..n {
                    let v: f64 = cols[a].iter().zip(&tcols[b]).map(|(x, y)| x * y).sum();
                    out[a * n + b] = v;
                    out[b * n + a] = v;
                }
            }
            out
        };
        let tcc = gram(&|m| basis.axis_mode(axis, m).to_vec());
        let tgg = gram(&|m| diff[m * n..(m + 1) * n].to_vec());
        AxisFactors { n, diff, tcc, tgg }
    }
}

/// Reduced covariance factor `C` (k x k, symmetric).
pub fn reduced_covariance(posterior: &VectorFieldPosterior, basis: &EigenBasis) -> Result<DMatrix<f64>> {
    let model = posterior.model();
    let grid = model.grid();
    if grid.dims() != basis.dims() || grid.spacing() != basis.spacing() {
        return Err(Error::InvalidArgument("basis was built on a different grid".into()));
    }
    let d = grid.dimension();
    let k = basis.len();
    let kernel = model.kernel();
    let axes: Vec<AxisFactors> = (0..3).map(|a| AxisFactors::new(basis, a, a < d, |t| kernel.eval_1d(t))).collect();
    let modes = basis.modes();
    let sg = model.sigma_g();

    // K1 part: sum_a prod_b (Tgg if b == a else Tcc)
    let mut m = vec![0.0; k * k];
    m.par_chunks_mut(k).enumerate().for_each(|(j, row)| {
        let mj = modes[j];
        for (jj, out) in row.iter_mut().enumerate() {
            let mk = modes[jj];
            let cc: [f64; 3] = std::array::from_fn(|b| axes[b].tcc[mj[b] * axes[b].n + mk[b]]);
            let mut acc = 0.0;
            for a in 0..d {
                let mut p = axes[a].tgg[mj[a] * axes[a].n + mk[a]];
                for b in 0..3 {
                    if b != a {
                        p *= cc[b];
                    }
                }
                acc += p;
            }
            *out = sg * acc;
        }
    });

    // K2 D^-1 K2^T part, as a sum of rank-one updates r r^T, in blocks
    let max_mode: [usize; 3] = std::array::from_fn(|b| modes.iter().map(|m| m[b]).max().unwrap_or(0) + 1);
    let stencils = posterior.stencils();
    let lumped = posterior.lumped().entries();
    let mut block = vec![0.0; SAMPLE_BLOCK * d * k];
    for first in (0..stencils.len()).step_by(SAMPLE_BLOCK) {
        let count = (stencils.len() - first).min(SAMPLE_BLOCK);
        let rows = &mut block[..count * d * k];
        rows.par_chunks_mut(d * k).enumerate().for_each(|(local, out)| {
            let s = first + local;
            let st = &stencils[s];
            // projections of the stencil factors on c_m and g_m, per axis
            let proj: Vec<[Vec<f64>; 4]> = (0..3)
                .map(|b| {
                    let ax = &st.axes[b];
                    let n = axes[b].n;
                    let mut uc = vec![0.0; max_mode[b]];
                    let mut ug = vec![0.0; max_mode[b]];
                    let mut vc = vec![0.0; max_mode[b]];
                    let mut vg = vec![0.0; max_mode[b]];
                    for mm in 0..max_mode[b] {
                        let c = basis.axis_mode(b, mm);
                        let g = &axes[b].diff[mm * n..(mm + 1) * n];
                        for i in 0..ax.len() {
                            let idx = ax.start + i;
                            uc[mm] += ax.to_node[i] * c[idx];
                            ug[mm] += ax.to_node[i] * g[idx];
                            vc[mm] += ax.from_node[i] * c[idx];
                            vg[mm] += ax.from_node[i] * g[idx];
                        }
                    }
                    [uc, ug, vc, vg]
                })
                .collect();
            let scale = 0.5 * sg / lumped[s].sqrt();
            for a in 0..d {
                let row = &mut out[a * k..(a + 1) * k];
                for (j, r) in row.iter_mut().enumerate() {
                    let mj = modes[j];
                    let mut pu = 1.0;
                    let mut pv = 1.0;
                    for b in 0..3 {
                        let (u, v) = if b == a { (1, 3) } else { (0, 2) };
                        pu *= proj[b][u][mj[b]];
                        pv *= proj[b][v][mj[b]];
                    }
                    *r = scale * (pu + pv);
                }
            }
        });
        let cols = count * d;
        // m -= R^T R, with R stored row-major as (cols x k)
        unsafe {
            matrixmultiply::dgemm(
                k,
                cols,
                k,
                -1.0,
                rows.as_ptr(),
                1,
                k as isize,
                rows.as_ptr(),
                k as isize,
                1,
                1.0,
                m.as_mut_ptr(),
                k as isize,
                1,
            );
        }
    }

    let lam = basis.eigenvalues();
    let mut c = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            c[(i, j)] = 0.5 * (m[i * k + j] + m[j * k + i]) / (lam[i] * lam[j]);
        }
    }
    Ok(c)
}

/// `diag(E C E^T)` evaluated by folding products of cosines into a small
/// frequency grid, then summing that grid separably over the nodes.
pub fn variance_diagonal(c: &DMatrix<f64>, basis: &EigenBasis) -> Vec<f64> {
    let k = basis.len();
    assert_eq!(c.nrows(), k);
    let dims = basis.dims();
    let modes = basis.modes();
    let nf: [usize; 3] = std::array::from_fn(|b| 2 * modes.iter().map(|m| m[b]).max().unwrap_or(0) + 1);
    let scale = |b: usize, m: usize| -> f64 {
        if m == 0 {
            (1.0 / dims[b] as f64).sqrt()
        } else {
            (2.0 / dims[b] as f64).sqrt()
        }
    };

    let mut acc = vec![0.0; nf[0] * nf[1] * nf[2]];
    for j in 0..k {
        for jj in j..k {
            let w = if j == jj { c[(j, jj)] } else { c[(j, jj)] + c[(jj, j)] };
            if w == 0.0 {
                continue;
            }
            let (a, b) = (modes[j], modes[jj]);
            // each axis contributes 0.5 s s' [cos((m+m') t) + cos(|m-m'| t)]
            let f: [[usize; 2]; 3] = std::array::from_fn(|ax| [a[ax] + b[ax], a[ax].abs_diff(b[ax])]);
            let coef = (0..3).map(|ax| 0.5 * scale(ax, a[ax]) * scale(ax, b[ax])).product::<f64>() * w;
            for &fz in &f[2] {
                for &fy in &f[1] {
                    let base = nf[0] * (fy + nf[1] * fz);
                    acc[base + f[0][0]] += coef;
                    acc[base + f[0][1]] += coef;
                }
            }
        }
    }

    let cos_table = |b: usize| -> Vec<f64> {
        let n = dims[b];
        let mut t = vec![0.0; nf[b] * n];
        for f in 0..nf[b] {
            for i in 0..n {
                t[f * n + i] = (std::f64::consts::PI * f as f64 * (i as f64 + 0.5) / n as f64).cos();
            }
        }
        t
    };
    let (cx, cy, cz) = (cos_table(0), cos_table(1), cos_table(2));
    let [nx, ny, nz] = dims;

    // contract x: s1[fz][fy][i]
    let mut s1 = vec![0.0; nf[2] * nf[1] * nx];
    for fzy in 0..nf[2] * nf[1] {
        let src = &acc[fzy * nf[0]..(fzy + 1) * nf[0]];
        let dst = &mut s1[fzy * nx..(fzy + 1) * nx];
        for (fx, &v) in src.iter().enumerate() {
            if v != 0.0 {
                let row = &cx[fx * nx..(fx + 1) * nx];
                dst.iter_mut().zip(row).for_each(|(d, r)| *d += v * r);
            }
        }
    }
    // contract y: s2[fz][j][i]
    let mut s2 = vec![0.0; nf[2] * ny * nx];
    for fz in 0..nf[2] {
        for fy in 0..nf[1] {
            let src = &s1[(fz * nf[1] + fy) * nx..(fz * nf[1] + fy + 1) * nx];
            for j in 0..ny {
                let w = cy[fy * ny + j];
                let dst = &mut s2[(fz * ny + j) * nx..(fz * ny + j + 1) * nx];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += w * s);
            }
        }
    }
    // contract z
    let plane = nx * ny;
    let mut out = vec![0.0; plane * nz];
    out.par_chunks_mut(plane).enumerate().for_each(|(l, dst)| {
        for fz in 0..nf[2] {
            let w = cz[fz * nz + l];
            let src = &s2[fz * plane..(fz + 1) * plane];
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += w * s);
        }
    });
    out
}

/// `diag(E C E^T)` by row-wise dot products of `E C` and `E`; a direct
/// reference for [`variance_diagonal`], practical on small grids only.
pub fn variance_diagonal_rowwise(c: &DMatrix<f64>, basis: &EigenBasis) -> Vec<f64> {
    (0..basis.node_count())
        .into_par_iter()
        .map(|o| {
            let e = nalgebra::DVector::from_vec(basis.row(o));
            (c * &e).dot(&e)
        })
        .collect()
}

/// `E' C E'^T` for the selected rows `E'` of the basis.
pub fn selected_covariance(c: &DMatrix<f64>, basis: &EigenBasis, nodes: &[usize], cap: usize) -> Result<DMatrix<f64>> {
    if nodes.len() > cap {
        return Err(Error::InvalidArgument(format!(
            "{} nodes exceed the joint-query cap of {cap}; subsample the region",
            nodes.len()
        )));
    }
    if let Some(&o) = nodes.iter().find(|&&o| o >= basis.node_count()) {
        return Err(Error::InvalidArgument(format!("node index {o} out of range")));
    }
    let k = basis.len();
    let e = DMatrix::from_fn(nodes.len(), k, |r, j| basis.value(nodes[r], j));
    let mut out = &e * c * e.transpose();
    let n = nodes.len();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::OrientedPointCloud;
    use crate::covariance::CovarianceModel;
    use crate::grid::{build_centered_divergence, build_laplacian, UniformGrid};
    use crate::priors::MeanPrior;
    use crate::Vec3;

    fn setup(grid: UniformGrid, pts: &[(Vec3, Vec3)], noise: f64) -> VectorFieldPosterior {
        let model = CovarianceModel::for_grid(grid, 0.02).unwrap();
        let cloud = OrientedPointCloud::new(pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1).collect(), noise).unwrap();
        VectorFieldPosterior::new(model, cloud, MeanPrior::Zero).unwrap()
    }

    /// Dense `K_V` straight from the kernel, without clamping.
    fn dense_kv(post: &VectorFieldPosterior) -> DMatrix<f64> {
        let m = post.model();
        let g = m.grid();
        let n = g.node_count();
        let pos = post.cloud().positions();
        let d = post.lumped().entries();
        DMatrix::from_fn(n, n, |a, b| {
            let xa = g.node_position(a);
            let xb = g.node_position(b);
            let mut v = m.k_spsr(&xa, &xb).unwrap();
            for s in 0..pos.len() {
                v -= m.k_spsr(&xa, &pos[s]).unwrap() * m.k_spsr(&pos[s], &xb).unwrap() / d[s];
            }
            v
        })
    }

    fn dense_propagated(post: &VectorFieldPosterior) -> DMatrix<f64> {
        let g = post.model().grid();
        let kv = dense_kv(post);
        let mut mid = DMatrix::zeros(g.node_count(), g.node_count());
        for z in build_centered_divergence(g) {
            let zd = z.to_dense();
            mid += &zd * &kv * zd.transpose();
        }
        let lp = build_laplacian(g).to_dense().pseudo_inverse(1e-10).unwrap();
        &lp * mid * lp.transpose()
    }

    fn frob(m: &DMatrix<f64>) -> f64 {
        m.norm()
    }

    #[test]
    fn full_rank_matches_dense_pseudo_inverse_2d() {
        let g = UniformGrid::planar(10, 10, [0.0, 0.0], 1.0 / 9.0).unwrap();
        let pts = [
            (Vec3::new(0.3, 0.4, 0.0), Vec3::new(1.0, 0.0, 0.0)),
            (Vec3::new(0.35, 0.62, 0.0), Vec3::new(0.0, 1.0, 0.0)),
            (Vec3::new(0.71, 0.5, 0.0), Vec3::new(-1.0, 0.0, 0.0)),
        ];
        let post = setup(g.clone(), &pts, 0.01);
        let basis = EigenBasis::build(&g, g.node_count() - 1).unwrap();
        let c = reduced_covariance(&post, &basis).unwrap();
        let e = basis.to_dense();
        let approx = &e * &c * e.transpose();
        let exact = dense_propagated(&post);
        let rel = frob(&(&approx - &exact)) / frob(&exact);
        assert!(rel < 1e-8, "relative error {rel}");
        assert!((&c - c.transpose()).abs().max() <= 1e-10 * c.abs().max());
    }

    #[test]
    fn full_rank_matches_dense_pseudo_inverse_3d() {
        let g = UniformGrid::new([5, 4, 4], Vec3::zeros(), 0.25).unwrap();
        let pts = [
            (Vec3::new(0.3, 0.4, 0.5), Vec3::new(1.0, 0.0, 0.0)),
            (Vec3::new(0.55, 0.3, 0.45), Vec3::new(0.0, 1.0, 1.0)),
        ];
        let post = setup(g.clone(), &pts, 0.0);
        let basis = EigenBasis::build(&g, g.node_count() - 1).unwrap();
        let c = reduced_covariance(&post, &basis).unwrap();
        let e = basis.to_dense();
        let approx = &e * &c * e.transpose();
        let exact = dense_propagated(&post);
        assert!(frob(&(&approx - &exact)) / frob(&exact) < 1e-8);
    }

    #[test]
    fn vanishing_prior_scale_gives_zero() {
        let g = UniformGrid::planar(6, 6, [0.0, 0.0], 0.2).unwrap();
        let model = CovarianceModel::for_grid(g.clone(), 1e-300).unwrap();
        let post = VectorFieldPosterior::new(model, OrientedPointCloud::empty(), MeanPrior::Zero).unwrap();
        let basis = EigenBasis::build(&g, 10).unwrap();
        let c = reduced_covariance(&post, &basis).unwrap();
        assert!(c.abs().max() < 1e-290);
    }

    #[test]
    fn variance_paths_agree_with_explicit_diagonal() {
        let g = UniformGrid::planar(10, 10, [0.0, 0.0], 1.0 / 9.0).unwrap();
        let pts = [(Vec3::new(0.5, 0.5, 0.0), Vec3::new(0.0, 1.0, 0.0))];
        let post = setup(g.clone(), &pts, 0.0);
        let basis = EigenBasis::build(&g, 40).unwrap();
        let c = reduced_covariance(&post, &basis).unwrap();
        let e = basis.to_dense();
        let explicit = (&e * &c * e.transpose()).diagonal();
        let folded = variance_diagonal(&c, &basis);
        let rowwise = variance_diagonal_rowwise(&c, &basis);
        for i in 0..g.node_count() {
            assert!((folded[i] - explicit[i]).abs() < 1e-12);
            assert!((rowwise[i] - explicit[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn variance_of_identity_is_row_norms() {
        let g = UniformGrid::new([6, 5, 4], Vec3::zeros(), 0.2).unwrap();
        let basis = EigenBasis::build(&g, 30).unwrap();
        let c = DMatrix::identity(30, 30);
        let folded = variance_diagonal(&c, &basis);
        for (o, v) in folded.iter().enumerate() {
            let norm: f64 = basis.row(o).iter().map(|x| x * x).sum();
            assert!((v - norm).abs() < 1e-13);
        }
        assert!(variance_diagonal(&DMatrix::zeros(30, 30), &basis).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn selected_covariance_cases() {
        let g = UniformGrid::planar(10, 10, [0.0, 0.0], 1.0 / 9.0).unwrap();
        let pts = [(Vec3::new(0.4, 0.45, 0.0), Vec3::new(1.0, 1.0, 0.0))];
        let post = setup(g.clone(), &pts, 0.0);
        let basis = EigenBasis::build(&g, 50).unwrap();
        let c = reduced_covariance(&post, &basis).unwrap();
        let raw = variance_diagonal_rowwise(&c, &basis);
        let one = selected_covariance(&c, &basis, &[37], 512).unwrap();
        assert!((one[(0, 0)] - raw[37]).abs() < 1e-15);
        let twin = selected_covariance(&c, &basis, &[12, 12], 512).unwrap();
        assert_eq!(twin[(0, 0)], twin[(1, 1)]);
        assert_eq!(twin[(0, 1)], twin[(0, 0)]);
        let e = basis.to_dense();
        let full = &e * &c * e.transpose();
        let idx = [3, 58, 91];
        let sel = selected_covariance(&c, &basis, &idx, 512).unwrap();
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                assert!((sel[(a, b)] - full[(i, j)]).abs() < 1e-12);
            }
        }
        assert!(selected_covariance(&c, &basis, &idx, 2).is_err());
    }

    #[test]
    fn truncation_is_monotone_in_k() {
        let g = UniformGrid::planar(8, 8, [0.0, 0.0], 1.0 / 7.0).unwrap();
        let pts = [
            (Vec3::new(0.3, 0.3, 0.0), Vec3::new(1.0, 0.0, 0.0)),
            (Vec3::new(0.6, 0.7, 0.0), Vec3::new(0.0, 1.0, 0.0)),
        ];
        let post = setup(g.clone(), &pts, 0.0);
        let mut last = 0.0;
        for k in [5, 10, 20, 40, 63] {
            let basis = EigenBasis::build(&g, k).unwrap();
            let c = reduced_covariance(&post, &basis).unwrap();
            let e = basis.to_dense();
            let f = frob(&(&e * &c * e.transpose()));
            assert!(f >= last * (1.0 - 1e-12), "k={k}: {f} < {last}");
            last = f;
        }
    }
}
