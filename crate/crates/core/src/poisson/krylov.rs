//! Conjugate gradients for the singular Neumann system.

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-8,
            max_iterations: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Solves `L x = b` for a Laplacian `L` whose nullspace is the constants.
///
/// `L` is negative semidefinite, so CG runs on `-L x = -b`. The constant
/// component is removed from the right-hand side and from every residual;
/// the returned solution has zero mean.
pub fn solve_neumann(l: &SparseMatrix, b: &[f64], options: SolverOptions) -> Result<(Vec<f64>, SolveReport)> {
    let n = b.len();
    let mut r: Vec<f64> = b.iter().map(|v| -v).collect();
    remove_mean(&mut r);
    let b_norm = dot(&r, &r).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((x, SolveReport::default()));
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for it in 1..=options.max_iterations {
        l.mul_vec_into(&p, &mut ap);
        ap.iter_mut().for_each(|v| *v = -*v);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: rr.sqrt() / b_norm,
            });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        remove_mean(&mut r);
        let rr_new = dot(&r, &r);
        let rel = rr_new.sqrt() / b_norm;
        if rel <= options.tolerance {
            // confirm against the true residual rather than the recurrence
            let mut true_r = l.mul_vec(&x);
            for (t, bi) in true_r.iter_mut().zip(b) {
                *t = bi - *t;
            }
            remove_mean(&mut true_r);
            let true_rel = dot(&true_r, &true_r).sqrt() / b_norm;
            if true_rel <= options.tolerance {
                remove_mean(&mut x);
                return Ok((
                    x,
                    SolveReport {
                        iterations: it,
                        relative_residual: true_rel,
                    },
                ));
            }
            r = true_r.iter().map(|v| -v).collect();
            p.clone_from(&r);
            rr = dot(&r, &r);
            continue;
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(Error::NoConvergence {
        iterations: options.max_iterations,
        residual: rr.sqrt() / b_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_laplacian, UniformGrid};
    use crate::Vec3;

    #[test]
    fn recovers_manufactured_solution() {
        let g = UniformGrid::new([12, 9, 7], Vec3::zeros(), 0.1).unwrap();
        let l = build_laplacian(&g);
        let mut x_true: Vec<f64> = (0..g.node_count()).map(|i| ((i * 37 % 101) as f64).sin()).collect();
        remove_mean(&mut x_true);
        let b = l.mul_vec(&x_true);
        let (x, rep) = solve_neumann(&l, &b, SolverOptions::default()).unwrap();
        assert!(rep.relative_residual <= 1e-8);
        let err = x.iter().zip(&x_true).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn zero_rhs_and_constant_rhs_give_zero() {
        let g = UniformGrid::planar(6, 6, [0.0, 0.0], 0.2).unwrap();
        let l = build_laplacian(&g);
        let (x, rep) = solve_neumann(&l, &vec![0.0; 36], SolverOptions::default()).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
        assert_eq!(rep.iterations, 0);
        let (x, _) = solve_neumann(&l, &vec![3.0; 36], SolverOptions::default()).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn reports_nonconvergence() {
        let g = UniformGrid::planar(30, 30, [0.0, 0.0], 0.1).unwrap();
        let l = build_laplacian(&g);
        let b: Vec<f64> = (0..900).map(|i| (i as f64 * 0.37).cos()).collect();
        let opts = SolverOptions {
            tolerance: 1e-12,
            max_iterations: 3,
        };
        assert!(matches!(solve_neumann(&l, &b, opts), Err(Error::NoConvergence { iterations: 3, .. })));
    }
}
