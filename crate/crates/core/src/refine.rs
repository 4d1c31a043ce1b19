//! Damped Gauss-Newton refinement of a fundamental matrix over the rank-2,
//! unit-norm set. Steps are taken in the 9 coefficients and projected back
//! with [`normalize_rank2`]; a step is kept only if the caller's cost drops.

use nalgebra::{SMatrix, SVector};

use crate::epipolar::{normalize_rank2, Mat3};

type Mat9 = SMatrix<f64, 9, 9>;
type Vec9 = SVector<f64, 9>;

#[derive(Debug, Clone)]
pub(crate) struct Refined {
    pub f: Mat3,
    pub converged: bool,
}

/// Row-major coefficients of `m`.
pub(crate) fn vec9(m: &Mat3) -> Vec9 {
    Vec9::from_fn(|k, _| m[(k / 3, k % 3)])
}

pub(crate) fn mat3(v: &Vec9) -> Mat3 {
    Mat3::from_fn(|i, j| v[3 * i + j])
}

/// Fills `r` and `jac` with the active residuals at `f` and their gradients
/// with respect to the row-major coefficients of `f`.
pub(crate) trait Residuals {
    fn eval(&self, f: &Mat3, r: &mut Vec<f64>, jac: &mut Vec<[f64; 9]>);
}

impl<F: Fn(&Mat3, &mut Vec<f64>, &mut Vec<[f64; 9]>)> Residuals for F {
    fn eval(&self, f: &Mat3, r: &mut Vec<f64>, jac: &mut Vec<[f64; 9]>) {
        self(f, r, jac)
    }
}

pub(crate) fn refine_rank2(
    start: &Mat3,
    residuals: &impl Residuals,
    cost: impl Fn(&Mat3) -> f64,
    max_iter: usize,
    grad_tol: f64,
) -> Refined {
    let mut f = *start / start.norm();
    let mut current = cost(&f);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut r = Vec::new();
    let mut jac = Vec::new();

    for _ in 0..max_iter {
        r.clear();
        jac.clear();
        residuals.eval(&f, &mut r, &mut jac);

        let mut jtj = Mat9::zeros();
        let mut g = Vec9::zeros();
        for (ri, row) in r.iter().zip(&jac) {
            let jr = Vec9::from_column_slice(row);
            jtj += jr * jr.transpose();
            g += jr * *ri;
        }
        // Only the component tangent to the unit sphere can be reduced.
        let fv = vec9(&f);
        let g_tan = g - fv * fv.dot(&g);
        if g_tan.norm() <= grad_tol || current == 0.0 {
            converged = true;
            break;
        }

        let mut improved = false;
        while lambda < 1e10 {
            let mut a = jtj;
            for k in 0..9 {
                a[(k, k)] += lambda * (1.0 + jtj[(k, k)]);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = match normalize_rank2(&mat3(&(fv + step))) {
                Ok(t) => *t.matrix(),
                Err(_) => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let c = cost(&trial);
            if c < current {
                f = trial;
                current = c;
                lambda = (lambda * 0.1).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }

    Refined { f, converged }
}
