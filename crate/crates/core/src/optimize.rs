//! Quasi-Newton minimization (BFGS with Armijo backtracking).

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the largest gradient component falls below this.
    pub grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            grad_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl BfgsResult {
    pub fn grad_norm(&self) -> f64 {
        self.grad.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// Minimizes `f`, which returns the value and gradient at a point.
/// Non-finite values are treated as +∞ by the line search.
pub fn minimize_bfgs<F>(mut f: F, x0: &[f64], opts: BfgsOptions) -> BfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let dim = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, g0) = f(x.as_slice());
    let mut g = DVector::from_vec(g0);
    let mut h = DMatrix::<f64>::identity(dim, dim);
    let inf_norm = |v: &DVector<f64>| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let mut iterations = 0;
    let mut fresh_h = true;
    while iterations < opts.max_iter {
        if fx.is_finite() && inf_norm(&g) <= opts.grad_tol {
            break;
        }
        iterations += 1;
        let mut dir = -(&h * &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            h = DMatrix::identity(dim, dim);
            dir = -g.clone();
            slope = g.dot(&dir);
            fresh_h = true;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + step * &dir;
            let (ft, gt) = f(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, DVector::from_vec(gt)));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if fresh_h {
                break;
            }
            h = DMatrix::identity(dim, dim);
            fresh_h = true;
            continue;
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if fresh_h {
                // Scale the initial inverse Hessian to the observed curvature.
                h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += ((1.0 + rho * yhy) * rho) * (&s * s.transpose())
                - rho * (&hy * s.transpose() + &s * hy.transpose());
            fresh_h = false;
        }
        x = xn;
        fx = fnew;
        g = gn;
    }
    let converged = fx.is_finite() && inf_norm(&g) <= opts.grad_tol;
    BfgsResult {
        x: x.as_slice().to_vec(),
        f: fx,
        grad: g.as_slice().to_vec(),
        iterations,
        converged,
    }
}
