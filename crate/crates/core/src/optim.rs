//! Quasi-Newton minimization with finite-difference gradients.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Relative change in objective treated as convergence.
    pub rel_tol: f64,
    /// Gradient sup-norm treated as convergence.
    pub grad_tol: f64,
    pub fd_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            rel_tol: 1e-8,
            grad_tol: 1e-6,
            fd_step: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl BfgsResult {
    pub fn gradient_norm(&self) -> f64 {
        self.gradient.amax()
    }
}

/// Central-difference gradient.
pub fn numeric_gradient(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let step = h * x[i].abs().max(1.0);
        xp[i] = x[i] + step;
        let fp = f(&xp);
        xp[i] = x[i] - step;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * step);
    }
    g
}

/// Minimizes `f` starting at `x0`. Non-finite objective values are treated
/// as +infinity by the line search.
pub fn minimize(f: &dyn Fn(&DVector<f64>) -> f64, x0: DVector<f64>, opts: &BfgsOptions) -> BfgsResult {
    let n = x0.len();
    let mut x = x0;
    let mut fx = f(&x);
    if n == 0 {
        return BfgsResult {
            x,
            value: fx,
            gradient: DVector::zeros(0),
            iterations: 0,
            converged: fx.is_finite(),
        };
    }
    let mut g = numeric_gradient(f, &x, opts.fd_step);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    let mut iterations = 0;
    let mut small_steps = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        if g.amax() < opts.grad_tol {
            converged = true;
            break;
        }
        let mut dir = -(&h_inv * &g);
        if dir.dot(&g) >= 0.0 {
            h_inv = DMatrix::identity(n, n);
            dir = -g.clone();
        }
        // backtracking Armijo search
        let slope = dir.dot(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + step * &dir;
            let fnew = f(&xn);
            if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            // no descent possible from here: numerically at the optimum
            converged = g.amax() < opts.grad_tol.sqrt();
            break;
        };
        let gn = numeric_gradient(f, &xn, opts.fd_step);
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let a = &i - rho * &s * y.transpose();
            let b = &i - rho * &y * s.transpose();
            h_inv = &a * &h_inv * &b + rho * &s * s.transpose();
        }
        let rel = (fx - fnew).abs() / fx.abs().max(1.0);
        x = xn;
        fx = fnew;
        g = gn;
        if rel < opts.rel_tol {
            small_steps += 1;
            if small_steps >= 2 || g.amax() < opts.grad_tol.sqrt() {
                converged = true;
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    BfgsResult {
        x,
        value: fx,
        gradient: g,
        iterations,
        converged,
    }
}
