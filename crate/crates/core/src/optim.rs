//! Derivative-free-gradient BFGS used by the likelihood fits.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsConfig {
    pub max_iter: usize,
    /// Stop when `|f_k - f_{k+1}| <= rel_tol * max(|f_k|, 1)`.
    pub rel_tol: f64,
    /// Stop when the gradient max-norm drops below this.
    pub grad_tol: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            rel_tol: 1e-9,
            grad_tol: 1e-6,
            fd_step: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    RelativeChange,
    Gradient,
    MaxIterations,
    LineSearch,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub reason: StopReason,
}

impl Minimum {
    pub fn grad_max_norm(&self) -> f64 {
        self.grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()))
    }
}

fn fd_h(x: f64, step: f64) -> f64 {
    step * x.abs().max(1.0)
}

pub fn fd_gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = fd_h(x[i], step);
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian.
pub fn fd_hessian(f: &impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> DMatrix<f64> {
    let n = x.len();
    let hs: Vec<f64> = x.iter().map(|&xi| fd_h(xi, step)).collect();
    let f0 = f(x);
    let mut m = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + hs[i];
        let fp = f(&xp);
        xp[i] = x[i] - hs[i];
        let fm = f(&xp);
        xp[i] = x[i];
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (hs[i] * hs[i]);
        for j in 0..i {
            let mut eval = |si: f64, sj: f64| {
                xp[i] = x[i] + si * hs[i];
                xp[j] = x[j] + sj * hs[j];
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * hs[i] * hs[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Minimizes `f` from `x0`. Non-finite function values are treated as
/// infeasible and rejected by the line search.
pub fn minimize(f: impl Fn(&[f64]) -> f64, x0: &[f64], cfg: &BfgsConfig) -> Minimum {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    let mut g = DVector::from_vec(fd_gradient(&f, x.as_slice(), cfg.fd_step));
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut iterations = 0;

    let reason = loop {
        if g.amax() < cfg.grad_tol {
            break StopReason::Gradient;
        }
        if iterations >= cfg.max_iter {
            break StopReason::MaxIterations;
        }
        let mut d = -(&hinv * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            hinv = DMatrix::identity(n, n);
            fresh = true;
            d = -g.clone();
            slope = g.dot(&d);
        }

        // backtracking Armijo search
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + t * &d;
            let fnew = f(xn.as_slice());
            if fnew.is_finite() && fnew <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fnew));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if fresh {
                break StopReason::LineSearch;
            }
            hinv = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };

        iterations += 1;
        let gn = DVector::from_vec(fd_gradient(&f, xn.as_slice(), cfg.fd_step));
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        let change = (fx - fnew).abs();
        let scale = fx.abs().max(1.0);
        x = xn;
        fx = fnew;
        g = gn;

        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                hinv *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (H y s' + s y' H) + (rho^2 y'Hy + rho) s s'
            hinv += (rho * rho * yhy + rho) * (&s * s.transpose()) - rho * (&hy * s.transpose() + &s * hy.transpose());
            fresh = false;
        }

        if change <= cfg.rel_tol * scale {
            break StopReason::RelativeChange;
        }
    };

    Minimum {
        x: x.as_slice().to_vec(),
        f: fx,
        grad: g.as_slice().to_vec(),
        iterations,
        reason,
    }
}
