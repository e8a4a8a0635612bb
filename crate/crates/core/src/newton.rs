//! Damped Newton iteration with a forward-difference Jacobian, switching to
//! central differences when the line search fails.
//!
//! Shared by the implicit curve-shortening step and the canonical
//! Runge–Kutta stage solver. Convergence is measured in the max norm; the
//! line search is Armijo backtracking on `||R||_2^2 / 2`.

use log::trace;
use nalgebra::DMatrix;

use crate::error::{FlowError, Result};
use crate::linalg::DenseLu;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Max-norm residual tolerance for acceptance.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative forward-difference step: `h_j = fd_step * (1 + |x_j|)`.
    pub fd_step: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Smallest damping factor tried before the iteration gives up.
    pub min_damping: f64,
    /// After convergence, take one extra chord step with the last Jacobian
    /// and keep it if it lowers the residual.
    pub polish: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            fd_step: 1e-7,
            armijo: 1e-4,
            min_damping: 1.0 / 1024.0,
            polish: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
    /// Number of Jacobian solves, not counting the polishing step.
    pub iterations: usize,
    /// Max norm of the final residual.
    pub residual_norm: f64,
    /// Euclidean residual norm after each accepted iterate, starting with the initial guess.
    pub history: Vec<f64>,
    /// Smallest damping factor used by any iteration.
    pub min_damping_used: f64,
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Forward-difference Jacobian of `f` at `x`, given `fx = f(x)`.
pub fn fd_jacobian<F>(f: &mut F, x: &[f64], fx: &[f64], fd_step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let m = fx.len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = fd_step * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        // the actually representable increment
        let h = xp[j] - x[j];
        let fp = f(&xp)?;
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fx[i]) / h;
        }
        xp[j] = x[j];
    }
    Ok(jac)
}

/// Central-difference Jacobian; twice the cost of [`fd_jacobian`] but
/// accurate enough to make progress near the roundoff floor of a stiff residual.
pub fn central_jacobian<F>(f: &mut F, x: &[f64], m: usize, fd_step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = fd_step.cbrt() * 1e-3 * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        let hp = xp[j] - x[j];
        let fp = f(&xp)?;
        xp[j] = x[j] - h;
        let hm = x[j] - xp[j];
        let fm = f(&xp)?;
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (hp + hm);
        }
        xp[j] = x[j];
    }
    Ok(jac)
}

/// Solves `f(x) = 0` starting from `x0`.
pub fn solve<F>(mut f: F, x0: &[f64], opts: &NewtonOptions) -> Result<NewtonReport>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = x0.to_vec();
    let mut fx = f(&x)?;
    let mut norm = max_norm(&fx);
    let mut history = vec![l2(&fx)];
    let mut iterations = 0;
    let mut lu: Option<DenseLu> = None;
    let mut min_damping_used = 1.0f64;
    let mut central = false;

    let reject = |iterations: usize, norm: f64| FlowError::StepRejected {
        iterations,
        residual: norm,
    };

    while norm > opts.tol {
        if iterations == opts.max_iter {
            return Err(reject(iterations, norm));
        }
        iterations += 1;
        let jac = if central {
            central_jacobian(&mut f, &x, fx.len(), opts.fd_step)
        } else {
            fd_jacobian(&mut f, &x, &fx, opts.fd_step)
        }
        .map_err(|_| reject(iterations, norm))?;
        let factor = DenseLu::new(jac).map_err(|_| reject(iterations, norm))?;
        let neg: Vec<f64> = fx.iter().map(|v| -v).collect();
        let dx = factor.solve_slice(&neg).map_err(|_| reject(iterations, norm))?;

        let merit = history.last().copied().unwrap_or(0.0).powi(2);
        let mut lambda = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + lambda * d).collect();
            if let Ok(ft) = f(&trial) {
                let m = l2(&ft).powi(2);
                if m.is_finite() && m <= (1.0 - 2.0 * opts.armijo * lambda) * merit {
                    x = trial;
                    fx = ft;
                    break true;
                }
            }
            lambda *= 0.5;
            if lambda < opts.min_damping {
                break false;
            }
        };
        if !accepted {
            // a forward-difference direction that fails the line search is
            // usually a Jacobian accuracy problem; retry once with central differences
            if central {
                return Err(reject(iterations, norm));
            }
            trace!("line search failed at |R|_max = {norm:e}; switching to central differences");
            central = true;
            continue;
        }
        min_damping_used = min_damping_used.min(lambda);
        norm = max_norm(&fx);
        history.push(l2(&fx));
        trace!("newton iter {iterations}: |R|_max = {norm:e}, damping {lambda}");
        lu = Some(factor);
    }

    if opts.polish && norm > 1e-3 * opts.tol {
        let factor = match lu {
            Some(factor) => Some(factor),
            None if central => central_jacobian(&mut f, &x, fx.len(), opts.fd_step)
                .ok()
                .and_then(|j| DenseLu::new(j).ok()),
            None => fd_jacobian(&mut f, &x, &fx, opts.fd_step)
                .ok()
                .and_then(|j| DenseLu::new(j).ok()),
        };
        if let Some(factor) = factor {
            let neg: Vec<f64> = fx.iter().map(|v| -v).collect();
            if let Ok(dx) = factor.solve_slice(&neg) {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
                if let Ok(ft) = f(&trial) {
                    let n2 = max_norm(&ft);
                    if n2 < norm {
                        x = trial;
                        fx = ft;
                        norm = n2;
                        history.push(l2(&fx));
                    }
                }
            }
        }
    }

    Ok(NewtonReport {
        x,
        residual: fx,
        iterations,
        residual_norm: norm,
        history,
        min_damping_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_small_nonlinear_system() {
        // x^2 + y^2 = 4, x = y
        let f = |v: &[f64]| Ok(vec![v[0] * v[0] + v[1] * v[1] - 4.0, v[0] - v[1]]);
        let rep = solve(f, &[1.0, 0.5], &NewtonOptions::default()).unwrap();
        let s = 2f64.sqrt();
        assert!((rep.x[0] - s).abs() < 1e-12);
        assert!((rep.x[1] - s).abs() < 1e-12);
        assert!(rep.residual_norm < 1e-12);
    }

    #[test]
    fn reports_rejection() {
        // no real root
        let f = |v: &[f64]| Ok(vec![v[0] * v[0] + 1.0]);
        let opts = NewtonOptions {
            max_iter: 5,
            ..Default::default()
        };
        assert!(matches!(
            solve(f, &[1.0], &opts),
            Err(FlowError::StepRejected { .. })
        ));
    }

    #[test]
    fn damping_engages_and_history_decreases() {
        // arctan has a Newton overshoot from far away
        let f = |v: &[f64]| Ok(vec![v[0].atan()]);
        let rep = solve(f, &[3.0], &NewtonOptions::default()).unwrap();
        assert!(rep.min_damping_used < 1.0);
        assert!(rep.x[0].abs() < 1e-8);
        for w in rep.history.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn jacobian_of_linear_map() {
        let mut f = |v: &[f64]| Ok(vec![2.0 * v[0] + 3.0 * v[1], -v[1]]);
        let x = [0.3, -0.7];
        let fx = f(&x).unwrap();
        let j = fd_jacobian(&mut f, &x, &fx, 1e-7).unwrap();
        assert!((j[(0, 0)] - 2.0).abs() < 1e-7);
        assert!((j[(0, 1)] - 3.0).abs() < 1e-7);
        assert!(j[(1, 0)].abs() < 1e-12);
        assert!((j[(1, 1)] + 1.0).abs() < 1e-7);
    }

    #[test]
    fn central_jacobian_beats_forward_differences() {
        let mut f = |v: &[f64]| Ok(vec![v[0] * v[0] * v[0], v[0] * v[1]]);
        let x = [1.3, -0.4];
        let fx = f(&x).unwrap();
        let forward = fd_jacobian(&mut f, &x, &fx, 1e-7).unwrap();
        let central = central_jacobian(&mut f, &x, 2, 1e-7).unwrap();
        let exact = 3.0 * 1.3 * 1.3;
        assert!((central[(0, 0)] - exact).abs() < 1e-8);
        assert!((central[(0, 0)] - exact).abs() < (forward[(0, 0)] - exact).abs());
        assert!((central[(1, 0)] + 0.4).abs() < 1e-9);
        assert!((central[(1, 1)] - 1.3).abs() < 1e-9);
    }
}
