//! Canonical Runge–Kutta time stepping of the semi-discrete law.
//!
//! A tableau with `b_j a_jk + b_k a_kj = b_j b_k` preserves quadratic
//! invariants, and the enclosed area of a polygon is quadratic in the
//! vertices. With uniform stage curves the area then evolves exactly by
//! `(A^{n+1} - A^n)/dt = sum_k b_k sum_i v_i(Y_k) r_i(Y_k)`.

use log::debug;

use crate::error::{FlowError, Result};
use crate::geometry::{EdgeFrame, PolygonalCurve};
use crate::newton::{self, NewtonOptions};
use crate::semidiscrete::{area_rate, area_rate_error, SemiDiscreteRhs};

/// Tolerance used by [`canonical_check`].
pub const CANONICAL_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    /// Row-major `s x s` stage matrix.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl ButcherTableau {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let s = b.len();
        if s == 0 || a.len() != s || a.iter().any(|row| row.len() != s) {
            return Err(FlowError::InvalidParameter(format!(
                "tableau needs an {s}x{s} stage matrix"
            )));
        }
        Ok(Self { a, b })
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Implicit midpoint rule.
    pub fn midpoint() -> Self {
        Self {
            a: vec![vec![0.5]],
            b: vec![1.0],
        }
    }

    /// Two-stage Gauss–Legendre method (order 4).
    pub fn gauss2() -> Self {
        let d = 3f64.sqrt() / 6.0;
        Self {
            a: vec![vec![0.25, 0.25 - d], vec![0.25 + d, 0.25]],
            b: vec![0.5, 0.5],
        }
    }

    pub fn explicit_euler() -> Self {
        Self {
            a: vec![vec![0.0]],
            b: vec![1.0],
        }
    }

    pub fn classical_rk4() -> Self {
        Self {
            a: vec![
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.5, 0.0, 0.0, 0.0],
                vec![0.0, 0.5, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            b: vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
        }
    }

    /// `max_{j,k} |b_j a_jk + b_k a_kj - b_j b_k|`.
    pub fn canonical_defect(&self) -> f64 {
        let s = self.stages();
        let mut worst = 0.0f64;
        for j in 0..s {
            for k in 0..s {
                let d = self.b[j] * self.a[j][k] + self.b[k] * self.a[k][j] - self.b[j] * self.b[k];
                worst = worst.max(d.abs());
            }
        }
        worst
    }
}

pub fn canonical_check(tableau: &ButcherTableau) -> bool {
    tableau.canonical_defect() <= CANONICAL_TOL
}

/// Converged stage values of one step.
#[derive(Debug, Clone)]
pub struct StageSystem {
    /// Stage curves `Y_k`, interleaved coordinates.
    pub stages: Vec<Vec<f64>>,
    /// Max-norm of `(Y_k - X^n)/dt - sum_l a_kl F(Y_l)`.
    pub residual_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SrkStep {
    pub curve: PolygonalCurve,
    pub stages: StageSystem,
    /// `sum_k b_k sum_i v_i(Y_k) r_i(Y_k)`, the predicted area rate.
    pub area_rate: f64,
    /// Largest `|err_A|` over the stage curves.
    pub max_area_error: f64,
}

/// One step of the canonical Runge–Kutta method given by `tableau`.
///
/// All stages are solved together by damped Newton, starting from `Y_k = X^n`.
pub fn srk_step(
    curve: &PolygonalCurve,
    dt: f64,
    tableau: &ButcherTableau,
    rhs: &SemiDiscreteRhs,
    opts: &NewtonOptions,
) -> Result<SrkStep> {
    if !canonical_check(tableau) {
        return Err(FlowError::NotCanonical);
    }
    let x0 = curve.to_flat();
    let s = tableau.stages();
    let m = x0.len();
    if dt == 0.0 {
        return Ok(SrkStep {
            curve: curve.clone(),
            stages: StageSystem {
                stages: vec![x0; s],
                residual_norm: 0.0,
                iterations: 0,
            },
            area_rate: 0.0,
            max_area_error: 0.0,
        });
    }
    if !(dt > 0.0) {
        return Err(FlowError::InvalidParameter(format!("time step must be positive, got {dt}")));
    }

    let stage_residual = |y: &[f64]| -> Result<Vec<f64>> {
        let f: Vec<Vec<f64>> = y.chunks(m).map(|yk| rhs.eval_flat(yk)).collect::<Result<_>>()?;
        let mut r = Vec::with_capacity(s * m);
        for k in 0..s {
            let yk = &y[k * m..(k + 1) * m];
            for i in 0..m {
                let coupling: f64 = (0..s).map(|l| tableau.a[k][l] * f[l][i]).sum();
                r.push((yk[i] - x0[i]) / dt - coupling);
            }
        }
        Ok(r)
    };
    let guess: Vec<f64> = x0.iter().copied().cycle().take(s * m).collect();
    let report = newton::solve(stage_residual, &guess, opts)?;

    let mut x1 = x0.clone();
    let mut predicted = 0.0;
    let mut max_area_error = 0.0f64;
    let stages: Vec<Vec<f64>> = report.x.chunks(m).map(|c| c.to_vec()).collect();
    for (k, yk) in stages.iter().enumerate() {
        let stage_curve = PolygonalCurve::from_flat(yk)?;
        let vel = rhs.velocities(&stage_curve)?;
        let edges = EdgeFrame::new(&stage_curve)?;
        predicted += tableau.b[k] * area_rate(&edges, &vel.edge);
        max_area_error = max_area_error.max(area_rate_error(&edges, &vel.tangential, &vel.edge).abs());
        for (i, p) in vel.velocity.iter().enumerate() {
            x1[2 * i] += dt * tableau.b[k] * p.x;
            x1[2 * i + 1] += dt * tableau.b[k] * p.y;
        }
    }
    debug!(
        "srk step dt = {dt:e}: {} iterations, stage residual {:e}",
        report.iterations, report.residual_norm
    );
    Ok(SrkStep {
        curve: PolygonalCurve::from_flat(&x1)?,
        stages: StageSystem {
            stages,
            residual_norm: report.residual_norm,
            iterations: report.iterations,
        },
        area_rate: predicted,
        max_area_error,
    })
}
