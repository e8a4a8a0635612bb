//! Time-stepping driver shared by the implicit, explicit and canonical schemes.

use log::{info, warn};

use crate::error::{FlowError, Result};
use crate::flows::FlowModel;
use crate::fullydiscrete::{ImplicitScheme, NormalWeights, OmegaRule, StepController, TangentialClosure};
use crate::geometry::{Point, PolygonalCurve};
use crate::newton::NewtonOptions;
use crate::semidiscrete::{detect_blow_up, rk4_update, SemiDiscreteRhs};
use crate::symplectic::{srk_step, ButcherTableau};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// The curve-shortening implicit scheme.
    #[default]
    Implicit,
    /// Classical RK4 on the semi-discrete law.
    Rk4,
    /// Implicit midpoint rule on the semi-discrete law.
    MidpointSrk,
    /// Two-stage Gauss method on the semi-discrete law.
    Gauss2Srk,
}

impl Scheme {
    pub fn tableau(&self) -> Option<ButcherTableau> {
        match self {
            Scheme::MidpointSrk => Some(ButcherTableau::midpoint()),
            Scheme::Gauss2Srk => Some(ButcherTableau::gauss2()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationParams {
    pub scheme: Scheme,
    pub model: FlowModel,
    /// Upper bound on the adaptive step.
    pub tau: f64,
    pub omega_rule: OmegaRule,
    pub newton: NewtonOptions,
    pub t_end: f64,
    /// Uniform step instead of the adaptive rule. RK4 without it uses `0.1 / N^2`.
    pub fixed_dt: Option<f64>,
    pub closure: TangentialClosure,
    pub weights: NormalWeights,
    /// How often a rejected implicit step may be retried with half the step.
    pub max_halvings: usize,
    /// Snapshot spacing in time; the initial and final curves are always kept.
    pub snapshot_interval: Option<f64>,
    /// Log a warning when an accepted curve self-intersects.
    pub check_simple: bool,
}

impl Default for SimulationParams {
    fn default() -> Self {
        Self {
            scheme: Scheme::Implicit,
            model: FlowModel::Mcf,
            tau: 0.01,
            omega_rule: OmegaRule::default(),
            newton: NewtonOptions::default(),
            t_end: 1.0,
            fixed_dt: None,
            closure: TangentialClosure::ZeroAverage,
            weights: NormalWeights::default(),
            max_halvings: 10,
            snapshot_interval: None,
            check_simple: false,
        }
    }
}

impl SimulationParams {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |what: &str, v: f64| Err(FlowError::InvalidParameter(format!("{what} must be positive, got {v}")));
        if !(self.tau > 0.0) {
            return bad("tau", self.tau);
        }
        if !(self.newton.tol > 0.0) {
            return bad("tol", self.newton.tol);
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(FlowError::InvalidParameter(format!("t_end must be finite and >= 0, got {}", self.t_end)));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0) {
                return bad("dt", dt);
            }
        }
        if let Some(s) = self.snapshot_interval {
            if !(s > 0.0) {
                return bad("snapshot interval", s);
            }
        }
        if let OmegaRule::Constant(w) = self.omega_rule {
            if !(w >= 0.0) {
                return Err(FlowError::InvalidParameter(format!("omega must be >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// One accepted step (or the initial state, with `dt = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub length: f64,
    pub area: f64,
    pub newton_iters: usize,
    /// Max-norm residual of the nonlinear solve; zero for explicit steps.
    pub residual: f64,
    /// `max_i |r_i - L/N|`.
    pub uniformity: f64,
    /// Step-size halvings needed before acceptance.
    pub halvings: usize,
    /// `sum kappa v r` on the midpoint curve (implicit scheme only).
    pub dissipation: Option<f64>,
    /// `(L^{n+1} - L^n)/dt - dissipation` (implicit scheme only).
    pub length_defect: Option<f64>,
    /// `max |G_i|` (implicit scheme only).
    pub max_abs_g: Option<f64>,
    /// Predicted area rate (canonical Runge–Kutta only).
    pub area_rate: Option<f64>,
}

impl StepRecord {
    fn initial(curve: &PolygonalCurve) -> Self {
        Self {
            t: 0.0,
            dt: 0.0,
            length: curve.length(),
            area: curve.signed_area(),
            newton_iters: 0,
            residual: 0.0,
            uniformity: curve.uniformity(),
            halvings: 0,
            dissipation: None,
            length_defect: None,
            max_abs_g: None,
            area_rate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub curve: PolygonalCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_curve: PolygonalCurve,
    /// Raw vertices of a step that blew up, if they could be computed.
    pub diagnostic: Option<Vec<Point>>,
}

impl TimeSeries {
    pub fn final_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t)
    }

    /// Accepted steps, without the initial record.
    pub fn steps(&self) -> &[StepRecord] {
        &self.records[1..]
    }
}

/// A possibly incomplete run: the series up to the failure, and the failure.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub series: TimeSeries,
    pub error: Option<FlowError>,
}

impl Outcome {
    pub fn into_result(self) -> Result<TimeSeries> {
        match self.error {
            None => Ok(self.series),
            Some(e) => Err(e),
        }
    }
}

struct Accepted {
    curve: PolygonalCurve,
    record: StepRecord,
}

fn implicit_step(x: &PolygonalCurve, dt: f64, params: &SimulationParams) -> Result<Accepted> {
    let scheme = ImplicitScheme {
        model: params.model,
        closure: params.closure,
        weights: params.weights,
    };
    let omega = params.omega_rule.omega(x.len(), dt);
    let s = scheme.step(x, dt, omega, &params.newton)?;
    let record = StepRecord {
        newton_iters: s.iterations,
        residual: s.residual_norm,
        dissipation: Some(s.dissipation),
        length_defect: Some(s.length_defect),
        max_abs_g: Some(s.max_abs_g),
        ..StepRecord::initial(&s.curve)
    };
    Ok(Accepted { curve: s.curve, record })
}

fn srk(x: &PolygonalCurve, dt: f64, params: &SimulationParams, tableau: &ButcherTableau) -> Result<Accepted> {
    let rhs = SemiDiscreteRhs::new(params.model, params.omega_rule.omega(x.len(), dt))?;
    let s = srk_step(x, dt, tableau, &rhs, &params.newton)?;
    let record = StepRecord {
        newton_iters: s.stages.iterations,
        residual: s.stages.residual_norm,
        area_rate: Some(s.area_rate),
        ..StepRecord::initial(&s.curve)
    };
    Ok(Accepted { curve: s.curve, record })
}

fn rk4(x: &PolygonalCurve, dt: f64, params: &SimulationParams, diagnostic: &mut Option<Vec<Point>>) -> Result<Accepted> {
    let rhs = SemiDiscreteRhs::new(params.model, params.omega_rule.omega(x.len(), dt))?;
    let raw = rk4_update(x, dt, &rhs)?;
    let points: Vec<Point> = raw.chunks(2).map(|c| Point::new(c[0], c[1])).collect();
    let fail = |msg: String, diagnostic: &mut Option<Vec<Point>>| {
        *diagnostic = Some(points.clone());
        FlowError::ExplicitBlowUp(msg)
    };
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(fail(format!("non-finite coordinate at vertex {}", i / 2), diagnostic));
    }
    let curve = match PolygonalCurve::from_flat(&raw) {
        Ok(c) => c,
        Err(e) => return Err(fail(format!("update: {e}"), diagnostic)),
    };
    if let Some(msg) = detect_blow_up(x, &curve) {
        return Err(fail(msg, diagnostic));
    }
    let record = StepRecord::initial(&curve);
    Ok(Accepted { curve, record })
}

/// Integrates from `x0` to `params.t_end`.
///
/// Never panics on numerical failure: the returned [`Outcome`] holds every
/// accepted step up to the failure.
pub fn simulate(x0: &PolygonalCurve, params: &SimulationParams) -> Outcome {
    let mut series = TimeSeries {
        records: vec![StepRecord::initial(x0)],
        snapshots: vec![Snapshot {
            t: 0.0,
            curve: x0.clone(),
        }],
        final_curve: x0.clone(),
        diagnostic: None,
    };
    let error = drive(x0, params, &mut series).err();
    if let Some(e) = &error {
        warn!("simulation stopped at t = {}: {e}", series.final_time());
    }
    let last = series.snapshots.last().map(|s| s.t);
    if last != Some(series.final_time()) {
        series.snapshots.push(Snapshot {
            t: series.final_time(),
            curve: series.final_curve.clone(),
        });
    }
    Outcome { series, error }
}

fn drive(x0: &PolygonalCurve, params: &SimulationParams, series: &mut TimeSeries) -> Result<()> {
    params.validate()?;
    let n = x0.len();
    let tableau = params.scheme.tableau();
    let mut controller = StepController::new(params.tau)?;
    let mut dt = match (params.fixed_dt, params.scheme) {
        (Some(dt), _) => dt,
        (None, Scheme::Rk4) => 0.1 / (n * n) as f64,
        (None, _) => controller.initial(x0)?,
    };
    let eps = 1e-12 * params.t_end.max(1.0);
    let mut t = 0.0;
    let mut x = x0.clone();
    let mut next_snapshot = params.snapshot_interval;

    while t < params.t_end - eps {
        let planned = dt.min(params.t_end - t);
        let mut trial = planned;
        let mut halvings = 0;
        let accepted = loop {
            let attempt = match params.scheme {
                Scheme::Implicit => implicit_step(&x, trial, params),
                Scheme::Rk4 => rk4(&x, trial, params, &mut series.diagnostic),
                Scheme::MidpointSrk | Scheme::Gauss2Srk => srk(&x, trial, params, tableau.as_ref().unwrap()),
            };
            match attempt {
                Ok(a) => break a,
                Err(e @ (FlowError::ExplicitBlowUp(_) | FlowError::InvalidParameter(_) | FlowError::NotCanonical)) => {
                    return Err(e)
                }
                Err(e) if halvings >= params.max_halvings => {
                    return Err(match e {
                        FlowError::StepRejected { .. } => e,
                        other => {
                            warn!("step failed: {other}");
                            FlowError::StepRejected {
                                iterations: 0,
                                residual: f64::INFINITY,
                            }
                        }
                    });
                }
                Err(e) => {
                    halvings += 1;
                    trial *= 0.5;
                    info!("t = {t}: {e}; retrying with dt = {trial:e}");
                }
            }
        };
        let length_before = x.length();
        t += trial;
        x = accepted.curve;
        if params.check_simple && !x.is_simple() {
            warn!("curve self-intersects at t = {t}");
        }
        series.records.push(StepRecord {
            t,
            dt: trial,
            halvings,
            ..accepted.record
        });
        series.final_curve = x.clone();
        if let Some(next) = next_snapshot.as_mut() {
            if t >= *next - eps {
                series.snapshots.push(Snapshot { t, curve: x.clone() });
                let interval = params.snapshot_interval.unwrap_or(f64::INFINITY);
                while *next <= t + eps {
                    *next += interval;
                }
            }
        }
        dt = match (params.fixed_dt, params.scheme) {
            (Some(_), _) | (None, Scheme::Rk4) => dt,
            (None, _) => controller.observe(length_before, x.length(), trial),
        };
    }
    Ok(())
}
