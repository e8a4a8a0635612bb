//! The implicit curve-shortening step.
//!
//! Every geometric quantity is evaluated on the pair (candidate `X`, previous
//! `X^`) through the midpoint curve `(X + X^)/2`, in such a way that
//!
//! ```text
//! (L[X] - L[X^]) / dt = sum_i kappa_i v_i r_i - sum_i G_i W_i
//! ```
//!
//! holds exactly for any step size, where `kappa`, `v`, `r` live on the
//! midpoint curve. `G_i` vanishes unless the midpoint curve is straight at
//! vertex `i`, so the length decreases for every dissipative flow model.
//!
//! The unknowns of the nonlinear system are the new vertex positions only;
//! the normal and tangential speeds are eliminated inside [`residual`].

use log::{debug, warn};

use crate::error::{FlowError, Result};
use crate::flows::FlowModel;
use crate::geometry::{cross, next, prev, rot90, signed_angle, EdgeFrame, Point, PolygonalCurve};
use crate::newton::{self, NewtonOptions};
use crate::semidiscrete::solve_telescoped;
use crate::simulation::{simulate, Scheme, SimulationParams, TimeSeries};

/// `|G_i|` above this counts as a violation of the curve-shortening hypothesis.
pub const G_NONZERO_THRESHOLD: f64 = 1e-12;

/// Extra condition closing the underdetermined tangential system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TangentialClosure {
    /// `sum_i W_i (r_i + r_{i+1}) / 2 = 0` on the midpoint curve.
    #[default]
    ZeroAverage,
    /// `sum_i G_i W_i = 0`; only solvable when some `G_i` is nonzero.
    ZeroWeightedAverage,
}

/// Accepted Newton residuals may exceed the requested tolerance up to this
/// many ulps of the residual's own scale, `omega L + max|X| / dt`; below
/// that the residual is rounding noise.
pub const RESIDUAL_FLOOR_ULPS: f64 = 100.0;

/// Weights `alpha_i`, `beta_i` combining the edge velocities into the vertex
/// normal velocity at a bent vertex of the midpoint curve.
///
/// The length identity holds for every choice, because the curvature is
/// built from the same weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalWeights {
    /// Coordinates of `N_i` in the basis `(n_i, n_{i+1})`. Blows up like
    /// `1/phi^2` at a nearly straight vertex whose adjacent midpoint edges
    /// differ in length, which stalls Newton when an inflection migrates.
    Decomposition,
    /// `1 / (2 cos(phi_i / 2))` each: the decomposition with `N_i` replaced
    /// by the bisector of `n_i` and `n_{i+1}`. Bounded and smooth.
    Bisector,
    /// `r_i / (r_i + r_{i+1})` and `r_{i+1} / (r_i + r_{i+1})`.
    EdgeLength,
    /// `Decomposition` blended into `Bisector` near inflections with weight
    /// `phi^4 / (phi^4 + width^4)`, which removes the `1/phi^2` pole of the
    /// decomposition at nearly straight vertices.
    Blended { width: f64 },
}

impl Default for NormalWeights {
    fn default() -> Self {
        NormalWeights::Bisector
    }
}

/// Two-curve geometry on the midpoint of a candidate and a previous curve.
///
/// Edge arrays are indexed like [`EdgeFrame`], vertex arrays like
/// [`crate::geometry::VertexFrame`].
#[derive(Debug, Clone)]
pub struct MidpointFrame {
    /// `(X_i + X^_i) / 2`.
    pub midpoint: PolygonalCurve,
    pub r_new: Vec<f64>,
    pub r_old: Vec<f64>,
    pub len_new: f64,
    pub len_old: f64,
    /// Edge lengths of the midpoint curve.
    pub r_bar: Vec<f64>,
    /// Unit tangents of the midpoint curve.
    pub t_bar: Vec<Point>,
    /// Outward unit normals of the midpoint curve.
    pub n_bar: Vec<Point>,
    /// Two-curve difference `(Xbar_i - Xbar_{i-1}) / ((r_i + r^_i)/2)`.
    pub d_bar: Vec<Point>,
    /// Turning angle of the midpoint curve at each vertex.
    pub phi_bar: Vec<f64>,
    pub normal: Vec<Point>,
    pub tangent: Vec<Point>,
    pub f_bar: Vec<f64>,
    pub g_bar: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Midpoint curvature `-(F_i alpha_i + F_{i-1} beta_{i-1}) / rbar_i`.
    pub kappa: Vec<f64>,
}

impl MidpointFrame {
    pub fn new(x_new: &PolygonalCurve, x_old: &PolygonalCurve) -> Result<Self> {
        Self::with_weights(x_new, x_old, NormalWeights::default())
    }

    pub fn with_weights(x_new: &PolygonalCurve, x_old: &PolygonalCurve, weights: NormalWeights) -> Result<Self> {
        let n = x_new.len();
        if x_old.len() != n {
            return Err(FlowError::SizeMismatch(n, x_old.len()));
        }
        let r_new = x_new.edge_lengths();
        let r_old = x_old.edge_lengths();
        let midpoint = PolygonalCurve::new(
            x_new
                .vertices()
                .iter()
                .zip(x_old.vertices())
                .map(|(a, b)| (a + b) * 0.5)
                .collect(),
        )?;
        let edges = EdgeFrame::new(&midpoint)?;
        let d_bar: Vec<Point> = (0..n)
            .map(|i| midpoint.edge(i) / (0.5 * (r_new[i] + r_old[i])))
            .collect();

        let mut phi_bar = Vec::with_capacity(n);
        let mut normal = Vec::with_capacity(n);
        let mut f_bar = Vec::with_capacity(n);
        let mut g_bar = Vec::with_capacity(n);
        let mut alpha = Vec::with_capacity(n);
        let mut beta = Vec::with_capacity(n);
        for i in 0..n {
            let j = next(i, n);
            let phi = signed_angle(&edges.t[i], &edges.t[j]);
            if phi.abs() >= std::f64::consts::PI {
                return Err(FlowError::AngleOverflow(i));
            }
            let diff = d_bar[j] - d_bar[i];
            let size = diff.norm();
            if phi != 0.0 && size > 0.0 {
                let sgn = phi.signum();
                let nv = -sgn * diff / size;
                match weights {
                    NormalWeights::Decomposition => {
                        // N = alpha n_i + beta n_{i+1}, solved by Cramer's rule
                        let det = cross(&edges.n[i], &edges.n[j]);
                        alpha.push(cross(&nv, &edges.n[j]) / det);
                        beta.push(cross(&edges.n[i], &nv) / det);
                    }
                    NormalWeights::Blended { width } => {
                        let det = cross(&edges.n[i], &edges.n[j]);
                        let bis = 0.5 / (0.5 * phi).cos();
                        let p4 = phi.powi(4);
                        let w = p4 / (p4 + width.powi(4));
                        alpha.push(bis + w * (cross(&nv, &edges.n[j]) / det - bis));
                        beta.push(bis + w * (cross(&edges.n[i], &nv) / det - bis));
                    }
                    NormalWeights::Bisector => {
                        let w = 0.5 / (0.5 * phi).cos();
                        alpha.push(w);
                        beta.push(w);
                    }
                    NormalWeights::EdgeLength => {
                        let rs = edges.r[i] + edges.r[j];
                        alpha.push(edges.r[i] / rs);
                        beta.push(edges.r[j] / rs);
                    }
                }
                normal.push(nv);
                f_bar.push(-sgn * size);
                g_bar.push(0.0);
            } else {
                normal.push(edges.n[i]);
                f_bar.push(0.0);
                let (a, b) = (d_bar[j].norm(), d_bar[i].norm());
                g_bar.push(if a > b {
                    size
                } else if a < b {
                    -size
                } else {
                    0.0
                });
                let rs = edges.r[i] + edges.r[j];
                alpha.push(edges.r[i] / rs);
                beta.push(edges.r[j] / rs);
            }
            phi_bar.push(phi);
        }
        let tangent = normal.iter().map(rot90).collect();
        let kappa = (0..n)
            .map(|i| {
                let k = prev(i, n);
                -(f_bar[i] * alpha[i] + f_bar[k] * beta[k]) / edges.r[i]
            })
            .collect();
        let len_new = r_new.iter().sum();
        let len_old = r_old.iter().sum();
        Ok(Self {
            midpoint,
            r_new,
            r_old,
            len_new,
            len_old,
            r_bar: edges.r,
            t_bar: edges.t,
            n_bar: edges.n,
            d_bar,
            phi_bar,
            normal,
            tangent,
            f_bar,
            g_bar,
            alpha,
            beta,
            kappa,
        })
    }

    pub fn len(&self) -> usize {
        self.r_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_bar.is_empty()
    }

    pub fn max_abs_g(&self) -> f64 {
        self.g_bar.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    /// `sum_i kappa_i v_i r_i` on the midpoint curve.
    pub fn dissipation(&self, v: &[f64]) -> f64 {
        (0..self.len()).map(|i| self.kappa[i] * v[i] * self.r_bar[i]).sum()
    }
}

pub fn midpoint_frame(x_new: &PolygonalCurve, x_old: &PolygonalCurve) -> Result<MidpointFrame> {
    MidpointFrame::new(x_new, x_old)
}

/// `Vbar_i = alpha_i vbar_i + beta_i vbar_{i+1}`.
pub fn implicit_normal_velocity(frame: &MidpointFrame, v: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..n)
        .map(|i| frame.alpha[i] * v[i] + frame.beta[i] * v[next(i, n)])
        .collect()
}

/// Tangential speeds making the edge lengths relax towards `L/N` at rate `omega`.
///
/// Solves the `N - 1` compatibility equations by forward elimination plus
/// the chosen closure.
pub fn discrete_aud(
    frame: &MidpointFrame,
    big_v: &[f64],
    dt: f64,
    omega: f64,
    closure: TangentialClosure,
) -> Result<Vec<f64>> {
    let n = frame.len();
    let nf = n as f64;
    let length_rate = (frame.len_new - frame.len_old) / dt;
    let mut diag = vec![0.0; n];
    let mut sub = vec![0.0; n];
    let mut psi = vec![0.0; n];
    for i in 0..n {
        let k = prev(i, n);
        let scale = frame.r_bar[i] / (0.5 * (frame.r_new[i] + frame.r_old[i]));
        let t = frame.t_bar[i];
        diag[i] = scale * t.dot(&frame.tangent[i]);
        sub[i] = scale * t.dot(&frame.tangent[k]);
        psi[i] = -scale * t.dot(&frame.normal[i]) * big_v[i]
            + scale * t.dot(&frame.normal[k]) * big_v[k]
            + length_rate / nf
            + (frame.len_new / nf - frame.r_new[i]) * omega;
    }
    let weights: Vec<f64> = match closure {
        TangentialClosure::ZeroAverage => (0..n)
            .map(|i| 0.5 * (frame.r_bar[i] + frame.r_bar[next(i, n)]))
            .collect(),
        TangentialClosure::ZeroWeightedAverage => frame.g_bar.clone(),
    };
    solve_telescoped(&diag, &sub, &psi, &weights)
}

/// Everything computed while evaluating the implicit residual.
#[derive(Debug, Clone)]
pub struct ImplicitEvaluation {
    pub frame: MidpointFrame,
    /// Edge normal velocities on the midpoint curve.
    pub v: Vec<f64>,
    pub big_v: Vec<f64>,
    pub w: Vec<f64>,
    /// `(X - X^)/dt - V N - W T`, interleaved.
    pub residual: Vec<f64>,
}

/// Parameters of the implicit scheme that do not change between steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitScheme {
    pub model: FlowModel,
    pub closure: TangentialClosure,
    pub weights: NormalWeights,
}

impl ImplicitScheme {
    pub fn new(model: FlowModel) -> Self {
        Self {
            model,
            closure: TangentialClosure::default(),
            weights: NormalWeights::default(),
        }
    }

    pub fn evaluate(
        &self,
        x_new: &PolygonalCurve,
        x_old: &PolygonalCurve,
        dt: f64,
        omega: f64,
    ) -> Result<ImplicitEvaluation> {
        let frame = MidpointFrame::with_weights(x_new, x_old, self.weights)?;
        let v = self
            .model
            .edge_velocities(&frame.midpoint, &frame.r_bar, &frame.n_bar, &frame.kappa)?;
        let big_v = implicit_normal_velocity(&frame, &v);
        let w = discrete_aud(&frame, &big_v, dt, omega, self.closure)?;
        let mut residual = Vec::with_capacity(2 * frame.len());
        for i in 0..frame.len() {
            let r = (x_new.vertex(i) - x_old.vertex(i)) / dt
                - big_v[i] * frame.normal[i]
                - w[i] * frame.tangent[i];
            residual.push(r.x);
            residual.push(r.y);
        }
        Ok(ImplicitEvaluation {
            frame,
            v,
            big_v,
            w,
            residual,
        })
    }

    pub fn residual(&self, x_new: &PolygonalCurve, x_old: &PolygonalCurve, dt: f64, omega: f64) -> Result<Vec<f64>> {
        Ok(self.evaluate(x_new, x_old, dt, omega)?.residual)
    }

    /// Size of the rounding noise in the residual near a solution. Only
    /// exceeds the usual `1e-8` tolerance for tiny `dt`, where `omega` is huge.
    pub fn residual_floor(&self, x_old: &PolygonalCurve, dt: f64, omega: f64) -> f64 {
        let reach = x_old.vertices().iter().fold(0.0f64, |m, p| m.max(p.x.abs()).max(p.y.abs()));
        RESIDUAL_FLOOR_ULPS * f64::EPSILON * (omega.abs() * x_old.length() + reach / dt)
    }

    /// Solves for the next curve by damped Newton.
    pub fn step(&self, x_old: &PolygonalCurve, dt: f64, omega: f64, opts: &NewtonOptions) -> Result<StepResult> {
        if !(dt > 0.0) {
            return Err(FlowError::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        let f = |coords: &[f64]| {
            let candidate = PolygonalCurve::from_flat(coords)?;
            self.residual(&candidate, x_old, dt, omega)
        };
        // Start from the relaxed vertex distribution along the old polygon;
        // with a large `dt * omega` the step is mostly a redistribution and
        // Newton started at `x_old` stalls.
        let guess = tangential_predictor(x_old, dt, omega);
        let opts = &NewtonOptions {
            tol: opts.tol.max(self.residual_floor(x_old, dt, omega)),
            ..*opts
        };
        let report = match newton::solve(&f, &guess, opts) {
            Ok(r) => r,
            Err(e) if guess != x_old.to_flat() => {
                debug!("predicted start failed ({e}), retrying from the old curve");
                newton::solve(&f, &x_old.to_flat(), opts)?
            }
            Err(e) => return Err(e),
        };
        let curve = PolygonalCurve::from_flat(&report.x)?;
        let eval = self.evaluate(&curve, x_old, dt, omega)?;
        let dissipation = eval.frame.dissipation(&eval.v);
        let length_rate = (eval.frame.len_new - eval.frame.len_old) / dt;
        let max_abs_g = eval.frame.max_abs_g();
        if max_abs_g > G_NONZERO_THRESHOLD {
            warn!("nonzero G (max {max_abs_g:e}) in accepted step, dt = {dt}");
        }
        debug!(
            "implicit step dt = {dt:e}: {} iterations, residual {:e}",
            report.iterations, report.residual_norm
        );
        Ok(StepResult {
            curve,
            dt,
            omega,
            iterations: report.iterations,
            residual_norm: report.residual_norm,
            residual_history: report.history,
            length_rate,
            dissipation,
            length_defect: length_rate - dissipation,
            max_abs_g,
            g_nonzero: max_abs_g > G_NONZERO_THRESHOLD,
        })
    }
}

/// Moves the vertices of `x_old` along the polygon so that the edge-length
/// deviations from `L/N` shrink by `1/(1 + dt omega)`, keeping the mean
/// arclength shift zero.
fn tangential_predictor(x_old: &PolygonalCurve, dt: f64, omega: f64) -> Vec<f64> {
    let n = x_old.len();
    let r = x_old.edge_lengths();
    let total: f64 = r.iter().sum();
    let mean = total / n as f64;
    let factor = 1.0 / (1.0 + dt * omega);
    // arclength of vertex i measured from vertex n-1 (edge 0 ends at vertex 0)
    let mut old_pos = Vec::with_capacity(n);
    let mut new_pos = Vec::with_capacity(n);
    let (mut a, mut b) = (0.0, 0.0);
    for ri in &r {
        a += ri;
        b += mean + (ri - mean) * factor;
        old_pos.push(a);
        new_pos.push(b);
    }
    let shift = old_pos.iter().zip(&new_pos).map(|(o, p)| o - p).sum::<f64>() / n as f64;
    let start = x_old.vertex(n - 1);
    let mut out = Vec::with_capacity(2 * n);
    for p in new_pos {
        let s = (p + shift).rem_euclid(total);
        // locate the edge containing arclength s
        let mut acc = 0.0;
        let mut point = start;
        for (k, rk) in r.iter().enumerate() {
            if s <= acc + rk || k == n - 1 {
                let from = if k == 0 { start } else { x_old.vertex(k - 1) };
                point = from + (s - acc).clamp(0.0, *rk) / rk * x_old.edge(k);
                break;
            }
            acc += rk;
        }
        out.push(point.x);
        out.push(point.y);
    }
    out
}

/// `(X - X^)/dt - V N - W T` for the candidate `x_new`.
pub fn residual(
    x_new: &PolygonalCurve,
    x_old: &PolygonalCurve,
    dt: f64,
    model: &FlowModel,
    omega: f64,
) -> Result<Vec<f64>> {
    ImplicitScheme::new(*model).residual(x_new, x_old, dt, omega)
}

/// One implicit step from `x_old`; see [`ImplicitScheme::step`].
pub fn newton_step_solve(
    x_old: &PolygonalCurve,
    dt: f64,
    model: &FlowModel,
    omega: f64,
    opts: &NewtonOptions,
) -> Result<StepResult> {
    ImplicitScheme::new(*model).step(x_old, dt, omega, opts)
}

/// An accepted implicit step with solver diagnostics.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub curve: PolygonalCurve,
    pub dt: f64,
    pub omega: f64,
    pub iterations: usize,
    /// Max-norm residual at the accepted curve.
    pub residual_norm: f64,
    pub residual_history: Vec<f64>,
    /// `(L[X] - L[X^]) / dt`.
    pub length_rate: f64,
    /// `sum_i kappa_i v_i r_i` on the midpoint curve.
    pub dissipation: f64,
    /// `length_rate - dissipation`.
    pub length_defect: f64,
    pub max_abs_g: f64,
    pub g_nonzero: bool,
}

/// Relaxation parameter rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaRule {
    /// `omega = factor * N / dt`.
    PerStep { factor: f64 },
    Constant(f64),
}

impl Default for OmegaRule {
    fn default() -> Self {
        OmegaRule::PerStep { factor: 10.0 }
    }
}

impl OmegaRule {
    pub fn omega(&self, n: usize, dt: f64) -> f64 {
        match *self {
            OmegaRule::PerStep { factor } => factor * n as f64 / dt,
            OmegaRule::Constant(w) => w,
        }
    }
}

/// Step-size rule `dt = min(tau, rate^-2)` driven by the length dissipation rate.
#[derive(Debug, Clone)]
pub struct StepController {
    pub tau: f64,
    /// Last observed `(L^{n+1} - L^n) / dt^n`.
    pub last_rate: Option<f64>,
    pub history: Vec<f64>,
}

impl StepController {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(FlowError::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        Ok(Self {
            tau,
            last_rate: None,
            history: Vec::new(),
        })
    }

    fn cap(&self, rate: f64) -> f64 {
        if rate == 0.0 || !rate.is_finite() {
            self.tau
        } else {
            self.tau.min(rate.powi(-2))
        }
    }

    /// First step size from the initial curvature: `min(tau, (sum kappa^2 r)^-2)`.
    pub fn initial(&mut self, curve: &PolygonalCurve) -> Result<f64> {
        let e = EdgeFrame::new(curve)?;
        let energy: f64 = e.kappa.iter().zip(&e.r).map(|(k, r)| k * k * r).sum();
        let dt = self.cap(energy);
        self.history.push(dt);
        Ok(dt)
    }

    /// Records an accepted step and returns the next step size.
    pub fn observe(&mut self, length_before: f64, length_after: f64, dt: f64) -> f64 {
        let rate = (length_after - length_before) / dt;
        self.last_rate = Some(rate);
        let next = self.cap(rate);
        self.history.push(next);
        next
    }
}

/// Next step size: from the initial curve when `last` is `None`, otherwise
/// from the dissipation rate of the last accepted step.
pub fn adaptive_dt(controller: &mut StepController, curve: &PolygonalCurve, last: Option<&StepResult>) -> Result<f64> {
    match last {
        None => controller.initial(curve),
        Some(step) => Ok(controller.observe(
            step.curve.length() - step.length_rate * step.dt,
            step.curve.length(),
            step.dt,
        )),
    }
}

/// Runs the implicit scheme from `x0` with the given flow model; `scheme`
/// and `model` in `params` are overridden.
pub fn evolve(x0: &PolygonalCurve, model: FlowModel, params: &SimulationParams) -> Result<TimeSeries> {
    let params = SimulationParams {
        scheme: Scheme::Implicit,
        model,
        ..params.clone()
    };
    simulate(x0, &params).into_result()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::frames;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn square() -> PolygonalCurve {
        PolygonalCurve::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap()
    }

    fn wobbly(n: usize, phase: f64, amp: f64) -> PolygonalCurve {
        PolygonalCurve::new(
            (0..n)
                .map(|k| {
                    let s = 2.0 * PI * k as f64 / n as f64 + 0.05 * (3.0 * k as f64).sin();
                    let rad = 1.0 + amp * (3.0 * s + phase).cos();
                    Point::new(1.3 * rad * s.cos(), rad * s.sin())
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn coincident_square_reduces_to_single_curve_frame() {
        let c = square();
        let f = MidpointFrame::new(&c, &c).unwrap();
        let (e, vf) = frames(&c).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(f.kappa[i], 2.0, epsilon = 1e-14);
            assert_abs_diff_eq!(f.f_bar[i], -2.0 * (0.5 * e.phi[i]).sin(), epsilon = 1e-14);
            assert_eq!(f.g_bar[i], 0.0);
            assert_abs_diff_eq!(f.normal[i], vf.normal[i], epsilon = 1e-14);
            assert_abs_diff_eq!(f.tangent[i], vf.tangent[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn coincident_curves_reproduce_semidiscrete_curvature() {
        let c = wobbly(37, 0.4, 0.2);
        let f = MidpointFrame::new(&c, &c).unwrap();
        let (e, vf) = frames(&c).unwrap();
        for i in 0..c.len() {
            assert_abs_diff_eq!(f.kappa[i], e.kappa[i], epsilon = 1e-12);
            // normalizing t_{i+1} - t_i loses digits at flat vertices
            assert!((f.normal[i] - vf.normal[i]).norm() <= 1e-12, "{i}: {} vs {}", f.normal[i], vf.normal[i]);
        }
    }

    #[test]
    fn scaled_regular_polygon() {
        let old = PolygonalCurve::regular(11, 1.0, Point::zeros(), 0.0).unwrap();
        let new = old.scaled(1.0 + 1e-2);
        let f = MidpointFrame::new(&new, &old).unwrap();
        for i in 0..11 {
            assert_abs_diff_eq!(f.g_bar[i], 0.0);
            assert!(f.f_bar[i] < 0.0);
        }
    }

    #[test]
    fn decomposition_identity() {
        let old = wobbly(29, 0.0, 0.15);
        let new = wobbly(29, 0.3, 0.18);
        let f = MidpointFrame::with_weights(&new, &old, NormalWeights::Decomposition).unwrap();
        let n = f.len();
        for i in 0..n {
            let lhs = f.d_bar[(i + 1) % n] - f.d_bar[i];
            let rhs = f.f_bar[i] * f.normal[i] + f.g_bar[i] * f.tangent[i];
            assert!((lhs - rhs).norm() <= 1e-14, "{}", (lhs - rhs).norm());
            assert_abs_diff_eq!(f.normal[i].norm(), 1.0, epsilon = 1e-15);
            // alpha, beta reconstruct N from the edge normals
            let rebuilt = f.alpha[i] * f.n_bar[i] + f.beta[i] * f.n_bar[(i + 1) % n];
            assert!((rebuilt - f.normal[i]).norm() <= 1e-12);
        }
    }

    #[test]
    fn blended_weights_interpolate() {
        let old = wobbly(29, 0.0, 0.15);
        let new = wobbly(29, 0.3, 0.18);
        let frame = |w| MidpointFrame::with_weights(&new, &old, w).unwrap();
        let (dec, bis) = (frame(NormalWeights::Decomposition), frame(NormalWeights::Bisector));
        let sharp = frame(NormalWeights::Blended { width: 1e-9 });
        let flat = frame(NormalWeights::Blended { width: 1e3 });
        for i in 0..dec.len() {
            assert_abs_diff_eq!(sharp.alpha[i], dec.alpha[i], epsilon = 1e-9 * dec.alpha[i].abs().max(1.0));
            assert_abs_diff_eq!(flat.beta[i], bis.beta[i], epsilon = 1e-9);
        }
        // the curvature changes with the weights, the normals do not
        assert_eq!(sharp.normal, bis.normal);
    }

    #[test]
    fn straight_midpoint_vertex_uses_length_weights() {
        // vertex 1 is straight on both curves, the new edges are stretched unevenly
        let old = PolygonalCurve::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(1.0, 1.0),
        ])
        .unwrap();
        let new = PolygonalCurve::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.5, 0.0),
            Point::new(2.0, 0.0),
            Point::new(1.0, 1.0),
        ])
        .unwrap();
        let f = MidpointFrame::new(&new, &old).unwrap();
        assert_eq!(f.phi_bar[1], 0.0);
        assert_eq!(f.f_bar[1], 0.0);
        assert_abs_diff_eq!(f.alpha[1], 1.25 / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.beta[1], 0.75 / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.alpha[1] + f.beta[1], 1.0, epsilon = 1e-15);
        // both two-curve tangents point along +x with unit length here, so G is zero
        assert_abs_diff_eq!(f.g_bar[1], 0.0, epsilon = 1e-15);
        let v = [0.0, 2.0, 6.0, 0.0];
        let big_v = implicit_normal_velocity(&f, &v);
        assert_abs_diff_eq!(big_v[1], 0.625 * 2.0 + 0.375 * 6.0, epsilon = 1e-14);
        assert!(big_v[1] >= 2.0 && big_v[1] <= 6.0);
    }

    #[test]
    fn straight_midpoint_vertex_with_uneven_edges_has_nonzero_g() {
        // neither curve is straight at vertex 1, but their midpoint is
        let new = PolygonalCurve::new(vec![
            Point::new(0.0, 0.2),
            Point::new(1.2, 0.3),
            Point::new(2.0, 0.0),
            Point::new(1.0, 1.0),
        ])
        .unwrap();
        let old = PolygonalCurve::new(vec![
            Point::new(0.0, -0.2),
            Point::new(0.8, -0.3),
            Point::new(2.0, 0.0),
            Point::new(1.0, 1.0),
        ])
        .unwrap();
        let f = MidpointFrame::new(&new, &old).unwrap();
        assert_eq!(f.phi_bar[1], 0.0);
        let m1 = 0.5 * (1.44f64 + 0.01).sqrt() + 0.5 * (0.64f64 + 0.01).sqrt();
        let m2 = 0.5 * (0.64f64 + 0.09).sqrt() + 0.5 * (1.44f64 + 0.09).sqrt();
        // |d_2| < |d_1|, so G is negative
        assert_abs_diff_eq!(f.g_bar[1], 1.0 / m2 - 1.0 / m1, epsilon = 1e-14);
        assert!(f.g_bar[1] < -1e-3);
        assert!(f.max_abs_g() > G_NONZERO_THRESHOLD);
    }

    #[test]
    fn implicit_velocity_is_a_convex_combination_for_uniform_edges() {
        let c = PolygonalCurve::regular(8, 1.0, Point::zeros(), 0.0).unwrap();
        let d = c.scaled(0.99);
        let f = MidpointFrame::new(&d, &c).unwrap();
        let big_v = implicit_normal_velocity(&f, &[1.5; 8]);
        // alpha + beta = 1 / cos(phi/2) for symmetric vertices
        for (i, x) in big_v.iter().enumerate() {
            assert_abs_diff_eq!(*x, 1.5 / (0.5 * f.phi_bar[i]).cos(), epsilon = 1e-12);
        }
    }

    #[test]
    fn aud_vanishes_on_coincident_regular_polygons() {
        let c = PolygonalCurve::regular(10, 1.0, Point::zeros(), 0.0).unwrap();
        let f = MidpointFrame::new(&c, &c).unwrap();
        let omega = 5000.0;
        let w = discrete_aud(&f, &[0.0; 10], 0.01, omega, TangentialClosure::ZeroAverage).unwrap();
        // only rounding in omega (L/N - r_i) survives
        for x in w {
            assert_abs_diff_eq!(x, 0.0, epsilon = 1e-14 * omega * c.length());
        }
    }

    #[test]
    fn aud_matches_dense_solve() {
        use nalgebra::{DMatrix, DVector};
        let old = wobbly(6, 0.0, 0.1);
        let new = wobbly(6, 0.2, 0.12);
        let f = MidpointFrame::new(&new, &old).unwrap();
        let big_v = [0.3, -0.2, 0.5, 0.1, -0.4, 0.25];
        let (dt, omega) = (0.01, 123.0);
        let w = discrete_aud(&f, &big_v, dt, omega, TangentialClosure::ZeroAverage).unwrap();

        let n = 6;
        let nf = n as f64;
        let mut a = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for i in 1..n {
            let c = f.r_bar[i] / ((f.r_new[i] + f.r_old[i]) / 2.0);
            a[(i - 1, i)] = c * f.t_bar[i].dot(&f.tangent[i]);
            a[(i - 1, i - 1)] = -c * f.t_bar[i].dot(&f.tangent[i - 1]);
            b[i - 1] = -c * f.t_bar[i].dot(&f.normal[i]) * big_v[i]
                + c * f.t_bar[i].dot(&f.normal[i - 1]) * big_v[i - 1]
                + (f.len_new - f.len_old) / (nf * dt)
                + (f.len_new / nf - f.r_new[i]) * omega;
        }
        for i in 0..n {
            a[(n - 1, i)] = (f.r_bar[i] + f.r_bar[(i + 1) % n]) / 2.0;
        }
        let oracle = a.lu().solve(&b).unwrap();
        for i in 0..n {
            assert_abs_diff_eq!(w[i], oracle[i], epsilon = 1e-12 * oracle.amax().max(1.0));
        }
        let closure: f64 = (0..n).map(|i| w[i] * (f.r_bar[i] + f.r_bar[(i + 1) % n]) / 2.0).sum();
        assert!(closure.abs() <= 1e-12 * w.iter().map(|x| x.abs()).sum::<f64>());
    }

    #[test]
    fn weighted_closure_needs_nonzero_g() {
        let c = PolygonalCurve::regular(10, 1.0, Point::zeros(), 0.0).unwrap();
        let f = MidpointFrame::new(&c, &c).unwrap();
        assert!(discrete_aud(&f, &[0.0; 10], 0.01, 1.0, TangentialClosure::ZeroWeightedAverage).is_err());
    }

    #[test]
    fn apmcf_fixed_point_residual() {
        let c = PolygonalCurve::regular(12, 1.0, Point::zeros(), 0.0).unwrap();
        let r = residual(&c, &c, 0.01, &FlowModel::Apmcf, 1000.0).unwrap();
        assert!(newton::max_norm(&r) < 1e-12);
    }

    #[test]
    fn mcf_residual_at_rest_points_inward() {
        let (n, radius) = (12usize, 1.0);
        let c = PolygonalCurve::regular(n, radius, Point::zeros(), 0.0).unwrap();
        let r = residual(&c, &c, 0.01, &FlowModel::Mcf, 1000.0).unwrap();
        let h = PI / n as f64;
        let kappa = h.tan() / (radius * h.sin());
        let speed = kappa / h.cos();
        for i in 0..n {
            let ri = Point::new(r[2 * i], r[2 * i + 1]);
            // normal part -V N with V = -kappa/cos(pi/N), i.e. speed along the outward normal;
            // the tangential part carries the length-rate term of the redistribution
            let outward = c.vertex(i) / radius;
            assert_abs_diff_eq!(ri.dot(&outward), speed, epsilon = 1e-12);
        }
    }

    #[test]
    fn residual_is_translation_invariant() {
        let old = wobbly(20, 0.0, 0.1);
        let new = wobbly(20, 0.1, 0.11);
        let s = Point::new(-4.0, 2.5);
        let a = residual(&new, &old, 0.02, &FlowModel::Mcf, 500.0).unwrap();
        let b = residual(&new.translated(s), &old.translated(s), 0.02, &FlowModel::Mcf, 500.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn apmcf_step_from_regular_polygon_stays_put() {
        let c = PolygonalCurve::regular(20, 1.0, Point::zeros(), 0.0).unwrap();
        let step = newton_step_solve(&c, 0.01, &FlowModel::Apmcf, 20000.0, &NewtonOptions::default()).unwrap();
        assert!(step.iterations <= 1);
        for (a, b) in step.curve.vertices().iter().zip(c.vertices()) {
            assert!((a - b).norm() <= 1e-10);
        }
    }

    #[test]
    fn mcf_step_shortens_and_satisfies_length_identity() {
        let c = crate::experiment::redistribute_uniform(&wobbly(30, 0.0, 0.2), &Default::default()).unwrap();
        let step = newton_step_solve(&c, 0.005, &FlowModel::Mcf, 10.0 * 30.0 / 0.005, &NewtonOptions::default())
            .unwrap();
        assert!(step.curve.length() < c.length());
        assert!(!step.g_nonzero);
        assert!(step.length_defect.abs() <= 1e-6 * step.dissipation.abs() + 1e-10);
        assert!(step.residual_norm <= 1e-8);
    }

    #[test]
    fn controller_formula() {
        let mut ctl = StepController::new(0.01).unwrap();
        assert_abs_diff_eq!(ctl.observe(1.0, 0.99, 1e-4), 1e-4, epsilon = 1e-18);
        assert_eq!(ctl.observe(1.0, 1.0, 1e-4), 0.01);
        assert_eq!(ctl.observe(1.0, 1.0 - 1e-9, 1e-2), 0.01);
    }
}
