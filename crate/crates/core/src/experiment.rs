//! The benchmark initial curve and the uniform-redistribution preprocessing step.

use std::f64::consts::PI;

use log::debug;

use crate::error::{FlowError, Result};
use crate::flows::FlowModel;
use crate::fullydiscrete::{ImplicitScheme, OmegaRule};
use crate::geometry::{Point, PolygonalCurve};
use crate::newton::NewtonOptions;
use crate::semidiscrete::{rk4_step, SemiDiscreteRhs};

/// The point of the benchmark curve at parameter `t` in `[0, 1]`.
pub fn initial_curve_point(t: f64) -> Point {
    let s = 2.0 * PI * t;
    let a1 = 1.8 * s.cos();
    let a2 = 0.2 + (PI * t).sin() * (6.0 * PI * t).sin() * (2.0 * a1).sin();
    let a3 = 0.5 * s.sin() + a1.sin() + a2 * s.sin();
    Point::new(0.5 * a1, 0.54 * a3)
}

/// `N` vertices sampled at `t = 1/N, 2/N, ..., 1`; vertex `k` sits at `t = (k+1)/N`.
pub fn initial_curve(n: usize) -> Result<PolygonalCurve> {
    if n < 3 {
        return Err(FlowError::TooFewVertices(n));
    }
    PolygonalCurve::new(
        (1..=n)
            .map(|i| initial_curve_point(i as f64 / n as f64))
            .collect(),
    )
}

/// Integrator used by [`redistribute_uniform`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RedistributionMethod {
    /// Classical RK4 on the semi-discrete law with zero normal velocity.
    #[default]
    SemiDiscrete,
    /// The implicit midpoint-frame step with zero normal velocity. Only
    /// converges for mildly non-uniform curves.
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedistributionParams {
    pub method: RedistributionMethod,
    /// Fixed step of the tangential-only evolution.
    pub dt: f64,
    pub omega_rule: OmegaRule,
    /// Stop once `max_i |r_i - L/N| <= tol_u * L`.
    pub tol_u: f64,
    pub max_steps: usize,
    pub newton: NewtonOptions,
}

impl Default for RedistributionParams {
    fn default() -> Self {
        Self {
            method: RedistributionMethod::SemiDiscrete,
            // dt * omega = 0.05: small enough that the RK4 error leaves the
            // (exactly conserved) length unchanged to about 1e-7
            dt: 1e-4,
            omega_rule: OmegaRule::Constant(500.0),
            tol_u: 1e-10,
            max_steps: 10_000,
            newton: NewtonOptions::default(),
        }
    }
}

/// Slides the vertices until the edges have equal length, by evolving the
/// curve with zero normal velocity and uniformizing tangential velocity.
///
/// The polygon itself changes slightly, since the vertices move along the
/// evolving polygon rather than the original one.
pub fn redistribute_uniform(curve: &PolygonalCurve, params: &RedistributionParams) -> Result<PolygonalCurve> {
    if !(params.dt > 0.0) || !(params.tol_u > 0.0) {
        return Err(FlowError::InvalidParameter(
            "redistribution needs positive dt and tolerance".into(),
        ));
    }
    let omega = params.omega_rule.omega(curve.len(), params.dt);
    let implicit = ImplicitScheme::new(FlowModel::TangentialOnly);
    let rhs = SemiDiscreteRhs::new(FlowModel::TangentialOnly, omega)?;
    let mut x = curve.clone();
    for step in 0..params.max_steps {
        let u = x.uniformity();
        if u <= params.tol_u * x.length() {
            debug!("redistribution converged after {step} steps");
            return Ok(x);
        }
        x = match params.method {
            RedistributionMethod::SemiDiscrete => rk4_step(&x, params.dt, &rhs)?,
            RedistributionMethod::Implicit => implicit.step(&x, params.dt, omega, &params.newton)?.curve,
        };
    }
    let uniformity = x.uniformity();
    if uniformity <= params.tol_u * x.length() {
        Ok(x)
    } else {
        Err(FlowError::RedistributionStalled {
            steps: params.max_steps,
            uniformity,
        })
    }
}

/// The benchmark curve with `n` vertices after uniform redistribution.
pub fn paper_initial_curve(n: usize) -> Result<PolygonalCurve> {
    redistribute_uniform(&initial_curve(n)?, &RedistributionParams::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn endpoints_of_the_benchmark_curve() {
        let end = initial_curve_point(1.0);
        assert_abs_diff_eq!(end.x, 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(end.y, 0.54 * 1.8f64.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(end.y, 0.525878, epsilon = 5e-7);
        let mid = initial_curve_point(0.5);
        assert_abs_diff_eq!(mid.x, -0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(mid.y, -0.525878, epsilon = 5e-7);
        let start = initial_curve_point(0.0);
        assert_abs_diff_eq!(start, end, epsilon = 1e-15);
    }

    #[test]
    fn sampled_curve_is_counterclockwise_and_simple() {
        let c = initial_curve(50).unwrap();
        assert_eq!(c.len(), 50);
        assert!(c.signed_area() > 0.0);
        assert!(c.is_simple());
        assert_abs_diff_eq!(c.vertex(49).x, 0.9, epsilon = 1e-15);
        assert!(initial_curve(2).is_err());
    }

    #[test]
    fn uniform_polygon_is_left_alone() {
        let c = PolygonalCurve::regular(30, 1.0, Point::zeros(), 0.2).unwrap();
        assert!(c.uniformity() <= 1e-10 * c.length());
        let r = redistribute_uniform(&c, &RedistributionParams::default()).unwrap();
        assert_eq!(&r, &c);
        for (a, b) in r.vertices().iter().zip(c.vertices()) {
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn redistribution_reaches_tolerance_and_keeps_length() {
        let c = initial_curve(30).unwrap();
        let r = redistribute_uniform(&c, &RedistributionParams::default()).unwrap();
        assert!(r.uniformity() <= 1e-10 * r.length());
        // zero normal velocity conserves length up to the integration error
        assert_abs_diff_eq!(r.length(), c.length(), epsilon = 1e-5);
    }

    #[test]
    fn implicit_redistribution_of_a_mildly_nonuniform_curve() {
        let c = PolygonalCurve::new(
            (0..24)
                .map(|k| {
                    let s = 2.0 * PI * k as f64 / 24.0 + 0.02 * (2.0 * PI * k as f64 / 24.0).sin();
                    Point::new(s.cos(), s.sin())
                })
                .collect(),
        )
        .unwrap();
        let params = RedistributionParams {
            method: RedistributionMethod::Implicit,
            dt: 0.01,
            omega_rule: OmegaRule::PerStep { factor: 10.0 },
            ..Default::default()
        };
        let r = redistribute_uniform(&c, &params).unwrap();
        assert!(r.uniformity() <= 1e-10 * r.length());
    }
}
