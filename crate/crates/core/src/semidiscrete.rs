//! The semi-discrete polygonal law `dX_i/dt = V_i N_i + W_i T_i`, with
//! tangential velocities from the asymptotic uniform distribution (AUD)
//! method, and a classical RK4 integrator used as the explicit reference.

use crate::error::{FlowError, Result};
use crate::flows::{normal_velocity, FlowModel};
use crate::geometry::{frames, next, EdgeFrame, Point, PolygonalCurve, VertexFrame};

/// Per-vertex velocity decomposition.
#[derive(Debug, Clone)]
pub struct VertexVelocities {
    /// Edge normal velocities `v_i`.
    pub edge: Vec<f64>,
    /// Vertex normal speeds `V_i`.
    pub normal: Vec<f64>,
    /// Vertex tangential speeds `W_i`.
    pub tangential: Vec<f64>,
    /// `V_i N_i + W_i T_i`.
    pub velocity: Vec<Point>,
}

/// `V_i = (v_i + v_{i+1}) / (2 cos(phi_i / 2))`.
pub fn vertex_normal_velocity(v: &[f64], vertices: &VertexFrame) -> Result<Vec<f64>> {
    if let Some(i) = vertices.phi.iter().position(|p| (0.5 * p).cos() <= 0.0) {
        return Err(FlowError::Cusp(i));
    }
    Ok(vertices.average(v))
}

/// Solves the bidiagonal cyclic-free system
///
/// ```text
/// diag[j] W_j - sub[j] W_{j-1} = psi[j],   j = 1..n-1
/// sum_j weights[j] W_j = 0
/// ```
///
/// by forward elimination in terms of `W_0`, which the closure then fixes.
/// Entries `diag[0]`, `sub[0]` and `psi[0]` are ignored.
pub fn solve_telescoped(diag: &[f64], sub: &[f64], psi: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    q[0] = 1.0;
    for j in 1..n {
        if !(diag[j].abs() > 1e-12 * scale) {
            return Err(FlowError::SingularTelescoping(j));
        }
        p[j] = (psi[j] + sub[j] * p[j - 1]) / diag[j];
        q[j] = sub[j] * q[j - 1] / diag[j];
    }
    let wp: f64 = weights.iter().zip(&p).map(|(w, x)| w * x).sum();
    let wq: f64 = weights.iter().zip(&q).map(|(w, x)| w * x).sum();
    let wq_scale: f64 = weights.iter().zip(&q).map(|(w, x)| (w * x).abs()).sum();
    if !(wq.abs() > 1e-12 * wq_scale) {
        return Err(FlowError::SingularTelescoping(0));
    }
    let w0 = -wp / wq;
    Ok(p.iter().zip(&q).map(|(pj, qj)| pj + qj * w0).collect())
}

/// AUD tangential velocities closed by `sum_i W_i (r_i + r_{i+1}) / 2 = 0`.
///
/// The length rate entering the relaxation is `sum_i kappa_i v_i r_i`.
pub fn aud_tangential_velocity(
    edges: &EdgeFrame,
    vertices: &VertexFrame,
    big_v: &[f64],
    v: &[f64],
    omega: f64,
) -> Result<Vec<f64>> {
    let n = edges.len();
    let len = edges.total_length();
    let length_rate: f64 = (0..n).map(|i| edges.kappa[i] * v[i] * edges.r[i]).sum();
    let half_sin: Vec<f64> = vertices.phi.iter().map(|p| (0.5 * p).sin()).collect();
    let half_cos: Vec<f64> = vertices.phi.iter().map(|p| (0.5 * p).cos()).collect();
    if let Some(i) = half_cos.iter().position(|c| *c <= 0.0) {
        return Err(FlowError::Cusp(i));
    }
    let mut psi = vec![0.0; n];
    let mut sub = vec![0.0; n];
    for j in 1..n {
        psi[j] = -big_v[j] * half_sin[j] - big_v[j - 1] * half_sin[j - 1]
            + length_rate / n as f64
            + (len / n as f64 - edges.r[j]) * omega;
        sub[j] = half_cos[j - 1];
    }
    let weights: Vec<f64> = (0..n).map(|i| 0.5 * (edges.r[i] + edges.r[next(i, n)])).collect();
    solve_telescoped(&half_cos, &sub, &psi, &weights)
}

/// The error term of the semi-discrete area rate,
/// `sum_i (W_i sin(phi_i/2) - (v_{i+1} - v_i)/2) (r_{i+1} - r_i)/2`.
pub fn area_rate_error(edges: &EdgeFrame, w: &[f64], v: &[f64]) -> f64 {
    let n = edges.len();
    (0..n)
        .map(|i| {
            let j = next(i, n);
            (w[i] * (0.5 * edges.phi[i]).sin() - 0.5 * (v[j] - v[i])) * 0.5 * (edges.r[j] - edges.r[i])
        })
        .sum()
}

/// Right-hand side `F(X)` of the semi-discrete law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiDiscreteRhs {
    pub model: FlowModel,
    /// Relaxation parameter of the AUD method, in 1/time.
    pub omega: f64,
}

impl SemiDiscreteRhs {
    pub fn new(model: FlowModel, omega: f64) -> Result<Self> {
        model.validate()?;
        if !(omega >= 0.0) {
            return Err(FlowError::InvalidParameter(format!("omega must be >= 0, got {omega}")));
        }
        Ok(Self { model, omega })
    }

    pub fn velocities(&self, curve: &PolygonalCurve) -> Result<VertexVelocities> {
        let (edges, vertices) = frames(curve)?;
        self.velocities_with_frames(curve, &edges, &vertices)
    }

    pub fn velocities_with_frames(
        &self,
        curve: &PolygonalCurve,
        edges: &EdgeFrame,
        vertices: &VertexFrame,
    ) -> Result<VertexVelocities> {
        let v = normal_velocity(&self.model, curve, edges)?;
        let big_v = vertex_normal_velocity(&v, vertices)?;
        let w = aud_tangential_velocity(edges, vertices, &big_v, &v, self.omega)?;
        let velocity = (0..curve.len())
            .map(|i| big_v[i] * vertices.normal[i] + w[i] * vertices.tangent[i])
            .collect();
        Ok(VertexVelocities {
            edge: v,
            normal: big_v,
            tangential: w,
            velocity,
        })
    }

    pub fn eval(&self, curve: &PolygonalCurve) -> Result<Vec<Point>> {
        Ok(self.velocities(curve)?.velocity)
    }

    /// `F` on interleaved coordinates.
    pub fn eval_flat(&self, coords: &[f64]) -> Result<Vec<f64>> {
        let curve = PolygonalCurve::from_flat(coords)?;
        Ok(self.eval(&curve)?.iter().flat_map(|p| [p.x, p.y]).collect())
    }
}

/// Semi-discrete right-hand side at `curve`.
pub fn rhs(curve: &PolygonalCurve, rhs: &SemiDiscreteRhs) -> Result<Vec<Point>> {
    rhs.eval(curve)
}

fn blow_up(stage: &str, err: FlowError) -> FlowError {
    match err {
        FlowError::ExplicitBlowUp(_) => err,
        other => FlowError::ExplicitBlowUp(format!("{stage}: {other}")),
    }
}

/// One classical fourth-order Runge–Kutta step of the semi-discrete law.
///
/// Any failure inside a stage (non-finite values, lost orientation,
/// degenerate geometry) is reported as [`FlowError::ExplicitBlowUp`].
pub fn rk4_step(curve: &PolygonalCurve, dt: f64, rhs: &SemiDiscreteRhs) -> Result<PolygonalCurve> {
    if dt == 0.0 {
        return Ok(curve.clone());
    }
    let x1 = rk4_update(curve, dt, rhs)?;
    PolygonalCurve::from_flat(&x1).map_err(|e| blow_up("update", e))
}

/// The raw RK4 update as interleaved coordinates, without validating the
/// resulting polygon. Useful for inspecting a blown-up step.
pub fn rk4_update(curve: &PolygonalCurve, dt: f64, rhs: &SemiDiscreteRhs) -> Result<Vec<f64>> {
    if !(dt >= 0.0) {
        return Err(FlowError::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let x0 = curve.to_flat();
    let stage = |x: &[f64], name: &str| rhs.eval_flat(x).map_err(|e| blow_up(name, e));
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { x0.iter().zip(k).map(|(x, kk)| x + a * kk).collect() };

    let k1 = stage(&x0, "stage 1")?;
    let k2 = stage(&axpy(0.5 * dt, &k1), "stage 2")?;
    let k3 = stage(&axpy(0.5 * dt, &k2), "stage 3")?;
    let k4 = stage(&axpy(dt, &k3), "stage 4")?;
    Ok((0..x0.len())
        .map(|i| x0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Blow-up heuristics for explicit runs: length growth above 10% or a
/// coordinate leaving the box `|x| <= 5`.
pub fn detect_blow_up(before: &PolygonalCurve, after: &PolygonalCurve) -> Option<String> {
    let l0 = before.length();
    let l1 = after.length();
    if !l1.is_finite() {
        return Some("non-finite length".into());
    }
    if l1 > 1.1 * l0 {
        return Some(format!("length grew from {l0} to {l1}"));
    }
    if let Some(i) = after
        .vertices()
        .iter()
        .position(|p| p.x.abs() > 5.0 || p.y.abs() > 5.0)
    {
        return Some(format!("vertex {i} left the box |x| <= 5"));
    }
    None
}

/// `sum_i v_i r_i`, the leading term of the area rate.
pub fn area_rate(edges: &EdgeFrame, v: &[f64]) -> f64 {
    v.iter().zip(&edges.r).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EdgeFrame;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn ellipse(n: usize, a: f64, b: f64) -> PolygonalCurve {
        PolygonalCurve::new(
            (0..n)
                .map(|k| {
                    let s = 2.0 * PI * k as f64 / n as f64;
                    Point::new(a * s.cos(), b * s.sin())
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn vertex_speed_on_regular_polygon() {
        let n = 12;
        let c = PolygonalCurve::regular(n, 1.0, Point::zeros(), 0.0).unwrap();
        let (_, vf) = frames(&c).unwrap();
        let big_v = vertex_normal_velocity(&vec![0.7; n], &vf).unwrap();
        for x in big_v {
            assert_abs_diff_eq!(x, 0.7 / (PI / n as f64).cos(), epsilon = 1e-14);
        }
        let alt: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        for x in vertex_normal_velocity(&alt, &vf).unwrap() {
            assert_abs_diff_eq!(x, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn vertex_speed_at_collinear_vertex() {
        let c = PolygonalCurve::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(1.0, 1.0),
        ])
        .unwrap();
        let (_, vf) = frames(&c).unwrap();
        let big_v = vertex_normal_velocity(&[0.0, 3.0, 5.0, 0.0], &vf).unwrap();
        assert_abs_diff_eq!(big_v[1], 4.0, epsilon = 1e-15);
    }

    #[test]
    fn aud_is_zero_on_regular_polygon() {
        let c = PolygonalCurve::regular(9, 1.3, Point::new(0.5, 0.5), 0.2).unwrap();
        let (e, vf) = frames(&c).unwrap();
        let v = vec![-0.4; 9];
        let big_v = vertex_normal_velocity(&v, &vf).unwrap();
        for w in aud_tangential_velocity(&e, &vf, &big_v, &v, 30.0).unwrap() {
            assert_abs_diff_eq!(w, 0.0, epsilon = 1e-12);
        }
    }

    /// Dense assembly of the N-1 compatibility equations plus the closure row.
    fn dense_aud(e: &EdgeFrame, big_v: &[f64], v: &[f64], omega: f64) -> Vec<f64> {
        let n = e.len();
        let len = e.total_length();
        let rate: f64 = (0..n).map(|i| e.kappa[i] * v[i] * e.r[i]).sum();
        let mut a = DMatrix::zeros(n, n);
        let mut b = vec![0.0; n];
        for i in 1..n {
            a[(i - 1, i)] = (e.phi[i] / 2.0).cos();
            a[(i - 1, i - 1)] = -(e.phi[i - 1] / 2.0).cos();
            b[i - 1] = -big_v[i] * (e.phi[i] / 2.0).sin() - big_v[i - 1] * (e.phi[i - 1] / 2.0).sin()
                + rate / n as f64
                + (len / n as f64 - e.r[i]) * omega;
        }
        for i in 0..n {
            a[(n - 1, i)] = 0.5 * (e.r[i] + e.r[(i + 1) % n]);
        }
        a.lu().solve(&nalgebra::DVector::from_vec(b)).unwrap().as_slice().to_vec()
    }

    #[test]
    fn aud_matches_dense_solve_on_convex_octagon() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut angles: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let radius: Vec<f64> = (0..8).map(|_| rng.random_range(0.8..1.2)).collect();
            // points on a circle-ish star in angular order form a convex-enough polygon
            let c = match PolygonalCurve::new(
                angles
                    .iter()
                    .zip(&radius)
                    .map(|(a, r)| Point::new(r * a.cos(), r * a.sin()))
                    .collect(),
            ) {
                Ok(c) => c,
                Err(_) => continue,
            };
            let (e, vf) = frames(&c).unwrap();
            let v: Vec<f64> = e.kappa.iter().map(|k| -k).collect();
            let big_v = vertex_normal_velocity(&v, &vf).unwrap();
            let w = aud_tangential_velocity(&e, &vf, &big_v, &v, 0.0).unwrap();
            let oracle = dense_aud(&e, &big_v, &v, 0.0);
            let scale = oracle.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            for (a, b) in w.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn aud_closure_holds() {
        let c = ellipse(25, 1.0, 0.4);
        let (e, vf) = frames(&c).unwrap();
        let v: Vec<f64> = e.kappa.iter().map(|k| -k).collect();
        let big_v = vertex_normal_velocity(&v, &vf).unwrap();
        let w = aud_tangential_velocity(&e, &vf, &big_v, &v, 100.0).unwrap();
        let n = e.len();
        let s: f64 = (0..n).map(|i| w[i] * 0.5 * (e.r[i] + e.r[(i + 1) % n])).sum();
        let scale: f64 = (0..n).map(|i| (w[i] * 0.5 * (e.r[i] + e.r[(i + 1) % n])).abs()).sum();
        assert!(s.abs() <= 1e-12 * scale);
    }

    #[test]
    fn apmcf_regular_polygon_is_a_fixed_point() {
        let c = PolygonalCurve::regular(20, 1.0, Point::zeros(), 0.0).unwrap();
        let f = rhs(&c, &SemiDiscreteRhs::new(FlowModel::Apmcf, 50.0).unwrap()).unwrap();
        for p in f {
            assert!(p.norm() < 1e-12);
        }
    }

    #[test]
    fn mcf_regular_polygon_moves_inward() {
        let (n, radius) = (16usize, 0.7);
        let c = PolygonalCurve::regular(n, radius, Point::new(0.3, 0.1), 0.0).unwrap();
        let f = rhs(&c, &SemiDiscreteRhs::new(FlowModel::Mcf, 10.0).unwrap()).unwrap();
        let h = PI / n as f64;
        let kappa = h.tan() / (radius * h.sin());
        let (_, vf) = frames(&c).unwrap();
        for (i, p) in f.iter().enumerate() {
            let expected = -kappa / h.cos() * vf.normal[i];
            assert_abs_diff_eq!(*p, expected, epsilon = 1e-12);
            // inward: points towards the center
            assert!(p.dot(&(Point::new(0.3, 0.1) - c.vertex(i))) > 0.0);
        }
    }

    #[test]
    fn rhs_is_translation_invariant() {
        let c = ellipse(21, 1.0, 0.5);
        let r = SemiDiscreteRhs::new(FlowModel::Mcf, 5.0).unwrap();
        let a = rhs(&c, &r).unwrap();
        let b = rhs(&c.translated(Point::new(3.0, -2.0)), &r).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_abs_diff_eq!(*p, *q, epsilon = 1e-12);
        }
    }

    #[test]
    fn rk4_zero_step_is_identity() {
        let c = ellipse(10, 1.0, 0.5);
        let r = SemiDiscreteRhs::new(FlowModel::Mcf, 5.0).unwrap();
        assert_eq!(rk4_step(&c, 0.0, &r).unwrap(), c);
    }

    #[test]
    fn mcf_area_rate_identities() {
        // uniform curve: err_A vanishes and dA/dt = -2 sum tan(phi/2)
        let c = PolygonalCurve::regular(40, 1.0, Point::zeros(), 0.0).unwrap();
        let r = SemiDiscreteRhs::new(FlowModel::Mcf, 10.0).unwrap();
        let vel = r.velocities(&c).unwrap();
        let (e, _) = frames(&c).unwrap();
        let rate = area_rate(&e, &vel.edge);
        let tan_sum: f64 = e.phi.iter().map(|p| (0.5 * p).tan()).sum();
        assert_abs_diff_eq!(rate, -2.0 * tan_sum, epsilon = 1e-12);
        assert_abs_diff_eq!(area_rate_error(&e, &vel.tangential, &vel.edge), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn mcf_area_rate_converges_to_minus_two_pi() {
        let err = |n: usize| {
            let c = PolygonalCurve::regular(n, 1.0, Point::zeros(), 0.0).unwrap();
            let (e, _) = frames(&c).unwrap();
            let v: Vec<f64> = e.kappa.iter().map(|k| -k).collect();
            (area_rate(&e, &v) + 2.0 * PI).abs()
        };
        let ratio = err(50) / err(100);
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn semi_discrete_area_rate_matches_finite_difference() {
        // Theorem-3 area relation including its error term, on a non-uniform curve
        let c = ellipse(30, 1.2, 0.6);
        let r = SemiDiscreteRhs::new(FlowModel::Mcf, 3.0).unwrap();
        let vel = r.velocities(&c).unwrap();
        let (e, _) = frames(&c).unwrap();
        let predicted = area_rate(&e, &vel.edge) + area_rate_error(&e, &vel.tangential, &vel.edge);
        let h = 1e-6;
        let shift = |s: f64| {
            PolygonalCurve::new(
                c.vertices()
                    .iter()
                    .zip(&vel.velocity)
                    .map(|(p, u)| p + s * u)
                    .collect(),
            )
            .unwrap()
            .signed_area()
        };
        let fd = (shift(h) - shift(-h)) / (2.0 * h);
        assert_abs_diff_eq!(fd, predicted, epsilon = 1e-7);
        // and the length relation
        let lshift = |s: f64| {
            PolygonalCurve::new(
                c.vertices()
                    .iter()
                    .zip(&vel.velocity)
                    .map(|(p, u)| p + s * u)
                    .collect(),
            )
            .unwrap()
            .length()
        };
        let fdl = (lshift(h) - lshift(-h)) / (2.0 * h);
        let rate: f64 = (0..c.len()).map(|i| e.kappa[i] * vel.edge[i] * e.r[i]).sum();
        assert_abs_diff_eq!(fdl, rate, epsilon = 1e-7);
    }

    #[test]
    fn uniformity_preserved_by_rk4() {
        let c = PolygonalCurve::regular(24, 1.0, Point::zeros(), 0.0).unwrap();
        // stretch into an ellipse keeping equal chord lengths is hard; use a
        // uniform (regular) curve under MCF with omega and one RK4 step
        let r = SemiDiscreteRhs::new(FlowModel::Mcf, 20.0).unwrap();
        let c1 = rk4_step(&c, 1e-4, &r).unwrap();
        assert!(c1.uniformity() <= 1e-10 * c1.length());
    }

    #[test]
    fn telescoped_rejects_zero_pivot() {
        let err = solve_telescoped(&[1.0, 0.0, 1.0], &[1.0, 1.0, 1.0], &[0.0; 3], &[1.0; 3]).unwrap_err();
        assert_eq!(err, FlowError::SingularTelescoping(1));
    }
}
