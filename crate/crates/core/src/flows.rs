//! Normal velocities on edges for the supported flows.
//!
//! The Hele-Shaw velocity needs the harmonic pressure with boundary values
//! `sigma * kappa_i`; it is approximated by the method of fundamental
//! solutions (MFS) with one exterior singular point per edge and collocation
//! at the edge midpoints.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{FlowError, Result};
use crate::geometry::{EdgeFrame, Point, PolygonalCurve};
use crate::linalg::DenseLu;

/// Collocation matrices with a larger 1-norm condition estimate are rejected.
pub const MFS_CONDITION_LIMIT: f64 = 1e14;

/// Where the MFS singular points go.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SingularPointRule {
    /// `y_i = X_{i,mid} + rho * r_i * n_i`: pushed out from each edge midpoint
    /// along the outward normal by `rho` times the edge length.
    OutwardOffset { rho: f64 },
}

impl Default for SingularPointRule {
    fn default() -> Self {
        SingularPointRule::OutwardOffset { rho: 1.0 }
    }
}

impl SingularPointRule {
    pub fn place(&self, curve: &PolygonalCurve, r: &[f64], n: &[Point]) -> Vec<Point> {
        match *self {
            SingularPointRule::OutwardOffset { rho } => (0..curve.len())
                .map(|i| curve.edge_midpoint(i) + rho * r[i] * n[i])
                .collect(),
        }
    }
}

/// Strategy producing the edge normal velocities `v_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowModel {
    /// Mean curvature flow, `v = -kappa`.
    Mcf,
    /// Area-preserving mean curvature flow, `v = -kappa + <kappa>`.
    Apmcf,
    /// Hele-Shaw flow, `v = -grad p . n` with `p = sigma kappa` on the boundary.
    HeleShaw {
        sigma: f64,
        placement: SingularPointRule,
    },
    /// `v = 0`: vertices only slide tangentially. Used to redistribute vertices.
    TangentialOnly,
}

impl FlowModel {
    pub fn hele_shaw(sigma: f64) -> Self {
        FlowModel::HeleShaw {
            sigma,
            placement: SingularPointRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let FlowModel::HeleShaw { sigma, placement } = *self {
            if !(sigma > 0.0) {
                return Err(FlowError::InvalidParameter(format!(
                    "surface tension must be positive, got {sigma}"
                )));
            }
            let SingularPointRule::OutwardOffset { rho } = placement;
            if !(rho > 0.0) {
                return Err(FlowError::InvalidParameter(format!(
                    "singular point offset must be positive, got {rho}"
                )));
            }
        }
        Ok(())
    }

    /// Edge velocities on `curve` for the given curvatures.
    ///
    /// `r` and `n` are the edge lengths and outward normals of `curve`;
    /// `kappa` may come from a different discretization (the implicit
    /// scheme passes its midpoint curvature).
    pub fn edge_velocities(
        &self,
        curve: &PolygonalCurve,
        r: &[f64],
        n: &[Point],
        kappa: &[f64],
    ) -> Result<Vec<f64>> {
        match *self {
            FlowModel::Mcf => Ok(kappa.iter().map(|k| -k).collect()),
            FlowModel::Apmcf => {
                let len: f64 = r.iter().sum();
                let mean = kappa.iter().zip(r).map(|(k, ri)| k * ri).sum::<f64>() / len;
                Ok(kappa.iter().map(|k| mean - k).collect())
            }
            FlowModel::HeleShaw { sigma, placement } => {
                let data: Vec<f64> = kappa.iter().map(|k| sigma * k).collect();
                let mfs = MfsSystem::solve_with_frame(curve, r, n, &data, placement)?;
                (0..curve.len())
                    .map(|i| Ok(-mfs.gradient(&curve.edge_midpoint(i))?.dot(&n[i])))
                    .collect()
            }
            FlowModel::TangentialOnly => Ok(vec![0.0; curve.len()]),
        }
    }
}

/// Edge normal velocities for the semi-discrete law on a single curve.
pub fn normal_velocity(model: &FlowModel, curve: &PolygonalCurve, edges: &EdgeFrame) -> Result<Vec<f64>> {
    model.edge_velocities(curve, &edges.r, &edges.n, &edges.kappa)
}

/// Fundamental solution of the Laplacian, `log|x| / (2 pi)`.
#[inline]
pub fn fundamental_solution(x: &Point) -> f64 {
    x.norm().ln() / (2.0 * PI)
}

/// A solved MFS expansion `P(x) = Q_0 + sum_j Q_j E(x - y_j)`, normalized by `sum_j Q_j = 0`.
#[derive(Debug, Clone)]
pub struct MfsSystem {
    pub singular_points: Vec<Point>,
    pub collocation_points: Vec<Point>,
    pub q0: f64,
    pub q: Vec<f64>,
    /// 1-norm condition number of the collocation matrix.
    pub condition: f64,
}

impl MfsSystem {
    /// Collocates `P(X_{i,mid}) = data_i` on the edge midpoints of `curve`.
    pub fn solve(curve: &PolygonalCurve, data: &[f64], placement: SingularPointRule) -> Result<Self> {
        let edges = EdgeFrame::new(curve)?;
        Self::solve_with_frame(curve, &edges.r, &edges.n, data, placement)
    }

    fn solve_with_frame(
        curve: &PolygonalCurve,
        r: &[f64],
        n: &[Point],
        data: &[f64],
        placement: SingularPointRule,
    ) -> Result<Self> {
        let m = curve.len();
        assert_eq!(data.len(), m, "one boundary value per edge");
        let singular_points = placement.place(curve, r, n);
        if let Some(j) = singular_points.iter().position(|y| curve.contains(y)) {
            return Err(FlowError::InvalidPlacement(j));
        }
        let collocation_points: Vec<Point> = (0..m).map(|i| curve.edge_midpoint(i)).collect();

        // unknowns ordered [Q_0, Q_1, ..., Q_N]
        let mut a = DMatrix::zeros(m + 1, m + 1);
        for (i, x) in collocation_points.iter().enumerate() {
            a[(i, 0)] = 1.0;
            for (j, y) in singular_points.iter().enumerate() {
                a[(i, j + 1)] = fundamental_solution(&(x - y));
            }
        }
        for j in 1..=m {
            a[(m, j)] = 1.0;
        }
        let mut rhs = data.to_vec();
        rhs.push(0.0);

        let lu = DenseLu::new(a).map_err(|_| FlowError::MfsIllConditioned(f64::INFINITY))?;
        let condition = lu.condition_1norm();
        if !(condition <= MFS_CONDITION_LIMIT) {
            return Err(FlowError::MfsIllConditioned(condition));
        }
        let coef = lu.solve_slice(&rhs)?;
        Ok(Self {
            singular_points,
            collocation_points,
            q0: coef[0],
            q: coef[1..].to_vec(),
            condition,
        })
    }

    pub fn potential(&self, x: &Point) -> Result<f64> {
        let mut p = self.q0;
        for (j, (qj, y)) in self.q.iter().zip(&self.singular_points).enumerate() {
            let d = x - y;
            if d.norm_squared() == 0.0 {
                return Err(FlowError::SingularEvaluation(j));
            }
            p += qj * fundamental_solution(&d);
        }
        Ok(p)
    }

    /// `grad P(x) = sum_j Q_j (x - y_j) / (2 pi |x - y_j|^2)`.
    pub fn gradient(&self, x: &Point) -> Result<Point> {
        let mut g = Point::zeros();
        for (j, (qj, y)) in self.q.iter().zip(&self.singular_points).enumerate() {
            let d = x - y;
            let d2 = d.norm_squared();
            if d2 == 0.0 {
                return Err(FlowError::SingularEvaluation(j));
            }
            g += d * (qj / (2.0 * PI * d2));
        }
        Ok(g)
    }

    /// Largest collocation defect `max_i |P(X_{i,mid}) - data_i|`.
    pub fn max_residual(&self, data: &[f64]) -> Result<f64> {
        let mut worst = 0.0f64;
        for (x, d) in self.collocation_points.iter().zip(data) {
            worst = worst.max((self.potential(x)? - d).abs());
        }
        Ok(worst)
    }
}

pub fn solve_mfs(curve: &PolygonalCurve, data: &[f64], placement: SingularPointRule) -> Result<MfsSystem> {
    MfsSystem::solve(curve, data, placement)
}

pub fn mfs_gradient(system: &MfsSystem, point: &Point) -> Result<Point> {
    system.gradient(point)
}
