//! Polygonal evolution of closed planar curves with an implicit scheme that
//! decreases the curve length for every step size.
//!
//! The crate covers three moving-boundary problems — mean curvature flow,
//! area-preserving mean curvature flow and Hele-Shaw flow — together with
//! tangential redistribution of the vertices, an adaptive step-size rule,
//! an explicit RK4 reference and an area-preserving canonical Runge–Kutta
//! integrator.
//!
//! ```
//! use curveflow::{FlowModel, PolygonalCurve, Point, NewtonOptions};
//! use curveflow::fullydiscrete::newton_step_solve;
//!
//! let circle = PolygonalCurve::regular(32, 1.0, Point::zeros(), 0.0).unwrap();
//! let step = newton_step_solve(&circle, 0.01, &FlowModel::Mcf, 32_000.0, &NewtonOptions::default()).unwrap();
//! assert!(step.curve.length() < circle.length());
//! ```

pub mod error;
pub mod experiment;
pub mod flows;
pub mod fullydiscrete;
pub mod geometry;
pub mod linalg;
pub mod newton;
pub mod semidiscrete;
pub mod simulation;
pub mod symplectic;

pub use error::{FlowError, Result};
pub use flows::{FlowModel, MfsSystem, SingularPointRule};
pub use fullydiscrete::{MidpointFrame, NormalWeights, OmegaRule, StepController, StepResult, TangentialClosure};
pub use geometry::{EdgeFrame, Point, PolygonalCurve, VertexFrame};
pub use newton::NewtonOptions;
pub use semidiscrete::{SemiDiscreteRhs, VertexVelocities};
pub use simulation::{simulate, Outcome, Scheme, SimulationParams, Snapshot, StepRecord, TimeSeries};
pub use symplectic::ButcherTableau;
