//! Random steady states as fixed points of the coarse time-stepper.

pub mod continuation;
pub mod fixed_point;
pub mod gmres;
pub mod newton;

pub use continuation::{continuation, Branch, BranchPoint, ContinuationOptions, Stability};
pub use fixed_point::{jvp, phi_t, residual, FixedPointProblem};
pub use gmres::{gmres, GmresOptions, GmresReport};
pub use newton::{newton_krylov, NewtonOptions, NewtonReport, NewtonStatus};
