//! Equation-free uncertainty quantification for a stochastic surface
//! reaction: a Gillespie fine model, Legendre polynomial chaos as the coarse
//! description, coarse projective integration and Newton-Krylov fixed-point
//! and continuation solvers built on top of short fine-scale bursts.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bridge;
pub mod commands;
pub mod config;
pub mod cpi;
pub mod engine;
pub mod error;
pub mod gpc;
pub mod model;
pub mod oracle;
pub mod output;
pub mod rng;
pub mod ssa;
pub mod steady;

pub use bridge::{CoarseState, LiftingPolicy, XiScheme};
pub use engine::InnerEngine;
pub use error::{Error, Result};
pub use gpc::GpcCoeffs;
pub use model::{BetaSpec, KineticParams};
