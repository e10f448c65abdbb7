//! Restless-bandit toolkit: occupation-measure relaxations, the
//! follow-the-virtual-advice policies in discrete and continuous time,
//! synchronization analysis and a benchmark harness.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod bound;
pub mod error;
pub mod hetero;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod policy;
pub mod scalar;
pub mod sim;
pub mod sync;

pub use error::{Error, Result};
pub use model::{
    builtin, ArmModel, ArmPolicy, ArmType, CtModel, DtModel, Instance, ModelKind, ValidationReport, Violation, ACTIONS,
    BUILTIN_NAMES,
};
pub use scalar::Scalar;

pub type DtMdp = DtModel<f64>;
pub type CtMdp = CtModel<f64>;
pub type RbInstance = Instance<f64>;
pub type SingleArmPolicy = ArmPolicy<f64>;
