//! Discrete-time policy engines.

pub mod ftva;
pub mod priority;
pub mod selector;

pub use ftva::{ftva_init, ftva_step, type_assignment, Decision, FtvaEngine, FtvaPlan, FtvaState, TieBreak};
pub use priority::{priority_step, PriorityPolicy};
pub use selector::{resolve, PolicySelector, ResolvedPolicy};
