//! Linear-programming relaxations and derived indices.

pub mod index;
pub mod relax;
pub mod simplex;

pub use index::{lagrangian_indices, priority_order, relative_values};
pub use relax::{
    build_relaxation, policies, policy_from_occupation, relaxed_value, solve_relaxation, stationary_marginal,
    OccupationMeasure, Relaxation,
};
pub use simplex::{solve_lp, LpProblem, LpSolution};
