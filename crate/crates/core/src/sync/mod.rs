//! Synchronization analysis of the leader-and-follower system.

pub mod chain;
pub mod conditions;
pub mod ct;
pub mod graph;

pub use chain::{
    check_sa_reachability, exact_sync_times, LeaderFollowerChain, Reachability, SaMethod, SyncReport, SyncStart,
    TauEntry,
};
pub use conditions::{check_sufficient_conditions, check_unichain, Proposition, SufficientConditions, Unichain};
pub use ct::{ct_sync_time_estimate, CtSyncEstimate, PairEstimate};
