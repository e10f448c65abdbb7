//! N-armed simulation drivers, random streams and statistics.

pub mod ct;
pub mod dt;
pub mod initial;
pub mod report;
pub mod rng;
pub mod stats;

pub use ct::{ftva_ct_epoch, CtSimState, EpochEvent, EpochOutcome, FtvaCtEngine};
pub use initial::InitialProtocol;
pub use report::{
    littles_law_ledger, Diagnostics, LittleLedger, PeriodStats, RunConfig, RunReport, Trace, TrajectoryReport,
};
pub use stats::Summary;

use crate::error::{Error, Result};
use crate::lp::relax::{solve_relaxation, OccupationMeasure};
use crate::model::{Instance, ModelKind};
use crate::policy::selector::{resolve, ResolvedPolicy};
use crate::scalar::Scalar;

/// Solves the relaxation, resolves the policy and simulates.
pub fn run<T: Scalar>(instance: &Instance<T>, config: &RunConfig) -> Result<RunReport> {
    let measure = solve_relaxation(instance)?;
    run_with(instance, config, &measure)
}

/// As [`run`], with an already solved relaxation.
pub fn run_with<T: Scalar>(
    instance: &Instance<T>,
    config: &RunConfig,
    measure: &OccupationMeasure<T>,
) -> Result<RunReport> {
    let report = instance.validate();
    if !report.is_pass() {
        return Err(Error::Validation(report));
    }
    let resolved = resolve(&config.policy, instance, measure)?;
    match (instance.kind(), resolved) {
        (ModelKind::Dt, resolved) => dt::run_dt(instance, config, measure, resolved),
        (ModelKind::Ct, ResolvedPolicy::Ftva { plan, tiebreak }) => {
            ct::run_ct(instance, config, measure, &plan, tiebreak)
        }
        (ModelKind::Ct, ResolvedPolicy::Priority(_)) => Err(Error::UnsupportedPolicy {
            policy: config.policy.to_string(),
            kind: "ct",
        }),
    }
}
