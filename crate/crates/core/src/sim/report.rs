//! Run configuration and reports shared by the discrete and
//! continuous-time drivers.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelKind;
use crate::policy::selector::PolicySelector;
use crate::sim::initial::InitialProtocol;
use crate::sim::stats::Summary;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub n_arms: usize,
    /// Steps in discrete time, time units in continuous time.
    pub horizon: f64,
    /// Discarded prefix; `None` means a quarter of the horizon.
    pub burn_in: Option<f64>,
    pub trajectories: usize,
    pub seed: u64,
    pub policy: PolicySelector,
    pub initial: InitialProtocol,
    /// Disagreement bookkeeping (FTVA only).
    pub diagnostics: bool,
    /// Per-step occupancy series and flows.
    pub trace: bool,
}

impl RunConfig {
    pub fn new(n_arms: usize, horizon: f64) -> Self {
        RunConfig {
            n_arms,
            horizon,
            burn_in: None,
            trajectories: 20,
            seed: 0,
            policy: PolicySelector::Ftva(Default::default()),
            initial: InitialProtocol::default(),
            diagnostics: false,
            trace: false,
        }
    }

    pub fn with_policy(mut self, policy: PolicySelector) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_initial(mut self, initial: InitialProtocol) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trajectories(mut self, r: usize) -> Self {
        self.trajectories = r;
        self
    }

    pub fn with_burn_in(mut self, burn_in: f64) -> Self {
        self.burn_in = Some(burn_in);
        self
    }

    pub fn with_diagnostics(mut self, on: bool) -> Self {
        self.diagnostics = on;
        self
    }

    pub fn with_trace(mut self, on: bool) -> Self {
        self.trace = on;
        self
    }

    /// Burn-in actually used; whole steps in discrete time.
    pub fn effective_burn_in(&self, kind: ModelKind) -> f64 {
        let b = self.burn_in.unwrap_or(self.horizon / 4.0);
        match kind {
            ModelKind::Dt => b.floor(),
            ModelKind::Ct => b,
        }
    }

    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_arms == 0 {
            return fail("N must be positive".into());
        }
        if self.trajectories == 0 {
            return fail("at least one trajectory is required".into());
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return fail(format!("horizon {} must be positive", self.horizon));
        }
        if kind == ModelKind::Dt && self.horizon.fract() != 0.0 {
            return fail(format!(
                "discrete horizon {} must be a whole number of steps",
                self.horizon
            ));
        }
        let b = self.effective_burn_in(kind);
        if !(b >= 0.0 && b < self.horizon) {
            return fail(format!("burn-in {b} must lie in [0, {})", self.horizon));
        }
        Ok(())
    }
}

/// Completed disagreement periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodStats {
    pub completed: u64,
    pub mean: f64,
    pub std_error: f64,
}

/// Both sides of the bad-arm balance: mean bad arms against event rate
/// times mean period length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LittleLedger {
    pub lhs: f64,
    pub rhs: f64,
    pub relative_gap: f64,
}

/// Time-averaged quantities of one FTVA trajectory over the measured window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub bad_arms_mean: f64,
    pub mismatches_mean: f64,
    /// Disagreement events per unit time, summed over arms.
    pub event_rate: f64,
    pub events: u64,
    pub periods: Option<PeriodStats>,
    /// Fraction of arm-time spent in each virtual `(state, action)`, per type.
    pub virtual_law: Vec<Vec<[f64; 2]>>,
    /// Arm-steps (or arm-time) behind `virtual_law`.
    pub arm_samples: f64,
}

/// Little's-law bookkeeping from a trajectory's diagnostics. Without
/// events the right side is zero.
pub fn littles_law_ledger(d: &Diagnostics) -> LittleLedger {
    let lhs = d.bad_arms_mean;
    let rhs = match d.periods {
        Some(p) if d.events > 0 && p.completed > 0 => d.event_rate * p.mean,
        _ => 0.0,
    };
    let scale = lhs.abs().max(rhs.abs());
    let relative_gap = if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale };
    LittleLedger { lhs, rhs, relative_gap }
}

/// Per-step series; rows are indexed by step (unit-time grid in
/// continuous time).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub fractions: Vec<Vec<f64>>,
    /// Empty for policies without a virtual process.
    pub bad_arms: Vec<f64>,
    pub mismatches: Vec<f64>,
    /// Mean over the measured window of (arrivals - departures)/N per
    /// state, split by the action of the moving arm.
    pub net_flow: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryReport {
    pub index: usize,
    pub mean_reward: f64,
    /// Uniformization epochs (continuous time only).
    pub epochs: Option<u64>,
    pub diagnostics: Option<Diagnostics>,
    pub trace: Option<Trace>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub policy: String,
    pub kind: ModelKind,
    pub n_arms: usize,
    pub budget: usize,
    pub horizon: f64,
    pub burn_in: f64,
    pub relaxed_value: f64,
    pub reward: Summary,
    pub bad_arms: Option<Summary>,
    pub mismatches: Option<Summary>,
    pub period_length: Option<Summary>,
    pub epochs: Option<Summary>,
    pub trajectories: Vec<TrajectoryReport>,
}

impl RunReport {
    pub(crate) fn assemble(
        config: &RunConfig,
        kind: ModelKind,
        budget: usize,
        relaxed_value: f64,
        trajectories: Vec<TrajectoryReport>,
    ) -> Self {
        let collect = |f: &dyn Fn(&TrajectoryReport) -> Option<f64>| {
            let xs: Vec<f64> = trajectories.iter().filter_map(f).collect();
            (!xs.is_empty()).then(|| Summary::of(&xs))
        };
        let rewards: Vec<f64> = trajectories.iter().map(|t| t.mean_reward).collect();
        RunReport {
            policy: config.policy.to_string(),
            kind,
            n_arms: config.n_arms,
            budget,
            horizon: config.horizon,
            burn_in: config.effective_burn_in(kind),
            relaxed_value,
            reward: Summary::of(&rewards),
            bad_arms: collect(&|t| t.diagnostics.as_ref().map(|d| d.bad_arms_mean)),
            mismatches: collect(&|t| t.diagnostics.as_ref().map(|d| d.mismatches_mean)),
            period_length: collect(&|t| {
                t.diagnostics
                    .as_ref()
                    .and_then(|d| d.periods)
                    .filter(|p| p.completed > 0)
                    .map(|p| p.mean)
            }),
            epochs: collect(&|t| t.epochs.map(|e| e as f64)),
            trajectories,
        }
    }

    /// Relaxed value minus the mean reward.
    pub fn gap(&self) -> f64 {
        self.relaxed_value - self.reward.mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(bad: f64, rate: f64, events: u64, mean: f64) -> Diagnostics {
        Diagnostics {
            bad_arms_mean: bad,
            mismatches_mean: rate,
            event_rate: rate,
            events,
            periods: Some(PeriodStats {
                completed: events,
                mean,
                std_error: 0.0,
            }),
            virtual_law: vec![],
            arm_samples: 0.0,
        }
    }

    #[test]
    fn ledger_sides() {
        let l = littles_law_ledger(&diag(4.0, 2.0, 10, 2.1));
        assert!((l.rhs - 4.2).abs() < 1e-12);
        assert!((l.relative_gap - 0.2 / 4.2).abs() < 1e-12);
        let zero = littles_law_ledger(&diag(0.0, 0.0, 0, 0.0));
        assert_eq!((zero.lhs, zero.rhs, zero.relative_gap), (0.0, 0.0, 0.0));
    }

    #[test]
    fn config_validation() {
        let c = RunConfig::new(10, 100.0);
        assert_eq!(c.effective_burn_in(ModelKind::Dt), 25.0);
        assert!(c.validate(ModelKind::Dt).is_ok());
        assert!(c.clone().with_burn_in(100.0).validate(ModelKind::Dt).is_err());
        assert!(RunConfig::new(10, 10.5).validate(ModelKind::Dt).is_err());
        assert!(RunConfig::new(10, 10.5).validate(ModelKind::Ct).is_ok());
        assert!(c.with_trajectories(0).validate(ModelKind::Dt).is_err());
    }
}
