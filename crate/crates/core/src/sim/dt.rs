//! Discrete-time N-armed trajectories.

use rayon::prelude::*;

use crate::error::Result;
use crate::lp::relax::OccupationMeasure;
use crate::model::{DtModel, Instance, ModelKind};
use crate::policy::ftva::{Decision, FtvaEngine, FtvaState};
use crate::policy::priority::{priority_step, PriorityPolicy};
use crate::policy::selector::ResolvedPolicy;
use crate::scalar::Scalar;
use crate::sim::report::{Diagnostics, PeriodStats, RunConfig, RunReport, Trace, TrajectoryReport};
use crate::sim::rng::{derive_seed, stream_rng};
use crate::sim::stats::KahanSum;

/// Disagreement bookkeeping over a measured window. Time is a step index
/// here, but the tracker only sees decision instants and holding times.
#[derive(Debug, Clone)]
pub(crate) struct DisagreementTracker {
    window_start: f64,
    open: Vec<Option<f64>>,
    completed: u64,
    length_sum: KahanSum,
    length_sq: KahanSum,
    events: u64,
    bad_time: KahanSum,
    mismatch_time: KahanSum,
    law: Vec<Vec<[f64; 2]>>,
    arm_time: f64,
    measured: f64,
}

impl DisagreementTracker {
    pub(crate) fn new(n_arms: usize, states_per_type: &[usize], window_start: f64) -> Self {
        DisagreementTracker {
            window_start,
            open: vec![None; n_arms],
            completed: 0,
            length_sum: KahanSum::new(),
            length_sq: KahanSum::new(),
            events: 0,
            bad_time: KahanSum::new(),
            mismatch_time: KahanSum::new(),
            law: states_per_type.iter().map(|&n| vec![[0.0; 2]; n]).collect(),
            arm_time: 0.0,
            measured: 0.0,
        }
    }

    fn close(&mut self, i: usize, t: f64) {
        if let Some(begin) = self.open[i].take() {
            if begin >= self.window_start {
                let len = t - begin;
                self.completed += 1;
                self.length_sum.add(len);
                self.length_sq.add(len * len);
            }
        }
    }

    /// Called right after a decision at time `t`.
    pub(crate) fn observe(&mut self, t: f64, state: &FtvaState) {
        for i in 0..state.n_arms() {
            if state.action[i] != state.virt_action[i] {
                self.close(i, t);
                self.open[i] = Some(t);
                if t >= self.window_start {
                    self.events += 1;
                }
            } else if state.real[i] == state.virt[i] {
                self.close(i, t);
            }
        }
    }

    /// The decided configuration is held for `dt` starting at `t`.
    pub(crate) fn hold(&mut self, t: f64, dt: f64, state: &FtvaState, d: &Decision) {
        let dt = t + dt - t.max(self.window_start);
        if dt <= 0.0 {
            return;
        }
        self.measured += dt;
        self.bad_time.add(state.bad_arms() as f64 * dt);
        self.mismatch_time.add(d.mismatches as f64 * dt);
        for i in 0..state.n_arms() {
            self.law[state.type_of[i]][state.virt[i]][state.virt_action[i]] += dt;
        }
        self.arm_time += dt * state.n_arms() as f64;
    }

    pub(crate) fn finish(mut self) -> Diagnostics {
        let m = self.measured.max(f64::MIN_POSITIVE);
        let n = self.completed as f64;
        let periods = if self.completed == 0 {
            PeriodStats {
                completed: 0,
                mean: 0.0,
                std_error: f64::NAN,
            }
        } else {
            let mean = self.length_sum.value() / n;
            let var = if self.completed > 1 {
                ((self.length_sq.value() - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                f64::NAN
            };
            PeriodStats {
                completed: self.completed,
                mean,
                std_error: (var / n).sqrt(),
            }
        };
        let total = self.arm_time.max(f64::MIN_POSITIVE);
        for row in self.law.iter_mut().flatten() {
            row[0] /= total;
            row[1] /= total;
        }
        Diagnostics {
            bad_arms_mean: self.bad_time.value() / m,
            mismatches_mean: self.mismatch_time.value() / m,
            event_rate: self.events as f64 / m,
            events: self.events,
            periods: Some(periods),
            virtual_law: self.law,
            arm_samples: self.arm_time,
        }
    }
}

/// Occupancy series and net flows of the real states.
#[derive(Debug, Clone)]
pub(crate) struct OccupancyRecorder {
    n_states: usize,
    weight: f64,
    window_start: f64,
    fractions: Vec<Vec<f64>>,
    bad: Vec<f64>,
    mismatches: Vec<f64>,
    flow: Vec<[f64; 2]>,
    flow_time: f64,
}

impl OccupancyRecorder {
    pub(crate) fn new(n_states: usize, n_arms: usize, window_start: f64) -> Self {
        OccupancyRecorder {
            n_states,
            weight: 1.0 / n_arms as f64,
            window_start,
            fractions: Vec::new(),
            bad: Vec::new(),
            mismatches: Vec::new(),
            flow: vec![[0.0; 2]; n_states],
            flow_time: 0.0,
        }
    }

    pub(crate) fn push_row(&mut self, row: Vec<f64>, bad_mismatch: Option<(usize, usize)>) {
        self.fractions.push(row);
        if let Some((b, m)) = bad_mismatch {
            self.bad.push(b as f64);
            self.mismatches.push(m as f64);
        }
    }

    pub(crate) fn snapshot(&mut self, real: &[usize], bad_mismatch: Option<(usize, usize)>) {
        let mut counts = vec![0usize; self.n_states];
        real.iter().for_each(|&s| counts[s] += 1);
        let n = real.len() as f64;
        self.push_row(counts.into_iter().map(|c| c as f64 / n).collect(), bad_mismatch);
    }

    /// One arm moved from `s` to `next` under action `a` at time `t`.
    pub(crate) fn record_move(&mut self, t: f64, s: usize, a: usize, next: usize) {
        if t >= self.window_start && s != next {
            self.flow[s][a] -= self.weight;
            self.flow[next][a] += self.weight;
        }
    }

    pub(crate) fn add_time(&mut self, t: f64, dt: f64) {
        self.flow_time += (t + dt - t.max(self.window_start)).max(0.0);
    }

    /// Moves of one step taken at time `t`.
    pub(crate) fn moves(&mut self, t: f64, before: &[usize], actions: &[usize], after: &[usize]) {
        for ((&s, &a), &next) in before.iter().zip(actions).zip(after) {
            self.record_move(t, s, a, next);
        }
        self.add_time(t, 1.0);
    }

    pub(crate) fn finish(self) -> Trace {
        let k = if self.flow_time > 0.0 { self.flow_time } else { 1.0 };
        Trace {
            fractions: self.fractions,
            bad_arms: self.bad,
            mismatches: self.mismatches,
            net_flow: self.flow.into_iter().map(|[a, b]| [a / k, b / k]).collect(),
        }
    }
}

enum Engine<'a, T> {
    Ftva(FtvaEngine<T>),
    Priority {
        policy: PriorityPolicy,
        model: &'a DtModel<T>,
        budget: usize,
    },
}

pub(crate) fn max_states<T: Scalar>(instance: &Instance<T>) -> usize {
    instance.types().iter().map(|t| t.model.n_states()).max().unwrap_or(0)
}

/// Simulates `config.trajectories` independent trajectories in parallel;
/// trajectory `r` uses stream `r` of the seed derived from `(seed, N)`.
pub(crate) fn run_dt<T: Scalar>(
    instance: &Instance<T>,
    config: &RunConfig,
    measure: &OccupationMeasure<T>,
    resolved: ResolvedPolicy<T>,
) -> Result<RunReport> {
    config.validate(ModelKind::Dt)?;
    let n = config.n_arms;
    let budget = instance.budget(n)?;
    let engine = match resolved {
        ResolvedPolicy::Ftva { plan, tiebreak } => Engine::Ftva(FtvaEngine::new(instance, plan, n, tiebreak)?),
        ResolvedPolicy::Priority(policy) => Engine::Priority {
            policy,
            model: instance
                .model()
                .as_dt()
                .expect("priority resolves on discrete models only"),
            budget,
        },
    };
    let n_states = max_states(instance);
    let initial = config.initial.states(n_states, n)?;
    let states_per_type: Vec<usize> = instance.types().iter().map(|t| t.model.n_states()).collect();
    let horizon = config.horizon as usize;
    let burn = config.effective_burn_in(ModelKind::Dt) as usize;
    let master = derive_seed(config.seed, &[n as u64]);

    let one = |r: usize| -> Result<TrajectoryReport> {
        let mut rng = stream_rng(master, r as u64);
        let mut reward = KahanSum::new();
        let mut occ = config.trace.then(|| OccupancyRecorder::new(n_states, n, burn as f64));
        let mut before = vec![0usize; n];
        let mut diagnostics = None;
        match &engine {
            Engine::Ftva(e) => {
                let mut st = e.init(instance, initial.clone(), &mut rng)?;
                let mut tracker = config
                    .diagnostics
                    .then(|| DisagreementTracker::new(n, &states_per_type, burn as f64));
                for t in 0..horizon {
                    let d = e.decide(&mut st, &mut rng);
                    let active = st.action.iter().filter(|&&a| a == 1).count();
                    assert_eq!(active, budget, "budget violated at step {t}");
                    if let Some(tr) = tracker.as_mut() {
                        tr.observe(t as f64, &st);
                        tr.hold(t as f64, 1.0, &st, &d);
                    }
                    if let Some(o) = occ.as_mut() {
                        o.snapshot(&st.real, Some((st.bad_arms(), d.mismatches)));
                        before.copy_from_slice(&st.real);
                    }
                    let r = e.advance(&mut st, &mut rng);
                    if t >= burn {
                        reward.add(r);
                    }
                    if let Some(o) = occ.as_mut() {
                        o.moves(t as f64, &before, &st.action, &st.real);
                    }
                }
                diagnostics = tracker.map(DisagreementTracker::finish);
            }
            Engine::Priority { policy, model, budget } => {
                let mut real = initial.clone();
                let mut actions = vec![0usize; n];
                for t in 0..horizon {
                    if let Some(o) = occ.as_mut() {
                        o.snapshot(&real, None);
                        before.copy_from_slice(&real);
                    }
                    let r = priority_step(policy, model, *budget, &mut real, &mut actions, &mut rng);
                    if t >= burn {
                        reward.add(r);
                    }
                    if let Some(o) = occ.as_mut() {
                        o.moves(t as f64, &before, &actions, &real);
                    }
                }
            }
        }
        Ok(TrajectoryReport {
            index: r,
            mean_reward: reward.value() / (horizon - burn) as f64,
            epochs: None,
            diagnostics,
            trace: occ.map(OccupancyRecorder::finish),
        })
    };

    let trajectories = (0..config.trajectories)
        .into_par_iter()
        .map(one)
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport::assemble(
        config,
        ModelKind::Dt,
        budget,
        measure.value.as_f64(),
        trajectories,
    ))
}
