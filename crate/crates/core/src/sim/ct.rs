//! FTVA in continuous time, simulated by uniformization at rate
//! `2 N g_max`.
//!
//! Arms of one type are exchangeable, so the population is stored as counts
//! over cells `(type, S, S_hat, A_hat, A)`. Resampling virtual actions
//! becomes one binomial draw per `(type, S, S_hat)` and the budget matching
//! a multivariate hypergeometric draw over the eligible cells; per-epoch
//! work is independent of N.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lp::relax::OccupationMeasure;
use crate::model::{Instance, ModelKind};
use crate::policy::ftva::{type_assignment, Decision, FtvaPlan, TieBreak};
use crate::scalar::Scalar;
use crate::sim::dt::{max_states, OccupancyRecorder};
use crate::sim::report::{Diagnostics, RunConfig, RunReport, TrajectoryReport};
use crate::sim::rng::{categorical, derive_seed, exponential, pick, stream_rng, uniform};
use crate::sim::stats::KahanSum;

/// Population state: clock and cell counts. Cell `4p + 2â + a` belongs to
/// pair `p = (type, S, S_hat)` of the engine's layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CtSimState {
    pub t: f64,
    pub counts: Vec<u64>,
}

/// What the uniformization clock did at the end of an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochEvent {
    Real {
        arm_type: usize,
        from: usize,
        to: usize,
        action: usize,
        coupled: bool,
    },
    Virtual {
        arm_type: usize,
        from: usize,
        to: usize,
    },
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochOutcome {
    pub decision: Decision,
    pub elapsed: f64,
    pub reward_increment: f64,
    pub event: EpochEvent,
}

#[derive(Debug, Clone)]
struct TypeRates {
    n: usize,
    rows: Vec<[Vec<f64>; 2]>,
    total: Vec<[f64; 2]>,
    reward: Vec<[f64; 2]>,
    p1: Vec<f64>,
}

/// FTVA-CT over a population of `n_arms` arms.
#[derive(Debug, Clone)]
pub struct FtvaCtEngine {
    types: Vec<TypeRates>,
    /// `(type, S, S_hat)` per pair.
    pairs: Vec<(usize, usize, usize)>,
    pair_base: Vec<usize>,
    marginals: Vec<Vec<f64>>,
    budget: u64,
    n_arms: usize,
    tiebreak: TieBreak,
    clock_rate: f64,
}

impl FtvaCtEngine {
    pub fn new<T: Scalar>(
        instance: &Instance<T>,
        plan: &FtvaPlan<T>,
        n_arms: usize,
        tiebreak: TieBreak,
    ) -> Result<Self> {
        if instance.kind() != ModelKind::Ct {
            return Err(Error::UnsupportedPolicy {
                policy: "ftva-ct".into(),
                kind: "dt",
            });
        }
        let budget = instance.budget(n_arms)? as u64;
        instance.type_counts(n_arms)?;
        let mut types = Vec::new();
        let mut pairs = Vec::new();
        let mut pair_base = Vec::new();
        let mut g_max = 0.0f64;
        for (k, ty) in instance.types().iter().enumerate() {
            let m = ty.model.as_ct().expect("kind checked");
            let n = m.n_states();
            let f = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
            let rows: Vec<[Vec<f64>; 2]> = (0..n).map(|s| [f(m.rate_row(s, 0)), f(m.rate_row(s, 1))]).collect();
            let total: Vec<[f64; 2]> = rows.iter().map(|r| [r[0].iter().sum(), r[1].iter().sum()]).collect();
            g_max = total.iter().flatten().fold(g_max, |acc, &g| acc.max(g));
            types.push(TypeRates {
                n,
                rows,
                total,
                reward: (0..n).map(|s| [m.r(s, 0).as_f64(), m.r(s, 1).as_f64()]).collect(),
                p1: (0..n).map(|s| plan.policies[k].prob(s, 1).as_f64()).collect(),
            });
            pair_base.push(pairs.len());
            for s in 0..n {
                for sh in 0..n {
                    pairs.push((k, s, sh));
                }
            }
        }
        Ok(FtvaCtEngine {
            types,
            pairs,
            pair_base,
            marginals: plan
                .marginals
                .iter()
                .map(|m| m.iter().map(|x| x.as_f64()).collect())
                .collect(),
            budget,
            n_arms,
            tiebreak,
            clock_rate: 2.0 * n_arms as f64 * g_max,
        })
    }

    pub fn budget(&self) -> usize {
        self.budget as usize
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    /// `2 N g_max`.
    pub fn clock_rate(&self) -> f64 {
        self.clock_rate
    }

    fn pair(&self, k: usize, s: usize, s_hat: usize) -> usize {
        self.pair_base[k] + s * self.types[k].n + s_hat
    }

    /// Real states as given (types in contiguous blocks), virtual states
    /// i.i.d. from the stationary marginals.
    pub fn init<T: Scalar, R: Rng + ?Sized>(
        &self,
        instance: &Instance<T>,
        initial_real: &[usize],
        rng: &mut R,
    ) -> Result<CtSimState> {
        if initial_real.len() != self.n_arms {
            return Err(Error::Config(format!(
                "initial state has {} arms, expected {}",
                initial_real.len(),
                self.n_arms
            )));
        }
        let mut counts = vec![0u64; 4 * self.pairs.len()];
        for (&k, &s) in type_assignment(instance, self.n_arms)?.iter().zip(initial_real) {
            if s >= self.types[k].n {
                return Err(Error::Config(format!("initial state {s} out of range for type {k}")));
            }
            let m = &self.marginals[k];
            let sh = categorical(rng, m, m.iter().sum());
            counts[4 * self.pair(k, s, sh)] += 1;
        }
        Ok(CtSimState { t: 0.0, counts })
    }

    /// Resamples every virtual action and matches real actions to the budget.
    pub fn decide<R: Rng + ?Sized>(&self, st: &mut CtSimState, rng: &mut R) -> Decision {
        let mut ones = 0u64;
        for (p, &(k, _, sh)) in self.pairs.iter().enumerate() {
            let cell = &mut st.counts[4 * p..4 * p + 4];
            let n: u64 = cell.iter().sum();
            let p1 = self.types[k].p1[sh];
            let n1 = if n == 0 || p1 <= 0.0 {
                0
            } else if p1 >= 1.0 {
                n
            } else {
                Binomial::new(n, p1).expect("valid binomial").sample(rng)
            };
            cell.copy_from_slice(&[n - n1, 0, 0, n1]);
            ones += n1;
        }
        // demote surplus actives or promote passives, within one virtual action
        let (from, to, need) = if ones > self.budget {
            (3, 2, ones - self.budget)
        } else {
            (0, 1, self.budget - ones)
        };
        let mut left = need;
        if left > 0 {
            let passes: &[Option<bool>] = match self.tiebreak {
                TieBreak::GoodFirst => &[Some(false), Some(true)],
                TieBreak::Uniform => &[None],
            };
            for &synced in passes {
                let pool: Vec<usize> = (0..self.pairs.len())
                    .filter(|&p| {
                        let (_, s, sh) = self.pairs[p];
                        synced.is_none_or(|want| (s == sh) == want)
                    })
                    .collect();
                let mut total: u64 = pool.iter().map(|&p| st.counts[4 * p + from]).sum();
                let mut take = left.min(total);
                left -= take;
                for &p in &pool {
                    if take == 0 {
                        break;
                    }
                    let c = st.counts[4 * p + from];
                    let x = if take == total {
                        c
                    } else if c == 0 {
                        0
                    } else {
                        Hypergeometric::new(total, c, take)
                            .expect("valid hypergeometric")
                            .sample(rng)
                    };
                    st.counts[4 * p + from] -= x;
                    st.counts[4 * p + to] += x;
                    total -= c;
                    take -= x;
                }
            }
        }
        debug_assert_eq!(left, 0);
        Decision {
            virtual_active: ones as usize,
            mismatches: need as usize,
        }
    }

    fn coupled(&self, p: usize, off: usize) -> bool {
        let (_, s, sh) = self.pairs[p];
        s == sh && (off == 0 || off == 3)
    }

    /// Total rate of real transitions `sum_i G(S_i, A_i)`.
    pub fn g_real(&self, st: &CtSimState) -> f64 {
        let mut g = 0.0;
        for (p, &(k, s, _)) in self.pairs.iter().enumerate() {
            let tot = &self.types[k].total[s];
            for off in 0..4 {
                g += st.counts[4 * p + off] as f64 * tot[off & 1];
            }
        }
        g
    }

    /// Total rate of independent virtual transitions over uncoupled arms.
    pub fn g_virtual(&self, st: &CtSimState) -> f64 {
        let mut g = 0.0;
        for (p, &(k, _, sh)) in self.pairs.iter().enumerate() {
            let tot = &self.types[k].total[sh];
            for off in 0..4 {
                if !self.coupled(p, off) {
                    g += st.counts[4 * p + off] as f64 * tot[off >> 1];
                }
            }
        }
        g
    }

    /// Per-arm reward rate of the current configuration.
    pub fn reward_rate(&self, st: &CtSimState) -> f64 {
        let mut r = 0.0;
        for (p, &(k, s, _)) in self.pairs.iter().enumerate() {
            let rw = &self.types[k].reward[s];
            for off in 0..4 {
                r += st.counts[4 * p + off] as f64 * rw[off & 1];
            }
        }
        r / self.n_arms as f64
    }

    /// Arms with `(S, A) != (S_hat, A_hat)`.
    pub fn bad_arms(&self, st: &CtSimState) -> u64 {
        (0..self.pairs.len())
            .flat_map(|p| (0..4).map(move |off| (p, off)))
            .filter(|&(p, off)| !self.coupled(p, off))
            .map(|(p, off)| st.counts[4 * p + off])
            .sum()
    }

    pub fn active_arms(&self, st: &CtSimState) -> u64 {
        (0..self.pairs.len())
            .map(|p| st.counts[4 * p + 1] + st.counts[4 * p + 3])
            .sum()
    }

    /// Time to the next tick of the uniformization clock.
    pub fn elapsed<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.clock_rate > 0.0 {
            exponential(rng, self.clock_rate)
        } else {
            f64::INFINITY
        }
    }

    fn move_arm(&self, st: &mut CtSimState, from_cell: usize, k: usize, s: usize, sh: usize) {
        let off = from_cell % 4;
        st.counts[from_cell] -= 1;
        st.counts[4 * self.pair(k, s, sh) + off] += 1;
    }

    /// Applies the event of one tick: a real transition with probability
    /// `g_real / 2Ng_max`, otherwise an uncoupled virtual transition with
    /// probability `g_virtual / 2Ng_max`, otherwise nothing.
    pub fn transition<R: Rng + ?Sized>(&self, st: &mut CtSimState, rng: &mut R) -> EpochEvent {
        let mut u = uniform::<f64, _>(rng) * self.clock_rate;
        for (p, &(k, s, sh)) in self.pairs.iter().enumerate() {
            let ty = &self.types[k];
            for off in 0..4 {
                let c = st.counts[4 * p + off] as f64;
                let a = off & 1;
                let w = c * ty.total[s][a];
                if u < w {
                    let to = pick(&ty.rows[s][a], u / c);
                    let coupled = self.coupled(p, off);
                    self.move_arm(st, 4 * p + off, k, to, if coupled { to } else { sh });
                    return EpochEvent::Real {
                        arm_type: k,
                        from: s,
                        to,
                        action: a,
                        coupled,
                    };
                }
                u -= w;
            }
        }
        for (p, &(k, s, sh)) in self.pairs.iter().enumerate() {
            let ty = &self.types[k];
            for off in 0..4 {
                if self.coupled(p, off) {
                    continue;
                }
                let c = st.counts[4 * p + off] as f64;
                let w = c * ty.total[sh][off >> 1];
                if u < w {
                    let to = pick(&ty.rows[sh][off >> 1], u / c);
                    self.move_arm(st, 4 * p + off, k, s, to);
                    return EpochEvent::Virtual {
                        arm_type: k,
                        from: sh,
                        to,
                    };
                }
                u -= w;
            }
        }
        EpochEvent::Idle
    }
}

/// One decision epoch: match actions, wait for the clock, apply its event.
/// The reward increment is the elapsed time times the per-arm reward rate.
pub fn ftva_ct_epoch<R: Rng + ?Sized>(engine: &FtvaCtEngine, st: &mut CtSimState, rng: &mut R) -> EpochOutcome {
    let decision = engine.decide(st, rng);
    let rate = engine.reward_rate(st);
    let elapsed = engine.elapsed(rng);
    let event = engine.transition(st, rng);
    st.t += elapsed;
    EpochOutcome {
        decision,
        elapsed,
        reward_increment: elapsed * rate,
        event,
    }
}

/// Simulates FTVA-CT trajectories over `[0, horizon)` time units; reward
/// and diagnostics are time-weighted over `[burn_in, horizon)`, the final
/// partial interval included.
pub(crate) fn run_ct<T: Scalar>(
    instance: &Instance<T>,
    config: &RunConfig,
    measure: &OccupationMeasure<T>,
    plan: &FtvaPlan<T>,
    tiebreak: TieBreak,
) -> Result<RunReport> {
    config.validate(ModelKind::Ct)?;
    let n = config.n_arms;
    let engine = FtvaCtEngine::new(instance, plan, n, tiebreak)?;
    let n_states = max_states(instance);
    let initial = config.initial.states(n_states, n)?;
    let horizon = config.horizon;
    let burn = config.effective_burn_in(ModelKind::Ct);
    let master = derive_seed(config.seed, &[n as u64]);

    let one = |r: usize| -> Result<TrajectoryReport> {
        let mut rng = stream_rng(master, r as u64);
        let mut st = engine.init(instance, &initial, &mut rng)?;
        let mut reward = KahanSum::new();
        let mut bad = KahanSum::new();
        let mut mism = KahanSum::new();
        let mut events = 0u64;
        let mut law: Vec<Vec<[f64; 2]>> = engine.types.iter().map(|t| vec![[0.0; 2]; t.n]).collect();
        let mut occ = config.trace.then(|| OccupancyRecorder::new(n_states, n, burn));
        let mut grid = 0.0f64;
        let mut epochs = 0u64;
        loop {
            let t = st.t;
            let d = engine.decide(&mut st, &mut rng);
            assert_eq!(engine.active_arms(&st), engine.budget, "budget violated at t = {t}");
            let dt = engine.elapsed(&mut rng);
            let end = (t + dt).min(horizon);
            let overlap = end - t.max(burn);
            if t >= burn {
                events += d.mismatches as u64;
            }
            if overlap > 0.0 {
                reward.add(overlap * engine.reward_rate(&st));
                if config.diagnostics {
                    bad.add(overlap * engine.bad_arms(&st) as f64);
                    mism.add(overlap * d.mismatches as f64);
                    for (p, &(k, _, sh)) in engine.pairs.iter().enumerate() {
                        for off in 0..4 {
                            law[k][sh][off >> 1] += overlap * st.counts[4 * p + off] as f64;
                        }
                    }
                }
            }
            if let Some(o) = occ.as_mut() {
                while grid < end {
                    let mut per_state = vec![0u64; n_states];
                    for (p, &(_, s, _)) in engine.pairs.iter().enumerate() {
                        per_state[s] += st.counts[4 * p..4 * p + 4].iter().sum::<u64>();
                    }
                    let row = per_state.into_iter().map(|c| c as f64 / n as f64).collect();
                    o.push_row(row, Some((engine.bad_arms(&st) as usize, d.mismatches)));
                    grid += 1.0;
                }
                o.add_time(t, end - t);
            }
            if t + dt >= horizon {
                break;
            }
            let event = engine.transition(&mut st, &mut rng);
            st.t = t + dt;
            epochs += 1;
            if let (Some(o), EpochEvent::Real { from, to, action, .. }) = (occ.as_mut(), event) {
                o.record_move(st.t, from, action, to);
            }
        }
        let window = horizon - burn;
        let diagnostics = config.diagnostics.then(|| {
            let arm_time = window * n as f64;
            for row in law.iter_mut().flatten() {
                row[0] /= arm_time;
                row[1] /= arm_time;
            }
            Diagnostics {
                bad_arms_mean: bad.value() / window,
                mismatches_mean: mism.value() / window,
                event_rate: events as f64 / window,
                events,
                periods: None,
                virtual_law: law,
                arm_samples: arm_time,
            }
        });
        Ok(TrajectoryReport {
            index: r,
            mean_reward: reward.value() / window,
            epochs: Some(epochs),
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
        ModelKind::Ct,
        engine.budget(),
        measure.value.as_f64(),
        trajectories,
    ))
}
