//! Follow-the-virtual-advice in discrete time.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::relax::{policy_from_occupation, stationary_marginal, OccupationMeasure};
use crate::model::{ArmPolicy, DtModel, Instance, ModelKind};
use crate::scalar::Scalar;
use crate::sim::rng::{bernoulli, categorical, pick, uniform};

/// How real actions are matched to virtual actions when the virtual
/// actions miss the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Flip arms whose real and virtual states already differ before
    /// touching arms that are in sync.
    #[default]
    GoodFirst,
    /// Flip a uniformly random subset.
    Uniform,
}

impl fmt::Display for TieBreak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TieBreak::GoodFirst => "good-first",
            TieBreak::Uniform => "uniform",
        })
    }
}

impl FromStr for TieBreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "good-first" => Ok(TieBreak::GoodFirst),
            "uniform" => Ok(TieBreak::Uniform),
            other => Err(Error::UnknownPolicy(format!("tie-break `{other}`"))),
        }
    }
}

/// Per-type single-armed policies and the stationary marginals the virtual
/// states start from.
#[derive(Debug, Clone, PartialEq)]
pub struct FtvaPlan<T> {
    pub policies: Vec<ArmPolicy<T>>,
    pub marginals: Vec<Vec<T>>,
}

impl<T: Scalar> FtvaPlan<T> {
    pub fn from_occupation(measure: &OccupationMeasure<T>) -> Self {
        FtvaPlan {
            policies: measure.y.iter().map(|y| policy_from_occupation(y)).collect(),
            marginals: measure.y.iter().map(|y| stationary_marginal(y)).collect(),
        }
    }
}

/// Real and virtual processes of all arms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FtvaState {
    pub real: Vec<usize>,
    pub virt: Vec<usize>,
    pub virt_action: Vec<usize>,
    pub action: Vec<usize>,
    pub type_of: Vec<usize>,
    /// `(S, A) == (S_hat, A_hat)` at the last decision.
    pub coupled: Vec<bool>,
}

impl FtvaState {
    pub fn n_arms(&self) -> usize {
        self.real.len()
    }

    /// Arms whose state-action pair differs from the virtual one.
    pub fn bad_arms(&self) -> usize {
        self.coupled.iter().filter(|&&c| !c).count()
    }
}

/// Counts from one decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Decision {
    pub virtual_active: usize,
    /// Arms with `A != A_hat`; equals `|sum A_hat - budget|`.
    pub mismatches: usize,
}

/// Budget-exact selection over a population; shared by the discrete and
/// continuous-time engines.
pub(crate) fn match_budget<R: Rng + ?Sized>(
    state: &mut FtvaState,
    budget: usize,
    tiebreak: TieBreak,
    rng: &mut R,
) -> Decision {
    state.action.copy_from_slice(&state.virt_action);
    let ones = state.action.iter().filter(|&&a| a == 1).count();
    let (from, to, need) = if ones > budget {
        (1, 0, ones - budget)
    } else {
        (0, 1, budget - ones)
    };
    if need > 0 {
        let mut first = Vec::new();
        let mut second = Vec::new();
        for i in 0..state.n_arms() {
            if state.action[i] != from {
                continue;
            }
            if tiebreak == TieBreak::GoodFirst && state.real[i] == state.virt[i] {
                second.push(i);
            } else {
                first.push(i);
            }
        }
        let take_first = need.min(first.len());
        for &i in choose(rng, &mut first, take_first) {
            state.action[i] = to;
        }
        for &i in choose(rng, &mut second, need - take_first) {
            state.action[i] = to;
        }
    }
    for i in 0..state.n_arms() {
        state.coupled[i] = state.real[i] == state.virt[i] && state.action[i] == state.virt_action[i];
    }
    Decision {
        virtual_active: ones,
        mismatches: need,
    }
}

/// Uniform random `k`-subset of `pool` (partial Fisher-Yates), returned as
/// the first `k` entries.
pub(crate) fn choose<'p, R: Rng + ?Sized>(rng: &mut R, pool: &'p mut [usize], k: usize) -> &'p [usize] {
    assert!(k <= pool.len(), "cannot choose {k} of {}", pool.len());
    if k == pool.len() {
        return pool;
    }
    for j in 0..k {
        let r = rng.random_range(j..pool.len());
        pool.swap(j, r);
    }
    &pool[..k]
}

/// Contiguous type blocks for `n_arms` arms.
pub fn type_assignment<T: Scalar>(instance: &Instance<T>, n_arms: usize) -> Result<Vec<usize>> {
    let counts = instance.type_counts(n_arms)?;
    Ok(counts
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| std::iter::repeat_n(k, c))
        .collect())
}

/// FTVA over a discrete-time population.
#[derive(Debug, Clone)]
pub struct FtvaEngine<T> {
    models: Vec<DtModel<T>>,
    plan: FtvaPlan<T>,
    budget: usize,
    n_arms: usize,
    tiebreak: TieBreak,
}

impl<T: Scalar> FtvaEngine<T> {
    pub fn new(instance: &Instance<T>, plan: FtvaPlan<T>, n_arms: usize, tiebreak: TieBreak) -> Result<Self> {
        if instance.kind() != ModelKind::Dt {
            return Err(Error::UnsupportedPolicy {
                policy: "ftva".into(),
                kind: "ct",
            });
        }
        let budget = instance.budget(n_arms)?;
        instance.type_counts(n_arms)?;
        let models = instance
            .types()
            .iter()
            .map(|t| t.model.as_dt().expect("kind checked").clone())
            .collect();
        Ok(FtvaEngine {
            models,
            plan,
            budget,
            n_arms,
            tiebreak,
        })
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn model(&self, k: usize) -> &DtModel<T> {
        &self.models[k]
    }

    pub fn plan(&self) -> &FtvaPlan<T> {
        &self.plan
    }

    /// Real states as given, virtual states i.i.d. from each type's
    /// stationary marginal. Types occupy contiguous index blocks.
    pub fn init<R: Rng + ?Sized>(
        &self,
        instance: &Instance<T>,
        initial_real: Vec<usize>,
        rng: &mut R,
    ) -> Result<FtvaState> {
        self.init_with_types(type_assignment(instance, self.n_arms)?, initial_real, rng)
    }

    /// As [`FtvaEngine::init`] with an explicit type per arm.
    pub fn init_with_types<R: Rng + ?Sized>(
        &self,
        type_of: Vec<usize>,
        initial_real: Vec<usize>,
        rng: &mut R,
    ) -> Result<FtvaState> {
        if initial_real.len() != self.n_arms || type_of.len() != self.n_arms {
            return Err(Error::Config(format!(
                "initial state has {} arms and {} types, expected {}",
                initial_real.len(),
                type_of.len(),
                self.n_arms
            )));
        }
        for (&k, &s) in type_of.iter().zip(&initial_real) {
            if k >= self.models.len() || s >= self.models[k].n_states() {
                return Err(Error::Config(format!("initial state {s} invalid for type {k}")));
            }
        }
        let totals: Vec<T> = self.plan.marginals.iter().map(|m| m.iter().copied().sum()).collect();
        let virt = type_of
            .iter()
            .map(|&k| categorical(rng, &self.plan.marginals[k], totals[k]))
            .collect();
        let n = self.n_arms;
        Ok(FtvaState {
            real: initial_real,
            virt,
            virt_action: vec![0; n],
            action: vec![0; n],
            type_of,
            coupled: vec![false; n],
        })
    }

    /// Draws virtual actions and matches real actions to the budget.
    pub fn decide<R: Rng + ?Sized>(&self, state: &mut FtvaState, rng: &mut R) -> Decision {
        for i in 0..state.n_arms() {
            let pol = &self.plan.policies[state.type_of[i]];
            state.virt_action[i] = bernoulli(rng, pol.prob(state.virt[i], 1));
        }
        let d = match_budget(state, self.budget, self.tiebreak, rng);
        debug_assert_eq!(state.action.iter().sum::<usize>(), self.budget);
        d
    }

    /// Collects the reward of the decided actions and moves both processes.
    /// Coupled arms copy the real transition into the virtual state.
    pub fn advance<R: Rng + ?Sized>(&self, state: &mut FtvaState, rng: &mut R) -> f64 {
        let mut reward = 0.0;
        for i in 0..state.n_arms() {
            let m = &self.models[state.type_of[i]];
            let (s, a) = (state.real[i], state.action[i]);
            reward += m.r(s, a).as_f64();
            let next = pick(m.row(s, a), uniform::<T, _>(rng));
            state.virt[i] = if state.coupled[i] {
                next
            } else {
                pick(m.row(state.virt[i], state.virt_action[i]), uniform::<T, _>(rng))
            };
            state.real[i] = next;
        }
        reward / self.n_arms as f64
    }

    /// One full step; returns the per-arm reward and the decision counts.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut FtvaState, rng: &mut R) -> (f64, Decision) {
        let d = self.decide(state, rng);
        let active = state.action.iter().filter(|&&a| a == 1).count();
        assert_eq!(active, self.budget, "budget violated");
        (self.advance(state, rng), d)
    }
}

/// Builds the engine and its initial state.
pub fn ftva_init<T: Scalar, R: Rng + ?Sized>(
    instance: &Instance<T>,
    plan: FtvaPlan<T>,
    initial_real: Vec<usize>,
    tiebreak: TieBreak,
    rng: &mut R,
) -> Result<(FtvaEngine<T>, FtvaState)> {
    let engine = FtvaEngine::new(instance, plan, initial_real.len(), tiebreak)?;
    let state = engine.init(instance, initial_real, rng)?;
    Ok((engine, state))
}

/// One FTVA step in place: returns the actions taken and the reward.
pub fn ftva_step<T: Scalar, R: Rng + ?Sized>(
    engine: &FtvaEngine<T>,
    state: &mut FtvaState,
    rng: &mut R,
) -> (Vec<usize>, f64) {
    let (reward, _) = engine.step(state, rng);
    // actions of the step just taken
    (state.action.clone(), reward)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::relax::solve_relaxation;
    use crate::model::{builtin, example2, ArmModel, ArmType};
    use crate::sim::rng::stream_rng;

    fn engine(name: &str, n: usize, tb: TieBreak) -> (Instance<f64>, FtvaEngine<f64>) {
        let inst = builtin::<f64>(name).unwrap();
        let plan = FtvaPlan::from_occupation(&solve_relaxation(&inst).unwrap());
        let e = FtvaEngine::new(&inst, plan, n, tb).unwrap();
        (inst, e)
    }

    #[test]
    fn virtual_init_follows_marginal() {
        let (inst, e) = engine("example4", 8, TieBreak::GoodFirst);
        let mut rng = stream_rng(1, 0);
        let mut counts = [0usize; 8];
        let reps = 100_000 / 8;
        for _ in 0..reps {
            let st = e.init(&inst, vec![0; 8], &mut rng).unwrap();
            st.virt.iter().for_each(|&v| counts[v] += 1);
        }
        let total = (reps * 8) as f64;
        for c in counts {
            assert!((c as f64 / total - 0.125).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn single_state_virtuals_are_zero() {
        let m = DtModel::new(vec![[vec![1.0], vec![1.0]]], vec![[0.0, 1.0]]).unwrap();
        let inst = Instance::homogeneous(ArmModel::Dt(m), 0.5).unwrap();
        let plan = FtvaPlan::from_occupation(&solve_relaxation(&inst).unwrap());
        let (_, st) = ftva_init(&inst, plan, vec![0; 4], TieBreak::GoodFirst, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(st.virt, vec![0; 4]);
    }

    #[test]
    fn full_budget_forces_activation_and_coupling_persists() {
        let m = example2::<f64>();
        let inst = Instance::from_parts(
            vec![ArmType {
                beta: 1.0,
                model: ArmModel::Dt(m),
            }],
            1.0,
        );
        let plan = FtvaPlan::from_occupation(&solve_relaxation(&inst).unwrap());
        let mut rng = stream_rng(2, 0);
        let (e, mut st) = ftva_init(&inst, plan, vec![0], TieBreak::GoodFirst, &mut rng).unwrap();
        let mut synced = false;
        for _ in 0..500 {
            let (actions, _) = ftva_step(&e, &mut st, &mut rng);
            assert_eq!(actions, vec![1]);
            if synced {
                assert_eq!(st.real, st.virt);
            }
            synced = st.real == st.virt;
        }
        assert!(synced);
    }

    #[test]
    fn exact_virtual_budget_means_no_mismatch() {
        let mut st = FtvaState {
            real: vec![0, 1, 2, 0],
            virt: vec![1, 1, 0, 2],
            virt_action: vec![1, 0, 1, 0],
            action: vec![0; 4],
            type_of: vec![0; 4],
            coupled: vec![false; 4],
        };
        let d = match_budget(&mut st, 2, TieBreak::GoodFirst, &mut stream_rng(0, 0));
        assert_eq!(d.mismatches, 0);
        assert_eq!(st.action, st.virt_action);
        assert_eq!(st.coupled, vec![false, true, false, false]);
    }

    #[test]
    fn good_first_flips_unsynced_arms_first() {
        let mut rng = stream_rng(4, 0);
        for _ in 0..200 {
            let mut st = FtvaState {
                real: vec![0, 0, 0, 1, 1, 1],
                virt: vec![0, 0, 0, 2, 2, 1],
                virt_action: vec![1; 6],
                action: vec![0; 6],
                type_of: vec![0; 6],
                coupled: vec![false; 6],
            };
            let d = match_budget(&mut st, 4, TieBreak::GoodFirst, &mut rng);
            assert_eq!(d.mismatches, 2);
            assert_eq!(st.action[3], 0);
            assert_eq!(st.action[4], 0);
            assert_eq!(st.action.iter().sum::<usize>(), 4);
        }
    }

    #[test]
    fn mismatches_equal_budget_excess() {
        for tb in [TieBreak::GoodFirst, TieBreak::Uniform] {
            let (inst, e) = engine("example2", 50, tb);
            let mut rng = stream_rng(8, 0);
            let mut st = e.init(&inst, vec![0; 50], &mut rng).unwrap();
            for _ in 0..200 {
                let d = e.decide(&mut st, &mut rng);
                assert_eq!(d.mismatches, d.virtual_active.abs_diff(20));
                let flipped = st.action.iter().zip(&st.virt_action).filter(|(a, b)| a != b).count();
                assert_eq!(flipped, d.mismatches);
                assert_eq!(st.action.iter().sum::<usize>(), 20);
                e.advance(&mut st, &mut rng);
            }
        }
    }

    #[test]
    fn example4_mismatch_mean_within_sqrt_bound() {
        let n = 1000;
        let (inst, e) = engine("example4", n, TieBreak::GoodFirst);
        let mut rng = stream_rng(5, 0);
        let mut st = e.init(&inst, vec![1; n], &mut rng).unwrap();
        let steps = 2000;
        let mut total = 0usize;
        for _ in 0..steps {
            total += e.step(&mut st, &mut rng).1.mismatches;
        }
        let mean = total as f64 / steps as f64;
        // Binomial(1000, 1/2) deviation has mean sqrt(2N/pi)/2 ~ 12.6
        assert!(mean <= (n as f64).sqrt() / 2.0, "{mean}");
    }

    #[test]
    fn tiebreak_parses() {
        assert_eq!("uniform".parse::<TieBreak>().unwrap(), TieBreak::Uniform);
        assert_eq!(TieBreak::default().to_string(), "good-first");
        assert!("nope".parse::<TieBreak>().is_err());
    }
}
