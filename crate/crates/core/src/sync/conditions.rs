//! Self-loop and cycle based sufficient conditions for synchronization,
//! and the unichain check.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ArmPolicy, DtModel};
use crate::scalar::{positive, Scalar};
use crate::sync::graph::{
    action_graph, any_policy_graph, coprime, period, policy_graph, recurrent_class, simple_cycles, Adjacency,
    CycleSearch,
};

/// Cap on enumerated simple cycles per search.
pub const CYCLE_CAP: usize = 100_000;

/// Largest state count accepted by [`check_unichain`].
pub const UNICHAIN_LIMIT: usize = 20;

/// A satisfied sufficient condition together with its witness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Proposition {
    /// Every recurrent state has self-loops under both actions.
    SelfLoopAllStates,
    /// `s_a` is a recurrent state with an active self-loop that the policy
    /// may activate; `s_b` is shared by both recurrent classes and has
    /// self-loops under both actions.
    SelfLoopTwoStates { s_a: usize, s_b: usize },
    /// A shared recurrent state with an active self-loop the policy may use.
    SelfLoopOneState { s_star: usize },
    /// Two cycles with coprime lengths.
    TwoCycles { cycle_a: Vec<usize>, cycle_b: Vec<usize> },
    /// An active cycle in the shared class with an aperiodic all-one chain.
    OneCycle { cycle: Vec<usize> },
}

impl Proposition {
    pub fn id(&self) -> u8 {
        match self {
            Proposition::SelfLoopAllStates => 3,
            Proposition::SelfLoopTwoStates { .. } => 4,
            Proposition::SelfLoopOneState { .. } => 5,
            Proposition::TwoCycles { .. } => 6,
            Proposition::OneCycle { .. } => 7,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Proposition::SelfLoopAllStates => "self-loop-all-states",
            Proposition::SelfLoopTwoStates { .. } => "self-loop-two-states",
            Proposition::SelfLoopOneState { .. } => "self-loop-one-state",
            Proposition::TwoCycles { .. } => "two-cycles",
            Proposition::OneCycle { .. } => "one-cycle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SufficientConditions {
    /// Recurrent class of the policy, when unique.
    pub policy_class: Option<Vec<usize>>,
    /// Recurrent class of the all-one policy, when unique.
    pub all_one_class: Option<Vec<usize>>,
    pub satisfied: Vec<Proposition>,
    /// A cycle search hit [`CYCLE_CAP`] without finding a witness.
    pub inconclusive: bool,
}

impl SufficientConditions {
    pub fn holds(&self, id: u8) -> bool {
        self.satisfied.iter().any(|p| p.id() == id)
    }
}

/// Evaluates the hypotheses of each condition. All of them need the policy
/// and the all-one policy to have a single recurrent class each, with the
/// two classes intersecting; otherwise nothing is returned.
pub fn check_sufficient_conditions<T: Scalar>(
    model: &DtModel<T>,
    policy: &ArmPolicy<T>,
) -> Result<SufficientConditions> {
    let n = model.n_states();
    if policy.n_states() != n {
        return Err(Error::Malformed {
            field: "policy".into(),
            message: format!("policy covers {} states, model has {n}", policy.n_states()),
        });
    }
    let active = action_graph(model, 1);
    let policy_class = recurrent_class(&policy_graph(model, policy));
    let all_one_class = recurrent_class(&active);
    let mut out = SufficientConditions {
        policy_class: policy_class.clone(),
        all_one_class: all_one_class.clone(),
        satisfied: Vec::new(),
        inconclusive: false,
    };
    let (Some(rec), Some(rec1)) = (policy_class, all_one_class) else {
        return Ok(out);
    };
    let in_rec = membership(n, &rec);
    let in_rec1 = membership(n, &rec1);
    let shared: Vec<bool> = (0..n).map(|s| in_rec[s] && in_rec1[s]).collect();
    if !shared.iter().any(|&b| b) {
        return Ok(out);
    }

    let loop0 = |s: usize| positive(model.p(s, 0, s));
    let loop1 = |s: usize| positive(model.p(s, 1, s));
    let may_activate = |s: usize| positive(policy.prob(s, 1));

    if rec.iter().all(|&s| loop0(s) && loop1(s)) {
        out.satisfied.push(Proposition::SelfLoopAllStates);
    }
    let s_a = rec.iter().copied().find(|&s| may_activate(s) && loop1(s));
    let s_b = (0..n).find(|&s| shared[s] && loop0(s) && loop1(s));
    if let (Some(s_a), Some(s_b)) = (s_a, s_b) {
        out.satisfied.push(Proposition::SelfLoopTwoStates { s_a, s_b });
    }
    if let Some(s_star) = (0..n).find(|&s| shared[s] && may_activate(s) && loop1(s)) {
        out.satisfied.push(Proposition::SelfLoopOneState { s_star });
    }

    // Cycles driven by action 1 on states where the policy may activate.
    let active_ok: Vec<bool> = (0..n).map(|s| in_rec[s] && may_activate(s)).collect();
    let cycles_a = simple_cycles(&active, &active_ok, CYCLE_CAP);
    let cycles_b = simple_cycles(&any_policy_graph(model), &shared, CYCLE_CAP);
    match coprime_pair(&cycles_a, &cycles_b) {
        Some((cycle_a, cycle_b)) => out.satisfied.push(Proposition::TwoCycles { cycle_a, cycle_b }),
        None => out.inconclusive |= cycles_a.truncated || cycles_b.truncated,
    }

    if period(&active, &rec1) == 1 {
        let star_ok: Vec<bool> = (0..n).map(|s| shared[s] && may_activate(s)).collect();
        let cycles = simple_cycles(&active, &star_ok, CYCLE_CAP);
        match shortest(&cycles) {
            Some(cycle) => out.satisfied.push(Proposition::OneCycle { cycle }),
            None => out.inconclusive |= cycles.truncated,
        }
    }
    Ok(out)
}

fn membership(n: usize, set: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &s in set {
        m[s] = true;
    }
    m
}

fn shortest(search: &CycleSearch) -> Option<Vec<usize>> {
    search.cycles.iter().min_by_key(|c| c.len()).cloned()
}

/// First cycle of each distinct length, shortest first.
fn one_per_length(search: &CycleSearch) -> Vec<&Vec<usize>> {
    let mut firsts: Vec<&Vec<usize>> = Vec::new();
    for c in &search.cycles {
        if !firsts.iter().any(|f| f.len() == c.len()) {
            firsts.push(c);
        }
    }
    firsts.sort_by_key(|c| c.len());
    firsts
}

fn coprime_pair(a: &CycleSearch, b: &CycleSearch) -> Option<(Vec<usize>, Vec<usize>)> {
    let lb = one_per_length(b);
    one_per_length(a).into_iter().find_map(|ca| {
        lb.iter()
            .find(|cb| coprime(ca.len(), cb.len()))
            .map(|cb| (ca.clone(), (*cb).clone()))
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Unichain {
    pub holds: bool,
    /// First deterministic policy (action per state) whose chain has more
    /// than one closed class.
    pub counterexample: Option<Vec<usize>>,
}

/// Enumerates every deterministic Markov policy and counts closed classes.
pub fn check_unichain<T: Scalar>(model: &DtModel<T>) -> Result<Unichain> {
    let n = model.n_states();
    if n > UNICHAIN_LIMIT {
        return Err(Error::TooManyStates {
            n_states: n,
            limit: UNICHAIN_LIMIT,
        });
    }
    let edges = [action_graph(model, 0), action_graph(model, 1)];
    for mask in 0u32..(1u32 << n) {
        let actions: Vec<usize> = (0..n).map(|s| ((mask >> s) & 1) as usize).collect();
        let adj: Adjacency = (0..n).map(|s| edges[actions[s]][s].clone()).collect();
        if crate::sync::graph::closed_classes(&adj).len() != 1 {
            return Ok(Unichain {
                holds: false,
                counterexample: Some(actions),
            });
        }
    }
    Ok(Unichain {
        holds: true,
        counterexample: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::relax::{policy_from_occupation, solve_relaxation};
    use crate::model::{builtin, example2, example4};
    use crate::sync::chain::check_sa_reachability;

    fn lp_policy(name: &str) -> ArmPolicy<f64> {
        let occ = solve_relaxation(&builtin::<f64>(name).unwrap()).unwrap();
        policy_from_occupation(occ.homogeneous())
    }

    #[test]
    fn example2_self_loops_everywhere() {
        let c = check_sufficient_conditions(&example2::<f64>(), &lp_policy("example2")).unwrap();
        assert!(c.holds(3));
        assert_eq!(c.policy_class, Some(vec![0, 1, 2]));
        assert!(!c.inconclusive);
    }

    #[test]
    fn example4_single_self_loop_at_three() {
        let c = check_sufficient_conditions(&example4::<f64>(), &lp_policy("example4")).unwrap();
        assert!(
            c.satisfied.contains(&Proposition::SelfLoopOneState { s_star: 3 }),
            "{c:?}"
        );
        assert!(!c.holds(3));
        assert_eq!(c.all_one_class, Some(vec![3, 4]));
    }

    #[test]
    fn even_ring_without_self_loops_has_nothing() {
        let n = 4;
        let mut t = vec![[vec![0.0; n], vec![0.0; n]]; n];
        for s in 0..n {
            t[s][0][(s + 1) % n] = 1.0;
            t[s][1][(s + 1) % n] = 1.0;
        }
        let m = DtModel::new(t, vec![[0.0; 2]; n]).unwrap();
        let pol = ArmPolicy::new(vec![[0.5, 0.5]; n]).unwrap();
        let c = check_sufficient_conditions(&m, &pol).unwrap();
        assert!(c.satisfied.is_empty());
        assert!(!check_sa_reachability(&m, &pol).unwrap().holds);
    }

    #[test]
    fn coprime_cycles_without_self_loops() {
        // states 0,1,2: 0->1->0 and 0->1->2->0 under both actions
        let mut t = vec![[vec![0.0; 3], vec![0.0; 3]]; 3];
        for a in 0..2 {
            t[0][a][1] = 1.0;
            t[1][a][0] = 0.5;
            t[1][a][2] = 0.5;
            t[2][a][0] = 1.0;
        }
        let m = DtModel::new(t, vec![[0.0; 2]; 3]).unwrap();
        let pol = ArmPolicy::new(vec![[0.5, 0.5]; 3]).unwrap();
        let c = check_sufficient_conditions(&m, &pol).unwrap();
        assert!(c.holds(6) && c.holds(7) && !c.holds(5), "{c:?}");
        assert!(check_sa_reachability(&m, &pol).unwrap().holds);
    }

    #[test]
    fn unichain_cases() {
        assert!(check_unichain(&example2::<f64>()).unwrap().holds);
        let u = check_unichain(&example4::<f64>()).unwrap();
        assert!(!u.holds);
        assert!(u.counterexample.is_some());
        let absorbing = DtModel::new(
            vec![[vec![1.0, 0.0], vec![1.0, 0.0]], [vec![0.0, 1.0], vec![0.0, 1.0]]],
            vec![[0.0; 2]; 2],
        )
        .unwrap();
        assert!(!check_unichain(&absorbing).unwrap().holds);
        let big = DtModel::new(vec![[vec![1.0], vec![1.0]]; 1], vec![[0.0; 2]]).unwrap();
        assert!(check_unichain(&big).unwrap().holds);
    }

    #[test]
    fn unichain_rejects_large_models() {
        let n = UNICHAIN_LIMIT + 1;
        let mut t = vec![[vec![0.0; n], vec![0.0; n]]; n];
        for s in 0..n {
            t[s][0][s] = 1.0;
            t[s][1][s] = 1.0;
        }
        let m = DtModel::new(t, vec![[0.0; 2]; n]).unwrap();
        assert!(matches!(check_unichain(&m), Err(Error::TooManyStates { .. })));
    }
}
