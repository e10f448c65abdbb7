//! Leader-and-follower product chain, reachability of the diagonal and
//! exact expected synchronization times.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ArmPolicy, DtModel, ACTIONS};
use crate::scalar::{positive, Scalar};
use crate::sync::conditions::{check_sufficient_conditions, Proposition};

/// Two arms where the follower copies the leader's action. After the first
/// step the chain lives on `(s, s_hat, a_hat)`.
#[derive(Debug, Clone, Copy)]
pub struct LeaderFollowerChain<'a, T> {
    model: &'a DtModel<T>,
    policy: &'a ArmPolicy<T>,
}

impl<'a, T: Scalar> LeaderFollowerChain<'a, T> {
    pub fn new(model: &'a DtModel<T>, policy: &'a ArmPolicy<T>) -> Result<Self> {
        if model.n_states() != policy.n_states() {
            return Err(Error::Malformed {
                field: "policy".into(),
                message: format!(
                    "policy covers {} states, model has {}",
                    policy.n_states(),
                    model.n_states()
                ),
            });
        }
        Ok(LeaderFollowerChain { model, policy })
    }

    pub fn n_states(&self) -> usize {
        self.model.n_states()
    }

    pub fn n_product(&self) -> usize {
        let n = self.n_states();
        2 * n * n
    }

    /// Index of the product state `(s, s_hat, a_hat)`.
    pub fn index(&self, s: usize, s_hat: usize, a_hat: usize) -> usize {
        (s * self.n_states() + s_hat) * 2 + a_hat
    }

    pub fn decode(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.n_states();
        (idx / 2 / n, (idx / 2) % n, idx % 2)
    }

    /// Distribution over product states after one step from the four-tuple
    /// `(s, a, s_hat, a_hat)`. The arms move independently unless their
    /// state-action pairs coincide, in which case they move together. The
    /// leader then draws its next action from the policy.
    pub fn first_step(&self, s: usize, a: usize, s_hat: usize, a_hat: usize) -> Vec<T> {
        let n = self.n_states();
        let mut out = vec![T::zero(); self.n_product()];
        if (s, a) == (s_hat, a_hat) {
            for x in 0..n {
                let p = self.model.p(s, a, x);
                for na in ACTIONS {
                    let idx = self.index(x, x, na);
                    out[idx] = out[idx] + p * self.policy.prob(x, na);
                }
            }
            return out;
        }
        for x in 0..n {
            let p = self.model.p(s, a, x);
            if p == T::zero() {
                continue;
            }
            for xh in 0..n {
                let q = p * self.model.p(s_hat, a_hat, xh);
                for na in ACTIONS {
                    let idx = self.index(x, xh, na);
                    out[idx] = out[idx] + q * self.policy.prob(xh, na);
                }
            }
        }
        out
    }

    /// Transition row of the product state `(s, s_hat, a_hat)`: both arms
    /// take `a_hat`.
    pub fn row(&self, s: usize, s_hat: usize, a_hat: usize) -> Vec<T> {
        self.first_step(s, a_hat, s_hat, a_hat)
    }

    /// Product states from which the diagonal `{s = s_hat}` can be reached.
    fn reaches_diagonal(&self) -> Vec<bool> {
        let n = self.n_states();
        let m = self.n_product();
        let mut good = vec![false; m];
        let mut reverse = vec![Vec::new(); m];
        let mut queue = VecDeque::new();
        for u in 0..m {
            let (s, sh, ah) = self.decode(u);
            if s == sh {
                good[u] = true;
                queue.push_back(u);
                continue;
            }
            for (v, p) in self.row(s, sh, ah).into_iter().enumerate() {
                if positive(p) {
                    reverse[v].push(u);
                }
            }
        }
        debug_assert!(queue.len() == 2 * n);
        while let Some(v) = queue.pop_front() {
            for &u in &reverse[v] {
                if !good[u] {
                    good[u] = true;
                    queue.push_back(u);
                }
            }
        }
        good
    }
}

/// Initial four-tuple `(s, a, s_hat, a_hat)` of the leader-follower pair
/// (follower first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SyncStart {
    pub s: usize,
    pub a: usize,
    pub s_hat: usize,
    pub a_hat: usize,
}

impl SyncStart {
    /// All four-tuples in lexicographic order.
    pub fn all(n_states: usize) -> impl Iterator<Item = SyncStart> {
        (0..n_states).flat_map(move |s| {
            ACTIONS.into_iter().flat_map(move |a| {
                (0..n_states)
                    .flat_map(move |s_hat| ACTIONS.into_iter().map(move |a_hat| SyncStart { s, a, s_hat, a_hat }))
            })
        })
    }
}

/// Outcome of the graph check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reachability {
    pub holds: bool,
    /// First start that cannot reach the diagonal.
    pub witness: Option<SyncStart>,
}

/// Checks that every four-tuple start reaches `{s = s_hat}` with positive
/// probability.
pub fn check_sa_reachability<T: Scalar>(model: &DtModel<T>, policy: &ArmPolicy<T>) -> Result<Reachability> {
    let chain = LeaderFollowerChain::new(model, policy)?;
    let good = chain.reaches_diagonal();
    let witness = SyncStart::all(model.n_states()).find(|st| {
        st.s != st.s_hat
            && !chain
                .first_step(st.s, st.a, st.s_hat, st.a_hat)
                .iter()
                .zip(&good)
                .any(|(&p, &g)| g && positive(p))
    });
    Ok(Reachability {
        holds: witness.is_none(),
        witness,
    })
}

/// Which check certified the synchronization assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaMethod {
    Reachability,
    Proposition(u8),
}

impl std::fmt::Display for SaMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SaMethod::Reachability => write!(f, "reachability"),
            SaMethod::Proposition(id) => write!(f, "proposition-{id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauEntry<T> {
    #[serde(flatten)]
    pub start: SyncStart,
    pub tau: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncReport<T> {
    pub sa_holds: bool,
    pub method: SaMethod,
    /// Ids of the sufficient conditions that hold.
    pub propositions: Vec<u8>,
    pub tau_table: Vec<TauEntry<T>>,
    pub tau_max: T,
}

impl<T: Scalar> SyncReport<T> {
    pub fn tau(&self, start: SyncStart) -> T {
        self.tau_table
            .iter()
            .find(|e| e.start == start)
            .map(|e| e.tau)
            .expect("every start is tabulated")
    }

    /// Start attaining `tau_max`.
    pub fn worst_start(&self) -> SyncStart {
        self.tau_table
            .iter()
            .fold(None::<&TauEntry<T>>, |best, e| match best {
                Some(b) if b.tau >= e.tau => Some(b),
                _ => Some(e),
            })
            .expect("table is never empty")
            .start
    }
}

/// Expected synchronization time from every four-tuple.
pub fn exact_sync_times<T: Scalar>(model: &DtModel<T>, policy: &ArmPolicy<T>) -> Result<SyncReport<T>> {
    let reach = check_sa_reachability(model, policy)?;
    if let Some(w) = reach.witness {
        return Err(Error::SyncUnreachable {
            s: w.s,
            a: w.a,
            s_hat: w.s_hat,
            a_hat: w.a_hat,
        });
    }
    let chain = LeaderFollowerChain::new(model, policy)?;
    let n = model.n_states();
    let m = chain.n_product();

    // unknowns: off-diagonal product states
    let mut slot = vec![usize::MAX; m];
    let mut states = Vec::new();
    for u in 0..m {
        let (s, sh, _) = chain.decode(u);
        if s != sh {
            slot[u] = states.len();
            states.push(u);
        }
    }
    let k = states.len();
    let mut a = vec![vec![T::zero(); k]; k];
    for (i, &u) in states.iter().enumerate() {
        let (s, sh, ah) = chain.decode(u);
        a[i][i] = T::one();
        for (v, p) in chain.row(s, sh, ah).into_iter().enumerate() {
            if slot[v] != usize::MAX {
                a[i][slot[v]] = a[i][slot[v]] - p;
            }
        }
    }
    let h = if k == 0 {
        Vec::new()
    } else {
        linalg::solve(a, vec![T::one(); k])?
    };

    let tau_table: Vec<TauEntry<T>> = SyncStart::all(n)
        .map(|start| {
            let tau = if start.s == start.s_hat {
                T::zero()
            } else {
                let step = chain.first_step(start.s, start.a, start.s_hat, start.a_hat);
                T::one()
                    + step
                        .iter()
                        .enumerate()
                        .filter(|&(v, _)| slot[v] != usize::MAX)
                        .map(|(v, &p)| p * h[slot[v]])
                        .sum::<T>()
            };
            TauEntry { start, tau }
        })
        .collect();
    let tau_max = tau_table.iter().map(|e| e.tau).fold(T::zero(), T::max);

    let conditions = check_sufficient_conditions(model, policy)?;
    let propositions: Vec<u8> = conditions.satisfied.iter().map(Proposition::id).collect();
    let method = propositions
        .first()
        .map_or(SaMethod::Reachability, |&id| SaMethod::Proposition(id));
    Ok(SyncReport {
        sa_holds: true,
        method,
        propositions,
        tau_table,
        tau_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::relax::{policy_from_occupation, solve_relaxation};
    use crate::model::{builtin, example2, example4};

    fn lp_policy(name: &str) -> ArmPolicy<f64> {
        let occ = solve_relaxation(&builtin::<f64>(name).unwrap()).unwrap();
        policy_from_occupation(occ.homogeneous())
    }

    #[test]
    fn product_rows_are_stochastic_and_coupling_absorbs() {
        let m = example4::<f64>();
        let pol = lp_policy("example4");
        let chain = LeaderFollowerChain::new(&m, &pol).unwrap();
        for u in 0..chain.n_product() {
            let (s, sh, ah) = chain.decode(u);
            assert_eq!(chain.index(s, sh, ah), u);
            let row = chain.row(s, sh, ah);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            if s == sh {
                for (v, p) in row.iter().enumerate() {
                    let (x, xh, _) = chain.decode(v);
                    assert!(*p == 0.0 || x == xh);
                }
            }
        }
    }

    #[test]
    fn leader_marginal_follows_policy() {
        let m = example2::<f64>();
        let pol = lp_policy("example2");
        let chain = LeaderFollowerChain::new(&m, &pol).unwrap();
        let (s, sh, ah) = (0, 2, 0);
        let row = chain.row(s, sh, ah);
        for xh in 0..3 {
            for na in 0..2 {
                let marginal: f64 = (0..3).map(|x| row[chain.index(x, xh, na)]).sum();
                let want = m.p(sh, ah, xh) * pol.prob(xh, na);
                assert!((marginal - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn builtins_reach_diagonal() {
        for name in ["example2", "example4"] {
            let inst = builtin::<f64>(name).unwrap();
            let r = check_sa_reachability(inst.model().as_dt().unwrap(), &lp_policy(name)).unwrap();
            assert!(r.holds, "{name}: {r:?}");
        }
    }

    #[test]
    fn phase_locked_cycles_never_meet() {
        // 0 -> 1 -> 0 and 2 -> 3 -> 2 regardless of action
        let mut t = vec![[vec![0.0; 4], vec![0.0; 4]]; 4];
        for (s, next) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
            t[s][0][next] = 1.0;
            t[s][1][next] = 1.0;
        }
        let m = DtModel::new(t, vec![[0.0; 2]; 4]).unwrap();
        let pol = ArmPolicy::new(vec![[0.5, 0.5]; 4]).unwrap();
        let r = check_sa_reachability(&m, &pol).unwrap();
        assert!(!r.holds);
        assert_eq!(
            r.witness,
            Some(SyncStart {
                s: 0,
                a: 0,
                s_hat: 1,
                a_hat: 0
            })
        );
        assert!(matches!(
            exact_sync_times(&m, &pol),
            Err(Error::SyncUnreachable {
                s: 0,
                a: 0,
                s_hat: 1,
                a_hat: 0
            })
        ));
    }

    #[test]
    fn forced_coalescence_takes_one_step() {
        let t = vec![[vec![1.0, 0.0], vec![1.0, 0.0]]; 2];
        let m = DtModel::new(t, vec![[0.0; 2]; 2]).unwrap();
        let pol = ArmPolicy::new(vec![[0.5, 0.5]; 2]).unwrap();
        let rep = exact_sync_times(&m, &pol).unwrap();
        for e in &rep.tau_table {
            let want: f64 = if e.start.s == e.start.s_hat { 0.0 } else { 1.0 };
            assert!((e.tau - want).abs() < 1e-12, "{e:?}");
        }
        assert_eq!(rep.tau_max, 1.0);
    }

    #[test]
    fn diagonal_zero_and_max_consistent() {
        let rep = exact_sync_times(&example2::<f64>(), &lp_policy("example2")).unwrap();
        assert_eq!(rep.tau_table.len(), 36);
        for e in &rep.tau_table {
            assert_eq!(e.tau == 0.0, e.start.s == e.start.s_hat);
            assert!(e.tau <= rep.tau_max);
        }
        assert_eq!(rep.tau(rep.worst_start()), rep.tau_max);
        assert!(rep.tau_max.is_finite() && rep.tau_max > 1.0);
        assert_eq!(rep.method, SaMethod::Proposition(3));
    }

    #[test]
    fn relabelling_permutes_table() {
        let m = example2::<f64>();
        let pol = lp_policy("example2");
        let perm = [2, 0, 1];
        let rep = exact_sync_times(&m, &pol).unwrap();
        let moved = exact_sync_times(&m.permute(&perm), &pol.permute(&perm)).unwrap();
        for e in &rep.tau_table {
            let st = SyncStart {
                s: perm[e.start.s],
                s_hat: perm[e.start.s_hat],
                ..e.start
            };
            assert!((moved.tau(st) - e.tau).abs() < 1e-9);
        }
        assert!((moved.tau_max - rep.tau_max).abs() < 1e-9);
    }
}
