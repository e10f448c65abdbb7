//! Priority baselines: activate arms by state class, uniformly at random
//! inside the marginal class.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::DtModel;
use crate::policy::ftva::choose;
use crate::scalar::Scalar;
use crate::sim::rng::{pick, uniform};

/// Ordered classes of states; earlier classes are served first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorityPolicy {
    groups: Vec<Vec<usize>>,
    rank: Vec<usize>,
}

impl PriorityPolicy {
    /// `groups` must partition `0..n_states`.
    pub fn new(groups: Vec<Vec<usize>>, n_states: usize) -> Result<Self> {
        let mut rank = vec![usize::MAX; n_states];
        for (g, group) in groups.iter().enumerate() {
            for &s in group {
                if s >= n_states {
                    return Err(Error::Config(format!("priority names state {s} of {n_states}")));
                }
                if rank[s] != usize::MAX {
                    return Err(Error::Config(format!("priority lists state {s} twice")));
                }
                rank[s] = g;
            }
        }
        if let Some(s) = rank.iter().position(|&r| r == usize::MAX) {
            return Err(Error::Config(format!("priority omits state {s}")));
        }
        Ok(PriorityPolicy { groups, rank })
    }

    /// Strict order, one state per class.
    pub fn strict(order: &[usize], n_states: usize) -> Result<Self> {
        Self::new(order.iter().map(|&s| vec![s]).collect(), n_states)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn rank(&self, s: usize) -> usize {
        self.rank[s]
    }

    /// Sets `actions` to activate exactly `budget` arms.
    pub fn select<R: Rng + ?Sized>(&self, real: &[usize], budget: usize, actions: &mut [usize], rng: &mut R) {
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); self.groups.len()];
        for (i, &s) in real.iter().enumerate() {
            buckets[self.rank[s]].push(i);
        }
        actions.iter_mut().for_each(|a| *a = 0);
        let mut left = budget;
        for bucket in &mut buckets {
            if left == 0 {
                break;
            }
            let take = left.min(bucket.len());
            for &i in choose(rng, bucket, take) {
                actions[i] = 1;
            }
            left -= take;
        }
        assert_eq!(left, 0, "budget {budget} exceeds {} arms", real.len());
    }
}

/// One step of a priority policy on a homogeneous population: selects
/// actions, collects the per-arm reward and moves the arms.
pub fn priority_step<T: Scalar, R: Rng + ?Sized>(
    policy: &PriorityPolicy,
    model: &DtModel<T>,
    budget: usize,
    real: &mut [usize],
    actions: &mut [usize],
    rng: &mut R,
) -> f64 {
    policy.select(real, budget, actions, rng);
    let mut reward = 0.0;
    for (s, &a) in real.iter_mut().zip(actions.iter()) {
        reward += model.r(*s, a).as_f64();
        *s = pick(model.row(*s, a), uniform::<T, _>(rng));
    }
    reward / real.len() as f64
}
