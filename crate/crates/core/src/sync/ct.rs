//! Monte Carlo synchronization times of the continuous-time leader and
//! follower pair, simulated by uniformization at rate `2 g_max`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ArmPolicy, CtModel};
use crate::scalar::Scalar;
use crate::sim::rng::{bernoulli, derive_seed, exponential, pick, stream_rng, uniform};
use crate::sim::stats::mean_and_se;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairEstimate {
    pub s: usize,
    pub s_hat: usize,
    pub mean: f64,
    pub std_error: f64,
    pub episodes: usize,
    /// Episodes that had not synchronized by the horizon.
    pub censored: usize,
}

impl PairEstimate {
    /// Upper end of the normal 95% interval.
    pub fn upper(&self) -> f64 {
        self.mean + 1.96 * self.std_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CtSyncEstimate {
    pub pairs: Vec<PairEstimate>,
    /// Index into `pairs` of the pair with the largest mean.
    pub worst: usize,
    pub censored: usize,
    pub episodes_total: usize,
}

impl CtSyncEstimate {
    pub fn worst_pair(&self) -> &PairEstimate {
        &self.pairs[self.worst]
    }

    pub fn mean(&self) -> f64 {
        self.worst_pair().mean
    }

    pub fn std_error(&self) -> f64 {
        self.worst_pair().std_error
    }

    /// Upper confidence endpoint used as the synchronization-time estimate
    /// in bounds.
    pub fn upper(&self) -> f64 {
        self.worst_pair().upper()
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.episodes_total.max(1) as f64
    }
}

/// One episode from `(s, s_hat)`; `None` when censored at `horizon`.
///
/// Each epoch the leader redraws its action from the policy, then one
/// event fires: the leader moves with probability `G(s_hat,a)/(2g)`, the
/// follower with probability `G(s,a)/(2g)`, otherwise nothing happens.
/// Coupled arms move together.
pub fn sync_episode<T: Scalar, R: Rng + ?Sized>(
    model: &CtModel<T>,
    policy: &ArmPolicy<T>,
    start: (usize, usize),
    horizon: T,
    rng: &mut R,
) -> Option<T> {
    let (mut s, mut s_hat) = start;
    if s == s_hat {
        return Some(T::zero());
    }
    let g = model.g_max();
    if g <= T::zero() {
        return None;
    }
    let rate = g + g;
    let mut t = T::zero();
    loop {
        let a = bernoulli(rng, policy.prob(s_hat, 1));
        t = t + exponential(rng, rate);
        if t > horizon {
            return None;
        }
        let u = uniform::<T, _>(rng) * rate;
        let lead = model.total_rate(s_hat, a);
        if u < lead {
            s_hat = pick(model.rate_row(s_hat, a), u);
        } else if u < lead + model.total_rate(s, a) {
            s = pick(model.rate_row(s, a), u - lead);
        }
        if s == s_hat {
            return Some(t);
        }
    }
}

/// Estimates the mean synchronization time for every ordered pair of
/// starting states and reports the worst one.
pub fn ct_sync_time_estimate<T: Scalar>(
    model: &CtModel<T>,
    policy: &ArmPolicy<T>,
    episodes: usize,
    horizon: T,
    seed: u64,
) -> Result<CtSyncEstimate> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be at least 1".into()));
    }
    let n = model.n_states();
    if policy.n_states() != n {
        return Err(Error::Malformed {
            field: "policy".into(),
            message: format!("policy covers {} states, model has {n}", policy.n_states()),
        });
    }
    let pairs: Vec<PairEstimate> = (0..n)
        .flat_map(|s| (0..n).map(move |s_hat| (s, s_hat)))
        .map(|(s, s_hat)| {
            let pair_seed = derive_seed(seed, &[s as u64, s_hat as u64]);
            let times: Vec<Option<f64>> = (0..episodes)
                .into_par_iter()
                .map(|e| {
                    let mut rng = stream_rng(pair_seed, e as u64);
                    sync_episode(model, policy, (s, s_hat), horizon, &mut rng).map(|t| t.as_f64())
                })
                .collect();
            let done: Vec<f64> = times.iter().flatten().copied().collect();
            let (mean, std_error) = if done.is_empty() {
                (f64::INFINITY, f64::NAN)
            } else {
                mean_and_se(&done)
            };
            PairEstimate {
                s,
                s_hat,
                mean,
                std_error,
                episodes,
                censored: episodes - done.len(),
            }
        })
        .collect();
    let worst = pairs
        .iter()
        .enumerate()
        .fold(0, |best, (i, p)| if p.mean > pairs[best].mean { i } else { best });
    let censored = pairs.iter().map(|p| p.censored).sum();
    Ok(CtSyncEstimate {
        worst,
        censored,
        episodes_total: episodes * pairs.len(),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::relax::{policy_from_occupation, solve_relaxation};
    use crate::model::builtin;

    fn two_state(lam: f64, mu: f64) -> CtModel<f64> {
        let rates = vec![[vec![0.0, lam], vec![0.0, lam]], [vec![mu, 0.0], vec![mu, 0.0]]];
        CtModel::new(rates, vec![[0.0; 2]; 2]).unwrap()
    }

    #[test]
    fn diagonal_start_is_zero() {
        let m = two_state(1.0, 2.0);
        let pol = ArmPolicy::new(vec![[0.5, 0.5]; 2]).unwrap();
        let mut rng = stream_rng(1, 0);
        assert_eq!(sync_episode(&m, &pol, (1, 1), 10.0, &mut rng), Some(0.0));
        let est = ct_sync_time_estimate(&m, &pol, 10, 100.0, 1).unwrap();
        let diag = est.pairs.iter().find(|p| p.s == 0 && p.s_hat == 0).unwrap();
        assert_eq!((diag.mean, diag.std_error, diag.censored), (0.0, 0.0, 0));
    }

    #[test]
    fn drift_to_zero_matches_exponential_mean() {
        // both arms fall to 0 at rate mu; either fall synchronizes the pair
        let mu = 1.5;
        let m = two_state(0.0, mu);
        let pol = ArmPolicy::new(vec![[0.3, 0.7]; 2]).unwrap();
        let est = ct_sync_time_estimate(&m, &pol, 20_000, 1e3, 5).unwrap();
        assert_eq!(est.censored, 0);
        let w = est.worst_pair();
        assert!((w.mean - 1.0 / mu).abs() < 3.0 * w.std_error, "{w:?}");
    }

    #[test]
    fn birth_death_pair_matches_closed_form() {
        let (lam, mu) = (0.5, 2.0);
        let m = two_state(lam, mu);
        let pol = ArmPolicy::new(vec![[1.0, 0.0]; 2]).unwrap();
        let est = ct_sync_time_estimate(&m, &pol, 20_000, 1e3, 9).unwrap();
        for p in est.pairs.iter().filter(|p| p.s != p.s_hat) {
            let want = 1.0 / (lam + mu);
            assert!((p.mean - want).abs() < 3.0 * p.std_error, "{p:?}");
        }
    }

    #[test]
    fn example2_ct_is_finite_and_rarely_censored() {
        let inst = builtin::<f64>("example2-ct").unwrap();
        let occ = solve_relaxation(&inst).unwrap();
        let pol = policy_from_occupation(occ.homogeneous());
        let est = ct_sync_time_estimate(inst.model().as_ct().unwrap(), &pol, 2_000, 1e4, 11).unwrap();
        assert!(est.censored_fraction() < 0.01);
        assert!(est.mean().is_finite() && est.mean() > 0.0);
        assert!(est.upper() > est.mean());
    }

    #[test]
    fn frozen_model_censors() {
        let m = CtModel::new(vec![[vec![0.0; 2], vec![0.0; 2]]; 2], vec![[0.0; 2]; 2]).unwrap();
        let pol = ArmPolicy::new(vec![[0.5, 0.5]; 2]).unwrap();
        let est = ct_sync_time_estimate(&m, &pol, 5, 10.0, 0).unwrap();
        assert_eq!(est.censored, 10);
        assert_eq!(est.mean(), f64::INFINITY);
    }

    #[test]
    fn zero_episodes_rejected() {
        let m = two_state(1.0, 1.0);
        let pol = ArmPolicy::new(vec![[0.5, 0.5]; 2]).unwrap();
        assert!(ct_sync_time_estimate(&m, &pol, 0, 1.0, 0).is_err());
    }
}
