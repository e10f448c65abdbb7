//! Initial real-state protocols.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::sim::rng::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialProtocol {
    /// Every arm starts in one state.
    AllIn(usize),
    /// Given fractions of arms per state, rounded by largest remainder.
    Fractions(Vec<(usize, f64)>),
    /// Fractions drawn from a symmetric Dirichlet(1) keyed by the seed.
    RandomSimplex { seed: u64 },
}

impl Default for InitialProtocol {
    fn default() -> Self {
        InitialProtocol::AllIn(0)
    }
}

/// Rounds `fractions * n` to integers summing to `n`: floors first, then
/// one extra unit to the largest remainders (earlier entries win ties).
pub fn largest_remainder(fractions: &[f64], n: usize) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Symmetric Dirichlet(1) draw of dimension `k`.
pub fn dirichlet_ones<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

impl InitialProtocol {
    /// Number of arms starting in each state.
    pub fn counts(&self, n_states: usize, n_arms: usize) -> Result<Vec<usize>> {
        let check = |s: usize| {
            if s < n_states {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "initial state {s} out of range (|S| = {n_states})"
                )))
            }
        };
        match self {
            InitialProtocol::AllIn(s) => {
                check(*s)?;
                let mut c = vec![0; n_states];
                c[*s] = n_arms;
                Ok(c)
            }
            InitialProtocol::Fractions(parts) => {
                let total: f64 = parts.iter().map(|p| p.1).sum();
                if (total - 1.0).abs() > 1e-9 || parts.iter().any(|p| p.1 < 0.0) {
                    return Err(Error::Config(format!("initial fractions sum to {total}, expected 1")));
                }
                let fr: Vec<f64> = parts.iter().map(|p| p.1).collect();
                let mut c = vec![0; n_states];
                for (&(s, _), k) in parts.iter().zip(largest_remainder(&fr, n_arms)) {
                    check(s)?;
                    c[s] += k;
                }
                Ok(c)
            }
            InitialProtocol::RandomSimplex { seed } => {
                let fr = dirichlet_ones(&mut stream_rng(*seed, 0), n_states);
                Ok(largest_remainder(&fr, n_arms))
            }
        }
    }

    /// Real states of all arms, in contiguous blocks by state.
    pub fn states(&self, n_states: usize, n_arms: usize) -> Result<Vec<usize>> {
        Ok(self
            .counts(n_states, n_arms)?
            .into_iter()
            .enumerate()
            .flat_map(|(s, c)| std::iter::repeat_n(s, c))
            .collect())
    }
}

impl fmt::Display for InitialProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialProtocol::AllIn(s) => write!(f, "all-in:{s}"),
            InitialProtocol::Fractions(parts) => {
                let body: Vec<String> = parts.iter().map(|(s, p)| format!("{s}={p}")).collect();
                write!(f, "fractions:{}", body.join(","))
            }
            InitialProtocol::RandomSimplex { seed } => write!(f, "random-simplex:{seed}"),
        }
    }
}

impl Serialize for InitialProtocol {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn parse_fraction(text: &str) -> Option<f64> {
    match text.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => text.trim().parse().ok(),
    }
}

impl FromStr for InitialProtocol {
    type Err = Error;

    /// `all-in:S`, `fractions:S=F,S=F` (F may be `p/q`), `random-simplex:SEED`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse initial protocol `{s}`"));
        let (kind, body) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "all-in" => Ok(InitialProtocol::AllIn(body.trim().parse().map_err(|_| bad())?)),
            "fractions" => body
                .split(',')
                .map(|part| {
                    let (st, fr) = part.split_once('=').ok_or_else(bad)?;
                    Ok((
                        st.trim().parse().map_err(|_| bad())?,
                        parse_fraction(fr).ok_or_else(bad)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()
                .map(InitialProtocol::Fractions),
            "random-simplex" => Ok(InitialProtocol::RandomSimplex {
                seed: body.trim().parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirds_round_to_333_and_667() {
        let p = InitialProtocol::Fractions(vec![(1, 1.0 / 3.0), (2, 2.0 / 3.0)]);
        assert_eq!(p.counts(8, 1000).unwrap(), vec![0, 333, 667, 0, 0, 0, 0, 0]);
        assert_eq!(p.counts(8, 100).unwrap()[1..3], [33, 67]);
        let states = p.states(8, 6).unwrap();
        assert_eq!(states, vec![1, 1, 2, 2, 2, 2]);
    }

    #[test]
    fn largest_remainder_sums_to_n() {
        assert_eq!(largest_remainder(&[0.5, 0.5], 3), vec![2, 1]);
        assert_eq!(largest_remainder(&[0.2, 0.3, 0.5], 7).iter().sum::<usize>(), 7);
    }

    #[test]
    fn fractions_must_sum_to_one() {
        let p = InitialProtocol::Fractions(vec![(0, 0.5), (1, 0.4)]);
        assert!(p.counts(2, 10).is_err());
        assert!(InitialProtocol::AllIn(3).counts(2, 10).is_err());
    }

    #[test]
    fn random_simplex_is_seeded() {
        let a = InitialProtocol::RandomSimplex { seed: 4 }.counts(8, 1000).unwrap();
        let b = InitialProtocol::RandomSimplex { seed: 4 }.counts(8, 1000).unwrap();
        let c = InitialProtocol::RandomSimplex { seed: 5 }.counts(8, 1000).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.iter().sum::<usize>(), 1000);
    }

    #[test]
    fn dirichlet_mean_is_uniform() {
        let mut rng = stream_rng(0, 0);
        let mut acc = [0.0; 4];
        for _ in 0..20_000 {
            for (a, d) in acc.iter_mut().zip(dirichlet_ones(&mut rng, 4)) {
                *a += d;
            }
        }
        for a in acc {
            assert!((a / 20_000.0 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn parse_round_trip() {
        let p: InitialProtocol = "fractions:1=1/3,2=2/3".parse().unwrap();
        assert_eq!(p.counts(3, 1000).unwrap(), vec![0, 333, 667]);
        for s in ["all-in:1", "random-simplex:9", "fractions:0=0.25,3=0.75"] {
            assert_eq!(s.parse::<InitialProtocol>().unwrap().to_string(), s);
        }
        assert!("uniform".parse::<InitialProtocol>().is_err());
    }
}
