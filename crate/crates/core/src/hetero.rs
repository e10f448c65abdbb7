//! Populations of several arm types: per-type relaxation, per-type
//! synchronization reports and the combined bound.

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::bound::dt_bound;
use crate::error::{Error, Result};
use crate::lp::relax::{policies, solve_relaxation, OccupationMeasure};
use crate::model::{ArmPolicy, Instance};
use crate::scalar::Scalar;
use crate::sim::rng::stream_rng;
use crate::sync::chain::{exact_sync_times, SyncReport};

/// Type of every arm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TypedPopulation {
    pub type_of: Vec<usize>,
    pub counts: Vec<usize>,
}

impl TypedPopulation {
    /// Contiguous blocks: the first `beta_0 N` arms are type 0, and so on.
    pub fn contiguous<T: Scalar>(instance: &Instance<T>, n_arms: usize) -> Result<Self> {
        let counts = instance.type_counts(n_arms)?;
        let total: usize = counts.iter().sum();
        if total != n_arms {
            return Err(Error::Config(format!("type counts sum to {total}, expected {n_arms}")));
        }
        let type_of = counts
            .iter()
            .enumerate()
            .flat_map(|(k, &c)| std::iter::repeat_n(k, c))
            .collect();
        Ok(TypedPopulation { type_of, counts })
    }

    /// Same counts, arms shuffled by a seeded permutation.
    pub fn shuffled<T: Scalar>(instance: &Instance<T>, n_arms: usize, seed: u64) -> Result<Self> {
        let mut pop = Self::contiguous(instance, n_arms)?;
        pop.type_of.shuffle(&mut stream_rng(seed, 0));
        Ok(pop)
    }

    pub fn n_arms(&self) -> usize {
        self.type_of.len()
    }
}

/// Relaxation of a multi-type instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HetSolution<T> {
    pub measure: OccupationMeasure<T>,
    pub policies: Vec<ArmPolicy<T>>,
    pub value: T,
}

pub fn solve_het<T: Scalar>(instance: &Instance<T>) -> Result<HetSolution<T>> {
    let measure = solve_relaxation(instance)?;
    Ok(HetSolution {
        policies: policies(&measure),
        value: measure.value,
        measure,
    })
}

/// Exact synchronization report of every discrete-time type under its
/// relaxed policy; `None` where the type is continuous-time.
pub fn het_sync_reports<T: Scalar>(
    instance: &Instance<T>,
    solution: &HetSolution<T>,
) -> Result<Vec<Option<SyncReport<T>>>> {
    instance
        .types()
        .iter()
        .zip(&solution.policies)
        .map(|(t, p)| t.model.as_dt().map(|m| exact_sync_times(m, p)).transpose())
        .collect()
}

/// `r_max * max_k tau_max_k / sqrt(N)`; every type needs a report.
pub fn het_bound<T: Scalar>(reports: &[Option<SyncReport<T>>], r_max: f64, n_arms: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for (k, r) in reports.iter().enumerate() {
        let r = r.as_ref().ok_or(Error::MissingSyncReport(k))?;
        worst = worst.max(r.tau_max.as_f64());
    }
    if reports.is_empty() {
        return Err(Error::MissingSyncReport(0));
    }
    Ok(dt_bound(r_max, worst, n_arms))
}
