//! Experiment orchestration: bound inputs, gap reports, figure
//! reproductions and the resumable pipeline.

pub mod pipeline;
pub mod reproduce;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::bound::{ct_bound, dt_bound};
use crate::error::{Error, Result};
use crate::hetero::{het_sync_reports, solve_het, HetSolution};
use crate::model::{Instance, ModelKind};
use crate::sim::report::RunReport;
use crate::sync::ct::ct_sync_time_estimate;

pub use pipeline::{pipeline, CellOutcome, CellStatus, ExperimentSpec, PipelineOutcome};
pub use reproduce::{reproduce, Figure, InitProtocolChoice, ReproduceOptions, Reproduction};

/// Version of every CSV/JSON row schema written here.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format `{other}` (csv or json)"))),
        }
    }
}

/// Serializes rows as CSV (header from field names) or a JSON array.
pub fn render_rows<R: Serialize>(rows: &[R], format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r)?;
            }
            w.into_inner().map_err(|e| Error::Io(e.into_error()))
        }
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(rows)?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

pub fn write_rows<R: Serialize>(path: &Path, rows: &[R], format: Format) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, render_rows(rows, format)?)?;
    Ok(())
}

/// What the conversion-loss bound of an instance is built from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundInputs {
    pub kind: ModelKind,
    pub r_max: f64,
    /// Exact worst-case mean synchronization time (discrete time) or the
    /// Monte Carlo mean of the worst pair (continuous time).
    pub tau: f64,
    /// Upper 95% endpoint of the estimate; equals `tau` when exact.
    pub tau_upper: f64,
    pub g_max: Option<f64>,
}

impl BoundInputs {
    /// Bound at `n_arms`, using the upper endpoint in continuous time.
    pub fn bound(&self, n_arms: usize) -> f64 {
        match self.g_max {
            None => dt_bound(self.r_max, self.tau, n_arms),
            Some(g) => ct_bound(self.r_max, g, self.tau_upper, n_arms),
        }
    }

    /// Continuous-time bound at the point estimate.
    pub fn bound_at_estimate(&self, n_arms: usize) -> f64 {
        match self.g_max {
            None => dt_bound(self.r_max, self.tau, n_arms),
            Some(g) => ct_bound(self.r_max, g, self.tau, n_arms),
        }
    }
}

/// Monte Carlo settings for continuous-time synchronization estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CtSyncOptions {
    pub episodes: usize,
    pub horizon: f64,
    pub seed: u64,
}

impl Default for CtSyncOptions {
    fn default() -> Self {
        CtSyncOptions {
            episodes: 10_000,
            horizon: 1e4,
            seed: 0,
        }
    }
}

/// Discrete time: exact synchronization times of every type (fails when
/// the assumption fails). Continuous time: the single-type Monte Carlo
/// estimate.
pub fn bound_inputs(instance: &Instance<f64>, solution: &HetSolution<f64>, ct: &CtSyncOptions) -> Result<BoundInputs> {
    let r_max = instance.r_max();
    match instance.kind() {
        ModelKind::Dt => {
            let reports = het_sync_reports(instance, solution)?;
            let mut tau = 0.0f64;
            for (k, r) in reports.iter().enumerate() {
                tau = tau.max(r.as_ref().ok_or(Error::MissingSyncReport(k))?.tau_max);
            }
            Ok(BoundInputs {
                kind: ModelKind::Dt,
                r_max,
                tau,
                tau_upper: tau,
                g_max: None,
            })
        }
        ModelKind::Ct => {
            if !instance.is_homogeneous() {
                return Err(Error::Config("continuous-time bounds need a single arm type".into()));
            }
            let model = instance.model().as_ct().expect("kind checked");
            let est = ct_sync_time_estimate(model, &solution.policies[0], ct.episodes, ct.horizon, ct.seed)?;
            Ok(BoundInputs {
                kind: ModelKind::Ct,
                r_max,
                tau: est.mean(),
                tau_upper: est.upper(),
                g_max: Some(model.g_max()),
            })
        }
    }
}

/// Bound inputs straight from an instance.
pub fn instance_bound_inputs(instance: &Instance<f64>, ct: &CtSyncOptions) -> Result<BoundInputs> {
    bound_inputs(instance, &solve_het(instance)?, ct)
}

/// One row of the bound table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub schema_version: u32,
    pub kind: ModelKind,
    pub n: usize,
    pub r_max: f64,
    pub tau: f64,
    pub tau_upper: f64,
    pub g_max: Option<f64>,
    pub bound: f64,
    pub bound_at_estimate: f64,
}

/// Theoretical bounds only, one row per N.
pub fn cmd_bound(inputs: &BoundInputs, n_values: &[usize]) -> Vec<BoundRow> {
    n_values
        .iter()
        .map(|&n| BoundRow {
            schema_version: SCHEMA_VERSION,
            kind: inputs.kind,
            n,
            r_max: inputs.r_max,
            tau: inputs.tau,
            tau_upper: inputs.tau_upper,
            g_max: inputs.g_max,
            bound: inputs.bound(n),
            bound_at_estimate: inputs.bound_at_estimate(n),
        })
        .collect()
}

/// Per `(policy, N)` comparison with the relaxed value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub schema_version: u32,
    pub instance: String,
    pub policy: String,
    pub n: usize,
    pub trajectories: usize,
    pub mean: f64,
    pub ci_half_width: f64,
    pub relaxed_value: f64,
    pub gap: f64,
    /// Only FTVA rows carry a bound.
    pub bound: Option<f64>,
    /// `gap <= bound + 3 * ci_half_width`.
    pub satisfied: Option<bool>,
    pub note: String,
}

impl GapRow {
    pub fn from_report(instance: &str, report: &RunReport, bound: Option<f64>, note: &str) -> Self {
        let gap = report.gap();
        let ci = report.reward.ci_half_width;
        GapRow {
            schema_version: SCHEMA_VERSION,
            instance: instance.to_string(),
            policy: report.policy.clone(),
            n: report.n_arms,
            trajectories: report.trajectories.len(),
            mean: report.reward.mean,
            ci_half_width: ci,
            relaxed_value: report.relaxed_value,
            gap,
            bound,
            satisfied: bound.map(|b| gap <= b + 3.0 * ci.max(0.0)),
            note: note.to_string(),
        }
    }
}

/// Mean reward of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardRow {
    pub schema_version: u32,
    pub policy: String,
    pub n: usize,
    /// Initial-distribution replication (random-simplex runs only).
    pub rep: Option<usize>,
    pub trajectory: usize,
    pub mean_reward: f64,
}

impl RewardRow {
    pub fn from_report(report: &RunReport, rep: Option<usize>) -> Vec<Self> {
        report
            .trajectories
            .iter()
            .map(|t| RewardRow {
                schema_version: SCHEMA_VERSION,
                policy: report.policy.clone(),
                n: report.n_arms,
                rep,
                trajectory: t.index,
                mean_reward: t.mean_reward,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;

    #[test]
    fn bound_rows_scale() {
        let inst = builtin::<f64>("example2").unwrap();
        let inputs = instance_bound_inputs(&inst, &CtSyncOptions::default()).unwrap();
        assert_eq!(inputs.r_max, 0.37401552);
        let rows = cmd_bound(&inputs, &[10_000, 20_000]);
        assert!((rows[0].bound - inputs.r_max * inputs.tau / 100.0).abs() < 1e-15);
        assert!((rows[1].bound / rows[0].bound - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn ct_bound_form() {
        let inst = builtin::<f64>("example2-ct").unwrap();
        let opts = CtSyncOptions {
            episodes: 2_000,
            ..Default::default()
        };
        let inputs = instance_bound_inputs(&inst, &opts).unwrap();
        let g = inputs.g_max.unwrap();
        let want = inputs.r_max * (1.0 + 2.0 * g * inputs.tau_upper) / 10.0;
        assert!((inputs.bound(100) - want).abs() < 1e-15);
        assert!(inputs.tau_upper > inputs.tau);
    }

    #[test]
    fn csv_header_and_empty_options() {
        let rows = vec![RewardRow {
            schema_version: SCHEMA_VERSION,
            policy: "ftva".into(),
            n: 10,
            rep: None,
            trajectory: 0,
            mean_reward: 0.5,
        }];
        let text = String::from_utf8(render_rows(&rows, Format::Csv).unwrap()).unwrap();
        assert_eq!(
            text,
            "schema_version,policy,n,rep,trajectory,mean_reward\n1,ftva,10,,0,0.5\n"
        );
        assert!("yaml".parse::<Format>().is_err());
    }
}
