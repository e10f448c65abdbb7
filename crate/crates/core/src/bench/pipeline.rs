//! Resumable experiment pipeline over `(policy, N)` cells.
//!
//! Layout of the output directory:
//! `lp.json`, `sync.json`, `cells/<policy>__n<N>.json`, and the derived
//! tables `gap.<fmt>`, `rewards.<fmt>`, `failures.<fmt>`. Cell files and the
//! two analysis files are never replaced by different content; the derived
//! tables are rebuilt from the cells on every run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bench::{bound_inputs, write_rows, CtSyncOptions, Format, GapRow, RewardRow, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::hetero::{het_sync_reports, solve_het};
use crate::io::resolve_instance;
use crate::model::{Instance, ModelKind};
use crate::policy::selector::PolicySelector;
use crate::sim::initial::InitialProtocol;
use crate::sim::report::{RunConfig, RunReport};
use crate::sim::run_with;
use crate::sim::stats::Summary;
use crate::sync::ct::ct_sync_time_estimate;

fn default_trajectories() -> usize {
    20
}

fn default_initial() -> String {
    "all-in:0".into()
}

/// A sweep over policies and population sizes on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Built-in name or path to an instance file.
    pub instance: String,
    pub policies: Vec<String>,
    pub n_values: Vec<usize>,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    pub horizon: f64,
    #[serde(default)]
    pub burn_in: Option<f64>,
    #[serde(default = "default_initial")]
    pub initial: String,
    #[serde(default)]
    pub seed: u64,
    /// Overridden by an explicit output directory.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub sync_episodes: Option<usize>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Checks everything that does not depend on a particular cell.
    pub fn validate(&self) -> Result<(Vec<PolicySelector>, InitialProtocol)> {
        if self.policies.is_empty() {
            return Err(Error::Config("experiment lists no policies".into()));
        }
        if self.n_values.is_empty() {
            return Err(Error::Config("experiment lists no population sizes".into()));
        }
        if self.trajectories == 0 {
            return Err(Error::Config("at least one trajectory is required".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Config(format!("horizon {} must be positive", self.horizon)));
        }
        let selectors = self
            .policies
            .iter()
            .map(|p| p.parse())
            .collect::<Result<Vec<PolicySelector>>>()?;
        Ok((selectors, self.initial.parse()?))
    }

    /// Everything that determines cell results.
    fn key(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("spec serializes");
        if let Value::Object(m) = &mut v {
            m.remove("out_dir");
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellStatus {
    Computed,
    Reused,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellOutcome {
    pub policy: String,
    pub n: usize,
    #[serde(flatten)]
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineOutcome {
    pub out_dir: PathBuf,
    pub cells: Vec<CellOutcome>,
    /// Analysis steps that failed (`lp`, `sync`), with messages.
    pub failures: Vec<FailureRow>,
    pub gap: Vec<GapRow>,
}

impl PipelineOutcome {
    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRow {
    pub schema_version: u32,
    pub stage: String,
    pub policy: Option<String>,
    pub n: Option<usize>,
    pub error: String,
}

#[derive(Serialize)]
struct CellRecordOut<'a> {
    schema_version: u32,
    spec: &'a Value,
    policy: &'a str,
    n: usize,
    mean: f64,
    ci_half_width: f64,
    rewards: Vec<f64>,
    report: &'a RunReport,
}

#[derive(Deserialize)]
struct CellRecordIn {
    spec: Value,
    policy: String,
    n: usize,
    rewards: Vec<f64>,
    report: Value,
}

/// Writes `bytes` unless the file exists with different content.
fn write_guarded(path: &Path, bytes: &[u8]) -> Result<()> {
    match fs::read(path) {
        Ok(existing) if existing == bytes => Ok(()),
        Ok(_) => Err(Error::Conflict(path.to_path_buf())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            fs::write(path, bytes)?;
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

fn cell_file(dir: &Path, policy: &str, n: usize) -> PathBuf {
    let safe: String = policy
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    dir.join("cells").join(format!("{safe}__n{n}.json"))
}

fn pretty<S: Serialize>(value: &S) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn sync_artifact(
    instance: &Instance<f64>,
    spec: &ExperimentSpec,
    policies: &crate::hetero::HetSolution<f64>,
) -> Result<Value> {
    match instance.kind() {
        ModelKind::Dt => Ok(serde_json::to_value(het_sync_reports(instance, policies)?)?),
        ModelKind::Ct => {
            let model = instance
                .model()
                .as_ct()
                .ok_or_else(|| Error::Config("continuous-time synchronization needs one arm type".into()))?;
            let est = ct_sync_time_estimate(
                model,
                &policies.policies[0],
                spec.sync_episodes.unwrap_or(CtSyncOptions::default().episodes),
                CtSyncOptions::default().horizon,
                spec.seed,
            )?;
            Ok(serde_json::to_value(est)?)
        }
    }
}

/// Runs every `(policy, N)` cell that has no stored result, records
/// failures and keeps going, then rebuilds the derived tables.
pub fn pipeline(spec: &ExperimentSpec, out_dir: &Path, format: Format) -> Result<PipelineOutcome> {
    let (selectors, initial) = spec.validate()?;
    let instance = resolve_instance::<f64>(&spec.instance)?;
    fs::create_dir_all(out_dir.join("cells"))?;
    let key = spec.key();
    let mut failures = Vec::new();
    let fail = |stage: &str, policy: Option<&str>, n: Option<usize>, e: &Error| FailureRow {
        schema_version: SCHEMA_VERSION,
        stage: stage.to_string(),
        policy: policy.map(str::to_string),
        n,
        error: e.to_string(),
    };

    let solution = solve_het(&instance)?;
    if let Err(e) = write_guarded(&out_dir.join("lp.json"), &pretty(&solution)?) {
        failures.push(fail("lp", None, None, &e));
    }
    let ct_opts = CtSyncOptions {
        episodes: spec.sync_episodes.unwrap_or(CtSyncOptions::default().episodes),
        seed: spec.seed,
        ..Default::default()
    };
    let bound = match sync_artifact(&instance, spec, &solution)
        .and_then(|v| write_guarded(&out_dir.join("sync.json"), &pretty(&v)?))
        .and_then(|_| bound_inputs(&instance, &solution, &ct_opts))
    {
        Ok(b) => Some(b),
        Err(e) => {
            failures.push(fail("sync", None, None, &e));
            None
        }
    };

    let mut cells = Vec::new();
    let mut gap = Vec::new();
    let mut rewards = Vec::new();
    for &n in &spec.n_values {
        for (name, selector) in spec.policies.iter().zip(&selectors) {
            let path = cell_file(out_dir, name, n);
            let row_bound = if selector.is_ftva() {
                bound.as_ref().map(|b| b.bound(n))
            } else {
                None
            };
            let outcome = run_cell(spec, &key, &instance, &solution.measure, selector, &initial, n, &path);
            let status = match outcome {
                Ok((status, rec)) => {
                    let s = Summary::of(&rec.rewards);
                    let v_rel = solution.value;
                    let g = v_rel - s.mean;
                    gap.push(GapRow {
                        schema_version: SCHEMA_VERSION,
                        instance: spec.instance.clone(),
                        policy: rec.policy.clone(),
                        n: rec.n,
                        trajectories: s.n,
                        mean: s.mean,
                        ci_half_width: s.ci_half_width,
                        relaxed_value: v_rel,
                        gap: g,
                        bound: row_bound,
                        satisfied: row_bound.map(|b| g <= b + 3.0 * s.ci_half_width.max(0.0)),
                        note: String::new(),
                    });
                    rewards.extend(rec.rewards.iter().enumerate().map(|(t, &r)| RewardRow {
                        schema_version: SCHEMA_VERSION,
                        policy: rec.policy.clone(),
                        n: rec.n,
                        rep: None,
                        trajectory: t,
                        mean_reward: r,
                    }));
                    status
                }
                Err(e) => {
                    failures.push(fail("cell", Some(name), Some(n), &e));
                    CellStatus::Failed { error: e.to_string() }
                }
            };
            cells.push(CellOutcome {
                policy: name.clone(),
                n,
                status,
            });
        }
    }

    let ext = format.extension();
    write_rows(&out_dir.join(format!("gap.{ext}")), &gap, format)?;
    write_rows(&out_dir.join(format!("rewards.{ext}")), &rewards, format)?;
    write_rows(&out_dir.join(format!("failures.{ext}")), &failures, format)?;
    Ok(PipelineOutcome {
        out_dir: out_dir.to_path_buf(),
        cells,
        failures,
        gap,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    spec: &ExperimentSpec,
    key: &Value,
    instance: &Instance<f64>,
    measure: &crate::lp::relax::OccupationMeasure<f64>,
    selector: &PolicySelector,
    initial: &InitialProtocol,
    n: usize,
    path: &Path,
) -> Result<(CellStatus, CellRecordIn)> {
    if path.exists() {
        let rec: CellRecordIn = serde_json::from_str(&fs::read_to_string(path)?)?;
        if &rec.spec != key || rec.n != n || rec.report.is_null() {
            return Err(Error::Conflict(path.to_path_buf()));
        }
        return Ok((CellStatus::Reused, rec));
    }
    let mut config = RunConfig::new(n, spec.horizon)
        .with_policy(selector.clone())
        .with_initial(initial.clone())
        .with_trajectories(spec.trajectories)
        .with_seed(spec.seed);
    config.burn_in = spec.burn_in;
    let report = run_with(instance, &config, measure)?;
    let rewards: Vec<f64> = report.trajectories.iter().map(|t| t.mean_reward).collect();
    let name = selector.to_string();
    let out = CellRecordOut {
        schema_version: SCHEMA_VERSION,
        spec: key,
        policy: &name,
        n,
        mean: report.reward.mean,
        ci_half_width: report.reward.ci_half_width,
        rewards: rewards.clone(),
        report: &report,
    };
    write_guarded(path, &pretty(&out)?)?;
    Ok((
        CellStatus::Computed,
        CellRecordIn {
            spec: key.clone(),
            policy: name,
            n,
            rewards,
            report: Value::Bool(true),
        },
    ))
}
