//! Reward-versus-N sweeps on the built-in instances.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::bench::{bound_inputs, write_rows, CtSyncOptions, Format, GapRow, RewardRow, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::hetero::solve_het;
use crate::model::builtin;
use crate::policy::selector::PolicySelector;
use crate::sim::initial::InitialProtocol;
use crate::sim::report::RunConfig;
use crate::sim::rng::derive_seed;
use crate::sim::run_with;
use crate::sim::stats::Summary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    /// Three-state instance from all arms in the first state.
    Fig2,
    /// Eight-state instance where index policies stall.
    Fig4,
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Figure::Fig2 => "fig2",
            Figure::Fig4 => "fig4",
        })
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(Figure::Fig2),
            "fig4" => Ok(Figure::Fig4),
            other => Err(Error::Config(format!("unknown figure `{other}` (fig2 or fig4)"))),
        }
    }
}

/// Initial distributions of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitProtocolChoice {
    /// The figure's fixed initial distribution.
    #[default]
    Fixed,
    /// Dirichlet(1) initial distributions, one per replication.
    RandomSimplex,
}

impl FromStr for InitProtocolChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" | "default" => Ok(InitProtocolChoice::Fixed),
            "random-simplex" => Ok(InitProtocolChoice::RandomSimplex),
            other => Err(Error::Config(format!(
                "unknown protocol `{other}` (fixed or random-simplex)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproduceOptions {
    pub figure: Figure,
    pub seed: u64,
    pub trajectories: usize,
    pub horizon: f64,
    pub n_values: Vec<usize>,
    pub protocol: InitProtocolChoice,
    pub reps: usize,
}

impl ReproduceOptions {
    /// Full sweep: N = 100..1000, 50 trajectories of 1000 steps, no burn-in.
    pub fn new(figure: Figure) -> Self {
        ReproduceOptions {
            figure,
            seed: 0,
            trajectories: 50,
            horizon: 1000.0,
            n_values: (1..=10).map(|k| 100 * k).collect(),
            protocol: InitProtocolChoice::Fixed,
            reps: 20,
        }
    }
}

struct FigureSetup {
    instance: &'static str,
    policies: Vec<(&'static str, &'static str)>,
    initial: &'static str,
}

fn setup(figure: Figure) -> FigureSetup {
    match figure {
        Figure::Fig2 => FigureSetup {
            instance: "example2",
            policies: vec![
                ("ftva", ""),
                (
                    "priority:lagrangian",
                    "Lagrangian index priority; on this instance it ranks states as the Whittle index does",
                ),
            ],
            initial: "all-in:0",
        },
        Figure::Fig4 => FigureSetup {
            instance: "example4",
            policies: vec![("ftva", ""), ("twoclass", ""), ("priority:lagrangian:0", "")],
            initial: "fractions:1=1/3,2=2/3",
        },
    }
}

/// Worst (FTVA) or best (baselines) mean over initial distributions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeRow {
    pub schema_version: u32,
    pub policy: String,
    pub n: usize,
    pub reps: usize,
    pub min_mean: f64,
    pub max_mean: f64,
    pub relaxed_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reproduction {
    pub figure: Figure,
    pub gap: Vec<GapRow>,
    pub rewards: Vec<RewardRow>,
    pub envelope: Vec<EnvelopeRow>,
}

impl Reproduction {
    /// Writes `<fig>_gap`, `<fig>_rewards` and, for random-simplex sweeps,
    /// `<fig>_envelope`; returns the paths written.
    pub fn write(&self, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
        let ext = format.extension();
        let mut paths = Vec::new();
        let gap = dir.join(format!("{}_gap.{ext}", self.figure));
        write_rows(&gap, &self.gap, format)?;
        paths.push(gap);
        let rewards = dir.join(format!("{}_rewards.{ext}", self.figure));
        write_rows(&rewards, &self.rewards, format)?;
        paths.push(rewards);
        if !self.envelope.is_empty() {
            let env = dir.join(format!("{}_envelope.{ext}", self.figure));
            write_rows(&env, &self.envelope, format)?;
            paths.push(env);
        }
        Ok(paths)
    }
}

/// Runs a figure sweep. All policies share the trajectory streams of a
/// cell, so the curves use common random numbers.
pub fn reproduce(opts: &ReproduceOptions) -> Result<Reproduction> {
    let fig = setup(opts.figure);
    let instance = builtin::<f64>(fig.instance)?;
    let solution = solve_het(&instance)?;
    let bound = bound_inputs(&instance, &solution, &CtSyncOptions::default())?;
    let mut gap = Vec::new();
    let mut rewards = Vec::new();
    let mut envelope = Vec::new();
    for &n in &opts.n_values {
        for &(policy, note) in &fig.policies {
            let selector: PolicySelector = policy.parse()?;
            let is_ftva = selector.is_ftva();
            let base = RunConfig::new(n, opts.horizon)
                .with_policy(selector)
                .with_trajectories(opts.trajectories)
                .with_burn_in(0.0);
            let row_bound = is_ftva.then(|| bound.bound(n));
            match opts.protocol {
                InitProtocolChoice::Fixed => {
                    let config = base.with_seed(opts.seed).with_initial(fig.initial.parse()?);
                    let report = run_with(&instance, &config, &solution.measure)?;
                    gap.push(GapRow::from_report(fig.instance, &report, row_bound, note));
                    rewards.extend(RewardRow::from_report(&report, None));
                }
                InitProtocolChoice::RandomSimplex => {
                    let mut means = Vec::with_capacity(opts.reps);
                    let mut worst: Option<(f64, Summary, usize)> = None;
                    for rep in 0..opts.reps {
                        let config = base
                            .clone()
                            .with_seed(derive_seed(opts.seed, &[rep as u64]))
                            .with_initial(InitialProtocol::RandomSimplex {
                                seed: derive_seed(opts.seed, &[u64::MAX, rep as u64]),
                            });
                        let report = run_with(&instance, &config, &solution.measure)?;
                        rewards.extend(RewardRow::from_report(&report, Some(rep)));
                        let m = report.reward.mean;
                        means.push(m);
                        // FTVA is judged by its worst start, baselines by their best
                        let pick = match worst {
                            None => true,
                            Some((w, _, _)) => (is_ftva && m < w) || (!is_ftva && m > w),
                        };
                        if pick {
                            worst = Some((m, report.reward, report.trajectories.len()));
                        }
                    }
                    let min = means.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let v_rel = solution.value;
                    envelope.push(EnvelopeRow {
                        schema_version: SCHEMA_VERSION,
                        policy: policy.to_string(),
                        n,
                        reps: opts.reps,
                        min_mean: min,
                        max_mean: max,
                        relaxed_value: v_rel,
                    });
                    if let Some((m, summary, r)) = worst {
                        let gap_value = v_rel - m;
                        let extreme = if is_ftva { "minimum" } else { "maximum" };
                        gap.push(GapRow {
                            schema_version: SCHEMA_VERSION,
                            instance: fig.instance.to_string(),
                            policy: policy.to_string(),
                            n,
                            trajectories: r,
                            mean: m,
                            ci_half_width: summary.ci_half_width,
                            relaxed_value: v_rel,
                            gap: gap_value,
                            bound: row_bound,
                            satisfied: row_bound.map(|b| gap_value <= b + 3.0 * summary.ci_half_width),
                            note: format!("{extreme} over {} random initial distributions", opts.reps),
                        });
                    }
                }
            }
        }
    }
    Ok(Reproduction {
        figure: opts.figure,
        gap,
        rewards,
        envelope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::render_rows;

    fn small(figure: Figure) -> ReproduceOptions {
        ReproduceOptions {
            trajectories: 3,
            horizon: 60.0,
            n_values: vec![20, 40],
            seed: 7,
            ..ReproduceOptions::new(figure)
        }
    }

    #[test]
    fn fig2_rows() {
        let rep = reproduce(&small(Figure::Fig2)).unwrap();
        assert_eq!(rep.gap.len(), 4);
        assert_eq!(rep.rewards.len(), 12);
        assert!(rep.gap[0].bound.is_some() && rep.gap[1].bound.is_none());
        assert!(rep.gap[1].note.contains("Whittle"));
    }

    #[test]
    fn deterministic_bytes() {
        let a = reproduce(&small(Figure::Fig4)).unwrap();
        let b = reproduce(&small(Figure::Fig4)).unwrap();
        assert_eq!(
            render_rows(&a.rewards, Format::Csv).unwrap(),
            render_rows(&b.rewards, Format::Csv).unwrap()
        );
        assert_eq!(
            render_rows(&a.gap, Format::Json).unwrap(),
            render_rows(&b.gap, Format::Json).unwrap()
        );
    }

    #[test]
    fn random_simplex_envelope() {
        let opts = ReproduceOptions {
            protocol: InitProtocolChoice::RandomSimplex,
            reps: 3,
            n_values: vec![20],
            ..small(Figure::Fig4)
        };
        let rep = reproduce(&opts).unwrap();
        assert_eq!(rep.envelope.len(), 3);
        assert!(rep.envelope.iter().all(|e| e.min_mean <= e.max_mean));
        assert_eq!(rep.rewards.len(), 3 * 3 * 3);
        assert_eq!(rep.gap[0].mean, rep.envelope[0].min_mean);
        assert_eq!(rep.gap[1].mean, rep.envelope[1].max_mean);
    }
}
