use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ftva::bench::{
    cmd_bound, instance_bound_inputs, pipeline, render_rows, reproduce, CtSyncOptions, ExperimentSpec, Figure, Format,
    InitProtocolChoice, ReproduceOptions,
};
use ftva::hetero::solve_het;
use ftva::io::{load_policy, resolve_instance};
use ftva::lp::stationary_marginal;
use ftva::policy::PolicySelector;
use ftva::sim::{run_with, InitialProtocol, RunConfig};
use ftva::sync::{
    check_sa_reachability, check_sufficient_conditions, check_unichain, ct_sync_time_estimate, exact_sync_times,
};
use ftva::{ArmPolicy, Error, ModelKind, RbInstance};

#[derive(Parser)]
#[command(
    name = "ftva",
    version,
    about = "Restless-bandit relaxations, synchronization checks and FTVA simulation"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; tables go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Table format.
    #[arg(long, global = true, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the single-armed relaxation.
    SolveLp {
        /// Built-in name (example2, example4, example2-ct) or instance file.
        #[arg(long)]
        instance: String,
    },
    /// Check the synchronization assumption for a single-armed policy.
    CheckSa {
        #[arg(long)]
        instance: String,
        /// `lp-optimal` or a policy file.
        #[arg(long, default_value = "lp-optimal")]
        policy: String,
    },
    /// Expected synchronization times (exact in discrete time, Monte Carlo in continuous time).
    SyncTime {
        #[arg(long)]
        instance: String,
        #[arg(long, default_value = "lp-optimal")]
        policy: String,
        #[arg(long, default_value_t = 10_000)]
        episodes: usize,
        /// Censoring horizon per episode (continuous time).
        #[arg(long, default_value_t = 1e4)]
        horizon: f64,
    },
    /// Simulate N arms under a policy.
    Simulate(SimulateArgs),
    /// Theoretical conversion-loss bounds.
    Bound {
        #[arg(long)]
        instance: String,
        /// Comma-separated population sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        episodes: usize,
    },
    /// Reward-versus-N sweeps of the built-in figures.
    Reproduce {
        /// fig2 or fig4.
        figure: Figure,
        /// fixed (the figure's own start) or random-simplex.
        #[arg(long, default_value = "fixed")]
        protocol: InitProtocolChoice,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 50)]
        trajectories: usize,
        #[arg(long, default_value_t = 1000.0)]
        horizon: f64,
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
    },
    /// Run an experiment spec (JSON) cell by cell, resuming stored cells.
    Pipeline { spec: PathBuf },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    instance: String,
    /// ftva[:good-first|:uniform], priority:lagrangian[:L], priority:list:a>b>..., twoclass[:{..}|{..}]
    #[arg(long, default_value = "ftva")]
    policy: PolicySelector,
    #[arg(long)]
    n: usize,
    /// Steps (dt) or time units (ct).
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 20)]
    trajectories: usize,
    /// Defaults to a quarter of the horizon.
    #[arg(long)]
    burn_in: Option<f64>,
    /// all-in:S, fractions:S=F,..., random-simplex:SEED
    #[arg(long, default_value = "all-in:0")]
    initial: InitialProtocol,
    /// Expected model kind; rejects a mismatching instance.
    #[arg(long)]
    kind: Option<ModelKind>,
    /// Disagreement bookkeeping.
    #[arg(long)]
    diagnostics: bool,
    /// Per-step occupancy of trajectory 0.
    #[arg(long)]
    trace: bool,
}

/// Writes a table to `<out>/<name>.<ext>` or stdout.
fn emit<R: Serialize>(global: &Global, name: &str, rows: &[R]) -> Result<()> {
    let bytes = render_rows(rows, global.format)?;
    match &global.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(format!("{name}.{}", global.format.extension()));
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn write_json<S: Serialize>(dir: &Path, name: &str, value: &S) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.json"));
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn policies_for(instance: &RbInstance, policy: &str) -> Result<Vec<ArmPolicy<f64>>> {
    if policy == "lp-optimal" {
        return Ok(solve_het(instance)?.policies);
    }
    if instance.n_types() != 1 {
        bail!("a policy file applies to single-type instances only");
    }
    Ok(vec![load_policy(policy)?])
}

#[derive(Serialize)]
struct LpRow {
    arm_type: usize,
    state: usize,
    y0: f64,
    y1: f64,
    pi1: f64,
    mu: f64,
}

#[derive(Serialize)]
struct SaRow {
    arm_type: usize,
    sa_holds: bool,
    method: String,
    propositions: String,
    witness: String,
    unichain: Option<bool>,
    inconclusive: bool,
}

#[derive(Serialize)]
struct TauRow {
    arm_type: usize,
    s: usize,
    a: usize,
    s_hat: usize,
    a_hat: usize,
    tau: f64,
}

#[derive(Serialize)]
struct CtTauRow {
    s: usize,
    s_hat: usize,
    mean: f64,
    std_error: f64,
    episodes: usize,
    censored: usize,
}

#[derive(Serialize)]
struct SimRow {
    policy: String,
    n: usize,
    trajectory: usize,
    mean_reward: f64,
    epochs: Option<u64>,
}

#[derive(Serialize)]
struct TraceRow {
    step: usize,
    bad_arms: Option<f64>,
    mismatches: Option<f64>,
    fractions: String,
}

fn solve_lp(global: &Global, instance: &str) -> Result<()> {
    let inst: RbInstance = resolve_instance(instance)?;
    let sol = solve_het(&inst)?;
    let mut rows = Vec::new();
    for (k, (y, pol)) in sol.measure.y.iter().zip(&sol.policies).enumerate() {
        for (s, (ys, mu)) in y.iter().zip(stationary_marginal(y)).enumerate() {
            rows.push(LpRow {
                arm_type: k,
                state: s,
                y0: ys[0],
                y1: ys[1],
                pi1: pol.prob(s, 1),
                mu,
            });
        }
    }
    eprintln!(
        "relaxed value {}  budget multiplier {}",
        sol.value, sol.measure.budget_dual
    );
    if let Some(dir) = &global.out {
        write_json(dir, "lp", &sol)?;
    }
    emit(global, "lp_table", &rows)
}

fn check_sa(global: &Global, instance: &str, policy: &str) -> Result<()> {
    let inst: RbInstance = resolve_instance(instance)?;
    if inst.kind() != ModelKind::Dt {
        bail!(Error::UnsupportedPolicy {
            policy: "check-sa".into(),
            kind: "ct",
        });
    }
    let pols = policies_for(&inst, policy)?;
    let mut rows = Vec::new();
    for (k, (ty, pol)) in inst.types().iter().zip(&pols).enumerate() {
        let model = ty.model.as_dt().expect("kind checked");
        let reach = check_sa_reachability(model, pol)?;
        let cond = check_sufficient_conditions(model, pol)?;
        let unichain = match check_unichain(model) {
            Ok(u) => Some(u.holds),
            Err(Error::TooManyStates { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let props: Vec<String> = cond.satisfied.iter().map(|p| p.id().to_string()).collect();
        let method = match cond.satisfied.first() {
            Some(p) => format!("proposition-{}", p.id()),
            None => "reachability".into(),
        };
        rows.push(SaRow {
            arm_type: k,
            sa_holds: reach.holds,
            method,
            propositions: props.join(";"),
            witness: reach
                .witness
                .map(|w| format!("({},{},{},{})", w.s, w.a, w.s_hat, w.a_hat))
                .unwrap_or_default(),
            unichain,
            inconclusive: cond.inconclusive,
        });
        if let Some(dir) = &global.out {
            write_json(dir, &format!("sa_conditions_type{k}"), &cond)?;
        }
    }
    emit(global, "sa", &rows)
}

fn sync_time(global: &Global, instance: &str, policy: &str, episodes: usize, horizon: f64) -> Result<()> {
    let inst: RbInstance = resolve_instance(instance)?;
    let pols = policies_for(&inst, policy)?;
    match inst.kind() {
        ModelKind::Dt => {
            let mut rows = Vec::new();
            for (k, (ty, pol)) in inst.types().iter().zip(&pols).enumerate() {
                let rep = exact_sync_times(ty.model.as_dt().expect("kind checked"), pol)?;
                let w = rep.worst_start();
                eprintln!(
                    "type {k}: tau_max {} from (s={}, a={}, s_hat={}, a_hat={})",
                    rep.tau_max, w.s, w.a, w.s_hat, w.a_hat
                );
                rows.extend(rep.tau_table.iter().map(|e| TauRow {
                    arm_type: k,
                    s: e.start.s,
                    a: e.start.a,
                    s_hat: e.start.s_hat,
                    a_hat: e.start.a_hat,
                    tau: e.tau,
                }));
            }
            emit(global, "sync_times", &rows)
        }
        ModelKind::Ct => {
            let model = inst
                .model()
                .as_ct()
                .context("continuous-time sync needs one arm type")?;
            let est = ct_sync_time_estimate(model, &pols[0], episodes, horizon, global.seed)?;
            eprintln!(
                "worst pair mean {} (95% upper {}), censored fraction {}",
                est.mean(),
                est.upper(),
                est.censored_fraction()
            );
            let rows: Vec<CtTauRow> = est
                .pairs
                .iter()
                .map(|p| CtTauRow {
                    s: p.s,
                    s_hat: p.s_hat,
                    mean: p.mean,
                    std_error: p.std_error,
                    episodes: p.episodes,
                    censored: p.censored,
                })
                .collect();
            emit(global, "sync_times", &rows)
        }
    }
}

fn simulate(global: &Global, args: SimulateArgs) -> Result<()> {
    let inst: RbInstance = resolve_instance(&args.instance)?;
    if let Some(kind) = args.kind {
        if kind != inst.kind() {
            bail!(Error::Config(format!(
                "--kind {kind} given for a {} instance",
                inst.kind()
            )));
        }
    }
    let mut config = RunConfig::new(args.n, args.horizon)
        .with_policy(args.policy)
        .with_initial(args.initial)
        .with_trajectories(args.trajectories)
        .with_seed(global.seed)
        .with_diagnostics(args.diagnostics)
        .with_trace(args.trace);
    config.burn_in = args.burn_in;
    let sol = solve_het(&inst)?;
    let report = run_with(&inst, &config, &sol.measure)?;
    eprintln!(
        "mean reward {} ± {} (relaxed value {}, gap {})",
        report.reward.mean,
        report.reward.ci_half_width,
        report.relaxed_value,
        report.gap()
    );
    if let Some(m) = report.mismatches {
        eprintln!(
            "mean mismatches {}  mean bad arms {}",
            m.mean,
            report.bad_arms.map_or(f64::NAN, |b| b.mean)
        );
    }
    let rows: Vec<SimRow> = report
        .trajectories
        .iter()
        .map(|t| SimRow {
            policy: report.policy.clone(),
            n: report.n_arms,
            trajectory: t.index,
            mean_reward: t.mean_reward,
            epochs: t.epochs,
        })
        .collect();
    if let Some(dir) = &global.out {
        write_json(dir, "report", &report)?;
    }
    if let Some(trace) = report.trajectories.first().and_then(|t| t.trace.as_ref()) {
        let rows: Vec<TraceRow> = trace
            .fractions
            .iter()
            .enumerate()
            .map(|(step, f)| TraceRow {
                step,
                bad_arms: trace.bad_arms.get(step).copied(),
                mismatches: trace.mismatches.get(step).copied(),
                fractions: f.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"),
            })
            .collect();
        if global.out.is_some() {
            emit(global, "diagnostics", &rows)?;
        }
    }
    emit(global, "simulate", &rows)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let global = cli.global;
    if let Some(w) = global.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .context("configuring worker pool")?;
    }
    match cli.command {
        Command::SolveLp { instance } => solve_lp(&global, &instance)?,
        Command::CheckSa { instance, policy } => check_sa(&global, &instance, &policy)?,
        Command::SyncTime {
            instance,
            policy,
            episodes,
            horizon,
        } => sync_time(&global, &instance, &policy, episodes, horizon)?,
        Command::Simulate(args) => simulate(&global, args)?,
        Command::Bound { instance, n, episodes } => {
            let inst: RbInstance = resolve_instance(&instance)?;
            let opts = CtSyncOptions {
                episodes,
                seed: global.seed,
                ..Default::default()
            };
            let inputs = instance_bound_inputs(&inst, &opts)?;
            emit(&global, "bound", &cmd_bound(&inputs, &n))?;
        }
        Command::Reproduce {
            figure,
            protocol,
            reps,
            trajectories,
            horizon,
            n,
        } => {
            let mut opts = ReproduceOptions::new(figure);
            opts.seed = global.seed;
            opts.protocol = protocol;
            opts.reps = reps;
            opts.trajectories = trajectories;
            opts.horizon = horizon;
            if !n.is_empty() {
                opts.n_values = n;
            }
            let rep = reproduce(&opts)?;
            match &global.out {
                Some(dir) => {
                    for p in rep.write(dir, global.format)? {
                        eprintln!("wrote {}", p.display());
                    }
                }
                None => emit(&global, "gap", &rep.gap)?,
            }
        }
        Command::Pipeline { spec } => {
            let spec = ExperimentSpec::load(&spec)?;
            let dir = global
                .out
                .clone()
                .or_else(|| spec.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("pipeline-out"));
            let outcome = pipeline(&spec, &dir, global.format)?;
            for c in &outcome.cells {
                eprintln!("{} N={}: {:?}", c.policy, c.n, c.status);
            }
            if outcome.has_failures() {
                eprintln!("{} failure(s) recorded in {}", outcome.failures.len(), dir.display());
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Exit code 2 for bad input, 1 for anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::Validation(_)
            | Error::UnknownInstance(_)
            | Error::MissingField(_)
            | Error::Malformed { .. }
            | Error::Parse { .. }
            | Error::Divisibility { .. }
            | Error::UnknownPolicy(_)
            | Error::UnsupportedPolicy { .. }
            | Error::Config(_),
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
