//! Experiment dispatch: builds the configured experiment, sweeps the
//! seeds on a bounded worker pool, and writes the CSV artifacts. Workers
//! share only the immutable experiment definition and write to per-seed
//! files, so there is no output contention; the summary is assembled
//! afterwards in seed order. If a seed fails, the artifacts of every
//! completed seed — and the summary over them — are still written.

use crate::config::FileConfig;
use crate::csvio::{
    eval_header, eval_row, fmt_f64, rl_trace_header, SchemaCsv, AUGMENT_SCHEMA, EVAL_SCHEMA,
    LPA_SUMMARY_SCHEMA, LPA_TRACE_SCHEMA, RL_TRACE_SCHEMA, SCAN_SCHEMA,
};
use crate::policy::{self, PolicyFile};
use crate::{CliError, CliResult, SchemeArg};
use lexrl::augment::{
    constraint_search, maze_small_budget_variant, AugmentConfig, AugmentedMdp, SearchStrategy,
};
use lexrl::envs::{maze_by_name, maze_small, maze_to_momdp, parse_maze, ObjectiveScheme};
use lexrl::experiments::{
    endpoint_experiment, ftn_experiment, path_experiment, run_rl_seed, RlExperiment, FTN_DEPTH,
    FTN_REWARD_SEED, FTN_TARGET_LEAF, SUCCESS_BAR,
};
use lexrl::lpa::{lpa_run, ConcaveQuadraticPair, StopReason, Trace};
use lexrl::tlq::{failure_scan_maze_small, train_tlq, EvalStats, Filter, TlqConfig, Variant};
use rayon::prelude::*;
use std::path::Path;

/// Name of the environment variable bounding the seed worker pool.
pub const WORKERS_ENV: &str = "LEXRL_WORKERS";

const EXPERIMENTS: [&str; 7] = [
    "lpa-benchmark",
    "tlq-train",
    "tlq-failure-scan",
    "reinforce-path",
    "reinforce-endpoint",
    "ftn",
    "augment-demo",
];

pub fn run_experiment(
    name: &str,
    cfg: &FileConfig,
    seeds: &[u64],
    out: &Path,
) -> CliResult<()> {
    if seeds.is_empty() {
        return Err(CliError::Config("seed sweep is empty".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| {
        CliError::Config(format!("cannot create output dir {}: {e}", out.display()))
    })?;
    match name {
        "lpa-benchmark" => lpa_benchmark(cfg, out),
        "tlq-train" => tlq_train(cfg, seeds, out),
        "tlq-failure-scan" => tlq_failure_scan(cfg, out),
        "reinforce-path" | "reinforce-endpoint" | "ftn" => rl_experiment(name, cfg, seeds, out),
        "augment-demo" => augment_demo(cfg, out),
        other => Err(CliError::Config(format!(
            "unknown experiment {other:?}; expected one of {}",
            EXPERIMENTS.join(", ")
        ))),
    }
}

/// Builds the seed worker pool, honoring the LEXRL_WORKERS cap.
fn worker_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(WORKERS_ENV) {
        let n: usize = raw
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}"))
            })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))
}

// ---------------------------------------------------------------------
// differentiable benchmark
// ---------------------------------------------------------------------

fn lpa_benchmark(cfg: &FileConfig, out: &Path) -> CliResult<()> {
    let sec = cfg.lpa.as_ref();
    let x0 = match sec.and_then(|s| s.start.clone()) {
        Some(v) if v.len() == 2 => v,
        Some(v) => {
            return Err(CliError::Config(format!(
                "start needs 2 coordinates, got {}",
                v.len()
            )))
        }
        None => ConcaveQuadraticPair::standard_start(),
    };
    let mut summary = SchemaCsv::create(
        &out.join("lpa-benchmark_summary.csv"),
        LPA_SUMMARY_SCHEMA,
        &["mode", "iters", "stop", "f1", "f2"],
    )?;
    for (mode, ac) in [("ac-off", false), ("ac-on", true)] {
        let buffer = sec.and_then(|s| s.buffer).unwrap_or(0.01);
        let mut run_cfg = ConcaveQuadraticPair::standard_config(ac, buffer);
        if let Some(s) = sec {
            if let Some(step) = s.step_size {
                run_cfg.step_size = step;
            }
            if let Some(d) = s.delta_deg {
                run_cfg.direction.delta = d.to_radians();
            }
            if let Some(t) = s.threshold {
                run_cfg.direction.thresholds = vec![t];
            }
            if let Some(m) = s.max_iters {
                run_cfg.max_iters = m;
            }
        }
        let trace_path = out.join(format!("lpa-benchmark_{mode}_trace.csv"));
        let trace = match lpa_run(&ConcaveQuadraticPair, &x0, &run_cfg) {
            Ok(t) => t,
            Err(abort) => {
                write_lpa_trace(&trace_path, &abort.partial)?;
                return Err(CliError::Runtime(format!("lpa-benchmark {mode}: {abort}")));
            }
        };
        write_lpa_trace(&trace_path, &trace)?;
        let f = trace.final_values();
        summary.write_row(&[
            mode.to_string(),
            (trace.steps.len() - 1).to_string(),
            stop_name(&trace.stop).to_string(),
            fmt_f64(f[0]),
            fmt_f64(f[1]),
        ])?;
        println!(
            "lpa-benchmark {mode}: final F = ({:.4}, {:.4}) after {} steps ({})",
            f[0],
            f[1],
            trace.steps.len() - 1,
            stop_name(&trace.stop)
        );
    }
    summary.finish()
}

fn write_lpa_trace(path: &Path, trace: &Trace) -> CliResult<()> {
    let mut w = SchemaCsv::create(
        path,
        LPA_TRACE_SCHEMA,
        &["iter", "x1", "x2", "f1", "f2", "dir_norm", "reason"],
    )?;
    for (i, step) in trace.steps.iter().enumerate() {
        let (dir_norm, reason) = match &step.direction {
            Some(d) => (d.iter().map(|x| x * x).sum::<f64>().sqrt(), "step"),
            None => (0.0, stop_name(&trace.stop)),
        };
        w.write_row(&[
            i.to_string(),
            fmt_f64(step.x[0]),
            fmt_f64(step.x[1]),
            fmt_f64(step.values[0]),
            fmt_f64(step.values[1]),
            fmt_f64(dir_norm),
            reason.to_string(),
        ])?;
    }
    w.finish()
}

fn stop_name(stop: &StopReason) -> &'static str {
    match stop {
        StopReason::MaxIters => "max-iters",
        StopReason::Stationary => "stationary",
    }
}

// ---------------------------------------------------------------------
// tabular thresholded Q-learning
// ---------------------------------------------------------------------

fn tlq_train(cfg: &FileConfig, seeds: &[u64], out: &Path) -> CliResult<()> {
    let sec = cfg.tlq.as_ref();
    let maze_name = sec
        .and_then(|s| s.maze.clone())
        .unwrap_or_else(|| "maze-small".into());
    let spec = maze_by_name(&maze_name).map_err(|e| CliError::Config(e.to_string()))?;
    let gamma = sec.and_then(|s| s.gamma).unwrap_or(0.99);
    let env = maze_to_momdp(&spec, gamma).map_err(|e| CliError::Config(e.to_string()))?;
    let k = env.n_objectives();

    let variant = match sec.and_then(|s| s.variant.as_deref()).unwrap_or("rectified") {
        "rectified" => Variant::GaborRectified,
        "raw" => Variant::LiRaw,
        other => {
            return Err(CliError::Config(format!(
                "unknown variant {other:?}; expected rectified or raw"
            )))
        }
    };
    let thresholds = sec
        .and_then(|s| s.thresholds.clone())
        .unwrap_or_else(|| vec![spec.goal_reward / 2.0; k - 1]);
    let params = sec
        .and_then(|s| s.filter_params.clone())
        .unwrap_or_else(|| thresholds.clone());
    if thresholds.len() != k - 1 || params.len() != k - 1 {
        return Err(CliError::Config(format!(
            "this environment needs {} threshold(s)/filter parameter(s)",
            k - 1
        )));
    }
    let filter = match sec
        .and_then(|s| s.filter.as_deref())
        .unwrap_or("absolute-threshold")
    {
        "absolute-threshold" => Filter::AbsoluteThreshold(params),
        "absolute-slack" => Filter::AbsoluteSlack(params),
        "relative-slack" => Filter::RelativeSlack(params),
        other => {
            return Err(CliError::Config(format!(
                "unknown filter {other:?}; expected absolute-threshold, absolute-slack, or relative-slack"
            )))
        }
    };
    let mut tcfg = TlqConfig::new(variant, filter, thresholds);
    if let Some(s) = sec {
        if let Some(lr) = s.learning_rate {
            tcfg.learning_rate = lr;
        }
        if let Some(eps) = s.epsilon {
            tcfg.epsilon = eps;
        }
        if let Some(ep) = s.episodes {
            tcfg.episodes = ep;
        }
        if let Some(h) = s.horizon {
            tcfg.horizon = h;
        }
        if let Some(b) = s.informed_buffer {
            tcfg.informed_buffer = Some(b);
        }
    }

    let pool = worker_pool()?;
    let results: Vec<(u64, CliResult<EvalStats>)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let res = (|| {
                    let outcome = train_tlq(&env, &tcfg, seed)
                        .map_err(|e| CliError::Runtime(format!("seed {seed}: {e}")))?;
                    policy::save(
                        &out.join(format!("tlq-train_seed{seed}_policy.json")),
                        &PolicyFile::Tabular {
                            actions: outcome.policy,
                        },
                    )?;
                    let mut ev = SchemaCsv::create(
                        &out.join(format!("tlq-train_seed{seed}_eval.csv")),
                        EVAL_SCHEMA,
                        &eval_header(k),
                    )?;
                    ev.write_row(&eval_row(
                        seed,
                        outcome.eval.success_rate,
                        &outcome.eval.mean_returns,
                    ))?;
                    ev.finish()?;
                    Ok(outcome.eval)
                })();
                (seed, res)
            })
            .collect()
    });

    let mut summary = SchemaCsv::create(
        &out.join("tlq-train_summary.csv"),
        EVAL_SCHEMA,
        &eval_header(k),
    )?;
    let mut failed: Option<CliError> = None;
    for (seed, res) in results {
        match res {
            Ok(stats) => {
                summary.write_row(&eval_row(seed, stats.success_rate, &stats.mean_returns))?;
                println!(
                    "tlq-train seed {seed}: greedy success {:.2}, mean returns {:?}",
                    stats.success_rate, stats.mean_returns
                );
            }
            Err(e) => {
                failed.get_or_insert(e);
            }
        }
    }
    summary.finish()?;
    match failed {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn tlq_failure_scan(cfg: &FileConfig, out: &Path) -> CliResult<()> {
    let sec = cfg.scan.as_ref();
    let gamma = sec.and_then(|s| s.gamma).unwrap_or(0.99);
    let grid = sec.and_then(|s| s.grid_points).unwrap_or(50);
    if grid < 2 {
        return Err(CliError::Config("grid_points must be at least 2".into()));
    }
    let scans =
        failure_scan_maze_small(gamma, grid).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut w = SchemaCsv::create(
        &out.join("tlq-failure-scan_results.csv"),
        SCAN_SCHEMA,
        &["filter", "configs", "pareto_realizations", "goal_reaching"],
    )?;
    let (mut total, mut pareto) = (0usize, 0usize);
    for scan in &scans {
        total += scan.configs;
        pareto += scan.pareto_realizations;
        w.write_row(&[
            scan.filter_name.to_string(),
            scan.configs.to_string(),
            scan.pareto_realizations.to_string(),
            scan.goal_reaching.to_string(),
        ])?;
    }
    w.finish()?;
    println!(
        "tlq-failure-scan: {pareto}/{total} filter configurations realize the clean detour"
    );
    Ok(())
}

// ---------------------------------------------------------------------
// policy-gradient experiments
// ---------------------------------------------------------------------

fn build_rl(name: &str, cfg: &FileConfig) -> CliResult<RlExperiment> {
    if name == "ftn" {
        let sec = cfg.ftn.as_ref();
        let depth = sec.and_then(|s| s.depth).unwrap_or(FTN_DEPTH);
        let reward_seed = sec.and_then(|s| s.reward_seed).unwrap_or(FTN_REWARD_SEED);
        let target = sec.and_then(|s| s.target_leaf).unwrap_or(FTN_TARGET_LEAF);
        let delta = sec
            .and_then(|s| s.delta_deg)
            .unwrap_or(20.0)
            .to_radians();
        let spec = lexrl::envs::FtnSpec::generate(depth, reward_seed, target)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let mut exp =
            ftn_experiment(&spec, delta).map_err(|e| CliError::Runtime(e.to_string()))?;
        if let Some(s) = sec {
            if let Some(ep) = s.episodes {
                exp.cfg.episodes = ep;
            }
            if let Some(lr) = s.learning_rate {
                exp.cfg.learning_rate = lr;
            }
        }
        return Ok(exp);
    }
    let mut exp = match name {
        "reinforce-path" => path_experiment(),
        "reinforce-endpoint" => endpoint_experiment(),
        other => unreachable!("not an rl experiment: {other}"),
    }
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Some(s) = cfg.reinforce.as_ref() {
        if let Some(ep) = s.episodes {
            exp.cfg.episodes = ep;
        }
        if let Some(lr) = s.learning_rate {
            exp.cfg.learning_rate = lr;
        }
        if let Some(d) = s.delta_deg {
            exp.cfg.direction.delta = d.to_radians();
        }
        if let Some(h) = s.horizon {
            exp.cfg.horizon = h;
        }
    }
    Ok(exp)
}

fn rl_experiment(name: &str, cfg: &FileConfig, seeds: &[u64], out: &Path) -> CliResult<()> {
    let exp = build_rl(name, cfg)?;
    let k = exp.env.n_objectives();
    let pool = worker_pool()?;
    let results: Vec<(u64, CliResult<(f64, Vec<f64>)>)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| (seed, rl_seed_artifacts(&exp, seed, out)))
            .collect()
    });

    let mut summary = SchemaCsv::create(
        &out.join(format!("{name}_summary.csv")),
        EVAL_SCHEMA,
        &eval_header(k),
    )?;
    let (mut solved, mut done) = (0usize, 0usize);
    let mut failed: Option<CliError> = None;
    for (seed, res) in results {
        match res {
            Ok((rate, means)) => {
                summary.write_row(&eval_row(seed, rate, &means))?;
                if rate >= SUCCESS_BAR {
                    solved += 1;
                }
                done += 1;
                println!("{name} seed {seed}: evaluation success {rate:.2}");
            }
            Err(e) => {
                failed.get_or_insert(e);
            }
        }
    }
    summary.finish()?;
    println!(
        "{name}: {solved}/{done} seeds reached >={:.0}% evaluation success",
        SUCCESS_BAR * 100.0
    );
    match failed {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Trains and evaluates one seed, writing its trace, evaluation, and
/// policy artifacts.
fn rl_seed_artifacts(exp: &RlExperiment, seed: u64, out: &Path) -> CliResult<(f64, Vec<f64>)> {
    let outcome =
        run_rl_seed(exp, seed).map_err(|e| CliError::Runtime(format!("seed {seed}: {e}")))?;
    let k = exp.env.n_objectives();
    let name = exp.name;

    let mut trace = SchemaCsv::create(
        &out.join(format!("{name}_seed{seed}_trace.csv")),
        RL_TRACE_SCHEMA,
        &rl_trace_header(k),
    )?;
    for row in &outcome.trace {
        let mut fields = Vec::with_capacity(k + 4);
        fields.push(row.episode.to_string());
        fields.extend(row.sat.iter().map(|&s| fmt_f64(s)));
        fields.push(fmt_f64(row.joint));
        fields.push(fmt_f64(row.dir_norm));
        fields.push(u8::from(row.skipped).to_string());
        trace.write_row(&fields)?;
    }
    trace.finish()?;

    let mut ev = SchemaCsv::create(
        &out.join(format!("{name}_seed{seed}_eval.csv")),
        EVAL_SCHEMA,
        &eval_header(k),
    )?;
    ev.write_row(&eval_row(seed, outcome.success_rate, &outcome.mean_returns))?;
    ev.finish()?;

    policy::save(
        &out.join(format!("{name}_seed{seed}_policy.json")),
        &PolicyFile::Network { net: outcome.net },
    )?;
    Ok((outcome.success_rate, outcome.mean_returns))
}

// ---------------------------------------------------------------------
// budget augmentation demo
// ---------------------------------------------------------------------

fn augment_demo(cfg: &FileConfig, out: &Path) -> CliResult<()> {
    let sec = cfg.augment.as_ref();
    let gamma = sec.and_then(|s| s.gamma).unwrap_or(0.99);
    let lambda = sec.and_then(|s| s.lambda).unwrap_or(1.0);
    let (m, thresholds) =
        maze_small_budget_variant(gamma).map_err(|e| CliError::Runtime(e.to_string()))?;
    let acfg = AugmentConfig {
        lambda,
        ..AugmentConfig::default()
    };
    let searches = [
        ("linear", SearchStrategy::Linear),
        ("binary", SearchStrategy::Binary),
    ];
    let mut w = SchemaCsv::create(
        &out.join("augment-demo_summary.csv"),
        AUGMENT_SCHEMA,
        &[
            "strategy",
            "max_prefix",
            "solver_calls",
            "goal_reached",
            "bad_tile_visits",
        ],
    )?;
    let mut model_written = false;
    for (label, strategy) in searches {
        let outcome = constraint_search(&m, &thresholds, strategy, &acfg)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let (reached, bad_visits) = match &outcome.witness {
            Some((aug, pol)) => {
                if !model_written {
                    std::fs::write(out.join("augment-demo_model.txt"), aug.as_momdp().to_text())
                        .map_err(|e| CliError::Runtime(format!("write model: {e}")))?;
                    model_written = true;
                }
                witness_rollout(aug, pol, m.n_states())?
            }
            None => (false, 0),
        };
        w.write_row(&[
            label.to_string(),
            outcome.max_prefix.to_string(),
            outcome.solver_calls.to_string(),
            u8::from(reached).to_string(),
            bad_visits.to_string(),
        ])?;
        println!(
            "augment-demo {label}: satisfiable prefix {} ({} solver calls), witness reaches goal: {}, bad tiles entered: {}",
            outcome.max_prefix, outcome.solver_calls, reached, bad_visits
        );
    }
    w.finish()
}

/// Follows the witness policy through the deterministic augmented model
/// and reports goal arrival plus how many penalty tiles it entered.
fn witness_rollout(
    aug: &AugmentedMdp,
    policy: &[usize],
    n_base_states: usize,
) -> CliResult<(bool, usize)> {
    let scalar = aug.as_momdp();
    let bad = maze_small().bad_tiles();
    let mut s = scalar.initial_state();
    let mut bad_visits = 0usize;
    for _ in 0..=scalar.n_states() {
        if scalar.is_terminal(s) {
            break;
        }
        let row = scalar.transition_row(s, policy[s]);
        let Some(next) = row.iter().position(|&p| p > 0.999) else {
            return Err(CliError::Runtime(
                "witness rollout requires deterministic transitions".into(),
            ));
        };
        s = next;
        let (base, _) = aug.decode(s);
        if base < n_base_states && bad.contains(&base) {
            bad_visits += 1;
        }
    }
    Ok((scalar.is_terminal(s), bad_visits))
}

// ---------------------------------------------------------------------
// standalone evaluation
// ---------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn eval_cmd(
    policy_path: &Path,
    env_arg: &str,
    scheme: Option<SchemeArg>,
    gamma: f64,
    episodes: usize,
    seed: u64,
    horizon: usize,
    out: Option<&Path>,
) -> CliResult<()> {
    let pf = policy::load(policy_path)?;
    let mut spec = match maze_by_name(env_arg) {
        Ok(spec) => spec,
        Err(_) => {
            let text = std::fs::read_to_string(env_arg).map_err(|e| {
                CliError::Config(format!(
                    "{env_arg:?} is neither a built-in maze nor a readable file: {e}"
                ))
            })?;
            parse_maze(&text).map_err(|e| CliError::Config(format!("{env_arg}: {e}")))?
        }
    };
    if let Some(s) = scheme {
        spec = spec.with_scheme(match s {
            SchemeArg::Path => ObjectiveScheme::PathPenaltyPrimary,
            SchemeArg::Endpoint => ObjectiveScheme::EndpointPrimary,
        });
    }
    if horizon == 0 {
        return Err(CliError::Config("horizon must be positive".into()));
    }
    let env = maze_to_momdp(&spec, gamma).map_err(|e| CliError::Config(e.to_string()))?;
    let report = policy::evaluate(&env, &pf, episodes, horizon, seed)?;
    println!(
        "success rate: {:.4} over {episodes} episodes (seed {seed})",
        report.success_rate
    );
    println!(
        "mean returns: [{}]",
        report
            .mean_returns
            .iter()
            .map(|&m| format!("{m:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    if let Some(path) = out {
        let mut w = SchemaCsv::create(path, EVAL_SCHEMA, &eval_header(env.n_objectives()))?;
        w.write_row(&eval_row(seed, report.success_rate, &report.mean_returns))?;
        w.finish()?;
    }
    Ok(())
}
