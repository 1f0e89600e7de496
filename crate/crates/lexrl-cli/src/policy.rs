//! Policy files and standalone evaluation. A policy file is JSON with a
//! `kind` tag: a trained stochastic network (evaluated with dropout off),
//! a deterministic state→action table, or the uniform-random baseline.
//! Evaluation success means the episode reaches a terminal state within
//! the horizon.

use crate::{CliError, CliResult};
use lexrl::lmdp::{run_episode, TabularMomdp};
use lexrl::reinforce::{run_policy_episode, Mode, PolicyNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// On-disk policy representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyFile {
    /// Stochastic MLP policy (scored in eval mode).
    Network { net: PolicyNetwork },
    /// One action index per state.
    Tabular { actions: Vec<usize> },
    /// Uniform-random action each step.
    Uniform,
}

pub fn save(path: &Path, policy: &PolicyFile) -> CliResult<()> {
    let text = serde_json::to_string_pretty(policy)
        .map_err(|e| CliError::Runtime(format!("serialize policy: {e}")))?;
    std::fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("write {}: {e}", path.display())))
}

pub fn load(path: &Path) -> CliResult<PolicyFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Evaluation result: aggregate rates plus the per-episode success series.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub seed: u64,
    pub success_rate: f64,
    pub mean_returns: Vec<f64>,
    pub successes: Vec<bool>,
}

/// Rolls out `episodes` episodes of the policy and scores them. Fully
/// deterministic per `(policy, env, episodes, horizon, seed)`.
pub fn evaluate(
    env: &TabularMomdp,
    policy: &PolicyFile,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> CliResult<EvalReport> {
    if episodes == 0 {
        return Err(CliError::Config("need at least one episode".into()));
    }
    if let PolicyFile::Tabular { actions } = policy {
        if actions.len() != env.n_states() {
            return Err(CliError::Config(format!(
                "tabular policy covers {} states, environment has {}",
                actions.len(),
                env.n_states()
            )));
        }
        if let Some(bad) = actions.iter().find(|&&a| a >= env.n_actions()) {
            return Err(CliError::Config(format!(
                "action index {bad} out of range (environment has {})",
                env.n_actions()
            )));
        }
    }
    if let PolicyFile::Network { net } = policy {
        if net.n_states() != env.n_states() || net.n_actions() != env.n_actions() {
            return Err(CliError::Config(format!(
                "network built for {}×{} (states×actions), environment is {}×{}",
                net.n_states(),
                net.n_actions(),
                env.n_states(),
                env.n_actions()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = Vec::with_capacity(episodes);
    let mut totals = vec![0.0; env.n_objectives()];
    let eval_net = match policy {
        PolicyFile::Network { net } => {
            let mut n = net.clone();
            n.mode = Mode::Eval;
            Some(n)
        }
        _ => None,
    };
    for _ in 0..episodes {
        let traj = match policy {
            PolicyFile::Network { .. } => {
                run_policy_episode(env, eval_net.as_ref().unwrap(), horizon, &mut rng).0
            }
            PolicyFile::Tabular { actions } => {
                run_episode(env, |s, _: &mut ChaCha8Rng| actions[s], horizon, &mut rng)
            }
            PolicyFile::Uniform => {
                let n_actions = env.n_actions();
                run_episode(
                    env,
                    |_, r: &mut ChaCha8Rng| r.gen_range(0..n_actions),
                    horizon,
                    &mut rng,
                )
            }
        };
        successes.push(traj.terminated(env));
        for (t, r) in totals.iter_mut().zip(traj.undiscounted_returns()) {
            *t += r;
        }
    }
    let n = episodes as f64;
    Ok(EvalReport {
        seed,
        success_rate: successes.iter().filter(|&&s| s).count() as f64 / n,
        mean_returns: totals.into_iter().map(|t| t / n).collect(),
        successes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use lexrl::envs::{maze_small, maze_to_momdp};

    fn env() -> TabularMomdp {
        maze_to_momdp(&maze_small(), 0.99).unwrap()
    }

    #[test]
    fn tabular_shape_mismatch_is_config_error() {
        let e = env();
        let p = PolicyFile::Tabular { actions: vec![0; 3] };
        assert!(matches!(
            evaluate(&e, &p, 10, 50, 0),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn uniform_policy_is_deterministic_per_seed() {
        let e = env();
        let a = evaluate(&e, &PolicyFile::Uniform, 50, 50, 7).unwrap();
        let b = evaluate(&e, &PolicyFile::Uniform, 50, 50, 7).unwrap();
        assert_eq!(a.success_rate, b.success_rate);
        assert_eq!(a.mean_returns, b.mean_returns);
        assert_eq!(a.successes, b.successes);
    }

    #[test]
    fn policy_files_roundtrip() {
        let dir = std::env::temp_dir().join(format!("lexrl-pol-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("p.json");
        let p = PolicyFile::Tabular {
            actions: vec![1, 2, 3],
        };
        save(&path, &p).unwrap();
        match load(&path).unwrap() {
            PolicyFile::Tabular { actions } => assert_eq!(actions, vec![1, 2, 3]),
            other => panic!("wrong kind: {other:?}"),
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
