//! Thresholded lexicographic Q-learning for tabular problems.
//!
//! Maintains one Q-table per objective and restricts action choice through
//! per-objective acceptability filters applied in importance order. Two
//! update rules are provided: a rectified rule that clamps constrained
//! targets at their thresholds, and a raw rule that learns unclamped values
//! and applies thresholds only when actions are picked. Both are known to
//! break on particular reward structures; the helpers at the bottom of the
//! module reproduce those failure cases exactly.

use crate::envs::{maze_small, maze_to_momdp};
use crate::lmdp::{QTable, TabularMomdp, DEFAULT_HORIZON};
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Update-rule variant for the constrained objectives' tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Targets for constrained objectives are clamped at the threshold
    /// (`min(τ_i, r + γ·bootstrap)`), so tables store rectified values.
    GaborRectified,
    /// Plain Q-learning targets; thresholds act only through the filters.
    LiRaw,
}

/// Acceptability filter deciding which actions survive each constrained
/// objective. Parameters are per constrained objective (length K−1).
#[derive(Debug, Clone, PartialEq)]
pub enum Filter {
    /// Keep actions with value at least `τ_i`; if none qualify, fall back
    /// to the argmax set so the chain never goes empty.
    AbsoluteThreshold(Vec<f64>),
    /// Keep actions within `δ_i` of the best surviving action.
    AbsoluteSlack(Vec<f64>),
    /// Keep actions with value at least `(1−η_i)` times the best surviving
    /// action's value.
    RelativeSlack(Vec<f64>),
}

impl Filter {
    /// Number of constrained objectives this filter parameterizes.
    pub fn arity(&self) -> usize {
        match self {
            Filter::AbsoluteThreshold(v) | Filter::AbsoluteSlack(v) | Filter::RelativeSlack(v) => {
                v.len()
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Filter::AbsoluteThreshold(_) => "absolute-threshold",
            Filter::AbsoluteSlack(_) => "absolute-slack",
            Filter::RelativeSlack(_) => "relative-slack",
        }
    }
}

const TIE_EPS: f64 = 1e-12;

fn argmax_set(row: &[f64], candidates: &[usize]) -> Vec<usize> {
    let best = candidates
        .iter()
        .map(|&a| row[a])
        .fold(f64::NEG_INFINITY, f64::max);
    candidates
        .iter()
        .copied()
        .filter(|&a| row[a] >= best - TIE_EPS)
        .collect()
}

fn argmax_lowest(row: &[f64], candidates: &[usize]) -> usize {
    let mut best = candidates[0];
    for &a in &candidates[1..] {
        if row[a] > row[best] {
            best = a;
        }
    }
    best
}

/// One Q-table per objective plus the update-rule variant.
///
/// Rectified tables are initialized at `min(0, τ_i)` for constrained
/// objectives so they never exceed their thresholds, update included.
#[derive(Debug, Clone)]
pub struct VectorQTable {
    tables: Vec<QTable>,
    variant: Variant,
}

impl VectorQTable {
    pub fn new(n_states: usize, n_actions: usize, k: usize, variant: Variant) -> Self {
        VectorQTable {
            tables: (0..k).map(|_| QTable::zeros(n_states, n_actions)).collect(),
            variant,
        }
    }

    /// Zero-initialized tables, with rectified constrained tables clamped
    /// at their thresholds from the start.
    pub fn init_for(
        n_states: usize,
        n_actions: usize,
        k: usize,
        variant: Variant,
        tau: &[f64],
    ) -> Self {
        let mut q = Self::new(n_states, n_actions, k, variant);
        if variant == Variant::GaborRectified {
            for (i, &t) in tau.iter().enumerate().take(k - 1) {
                if t < 0.0 {
                    for s in 0..n_states {
                        for a in 0..n_actions {
                            q.tables[i].set(s, a, t);
                        }
                    }
                }
            }
        }
        q
    }

    pub fn k(&self) -> usize {
        self.tables.len()
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn table(&self, i: usize) -> &QTable {
        &self.tables[i]
    }

    pub fn table_mut(&mut self, i: usize) -> &mut QTable {
        &mut self.tables[i]
    }

    pub fn is_finite(&self) -> bool {
        self.tables
            .iter()
            .all(|t| t.values().iter().all(|v| v.is_finite()))
    }
}

/// Actions of `prev` surviving objective `i`'s filter in state `s`.
///
/// `buffer` widens the acceptance cutoff (used by informed updates);
/// pass 0.0 for the plain filter.
pub fn acceptable_actions(
    s: usize,
    q: &VectorQTable,
    prev: &[usize],
    i: usize,
    filter: &Filter,
    buffer: f64,
) -> Vec<usize> {
    assert!(!prev.is_empty(), "acceptable_actions needs a nonempty set");
    let row = q.table(i).row(s);
    match filter {
        Filter::AbsoluteThreshold(tau) => {
            let cut = tau[i] - buffer;
            let kept: Vec<usize> = prev.iter().copied().filter(|&a| row[a] >= cut).collect();
            if kept.is_empty() {
                argmax_set(row, prev)
            } else {
                kept
            }
        }
        Filter::AbsoluteSlack(delta) => {
            let best = prev.iter().map(|&a| row[a]).fold(f64::NEG_INFINITY, f64::max);
            let cut = best - delta[i] - buffer;
            prev.iter().copied().filter(|&a| row[a] >= cut).collect()
        }
        Filter::RelativeSlack(eta) => {
            let best = prev.iter().map(|&a| row[a]).fold(f64::NEG_INFINITY, f64::max);
            let cut = (1.0 - eta[i]) * best - buffer;
            prev.iter().copied().filter(|&a| row[a] >= cut).collect()
        }
    }
}

/// Actions surviving the first `upto` objectives' filters in state `s`.
pub fn acceptable_chain(
    s: usize,
    q: &VectorQTable,
    n_actions: usize,
    filter: &Filter,
    upto: usize,
) -> Vec<usize> {
    let mut set: Vec<usize> = (0..n_actions).collect();
    for i in 0..upto.min(q.k() - 1) {
        if set.len() <= 1 {
            break;
        }
        set = acceptable_actions(s, q, &set, i, filter, 0.0);
    }
    set
}

/// ε-greedy action selection.
///
/// With probability ε picks uniformly at random. Otherwise narrows the
/// action set objective by objective; at the first singleton — or once the
/// last objective is reached — returns the argmax of the current
/// objective's values over the surviving set (lowest index on ties).
pub fn select_action<R: Rng + ?Sized>(
    s: usize,
    q: &VectorQTable,
    n_actions: usize,
    epsilon: f64,
    filter: &Filter,
    rng: &mut R,
) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return rng.gen_range(0..n_actions);
    }
    greedy_action(s, q, n_actions, filter)
}

/// The ε=0 branch of [`select_action`]: deterministic greedy choice.
pub fn greedy_action(s: usize, q: &VectorQTable, n_actions: usize, filter: &Filter) -> usize {
    let mut set: Vec<usize> = (0..n_actions).collect();
    for i in 0..q.k() {
        if set.len() == 1 || i == q.k() - 1 {
            return argmax_lowest(q.table(i).row(s), &set);
        }
        set = acceptable_actions(s, q, &set, i, filter, 0.0);
    }
    unreachable!("loop always returns at the last objective")
}

/// Two-objective action selection that hands the final tie-break back to
/// the primary objective. Requires a filter entry for the unconstrained
/// objective as well (its "threshold" is the admitted hack).
pub fn cyclic_select_action(
    s: usize,
    q: &VectorQTable,
    n_actions: usize,
    filter: &Filter,
) -> Result<usize> {
    if q.k() != 2 {
        return Err(Error::Unsupported(format!(
            "cyclic action selection is defined for 2 objectives, got {}",
            q.k()
        )));
    }
    if filter.arity() < 2 {
        return Err(Error::InvalidParameter(
            "cyclic selection needs filter parameters for both objectives".into(),
        ));
    }
    let a0: Vec<usize> = (0..n_actions).collect();
    let a1 = acceptable_actions(s, q, &a0, 0, filter, 0.0);
    if a1.len() <= 1 {
        return Ok(argmax_lowest(q.table(0).row(s), &a0));
    }
    let a2 = acceptable_actions(s, q, &a1, 1, filter, 0.0);
    if a2.len() <= 1 {
        return Ok(argmax_lowest(q.table(1).row(s), &a1));
    }
    Ok(argmax_lowest(q.table(0).row(s), &a2))
}

/// One sampled transition.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a> {
    pub s: usize,
    pub a: usize,
    pub s2: usize,
    pub rewards: &'a [f64],
    pub terminal: bool,
}

fn bootstrap_action(q: &VectorQTable, n_actions: usize, filter: &Filter, i: usize, s2: usize) -> usize {
    let set = acceptable_chain(s2, q, n_actions, filter, i);
    argmax_lowest(q.table(i).row(s2), &set)
}

/// Applies the rectified update to every objective's table.
///
/// Constrained targets are clamped at their thresholds; the bootstrap for
/// objective `i` runs through the greedy action among those surviving the
/// first `i` filters in the next state. Terminal next states bootstrap 0.
pub fn tlq_update_gabor(
    q: &mut VectorQTable,
    t: &Transition,
    n_actions: usize,
    filter: &Filter,
    tau: &[f64],
    lr: f64,
    gamma: f64,
) {
    let k = q.k();
    for i in 0..k {
        let boot = if t.terminal {
            0.0
        } else {
            let a = bootstrap_action(q, n_actions, filter, i, t.s2);
            q.table(i).get(t.s2, a)
        };
        let mut target = t.rewards[i] + gamma * boot;
        if i < k - 1 {
            target = target.min(tau[i]);
        }
        let old = q.table(i).get(t.s, t.a);
        q.table_mut(i).set(t.s, t.a, (1.0 - lr) * old + lr * target);
    }
}

/// Applies the raw update to every objective's table: standard Q-learning
/// targets with the maximization restricted to the filtered action set.
pub fn tlq_update_li(
    q: &mut VectorQTable,
    t: &Transition,
    n_actions: usize,
    filter: &Filter,
    lr: f64,
    gamma: f64,
) {
    for i in 0..q.k() {
        let boot = if t.terminal {
            0.0
        } else {
            let a = bootstrap_action(q, n_actions, filter, i, t.s2);
            q.table(i).get(t.s2, a)
        };
        let target = t.rewards[i] + gamma * boot;
        let old = q.table(i).get(t.s, t.a);
        q.table_mut(i).set(t.s, t.a, (1.0 - lr) * old + lr * target);
    }
}

/// Two-objective update where the primary bootstraps through the action
/// the secondary would actually pick in the next state: the argmax of
/// `Q₂` over the primary's acceptance set widened by `buffer`. The
/// secondary updates as in the raw rule.
pub fn tlq_update_informed(
    q: &mut VectorQTable,
    t: &Transition,
    n_actions: usize,
    filter: &Filter,
    buffer: f64,
    lr: f64,
    gamma: f64,
) -> Result<()> {
    if q.k() != 2 {
        return Err(Error::Unsupported(format!(
            "informed updates are defined for 2 objectives, got {}",
            q.k()
        )));
    }
    let boot1 = if t.terminal {
        0.0
    } else {
        let all: Vec<usize> = (0..n_actions).collect();
        let accepted = acceptable_actions(t.s2, q, &all, 0, filter, buffer);
        let chosen = argmax_lowest(q.table(1).row(t.s2), &accepted);
        q.table(0).get(t.s2, chosen)
    };
    let target1 = t.rewards[0] + gamma * boot1;
    let old1 = q.table(0).get(t.s, t.a);
    q.table_mut(0).set(t.s, t.a, (1.0 - lr) * old1 + lr * target1);

    let boot2 = if t.terminal {
        0.0
    } else {
        let a = bootstrap_action(q, n_actions, filter, 1, t.s2);
        q.table(1).get(t.s2, a)
    };
    let target2 = t.rewards[1] + gamma * boot2;
    let old2 = q.table(1).get(t.s, t.a);
    q.table_mut(1).set(t.s, t.a, (1.0 - lr) * old2 + lr * target2);
    Ok(())
}

/// Training configuration; `thresholds` are required by the rectified
/// variant and the threshold filter, and may be empty otherwise.
#[derive(Debug, Clone)]
pub struct TlqConfig {
    pub variant: Variant,
    pub filter: Filter,
    pub thresholds: Vec<f64>,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub episodes: usize,
    pub horizon: usize,
    /// When set (two objectives only), the primary objective uses informed
    /// targets with this buffer.
    pub informed_buffer: Option<f64>,
}

impl TlqConfig {
    pub fn new(variant: Variant, filter: Filter, thresholds: Vec<f64>) -> Self {
        TlqConfig {
            variant,
            filter,
            thresholds,
            learning_rate: 0.1,
            epsilon: 0.1,
            episodes: 50_000,
            horizon: DEFAULT_HORIZON,
            informed_buffer: None,
        }
    }
}

/// Evaluation summary over greedy episodes.
#[derive(Debug, Clone)]
pub struct EvalStats {
    /// Fraction of episodes that reached a terminal state.
    pub success_rate: f64,
    /// Mean undiscounted return per objective.
    pub mean_returns: Vec<f64>,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TlqOutcome {
    pub q: VectorQTable,
    pub policy: Vec<usize>,
    pub eval: EvalStats,
}

/// Runs ε-greedy episodes with the configured update rule and returns the
/// final tables, the greedy policy, and statistics over 100 greedy
/// evaluation episodes. Fully deterministic per `(config, seed)`.
pub fn train_tlq(env: &TabularMomdp, cfg: &TlqConfig, seed: u64) -> Result<TlqOutcome> {
    let k = env.n_objectives();
    let na = env.n_actions();
    if cfg.informed_buffer.is_some() && k != 2 {
        return Err(Error::Unsupported(format!(
            "informed updates are defined for 2 objectives, got {k}"
        )));
    }
    let needed = k - 1;
    if cfg.variant == Variant::GaborRectified && cfg.thresholds.len() < needed {
        return Err(Error::InvalidParameter(format!(
            "rectified variant needs {needed} thresholds, got {}",
            cfg.thresholds.len()
        )));
    }
    if cfg.filter.arity() < needed {
        return Err(Error::InvalidParameter(format!(
            "filter needs parameters for {needed} objectives, got {}",
            cfg.filter.arity()
        )));
    }
    let mut q = VectorQTable::init_for(env.n_states(), na, k, cfg.variant, &cfg.thresholds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for ep in 0..cfg.episodes {
        let mut s = env.initial_state();
        for _ in 0..cfg.horizon {
            if env.is_terminal(s) {
                break;
            }
            let a = select_action(s, &q, na, cfg.epsilon, &cfg.filter, &mut rng);
            let (s2, rewards) = env.sample_step(s, a, &mut rng);
            let t = Transition {
                s,
                a,
                s2,
                rewards: &rewards,
                terminal: env.is_terminal(s2),
            };
            match (cfg.informed_buffer, cfg.variant) {
                (Some(b), _) => {
                    tlq_update_informed(&mut q, &t, na, &cfg.filter, b, cfg.learning_rate, env.gamma())?
                }
                (None, Variant::GaborRectified) => tlq_update_gabor(
                    &mut q,
                    &t,
                    na,
                    &cfg.filter,
                    &cfg.thresholds,
                    cfg.learning_rate,
                    env.gamma(),
                ),
                (None, Variant::LiRaw) => {
                    tlq_update_li(&mut q, &t, na, &cfg.filter, cfg.learning_rate, env.gamma())
                }
            }
            s = s2;
        }
        if ep % 1000 == 999 && !q.is_finite() {
            return Err(Error::NonFinite(format!(
                "Q-table diverged by episode {ep}"
            )));
        }
    }
    if !q.is_finite() {
        return Err(Error::NonFinite("Q-table diverged during training".into()));
    }

    let policy: Vec<usize> = (0..env.n_states())
        .map(|s| greedy_action(s, &q, na, &cfg.filter))
        .collect();
    let eval = evaluate_policy(env, &policy, 100, cfg.horizon, seed ^ 0x5eed_cafe)?;
    Ok(TlqOutcome { q, policy, eval })
}

/// Rolls out a deterministic policy for `episodes` episodes and reports
/// termination rate and mean undiscounted returns.
pub fn evaluate_policy(
    env: &TabularMomdp,
    policy: &[usize],
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<EvalStats> {
    if policy.len() != env.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "policy covers {} states, env has {}",
            policy.len(),
            env.n_states()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = 0usize;
    let mut totals = vec![0.0; env.n_objectives()];
    for _ in 0..episodes {
        let traj = crate::lmdp::run_episode(env, |s, _: &mut ChaCha8Rng| policy[s], horizon, &mut rng);
        if traj.terminated(env) {
            successes += 1;
        }
        for (t, r) in totals.iter_mut().zip(traj.undiscounted_returns()) {
            *t += r;
        }
    }
    let n = episodes as f64;
    Ok(EvalStats {
        success_rate: successes as f64 / n,
        mean_returns: totals.into_iter().map(|t| t / n).collect(),
    })
}

/// Exact dynamic-programming counterpart of [`train_tlq`]: converges each
/// objective's table in importance order with full-expectation sweeps
/// (sup-norm tolerance `tol`), restricting every bootstrap to the action
/// sets induced by the already-converged tables. Removes sampling noise
/// from the failure demonstrations.
pub fn exact_tlq_vi(
    env: &TabularMomdp,
    variant: Variant,
    filter: &Filter,
    tau: &[f64],
    tol: f64,
    max_sweeps: usize,
) -> Result<VectorQTable> {
    let k = env.n_objectives();
    let na = env.n_actions();
    let ns = env.n_states();
    let mut q = VectorQTable::init_for(ns, na, k, variant, tau);

    for i in 0..k {
        for sweep in 0..max_sweeps {
            let mut delta: f64 = 0.0;
            let snapshot = q.table(i).clone();
            for s in 0..ns {
                if env.is_terminal(s) {
                    continue;
                }
                for a in 0..na {
                    let mut target = 0.0;
                    for s2 in 0..ns {
                        let p = env.p(s, a, s2);
                        if p == 0.0 {
                            continue;
                        }
                        let boot = if env.is_terminal(s2) {
                            0.0
                        } else {
                            let set = acceptable_chain(s2, &q, na, filter, i);
                            let best = argmax_lowest(snapshot.row(s2), &set);
                            snapshot.get(s2, best)
                        };
                        target += p * (env.reward(i, s, a, s2) + env.gamma() * boot);
                    }
                    if variant == Variant::GaborRectified && i < k - 1 {
                        target = target.min(tau[i]);
                    }
                    delta = delta.max((target - q.table(i).get(s, a)).abs());
                    q.table_mut(i).set(s, a, target);
                }
            }
            if delta < tol {
                break;
            }
            if sweep + 1 == max_sweeps {
                return Err(Error::NoConvergence(format!(
                    "objective {i} value iteration still moving {delta:.3e} after {max_sweeps} sweeps"
                )));
            }
        }
    }
    Ok(q)
}

/// The δ₁ interval that makes the small maze's four-step detour acceptable
/// under absolute slacking with exact values, if any.
///
/// Choosing the detour at the start requires `δ₁ ≥ Rγ(1−γ²)`; still
/// preferring the goal over loitering next to it requires `δ₁ < R(1−γ)`.
/// The interval `[Rγ(1−γ²), R(1−γ))` is nonempty iff `γ² + γ − 1 < 0`,
/// i.e. γ below ≈ 0.618.
pub fn slack_feasibility_maze_small(gamma: f64, r: f64) -> Result<Option<(f64, f64)>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be in [0,1), got {gamma}"
        )));
    }
    if r <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "goal reward must be positive, got {r}"
        )));
    }
    let lo = r * gamma * (1.0 - gamma * gamma);
    let hi = r * (1.0 - gamma);
    if lo < hi {
        Ok(Some((lo, hi)))
    } else {
        Ok(None)
    }
}

/// State sequence of the small maze's clean detour:
/// (1,0) → (2,0) → (2,1) → (2,2) → (1,2).
pub fn pareto_path_maze_small() -> Vec<usize> {
    let m = maze_small();
    [(1, 0), (2, 0), (2, 1), (2, 2), (1, 2)]
        .iter()
        .map(|&(c, r)| m.cell_index(c, r))
        .collect()
}

/// Whether a deterministic policy, rolled out from the environment's
/// initial state, visits exactly the given state sequence.
pub fn realizes_path(env: &TabularMomdp, policy: &[usize], path: &[usize], horizon: usize) -> bool {
    let mut s = env.initial_state();
    if path.first() != Some(&s) {
        return false;
    }
    for (step, &want) in path[1..].iter().enumerate() {
        if step >= horizon || env.is_terminal(s) {
            return false;
        }
        let a = policy[s];
        // deterministic environments only: take the single successor
        let row = env.transition_row(s, a);
        let s2 = match row.iter().position(|&p| p > 0.999) {
            Some(s2) => s2,
            None => return false,
        };
        if s2 != want {
            return false;
        }
        s = s2;
    }
    env.is_terminal(s) && path.len() == 5
}

/// Scan outcome for one filter family.
#[derive(Debug, Clone)]
pub struct FilterScan {
    pub filter_name: &'static str,
    pub configs: usize,
    /// Configurations whose greedy policy walks the clean detour.
    pub pareto_realizations: usize,
    /// Configurations whose greedy policy reaches the goal at all.
    pub goal_reaching: usize,
}

/// Exhaustive parameter scan on the small maze showing that no filter
/// setting recovers the clean detour: thresholds and slacks over
/// `grid_points`-point grids, each solved with exact value iteration at
/// the given γ, greedy policies rolled out deterministically.
pub fn failure_scan_maze_small(gamma: f64, grid_points: usize) -> Result<Vec<FilterScan>> {
    let spec = maze_small();
    let env = maze_to_momdp(&spec, gamma)?;
    let r = spec.goal_reward;
    let path = pareto_path_maze_small();
    let mut out = Vec::new();

    let grid = |lo: f64, hi: f64| -> Vec<f64> {
        (0..grid_points)
            .map(|i| lo + (hi - lo) * i as f64 / (grid_points - 1) as f64)
            .collect()
    };

    // threshold filter paired with rectified tables, slack filters with raw
    let families: Vec<(Variant, Vec<Filter>)> = vec![
        (
            Variant::GaborRectified,
            grid(0.0, r)
                .into_iter()
                .map(|t| Filter::AbsoluteThreshold(vec![t]))
                .collect(),
        ),
        (
            Variant::LiRaw,
            grid(0.0, r)
                .into_iter()
                .map(|d| Filter::AbsoluteSlack(vec![d]))
                .collect(),
        ),
        (
            Variant::LiRaw,
            grid(0.02, 1.0)
                .into_iter()
                .map(|e| Filter::RelativeSlack(vec![e]))
                .collect(),
        ),
    ];

    for (variant, filters) in families {
        let name = filters[0].name();
        let mut scan = FilterScan {
            filter_name: name,
            configs: 0,
            pareto_realizations: 0,
            goal_reaching: 0,
        };
        for filter in filters {
            let tau = match &filter {
                Filter::AbsoluteThreshold(t) => t.clone(),
                _ => vec![f64::INFINITY],
            };
            let q = exact_tlq_vi(&env, variant, &filter, &tau, 1e-10, 100_000)?;
            let policy: Vec<usize> = (0..env.n_states())
                .map(|s| greedy_action(s, &q, env.n_actions(), &filter))
                .collect();
            scan.configs += 1;
            if realizes_path(&env, &policy, &path, DEFAULT_HORIZON) {
                scan.pareto_realizations += 1;
            }
            let stats = evaluate_policy(&env, &policy, 1, DEFAULT_HORIZON, 0)?;
            if stats.success_rate > 0.999 {
                scan.goal_reaching += 1;
            }
        }
        out.push(scan);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmdp::{value_iteration, TabularMomdp};
    use rand::rngs::StdRng;

    fn table_with_row(row: &[f64], k: usize, variant: Variant) -> VectorQTable {
        let mut q = VectorQTable::new(1, row.len(), k, variant);
        for (a, &v) in row.iter().enumerate() {
            q.table_mut(0).set(0, a, v);
        }
        q
    }

    #[test]
    fn slack_filter_keeps_near_best_actions() {
        let q = table_with_row(&[0.9, 0.7, 0.2], 2, Variant::LiRaw);
        let got = acceptable_actions(0, &q, &[0, 1, 2], 0, &Filter::AbsoluteSlack(vec![0.25]), 0.0);
        assert_eq!(got, vec![0, 1]);
    }

    #[test]
    fn threshold_filter_falls_back_to_argmax() {
        let q = table_with_row(&[0.9, 0.7, 0.2], 2, Variant::GaborRectified);
        let got = acceptable_actions(
            0,
            &q,
            &[0, 1, 2],
            0,
            &Filter::AbsoluteThreshold(vec![1.0]),
            0.0,
        );
        assert_eq!(got, vec![0], "nothing clears τ=1.0, argmax set remains");
    }

    #[test]
    fn relative_filter_uses_fractional_cutoff() {
        let q = table_with_row(&[1.0, 0.8, 0.5], 2, Variant::LiRaw);
        let got = acceptable_actions(0, &q, &[0, 1, 2], 0, &Filter::RelativeSlack(vec![0.25]), 0.0);
        assert_eq!(got, vec![0, 1], "cutoff at 0.75 keeps two actions");
    }

    #[test]
    fn exploration_covers_all_actions() {
        let q = VectorQTable::new(1, 4, 2, Variant::LiRaw);
        let filter = Filter::AbsoluteSlack(vec![0.0]);
        let mut rng = StdRng::seed_from_u64(1);
        let mut seen = [false; 4];
        for _ in 0..200 {
            seen[select_action(0, &q, 4, 1.0, &filter, &mut rng)] = true;
        }
        assert_eq!(seen, [true; 4], "ε=1 must reach every action");
    }

    #[test]
    fn greedy_chain_final_argmax_on_last_objective() {
        // objective 1 accepts {0,1}; objective 2 prefers action 1
        let mut q = VectorQTable::new(1, 3, 2, Variant::LiRaw);
        for (a, v) in [(0usize, 1.0), (1, 0.95), (2, 0.2)] {
            q.table_mut(0).set(0, a, v);
        }
        for (a, v) in [(0usize, 0.1), (1, 0.9), (2, 0.5)] {
            q.table_mut(1).set(0, a, v);
        }
        let a = greedy_action(0, &q, 3, &Filter::AbsoluteSlack(vec![0.1]));
        assert_eq!(a, 1);
    }

    #[test]
    fn greedy_chain_early_singleton_short_circuits() {
        // slack 0 keeps only the primary argmax; Q₂ would prefer action 2
        let mut q = VectorQTable::new(1, 3, 2, Variant::LiRaw);
        for (a, v) in [(0usize, 0.5), (1, 1.0), (2, 0.4)] {
            q.table_mut(0).set(0, a, v);
        }
        q.table_mut(1).set(0, 2, 5.0);
        let a = greedy_action(0, &q, 3, &Filter::AbsoluteSlack(vec![0.0]));
        assert_eq!(a, 1, "singleton after the first filter decides");
    }

    fn two_step_chain(gamma: f64) -> TabularMomdp {
        // s0 -> s1 -> s2(terminal), reward 1 on the final hop, one extra action self-looping
        TabularMomdp::builder(3, 2, 1)
            .gamma(gamma)
            .initial_state(0)
            .terminal(2)
            .transition(0, 0, 1, 1.0)
            .transition(0, 1, 0, 1.0)
            .transition(1, 0, 2, 1.0)
            .transition(1, 1, 1, 1.0)
            .reward(0, 1, 0, 2, 1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn rectified_update_clamps_at_threshold() {
        let env = two_step_chain(0.5);
        let tau = [0.6];
        // handmade two-objective table so the constrained clamp applies
        let mut q = VectorQTable::new(3, 2, 2, Variant::GaborRectified);
        let t = Transition {
            s: 1,
            a: 0,
            s2: 2,
            rewards: &[1.0, 0.0],
            terminal: true,
        };
        let f = Filter::AbsoluteThreshold(vec![0.6]);
        tlq_update_gabor(&mut q, &t, 2, &f, &tau, 1.0, env.gamma());
        assert!((q.table(0).get(1, 0) - 0.6).abs() < 1e-12, "min(0.6, 1.0)");
        let t0 = Transition {
            s: 0,
            a: 0,
            s2: 1,
            rewards: &[0.0, 0.0],
            terminal: false,
        };
        tlq_update_gabor(&mut q, &t0, 2, &f, &tau, 1.0, env.gamma());
        assert!(
            (q.table(0).get(0, 0) - 0.3).abs() < 1e-12,
            "0 + γ·0.6 = 0.3 stays below the threshold"
        );
    }

    #[test]
    fn raw_update_does_not_clamp() {
        let mut q = VectorQTable::new(3, 2, 2, Variant::LiRaw);
        let t = Transition {
            s: 1,
            a: 0,
            s2: 2,
            rewards: &[1.0, 0.0],
            terminal: true,
        };
        let f = Filter::AbsoluteSlack(vec![0.0]);
        tlq_update_li(&mut q, &t, 2, &f, 1.0, 0.5);
        assert!((q.table(0).get(1, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rewards_keep_zero_tables() {
        let mut q = VectorQTable::new(3, 2, 2, Variant::GaborRectified);
        let f = Filter::AbsoluteThreshold(vec![0.6]);
        for s in 0..2usize {
            let t = Transition {
                s,
                a: 0,
                s2: s + 1,
                rewards: &[0.0, 0.0],
                terminal: s + 1 == 2,
            };
            tlq_update_gabor(&mut q, &t, 2, &f, &[0.6], 0.1, 0.9);
        }
        assert!(q.table(0).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn informed_update_bootstraps_through_secondary_choice() {
        let mut q = VectorQTable::new(2, 2, 2, Variant::LiRaw);
        // in s'=1 the primary prefers action 0, the secondary prefers action 1
        q.table_mut(0).set(1, 0, 1.0);
        q.table_mut(0).set(1, 1, 0.4);
        q.table_mut(1).set(1, 0, 0.0);
        q.table_mut(1).set(1, 1, 1.0);
        let t = Transition {
            s: 0,
            a: 0,
            s2: 1,
            rewards: &[0.0, 0.0],
            terminal: false,
        };
        // wide slack keeps both actions acceptable, so the secondary picks a=1
        let f = Filter::AbsoluteSlack(vec![1.0]);
        tlq_update_informed(&mut q, &t, 2, &f, 0.0, 1.0, 0.5).unwrap();
        assert!(
            (q.table(0).get(0, 0) - 0.2).abs() < 1e-12,
            "primary target is γ·Q₁(s′,a₂) = 0.5·0.4, not 0.5·1.0"
        );

        let mut k3 = VectorQTable::new(2, 2, 3, Variant::LiRaw);
        let e = tlq_update_informed(&mut k3, &t, 2, &f, 0.0, 1.0, 0.5);
        assert!(matches!(e, Err(Error::Unsupported(_))));
    }

    #[test]
    fn informed_update_with_huge_buffer_uses_global_argmax() {
        let mut q = VectorQTable::new(2, 2, 2, Variant::LiRaw);
        q.table_mut(0).set(1, 0, 1.0);
        q.table_mut(0).set(1, 1, 0.4);
        q.table_mut(1).set(1, 1, 1.0);
        let t = Transition {
            s: 0,
            a: 0,
            s2: 1,
            rewards: &[0.0, 0.0],
            terminal: false,
        };
        // zero slack would keep only the primary argmax, but the buffer re-admits everything
        let f = Filter::AbsoluteSlack(vec![0.0]);
        tlq_update_informed(&mut q, &t, 2, &f, 1e9, 1.0, 0.5).unwrap();
        assert!((q.table(0).get(0, 0) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn cyclic_selection_branches() {
        // singleton after the primary filter
        let mut q = VectorQTable::new(1, 3, 2, Variant::LiRaw);
        for (a, v) in [(0usize, 1.0), (1, 0.2), (2, 0.1)] {
            q.table_mut(0).set(0, a, v);
        }
        let f = Filter::AbsoluteSlack(vec![0.0, 0.0]);
        assert_eq!(cyclic_select_action(0, &q, 3, &f).unwrap(), 0);

        // two survive the primary, secondary narrows to one
        let mut q = VectorQTable::new(1, 3, 2, Variant::LiRaw);
        for (a, v) in [(0usize, 1.0), (1, 0.95), (2, 0.1)] {
            q.table_mut(0).set(0, a, v);
        }
        for (a, v) in [(0usize, 0.3), (1, 0.9), (2, 0.0)] {
            q.table_mut(1).set(0, a, v);
        }
        let f = Filter::AbsoluteSlack(vec![0.1, 0.0]);
        assert_eq!(
            cyclic_select_action(0, &q, 3, &f).unwrap(),
            1,
            "argmax of Q₂ over the primary's survivors"
        );

        // both keep two actions: final verdict returns to Q₁
        let f = Filter::AbsoluteSlack(vec![0.1, 1.0]);
        assert_eq!(
            cyclic_select_action(0, &q, 3, &f).unwrap(),
            0,
            "tie-break goes back to the primary objective"
        );

        let k3 = VectorQTable::new(1, 3, 3, Variant::LiRaw);
        assert!(cyclic_select_action(0, &k3, 3, &f).is_err());
    }

    #[test]
    fn single_objective_training_matches_value_iteration() {
        // 5-state corridor, reward on entering the last state
        let mut b = TabularMomdp::builder(5, 2, 1)
            .gamma(0.9)
            .initial_state(0)
            .terminal(4);
        for s in 0..4usize {
            b = b.transition(s, 0, s + 1, 1.0).transition(s, 1, s.saturating_sub(1), 1.0);
        }
        b = b.reward(0, 3, 0, 4, 1.0);
        let env = b.build().unwrap();

        let mut cfg = TlqConfig::new(Variant::LiRaw, Filter::AbsoluteSlack(vec![]), vec![]);
        cfg.episodes = 4000;
        cfg.learning_rate = 0.5;
        cfg.epsilon = 0.3;
        let out = train_tlq(&env, &cfg, 7).unwrap();
        let exact = value_iteration(&env, 0, 1e-12, 10_000).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                assert!(
                    (out.q.table(0).get(s, a) - exact.get(s, a)).abs() < 1e-3,
                    "Q({s},{a}): learned {} vs exact {}",
                    out.q.table(0).get(s, a),
                    exact.get(s, a)
                );
            }
        }
        assert!(out.eval.success_rate > 0.999);
    }

    #[test]
    fn exact_vi_reduces_to_plain_dp_for_one_objective() {
        let env = two_step_chain(0.5);
        let q = exact_tlq_vi(
            &env,
            Variant::LiRaw,
            &Filter::AbsoluteSlack(vec![]),
            &[],
            1e-12,
            10_000,
        )
        .unwrap();
        let exact = value_iteration(&env, 0, 1e-12, 10_000).unwrap();
        for s in 0..3 {
            for a in 0..2 {
                assert!((q.table(0).get(s, a) - exact.get(s, a)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rectified_tables_never_exceed_thresholds() {
        let env = maze_to_momdp(&maze_small(), 0.99).unwrap();
        let tau = [0.7];
        let mut q = VectorQTable::init_for(env.n_states(), 4, 2, Variant::GaborRectified, &tau);
        let f = Filter::AbsoluteThreshold(vec![0.7]);
        let mut rng = StdRng::seed_from_u64(5);
        let mut s = env.initial_state();
        for _ in 0..5000 {
            if env.is_terminal(s) {
                s = env.initial_state();
            }
            let a = rng.gen_range(0..4);
            let (s2, rewards) = env.sample_step(s, a, &mut rng);
            let t = Transition {
                s,
                a,
                s2,
                rewards: &rewards,
                terminal: env.is_terminal(s2),
            };
            tlq_update_gabor(&mut q, &t, 4, &f, &tau, 0.3, env.gamma());
            assert!(
                q.table(0).values().iter().all(|&v| v <= 0.7 + 1e-12),
                "constrained table exceeded its threshold"
            );
            s = s2;
        }
    }

    #[test]
    fn slack_interval_matches_hand_derivation() {
        assert_eq!(slack_feasibility_maze_small(0.9, 1.0).unwrap(), None);
        let (lo, hi) = slack_feasibility_maze_small(0.5, 1.0).unwrap().unwrap();
        assert!((lo - 0.375).abs() < 1e-12);
        assert!((hi - 0.5).abs() < 1e-12);
        let (lo, hi) = slack_feasibility_maze_small(0.01, 1.0).unwrap().unwrap();
        assert!(lo < 0.011 && hi > 0.98, "tiny γ leaves almost the whole range");
        assert!(slack_feasibility_maze_small(1.0, 1.0).is_err());
        assert!(slack_feasibility_maze_small(0.5, 0.0).is_err());
    }

    #[test]
    fn small_scan_finds_no_pareto_policy() {
        let scans = failure_scan_maze_small(0.99, 8).unwrap();
        assert_eq!(scans.len(), 3);
        for scan in &scans {
            assert_eq!(scan.configs, 8);
            assert_eq!(
                scan.pareto_realizations, 0,
                "{} should never walk the clean detour at γ=0.99",
                scan.filter_name
            );
        }
        // sanity: the threshold family does reach the goal for low thresholds
        assert!(
            scans[0].goal_reaching > 0,
            "some threshold settings reach the goal (through the penalty wall)"
        );
    }

    #[test]
    fn pareto_path_is_walkable_by_some_policy() {
        let spec = maze_small();
        let env = maze_to_momdp(&spec, 0.99).unwrap();
        let path = pareto_path_maze_small();
        // right, right(up), up, up(left): hand-build the policy
        let mut policy = vec![0usize; env.n_states()];
        policy[spec.cell_index(1, 0)] = 3; // right
        policy[spec.cell_index(2, 0)] = 0; // up
        policy[spec.cell_index(2, 1)] = 0; // up
        policy[spec.cell_index(2, 2)] = 2; // left
        assert!(realizes_path(&env, &policy, &path, DEFAULT_HORIZON));
        // a policy that walks through the wall does not realize it
        let mut bad = vec![0usize; env.n_states()];
        bad[spec.cell_index(1, 0)] = 0;
        assert!(!realizes_path(&env, &bad, &path, DEFAULT_HORIZON));
    }
}
