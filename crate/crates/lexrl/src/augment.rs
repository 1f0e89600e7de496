//! Budget-tracking state augmentation: reduces a constrained-objective
//! problem to a single-objective MDP whose scalar returns order terminating
//! trajectories the same way the thresholded lexicographic comparison does.
//!
//! Each constrained objective gets an accumulator `c` appended to the state,
//! starting at the budget `−τ` and moving with that objective's rewards, so
//! `c ≥ 0` at episode end means the threshold was met. Scalar rewards then
//! pay the unconstrained objective when all budgets close non-negative and a
//! penalty proportional to the worst overshoot otherwise. The reduction is a
//! poor fit for exploration-driven learners (every over-budget terminal
//! looks worse than wandering forever), so this module pairs it with exact
//! dynamic-programming solvers only.

use crate::lmdp::{
    greedy_policy, lex_compare, value_iteration, TabularMomdp, Trajectory, DEFAULT_HORIZON,
};
use crate::{Error, Result};
use std::cmp::Ordering;
use std::collections::HashMap;

/// Where the unconstrained payoff enters the scalar reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardLayout {
    /// Reward only on reaching a terminal state: the unconstrained step
    /// payoff if every budget closed non-negative, otherwise λ times the
    /// worst overshoot. Assumes the unconstrained objective pays only on
    /// terminal entry.
    TerminalPayoff,
    /// Adds one more accumulator that sums the unconstrained rewards along
    /// the way and pays that sum on within-budget terminal entry; over
    /// budget as above. Lifts the terminal-only payoff restriction at the
    /// cost of a larger state space.
    AccumulatedPayoff,
    /// Pays the unconstrained reward at every step; an over-budget terminal
    /// additionally costs λ·(worst overshoot) − C_l, with C_l larger than
    /// any achievable episode payoff so budget violations always lose.
    StepPayoff,
}

/// Construction options. `horizon` bounds both the episode-payoff constant
/// `C_l` and the saturation floor of the accumulators; `max_states` caps
/// the reachable augmented state space.
#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub lambda: f64,
    pub layout: RewardLayout,
    pub horizon: usize,
    pub max_states: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            lambda: 1.0,
            layout: RewardLayout::TerminalPayoff,
            horizon: DEFAULT_HORIZON,
            max_states: 1_000_000,
        }
    }
}

/// A scalar MDP over `(state, accumulators)` pairs, together with the data
/// needed to map results back to the original problem. The scalar model is
/// inspectable and serializable like any other tabular model via
/// [`AugmentedMdp::as_momdp`].
#[derive(Debug, Clone)]
pub struct AugmentedMdp {
    base: TabularMomdp,
    /// Constrained objective indices tracked by accumulators (a prefix of
    /// the base objective order).
    tracked: Vec<usize>,
    /// Thresholds of the tracked objectives; accumulators start at `−τ_j`.
    thresholds: Vec<f64>,
    lambda: f64,
    c_l: f64,
    layout: RewardLayout,
    /// Saturation floor per tracked accumulator (payoff accumulator, when
    /// present, is unclamped).
    floors: Vec<f64>,
    momdp: TabularMomdp,
    /// Augmented state id → (base state, accumulator values). Budget
    /// accumulators come first; the payoff accumulator, if the layout has
    /// one, is last.
    states: Vec<(usize, Vec<f64>)>,
}

impl AugmentedMdp {
    /// The scalar single-objective model.
    pub fn as_momdp(&self) -> &TabularMomdp {
        &self.momdp
    }

    pub fn base(&self) -> &TabularMomdp {
        &self.base
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn payoff_bound(&self) -> f64 {
        self.c_l
    }

    pub fn layout(&self) -> RewardLayout {
        self.layout
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Base state and accumulator values behind an augmented state id.
    pub fn decode(&self, aug_state: usize) -> (usize, &[f64]) {
        let (s, accs) = &self.states[aug_state];
        (*s, accs)
    }

    fn n_budgets(&self) -> usize {
        self.tracked.len()
    }

    /// Scalar reward for one base transition, given the accumulator values
    /// after the step. Single source of truth for both the constructed
    /// model and trajectory replay.
    fn scalar_reward(&self, payoff_step: f64, terminal: bool, accs_after: &[f64]) -> f64 {
        let budgets = &accs_after[..self.n_budgets()];
        let all_met = budgets.iter().all(|&c| c >= 0.0);
        let worst = budgets.iter().copied().fold(f64::INFINITY, f64::min);
        match self.layout {
            RewardLayout::TerminalPayoff => {
                if !terminal {
                    0.0
                } else if all_met {
                    payoff_step
                } else {
                    self.lambda * worst
                }
            }
            RewardLayout::AccumulatedPayoff => {
                if !terminal {
                    0.0
                } else if all_met {
                    *accs_after.last().expect("payoff accumulator present")
                } else {
                    self.lambda * worst
                }
            }
            RewardLayout::StepPayoff => {
                if !terminal || all_met {
                    payoff_step
                } else {
                    self.lambda * worst - self.c_l
                }
            }
        }
    }

    /// Advances the accumulator vector by one base transition.
    fn step_accs(&self, accs: &[f64], s: usize, a: usize, s2: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(accs.len());
        for (j, &obj) in self.tracked.iter().enumerate() {
            let c = accs[j] + self.base.reward(obj, s, a, s2);
            out.push(c.max(self.floors[j]));
        }
        if self.layout == RewardLayout::AccumulatedPayoff {
            let payoff = self.base.reward(self.base.n_objectives() - 1, s, a, s2);
            out.push(accs[accs.len() - 1] + payoff);
        }
        out
    }

    /// Undiscounted scalar return the augmented MDP assigns to a base
    /// trajectory (the quantity the ordering proof compares).
    pub fn scalar_return(&self, traj: &Trajectory) -> f64 {
        let payoff_idx = self.base.n_objectives() - 1;
        let mut accs = self.initial_accs();
        let mut total = 0.0;
        for t in 0..traj.len() {
            let (s, a, s2) = (traj.states[t], traj.actions[t], traj.states[t + 1]);
            accs = self.step_accs(&accs, s, a, s2);
            total += self.scalar_reward(
                traj.rewards[t][payoff_idx],
                self.base.is_terminal(s2),
                &accs,
            );
        }
        total
    }

    fn initial_accs(&self) -> Vec<f64> {
        let mut accs: Vec<f64> = self.thresholds.iter().map(|&t| -t).collect();
        if self.layout == RewardLayout::AccumulatedPayoff {
            accs.push(0.0);
        }
        accs
    }
}

fn acc_key(accs: &[f64]) -> Vec<u64> {
    accs.iter().map(|c| c.to_bits()).collect()
}

/// Largest absolute reward of one objective over transitions that can occur.
fn max_abs_reward(m: &TabularMomdp, objective: usize) -> f64 {
    let mut best: f64 = 0.0;
    for s in 0..m.n_states() {
        if m.is_terminal(s) {
            continue;
        }
        for a in 0..m.n_actions() {
            for s2 in 0..m.n_states() {
                if m.p(s, a, s2) > 0.0 {
                    best = best.max(m.reward(objective, s, a, s2).abs());
                }
            }
        }
    }
    best
}

/// Augments a model with accumulators for its first `thresholds.len()`
/// objectives (the constrained prefix); the last objective is the
/// unconstrained payoff. Explores exactly the reachable `(state,
/// accumulators)` pairs, saturating each budget accumulator at the lowest
/// value distinguishable within the configured horizon.
pub fn augment_prefix(
    m: &TabularMomdp,
    thresholds: &[f64],
    cfg: &AugmentConfig,
) -> Result<AugmentedMdp> {
    let k = m.n_objectives();
    if thresholds.is_empty() || thresholds.len() >= k {
        return Err(Error::InvalidParameter(format!(
            "constrained prefix must cover 1..={} objectives, got {}",
            k - 1,
            thresholds.len()
        )));
    }
    if !(cfg.lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "penalty multiplier must be positive, got {}",
            cfg.lambda
        )));
    }
    let tracked: Vec<usize> = (0..thresholds.len()).collect();
    let c_l = cfg.horizon as f64 * max_abs_reward(m, k - 1) + 1.0;
    let floors: Vec<f64> = tracked
        .iter()
        .zip(thresholds)
        .map(|(&obj, &tau)| -tau - cfg.horizon as f64 * max_abs_reward(m, obj) - 1.0)
        .collect();

    let mut shell = AugmentedMdp {
        base: m.clone(),
        tracked,
        thresholds: thresholds.to_vec(),
        lambda: cfg.lambda,
        c_l,
        layout: cfg.layout,
        floors,
        momdp: TabularMomdp::builder(1, 1, 1).terminal(0).build()?, // replaced below
        states: Vec::new(),
    };

    // breadth-first reachability over (state, accumulators)
    let mut index: HashMap<(usize, Vec<u64>), usize> = HashMap::new();
    let init = (m.initial_state(), shell.initial_accs());
    index.insert((init.0, acc_key(&init.1)), 0);
    shell.states.push(init);
    let mut edges: Vec<(usize, usize, usize, f64, f64)> = Vec::new(); // (from, action, to, p, reward)
    let mut frontier = 0usize;
    while frontier < shell.states.len() {
        let (s, accs) = shell.states[frontier].clone();
        if !m.is_terminal(s) {
            for a in 0..m.n_actions() {
                for s2 in 0..m.n_states() {
                    let p = m.p(s, a, s2);
                    if p == 0.0 {
                        continue;
                    }
                    let accs2 = shell.step_accs(&accs, s, a, s2);
                    let key = (s2, acc_key(&accs2));
                    let next = shell.states.len();
                    let to = *index.entry(key).or_insert_with(|| {
                        shell.states.push((s2, accs2.clone()));
                        next
                    });
                    if shell.states.len() > cfg.max_states {
                        return Err(Error::Unsupported(format!(
                            "accumulator grid exceeds {} reachable augmented states",
                            cfg.max_states
                        )));
                    }
                    let r = shell.scalar_reward(
                        m.reward(k - 1, s, a, s2),
                        m.is_terminal(s2),
                        &accs2,
                    );
                    edges.push((frontier, a, to, p, r));
                }
            }
        }
        frontier += 1;
    }

    let mut b = TabularMomdp::builder(shell.states.len(), m.n_actions(), 1)
        .gamma(m.gamma())
        .initial_state(0);
    for (aug_s, (base_s, _)) in shell.states.iter().enumerate() {
        if m.is_terminal(*base_s) {
            b = b.terminal(aug_s);
        }
    }
    for (from, a, to, p, r) in edges {
        b = b.transition(from, a, to, p);
        if r != 0.0 {
            b = b.reward(0, from, a, to, r);
        }
    }
    shell.momdp = b.build()?;
    Ok(shell)
}

/// Two-objective convenience wrapper: tracks the given constrained
/// objective and treats the other one as the payoff.
pub fn augment_single(
    m: &TabularMomdp,
    constrained: usize,
    tau: f64,
    cfg: &AugmentConfig,
) -> Result<AugmentedMdp> {
    if m.n_objectives() != 2 {
        return Err(Error::Unsupported(format!(
            "single-constraint augmentation expects 2 objectives, got {}",
            m.n_objectives()
        )));
    }
    if constrained > 1 {
        return Err(Error::InvalidParameter(format!(
            "constrained objective index {constrained} out of range"
        )));
    }
    let ordered = if constrained == 0 {
        m.clone()
    } else {
        m.with_objective_order(&[1, 0])?
    };
    augment_prefix(&ordered, &[tau], cfg)
}

/// Whether the thresholded lexicographic comparison of two terminating base
/// trajectories agrees with the scalar-return comparison in the augmented
/// model. Requires the augmentation to track every constrained objective.
pub fn ordering_preserved(
    aug: &AugmentedMdp,
    t1: &Trajectory,
    t2: &Trajectory,
) -> Result<bool> {
    let base = aug.base();
    if !t1.terminated(base) || !t2.terminated(base) {
        return Err(Error::InvalidParameter(
            "ordering comparison needs terminating trajectories".into(),
        ));
    }
    if aug.thresholds.len() != base.n_objectives() - 1 {
        return Err(Error::Unsupported(
            "ordering comparison needs accumulators for every constrained objective".into(),
        ));
    }
    let lex = lex_compare(
        &t1.undiscounted_returns(),
        &t2.undiscounted_returns(),
        &aug.thresholds,
    )?;
    let (r1, r2) = (aug.scalar_return(t1), aug.scalar_return(t2));
    const TOL: f64 = 1e-9;
    let scalar = if r1 > r2 + TOL {
        Ordering::Greater
    } else if r1 < r2 - TOL {
        Ordering::Less
    } else {
        Ordering::Equal
    };
    Ok(lex == scalar)
}

/// Every trajectory of a deterministic model that reaches a terminal state
/// within `max_len` steps, by depth-first search over action sequences.
pub fn enumerate_terminating_trajectories(
    m: &TabularMomdp,
    max_len: usize,
) -> Result<Vec<Trajectory>> {
    let successor = deterministic_successors(m)?;
    let mut out = Vec::new();
    let mut traj = Trajectory {
        states: vec![m.initial_state()],
        actions: Vec::new(),
        rewards: Vec::new(),
    };
    fn dfs(
        m: &TabularMomdp,
        successor: &[usize],
        traj: &mut Trajectory,
        max_len: usize,
        out: &mut Vec<Trajectory>,
    ) {
        let s = *traj.states.last().expect("nonempty");
        if m.is_terminal(s) {
            out.push(traj.clone());
            return;
        }
        if traj.len() == max_len {
            return;
        }
        for a in 0..m.n_actions() {
            let s2 = successor[s * m.n_actions() + a];
            traj.actions.push(a);
            traj.states.push(s2);
            traj.rewards
                .push((0..m.n_objectives()).map(|i| m.reward(i, s, a, s2)).collect());
            dfs(m, successor, traj, max_len, out);
            traj.actions.pop();
            traj.states.pop();
            traj.rewards.pop();
        }
    }
    dfs(m, &successor, &mut traj, max_len, &mut out);
    Ok(out)
}

/// `(state, action) → successor` table; errors on stochastic models.
fn deterministic_successors(m: &TabularMomdp) -> Result<Vec<usize>> {
    let mut table = vec![0usize; m.n_states() * m.n_actions()];
    for s in 0..m.n_states() {
        for a in 0..m.n_actions() {
            let row = m.transition_row(s, a);
            let s2 = row
                .iter()
                .position(|&p| p > 0.999)
                .ok_or_else(|| {
                    Error::Unsupported(
                        "exhaustive trajectory analysis needs deterministic transitions".into(),
                    )
                })?;
            table[s * m.n_actions() + a] = s2;
        }
    }
    Ok(table)
}

/// The small maze with the penalty objective promoted to the constrained
/// slot (threshold 0: no penalty tile may be entered) and goal arrival as
/// the unconstrained payoff. Exactly the configuration the thresholded
/// Q-learning scan cannot solve.
pub fn maze_small_budget_variant(gamma: f64) -> Result<(TabularMomdp, Vec<f64>)> {
    let m = crate::envs::maze_to_momdp(&crate::envs::maze_small(), gamma)?;
    Ok((m.with_objective_order(&[1, 0])?, vec![0.0]))
}

/// Search strategy over constrained prefixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStrategy {
    /// Grow the prefix one constraint at a time.
    Linear,
    /// Bisect on the prefix length (satisfiability is monotone).
    Binary,
}

/// Result of [`constraint_search`].
#[derive(Debug)]
pub struct SearchOutcome {
    /// Largest `k` such that constraints `1..=k` are simultaneously
    /// satisfiable by some policy.
    pub max_prefix: usize,
    /// Exact-solver invocations performed.
    pub solver_calls: usize,
    /// Augmented model and greedy policy witnessing the winning prefix
    /// (absent when even the first constraint is unsatisfiable).
    pub witness: Option<(AugmentedMdp, Vec<usize>)>,
}

/// Solves one prefix subproblem exactly and reports whether its greedy
/// policy reaches a terminal state with every tracked budget non-negative.
fn prefix_satisfiable(
    m: &TabularMomdp,
    thresholds: &[f64],
    cfg: &AugmentConfig,
) -> Result<(bool, AugmentedMdp, Vec<usize>)> {
    let mut sub_cfg = cfg.clone();
    sub_cfg.layout = RewardLayout::StepPayoff;
    let aug = augment_prefix(m, thresholds, &sub_cfg)?;
    let q = value_iteration(aug.as_momdp(), 0, 1e-10, 200_000)?;
    let policy = greedy_policy(&q);
    // deterministic rollout; any cycle shows up within |S| steps
    let scalar = aug.as_momdp();
    let mut s = scalar.initial_state();
    for _ in 0..=scalar.n_states() {
        if scalar.is_terminal(s) {
            break;
        }
        let row = scalar.transition_row(s, policy[s]);
        s = row
            .iter()
            .position(|&p| p > 0.999)
            .ok_or_else(|| Error::Unsupported("constraint search needs deterministic transitions".into()))?;
    }
    let (base_s, accs) = aug.decode(s);
    let ok = scalar.is_terminal(s)
        && base_s < m.n_states()
        && accs[..thresholds.len()].iter().all(|&c| c >= -1e-12);
    Ok((ok, aug, policy))
}

/// Finds the longest satisfiable constraint prefix of a deterministic
/// model whose payoff rewards are positive and terminal-only, by solving
/// augmented subproblems exactly with the chosen strategy.
pub fn constraint_search(
    m: &TabularMomdp,
    thresholds: &[f64],
    strategy: SearchStrategy,
    cfg: &AugmentConfig,
) -> Result<SearchOutcome> {
    let n_constraints = thresholds.len();
    if n_constraints == 0 || n_constraints != m.n_objectives() - 1 {
        return Err(Error::InvalidParameter(format!(
            "need thresholds for all {} constrained objectives, got {}",
            m.n_objectives().saturating_sub(1),
            n_constraints
        )));
    }
    let mut calls = 0usize;
    let mut witness = None;
    let mut max_prefix = 0usize;
    match strategy {
        SearchStrategy::Linear => {
            for i in 1..=n_constraints {
                calls += 1;
                let (ok, aug, policy) = prefix_satisfiable(m, &thresholds[..i], cfg)?;
                if !ok {
                    break;
                }
                max_prefix = i;
                witness = Some((aug, policy));
            }
        }
        SearchStrategy::Binary => {
            let (mut lo, mut hi) = (0usize, n_constraints);
            while lo < hi {
                let mid = (lo + hi + 1) / 2;
                calls += 1;
                let (ok, aug, policy) = prefix_satisfiable(m, &thresholds[..mid], cfg)?;
                if ok {
                    lo = mid;
                    max_prefix = mid;
                    witness = Some((aug, policy));
                } else {
                    hi = mid - 1;
                }
            }
        }
    }
    Ok(SearchOutcome {
        max_prefix,
        solver_calls: calls,
        witness,
    })
}
