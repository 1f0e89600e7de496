//! Tabular multi-objective MDPs and the thresholded lexicographic order.
//!
//! Objectives are prioritized: each objective `i < K` carries a threshold
//! `tau_i`, and utility above the threshold does not count. Only the last
//! objective is optimized without a cap. Comparisons, episode bookkeeping,
//! and the exact single-objective value-iteration machinery used by several
//! learners all live here.
//!
//! Indexing convention: objectives are 1-based in documentation and error
//! text (matching the math), 0-based in slices.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;

use crate::{Error, Result};

/// Default cap on episode length when rolling out policies.
pub const DEFAULT_HORIZON: usize = 200;

fn check_compare_dims(u: &[f64], v: &[f64], tau: &[f64]) -> Result<()> {
    if u.is_empty() || u.len() != v.len() || tau.len() + 1 != u.len() {
        return Err(Error::DimensionMismatch(format!(
            "thresholded compare: |u| = {}, |v| = {}, |tau| = {} (need |u| = |v| = |tau| + 1 ≥ 1)",
            u.len(),
            v.len(),
            tau.len()
        )));
    }
    for x in u.iter().chain(v).chain(tau) {
        if !x.is_finite() {
            return Err(Error::NonFinite("thresholded compare input".into()));
        }
    }
    Ok(())
}

/// `true` iff `u` strictly beats `v` in the thresholded lexicographic order:
/// some objective `i` decides in `u`'s favor (above-threshold excess never
/// counts for `i < K`) while every earlier objective of `u` is at least as
/// good as `v`'s, clipped.
fn strictly_preferred(u: &[f64], v: &[f64], tau: &[f64]) -> bool {
    let k = u.len();
    for i in 0..k {
        let decides = if i + 1 < k {
            u[i].min(tau[i]) > v[i].min(tau[i])
        } else {
            u[i] > v[i]
        };
        if decides {
            return true;
        }
        // The search may move past objective i only while u stays at least
        // as good there (clipped); otherwise no later win can count.
        if i + 1 < k && u[i] < v[i].min(tau[i]) {
            return false;
        }
    }
    false
}

/// Compares two utility tuples under thresholds `tau` (one per objective
/// except the last). Equality means all clipped components and the final
/// components coincide.
///
/// Equivalent to plain lexicographic order on the clipped tuples
/// `(min(u_1, tau_1), …, min(u_{K−1}, tau_{K−1}), u_K)`.
pub fn lex_compare(u: &[f64], v: &[f64], tau: &[f64]) -> Result<Ordering> {
    check_compare_dims(u, v, tau)?;
    if strictly_preferred(u, v, tau) {
        return Ok(Ordering::Greater);
    }
    let k = u.len();
    let equal = (0..k - 1).all(|i| u[i].min(tau[i]) == v[i].min(tau[i])) && u[k - 1] == v[k - 1];
    if equal {
        Ok(Ordering::Equal)
    } else {
        Ok(Ordering::Less)
    }
}

/// Index (1-based) of the first objective whose threshold is not met, or `K`
/// when every constrained objective clears its threshold. This is the
/// objective a lexicographic learner should currently be improving.
pub fn first_unsatisfied(u: &[f64], tau: &[f64]) -> Result<usize> {
    if u.is_empty() || tau.len() + 1 != u.len() {
        return Err(Error::DimensionMismatch(format!(
            "first_unsatisfied: |u| = {}, |tau| = {} (need |u| = |tau| + 1 ≥ 1)",
            u.len(),
            tau.len()
        )));
    }
    for (j, (&uj, &tj)) in u.iter().zip(tau).enumerate() {
        if uj < tj {
            return Ok(j + 1);
        }
    }
    Ok(u.len())
}

/// A finite MDP with `K` reward functions over `(s, a, s')` triples.
///
/// Terminal states are absorbing with zero reward; the constructor rewrites
/// their rows accordingly so downstream code never needs to special-case
/// them.
#[derive(Debug, Clone)]
pub struct TabularMomdp {
    n_states: usize,
    n_actions: usize,
    n_objectives: usize,
    initial_state: usize,
    terminal: Vec<bool>,
    /// Transition probabilities, `[s][a][s']` flattened.
    transition: Vec<f64>,
    /// One table per objective, `[s][a][s']` flattened.
    rewards: Vec<Vec<f64>>,
    gamma: f64,
}

impl TabularMomdp {
    /// Starts assembling a model with all-zero transitions and rewards.
    pub fn builder(n_states: usize, n_actions: usize, n_objectives: usize) -> MomdpBuilder {
        MomdpBuilder {
            n_states,
            n_actions,
            n_objectives,
            initial_state: 0,
            terminal: vec![false; n_states],
            transition: vec![0.0; n_states * n_actions * n_states],
            rewards: vec![vec![0.0; n_states * n_actions * n_states]; n_objectives],
            gamma: 1.0,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_objectives(&self) -> usize {
        self.n_objectives
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_states).filter(|&s| self.terminal[s])
    }

    #[inline]
    fn idx(&self, s: usize, a: usize, s2: usize) -> usize {
        (s * self.n_actions + a) * self.n_states + s2
    }

    /// Transition probability `P(s' | s, a)`.
    pub fn p(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[self.idx(s, a, s2)]
    }

    /// Reward of objective `i` (0-based) for the triple `(s, a, s')`.
    pub fn reward(&self, i: usize, s: usize, a: usize, s2: usize) -> f64 {
        self.rewards[i][self.idx(s, a, s2)]
    }

    /// The probability row `P(· | s, a)`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    /// Samples a successor and the K-vector of rewards for taking `a` in `s`.
    pub fn sample_step<R: Rng + ?Sized>(
        &self,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> (usize, Vec<f64>) {
        let row = self.transition_row(s, a);
        let draw: f64 = rng.gen();
        let mut acc = 0.0;
        let mut next = self.n_states - 1;
        for (s2, &p) in row.iter().enumerate() {
            acc += p;
            if draw < acc {
                next = s2;
                break;
            }
        }
        let rew = (0..self.n_objectives)
            .map(|i| self.reward(i, s, a, next))
            .collect();
        (next, rew)
    }

    /// Returns a copy whose reward tables are permuted: new objective `i` is
    /// old objective `order[i]`. Used to promote a different objective to the
    /// constrained slots.
    pub fn with_objective_order(&self, order: &[usize]) -> Result<TabularMomdp> {
        let mut seen = vec![false; self.n_objectives];
        if order.len() != self.n_objectives
            || order.iter().any(|&i| {
                if i >= self.n_objectives || seen[i] {
                    true
                } else {
                    seen[i] = true;
                    false
                }
            })
        {
            return Err(Error::InvalidParameter(format!(
                "objective order {order:?} is not a permutation of 0..{}",
                self.n_objectives
            )));
        }
        let mut out = self.clone();
        out.rewards = order.iter().map(|&i| self.rewards[i].clone()).collect();
        Ok(out)
    }

    /// Serializes the model to the line-oriented text form accepted by
    /// [`TabularMomdp::from_text`]: one directive per line, probabilities and
    /// rewards as sparse `(s, a, s')` triples, objective ids 1-based, `#`
    /// starting a comment.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# momdp v1\n");
        let _ = writeln!(out, "states {}", self.n_states);
        let _ = writeln!(out, "actions {}", self.n_actions);
        let _ = writeln!(out, "objectives {}", self.n_objectives);
        let _ = writeln!(out, "gamma {}", self.gamma);
        let _ = writeln!(out, "initial {}", self.initial_state);
        let terminals: Vec<String> = self
            .terminal_states()
            .map(|s| s.to_string())
            .collect();
        if !terminals.is_empty() {
            let _ = writeln!(out, "terminal {}", terminals.join(" "));
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for s2 in 0..self.n_states {
                    let p = self.p(s, a, s2);
                    if p != 0.0 {
                        let _ = writeln!(out, "transition {s} {a} {s2} {p}");
                    }
                }
            }
        }
        for (i, table) in self.rewards.iter().enumerate() {
            for s in 0..self.n_states {
                for a in 0..self.n_actions {
                    for s2 in 0..self.n_states {
                        let r = table[self.idx(s, a, s2)];
                        if r != 0.0 {
                            let _ = writeln!(out, "reward {} {s} {a} {s2} {r}", i + 1);
                        }
                    }
                }
            }
        }
        out
    }

    /// Parses the text form produced by [`TabularMomdp::to_text`]. Errors
    /// carry 1-based line numbers.
    pub fn from_text(text: &str) -> Result<TabularMomdp> {
        let mut n_states = None;
        let mut n_actions = None;
        let mut n_objectives = None;
        let mut gamma = 1.0;
        let mut initial = 0usize;
        let mut terminals: Vec<usize> = Vec::new();
        let mut transitions: Vec<(usize, usize, usize, f64)> = Vec::new();
        let mut rewards: Vec<(usize, usize, usize, usize, f64)> = Vec::new();

        fn parse<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
            tok.ok_or_else(|| Error::Parse {
                line,
                msg: format!("missing {what}"),
            })?
            .parse()
            .map_err(|_| Error::Parse {
                line,
                msg: format!("bad {what}"),
            })
        }

        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let mut toks = body.split_whitespace();
            let head = toks.next().unwrap();
            match head {
                "states" => n_states = Some(parse(toks.next(), line, "state count")?),
                "actions" => n_actions = Some(parse(toks.next(), line, "action count")?),
                "objectives" => n_objectives = Some(parse(toks.next(), line, "objective count")?),
                "gamma" => gamma = parse(toks.next(), line, "gamma")?,
                "initial" => initial = parse(toks.next(), line, "initial state")?,
                "terminal" => {
                    for tok in toks.by_ref() {
                        terminals.push(parse(Some(tok), line, "terminal state")?);
                    }
                }
                "transition" => {
                    let s = parse(toks.next(), line, "state")?;
                    let a = parse(toks.next(), line, "action")?;
                    let s2 = parse(toks.next(), line, "next state")?;
                    let p = parse(toks.next(), line, "probability")?;
                    transitions.push((s, a, s2, p));
                }
                "reward" => {
                    let i: usize = parse(toks.next(), line, "objective id")?;
                    let s = parse(toks.next(), line, "state")?;
                    let a = parse(toks.next(), line, "action")?;
                    let s2 = parse(toks.next(), line, "next state")?;
                    let r = parse(toks.next(), line, "reward")?;
                    if i == 0 {
                        return Err(Error::Parse {
                            line,
                            msg: "objective ids are 1-based".into(),
                        });
                    }
                    rewards.push((i - 1, s, a, s2, r));
                }
                other => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown directive '{other}'"),
                    })
                }
            }
            if toks.next().is_some() {
                return Err(Error::Parse {
                    line,
                    msg: format!("trailing tokens after '{head}'"),
                });
            }
        }

        let n_states = n_states.ok_or(Error::Parse {
            line: 0,
            msg: "missing 'states' directive".into(),
        })?;
        let n_actions = n_actions.ok_or(Error::Parse {
            line: 0,
            msg: "missing 'actions' directive".into(),
        })?;
        let n_objectives = n_objectives.ok_or(Error::Parse {
            line: 0,
            msg: "missing 'objectives' directive".into(),
        })?;

        let mut b = TabularMomdp::builder(n_states, n_actions, n_objectives)
            .gamma(gamma)
            .initial_state(initial);
        for s in terminals {
            b = b.terminal(s);
        }
        for (s, a, s2, p) in transitions {
            b = b.transition(s, a, s2, p);
        }
        for (i, s, a, s2, r) in rewards {
            b = b.reward(i, s, a, s2, r);
        }
        b.build()
    }
}

/// Incremental construction of a [`TabularMomdp`]; `build` validates the
/// result (row-stochastic transitions, index ranges, finite rewards).
#[derive(Debug, Clone)]
pub struct MomdpBuilder {
    n_states: usize,
    n_actions: usize,
    n_objectives: usize,
    initial_state: usize,
    terminal: Vec<bool>,
    transition: Vec<f64>,
    rewards: Vec<Vec<f64>>,
    gamma: f64,
}

impl MomdpBuilder {
    pub fn gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn initial_state(mut self, s: usize) -> Self {
        self.initial_state = s;
        self
    }

    pub fn terminal(mut self, s: usize) -> Self {
        if s < self.n_states {
            self.terminal[s] = true;
        } else {
            // Defer the error to build() where we can report it properly.
            self.terminal.push(true);
        }
        self
    }

    /// Sets `P(s' | s, a) = p`. Out-of-range indices surface at `build`.
    pub fn transition(mut self, s: usize, a: usize, s2: usize, p: f64) -> Self {
        if let Some(slot) = self.slot(s, a, s2) {
            self.transition[slot] = p;
        } else {
            self.transition.push(f64::NAN); // poison: reported at build
        }
        self
    }

    /// Sets objective `i`'s reward for `(s, a, s')`.
    pub fn reward(mut self, i: usize, s: usize, a: usize, s2: usize, r: f64) -> Self {
        match (self.slot(s, a, s2), self.rewards.get_mut(i)) {
            (Some(slot), Some(table)) => table[slot] = r,
            _ => self.transition.push(f64::NAN), // poison: reported at build
        }
        self
    }

    fn slot(&self, s: usize, a: usize, s2: usize) -> Option<usize> {
        if s < self.n_states && a < self.n_actions && s2 < self.n_states {
            Some((s * self.n_actions + a) * self.n_states + s2)
        } else {
            None
        }
    }

    pub fn build(self) -> Result<TabularMomdp> {
        let expected = self.n_states * self.n_actions * self.n_states;
        if self.n_states == 0 || self.n_actions == 0 || self.n_objectives == 0 {
            return Err(Error::InvalidModel(
                "need at least one state, action, and objective".into(),
            ));
        }
        if self.transition.len() != expected || self.terminal.len() != self.n_states {
            return Err(Error::InvalidModel(
                "an index passed to the builder was out of range".into(),
            ));
        }
        if self.initial_state >= self.n_states {
            return Err(Error::InvalidModel(format!(
                "initial state {} out of range",
                self.initial_state
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidModel(format!(
                "gamma {} outside [0, 1]",
                self.gamma
            )));
        }
        let mut m = TabularMomdp {
            n_states: self.n_states,
            n_actions: self.n_actions,
            n_objectives: self.n_objectives,
            initial_state: self.initial_state,
            terminal: self.terminal,
            transition: self.transition,
            rewards: self.rewards,
            gamma: self.gamma,
        };
        // Terminal states are absorbing and reward-free by convention.
        for s in 0..m.n_states {
            if m.terminal[s] {
                for a in 0..m.n_actions {
                    for s2 in 0..m.n_states {
                        let idx = m.idx(s, a, s2);
                        m.transition[idx] = if s2 == s { 1.0 } else { 0.0 };
                        for table in &mut m.rewards {
                            table[idx] = 0.0;
                        }
                    }
                }
            }
        }
        for s in 0..m.n_states {
            for a in 0..m.n_actions {
                let row = m.transition_row(s, a);
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidModel(format!(
                        "transition row for state {s}, action {a} is not a distribution (sum {sum})"
                    )));
                }
            }
        }
        for table in &m.rewards {
            if table.iter().any(|r| !r.is_finite()) {
                return Err(Error::InvalidModel("non-finite reward entry".into()));
            }
        }
        Ok(m)
    }
}

/// One episode: `states.len() == actions.len() + 1 == rewards.len() + 1`,
/// each reward entry a K-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Number of steps taken.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Whether the trajectory ended in a terminal state of `m` (as opposed to
    /// being cut off by the horizon).
    pub fn terminated(&self, m: &TabularMomdp) -> bool {
        self.states.last().is_some_and(|&s| m.is_terminal(s))
    }

    /// Per-objective discounted return `Σ_t γ^t r_t`.
    pub fn discounted_returns(&self, gamma: f64) -> Vec<f64> {
        let k = self.rewards.first().map_or(0, Vec::len);
        let mut out = vec![0.0; k];
        let mut w = 1.0;
        for step in &self.rewards {
            for (o, r) in out.iter_mut().zip(step) {
                *o += w * r;
            }
            w *= gamma;
        }
        out
    }

    /// Per-objective plain reward sums (the quantities thresholds refer to).
    pub fn undiscounted_returns(&self) -> Vec<f64> {
        self.discounted_returns(1.0)
    }
}

/// Rolls out `policy` from the initial state until a terminal state or the
/// horizon cap. The policy receives the RNG so stochastic policies and the
/// environment share one deterministic stream.
pub fn run_episode<R, P>(m: &TabularMomdp, mut policy: P, horizon: usize, rng: &mut R) -> Trajectory
where
    R: Rng + ?Sized,
    P: FnMut(usize, &mut R) -> usize,
{
    let mut s = m.initial_state();
    let mut traj = Trajectory {
        states: vec![s],
        actions: Vec::new(),
        rewards: Vec::new(),
    };
    for _ in 0..horizon {
        if m.is_terminal(s) {
            break;
        }
        let a = policy(s, rng);
        let (s2, rew) = m.sample_step(s, a, rng);
        traj.actions.push(a);
        traj.rewards.push(rew);
        traj.states.push(s2);
        s = s2;
    }
    traj
}

/// A dense `(state, action)` value table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<f64>,
    n_states: usize,
    n_actions: usize,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            values: vec![0.0; n_states * n_actions],
            n_states,
            n_actions,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    /// The action values at `s`.
    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Largest value at `s`.
    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lowest-index maximizing action at `s` (deterministic tie-break).
    pub fn argmax(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    /// Sup-norm distance to another table of the same shape.
    pub fn sup_dist(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Exact optimal action values for a single objective, by synchronous
/// Bellman-optimality sweeps to sup-norm tolerance `tol`.
pub fn value_iteration(
    m: &TabularMomdp,
    objective: usize,
    tol: f64,
    max_sweeps: usize,
) -> Result<QTable> {
    if objective >= m.n_objectives() {
        return Err(Error::InvalidParameter(format!(
            "objective {objective} out of range (model has {})",
            m.n_objectives()
        )));
    }
    let mut q = QTable::zeros(m.n_states(), m.n_actions());
    for sweep in 0..max_sweeps {
        let mut next = QTable::zeros(m.n_states(), m.n_actions());
        for s in 0..m.n_states() {
            if m.is_terminal(s) {
                continue;
            }
            for a in 0..m.n_actions() {
                let mut v = 0.0;
                for (s2, &p) in m.transition_row(s, a).iter().enumerate() {
                    if p > 0.0 {
                        let cont = if m.is_terminal(s2) { 0.0 } else { q.max(s2) };
                        v += p * (m.reward(objective, s, a, s2) + m.gamma() * cont);
                    }
                }
                next.set(s, a, v);
            }
        }
        let dist = q.sup_dist(&next);
        q = next;
        if dist < tol {
            return Ok(q);
        }
        let _ = sweep;
    }
    Err(Error::NoConvergence(format!(
        "value iteration still above tol {tol} after {max_sweeps} sweeps"
    )))
}

/// The greedy (lowest-index tie-break) policy of a value table.
pub fn greedy_policy(q: &QTable) -> Vec<usize> {
    (0..q.n_states()).map(|s| q.argmax(s)).collect()
}

/// Enumerates every deterministic policy of a small model, by counting in
/// base `n_actions`. Intended for exhaustive analyses of toy problems.
pub fn enumerate_deterministic_policies(m: &TabularMomdp) -> impl Iterator<Item = Vec<usize>> {
    let n_states = m.n_states();
    let n_actions = m.n_actions();
    let total = (n_actions as u64)
        .checked_pow(n_states as u32)
        .expect("policy space too large to enumerate");
    (0..total).map(move |mut code| {
        (0..n_states)
            .map(|_| {
                let a = (code % n_actions as u64) as usize;
                code /= n_actions as u64;
                a
            })
            .collect()
    })
}

/// Distinct states visited by a trajectory, for reachability checks.
pub fn visited_states(traj: &Trajectory) -> BTreeSet<usize> {
    traj.states.iter().copied().collect()
}
