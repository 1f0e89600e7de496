//! Benchmark environments: gridworld mazes with penalty tiles and a
//! fruit-tree navigation task with vector-valued leaf rewards.
//!
//! Mazes are described in a small ASCII format (see [`parse_maze`]) and
//! compiled to [`TabularMomdp`]s with two objectives. The fruit tree is a
//! full binary tree whose leaves carry 6-dimensional reward vectors; the
//! task is to reach one designated leaf.

use crate::lmdp::{lex_compare, TabularMomdp};
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::cmp::Ordering;

/// Default penalty for a high-penalty tile.
pub const HIGH_PENALTY: f64 = -5.0;
/// Default penalty for a low-penalty tile.
pub const LOW_PENALTY: f64 = -4.0;
/// Default reward for entering the goal.
pub const GOAL_REWARD: f64 = 1.0;

/// One grid cell's tile type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tile {
    Free,
    HighPenalty,
    LowPenalty,
}

/// Which two-objective reward layout a maze generates.
///
/// * `EndpointPrimary`: objective 1 pays the goal reward on entering the
///   goal and nothing elsewhere; objective 2 pays the tile penalty of every
///   entered cell. "Reach the goal, then avoid bad tiles."
/// * `PathPenaltyPrimary`: objective 1 pays the tile penalty along the way
///   plus the goal reward on entering the goal; objective 2 pays −1 per
///   step and 0 on entering the goal. "Avoid bad tiles, then be quick."
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveScheme {
    EndpointPrimary,
    PathPenaltyPrimary,
}

/// Movement actions, indexed 0..4 in this order.
pub const MAZE_ACTIONS: [&str; 4] = ["up", "down", "left", "right"];

/// A parsed maze: geometry plus reward parameters.
///
/// Cells are addressed as `(column, row)` with row 0 at the bottom.
#[derive(Debug, Clone)]
pub struct MazeSpec {
    pub width: usize,
    pub height: usize,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    tiles: Vec<Tile>, // row-major from row 0 (bottom)
    pub high_penalty: f64,
    pub low_penalty: f64,
    pub goal_reward: f64,
    pub scheme: ObjectiveScheme,
}

impl MazeSpec {
    /// Flat state index of a cell.
    pub fn cell_index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    /// Tile type at a cell.
    pub fn tile(&self, col: usize, row: usize) -> Tile {
        self.tiles[self.cell_index(col, row)]
    }

    /// Penalty paid on entering a cell (0 for free tiles).
    pub fn penalty(&self, col: usize, row: usize) -> f64 {
        match self.tile(col, row) {
            Tile::Free => 0.0,
            Tile::HighPenalty => self.high_penalty,
            Tile::LowPenalty => self.low_penalty,
        }
    }

    /// Returns the same maze with a different objective scheme.
    pub fn with_scheme(mut self, scheme: ObjectiveScheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// Returns the same maze with different penalty magnitudes.
    pub fn with_penalties(mut self, high: f64, low: f64) -> Self {
        self.high_penalty = high;
        self.low_penalty = low;
        self
    }

    /// Returns the same maze with a different goal reward.
    pub fn with_goal_reward(mut self, r: f64) -> Self {
        self.goal_reward = r;
        self
    }

    /// States of a bad-tile set, as flat indices.
    pub fn bad_tiles(&self) -> Vec<usize> {
        (0..self.tiles.len())
            .filter(|&i| self.tiles[i] != Tile::Free)
            .collect()
    }
}

/// Parses the ASCII maze format.
///
/// Rows are lines of `|`-separated two-character cells, top row first:
/// `__` free, `S_` start, `G_` goal, `HH` high penalty, `hh` low penalty.
/// Anything after the final `|` on a row (the figures carry row labels
/// there) is ignored, and lines without any `|` (borders, column labels)
/// are skipped. The bottom row of the drawing becomes row 0.
pub fn parse_maze(text: &str) -> Result<MazeSpec> {
    // (line number, cells) for each row, top-first.
    let mut rows: Vec<(usize, Vec<Tile>)> = Vec::new();
    let mut start: Option<(usize, usize, usize)> = None; // (col, top_row_idx, line)
    let mut goal: Option<(usize, usize, usize)> = None;

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let Some(first) = line.find('|') else { continue };
        let last = line.rfind('|').unwrap();
        if last == first {
            return Err(Error::Parse {
                line: lineno,
                msg: "row has a single '|'; expected |xx|yy|...|".into(),
            });
        }
        let inner = &line[first + 1..last];
        let mut cells = Vec::new();
        for (col, tok) in inner.split('|').enumerate() {
            let tile = match tok {
                "__" => Tile::Free,
                "HH" => Tile::HighPenalty,
                "hh" => Tile::LowPenalty,
                "S_" => {
                    if start.is_some() {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: "duplicate start cell 'S_'".into(),
                        });
                    }
                    start = Some((col, rows.len(), lineno));
                    Tile::Free
                }
                "G_" => {
                    if goal.is_some() {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: "duplicate goal cell 'G_'".into(),
                        });
                    }
                    goal = Some((col, rows.len(), lineno));
                    Tile::Free
                }
                other => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("unknown cell token {other:?}"),
                    });
                }
            };
            cells.push(tile);
        }
        if let Some((_, first_cells)) = rows.first() {
            if cells.len() != first_cells.len() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!(
                        "row has {} cells but previous rows have {}",
                        cells.len(),
                        first_cells.len()
                    ),
                });
            }
        }
        rows.push((lineno, cells));
    }

    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "no maze rows found".into(),
        });
    }
    let height = rows.len();
    let width = rows[0].1.len();
    let start = start.ok_or(Error::Parse {
        line: rows.last().unwrap().0,
        msg: "no start cell 'S_' found".into(),
    })?;
    let goal = goal.ok_or(Error::Parse {
        line: rows.last().unwrap().0,
        msg: "no goal cell 'G_' found".into(),
    })?;

    // Flip to row 0 at the bottom.
    let mut tiles = vec![Tile::Free; width * height];
    for (top_idx, (_, cells)) in rows.iter().enumerate() {
        let row = height - 1 - top_idx;
        for (col, &t) in cells.iter().enumerate() {
            tiles[row * width + col] = t;
        }
    }
    let flip = |(col, top_idx, _line): (usize, usize, usize)| (col, height - 1 - top_idx);

    Ok(MazeSpec {
        width,
        height,
        start: flip(start),
        goal: flip(goal),
        tiles,
        high_penalty: HIGH_PENALTY,
        low_penalty: LOW_PENALTY,
        goal_reward: GOAL_REWARD,
        scheme: ObjectiveScheme::EndpointPrimary,
    })
}

/// Compiles a maze into a two-objective tabular MDP.
///
/// Transitions are deterministic; moves off the grid leave the position
/// unchanged. Rewards depend on the entered cell per the maze's
/// [`ObjectiveScheme`]. The goal is the single terminal state.
pub fn maze_to_momdp(spec: &MazeSpec, gamma: f64) -> Result<TabularMomdp> {
    let n = spec.width * spec.height;
    let mut b = TabularMomdp::builder(n, 4, 2)
        .gamma(gamma)
        .initial_state(spec.cell_index(spec.start.0, spec.start.1))
        .terminal(spec.cell_index(spec.goal.0, spec.goal.1));

    for row in 0..spec.height {
        for col in 0..spec.width {
            let s = spec.cell_index(col, row);
            for (a, (dc, dr)) in [(0i64, 1i64), (0, -1), (-1, 0), (1, 0)].iter().enumerate() {
                let nc = col as i64 + dc;
                let nr = row as i64 + dr;
                let (tc, tr) = if nc < 0
                    || nr < 0
                    || nc >= spec.width as i64
                    || nr >= spec.height as i64
                {
                    (col, row)
                } else {
                    (nc as usize, nr as usize)
                };
                let s2 = spec.cell_index(tc, tr);
                b = b.transition(s, a, s2, 1.0);
                let entered_goal = (tc, tr) == spec.goal;
                let (r1, r2) = match spec.scheme {
                    ObjectiveScheme::EndpointPrimary => (
                        if entered_goal { spec.goal_reward } else { 0.0 },
                        spec.penalty(tc, tr),
                    ),
                    ObjectiveScheme::PathPenaltyPrimary => (
                        spec.penalty(tc, tr) + if entered_goal { spec.goal_reward } else { 0.0 },
                        if entered_goal { 0.0 } else { -1.0 },
                    ),
                };
                if r1 != 0.0 {
                    b = b.reward(0, s, a, s2, r1);
                }
                if r2 != 0.0 {
                    b = b.reward(1, s, a, s2, r2);
                }
            }
        }
    }
    b.build()
}

const MAZE_SMALL: &str = "\
 __________
 |__|G_|__| 2
 |HH|HH|__| 1
 |__|S_|__| 0
";

const MAZE_EXTENDED: &str = "\
_____________
|__|G_|__|__| 4
|__|hh|hh|hh| 3
|__|__|__|__| 2
|HH|HH|HH|__| 1
|S_|__|__|__| 0
 0  1  2  3
";

const MAZE_EARLY_LATE: &str = "\
 __________
 |__|G_|__| 10
 |HH|HH|__| 9
 |__|__|__| 8
 |__|hh|hh| 7
 |__|__|__| 6
 |__|__|__| 5
 |__|__|__| 4
 |__|hh|hh| 3
 |__|__|__| 2
 |HH|HH|__| 1
 |__|S_|__| 0
";

const MAZE_CONCAVE_SIMPLE: &str = "\
 __________
 |__|G_|__| 4
 |__|hh|hh| 3
 |__|__|__| 2
 |HH|HH|__| 1
 |S_|__|__| 0
  0  1  2
";

/// The 3×3 maze whose only clean path to the goal requires a detour
/// around a wall of high-penalty tiles.
pub fn maze_small() -> MazeSpec {
    parse_maze(MAZE_SMALL).expect("embedded maze text is valid")
}

/// The 4×5 maze used for path-objective training; defaults to the
/// path-penalty reward layout.
pub fn maze_extended() -> MazeSpec {
    parse_maze(MAZE_EXTENDED)
        .expect("embedded maze text is valid")
        .with_scheme(ObjectiveScheme::PathPenaltyPrimary)
}

/// The 3×11 maze with penalty bands both near the start and near the
/// goal; exhibits the pitfalls of a single uniform threshold.
pub fn maze_early_late() -> MazeSpec {
    parse_maze(MAZE_EARLY_LATE).expect("embedded maze text is valid")
}

/// The 3×5 maze used for endpoint-objective (reachability) training.
pub fn maze_concave_simple() -> MazeSpec {
    parse_maze(MAZE_CONCAVE_SIMPLE).expect("embedded maze text is valid")
}

/// All built-in mazes keyed by name.
pub fn builtin_mazes() -> Vec<(&'static str, MazeSpec)> {
    vec![
        ("maze-small", maze_small()),
        ("maze-extended", maze_extended()),
        ("maze-early-late", maze_early_late()),
        ("maze-concave-simple", maze_concave_simple()),
    ]
}

/// Looks up a built-in maze by name.
pub fn maze_by_name(name: &str) -> Result<MazeSpec> {
    builtin_mazes()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, m)| m)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown maze {name:?}")))
}

/// Reward dimension of the fruit tree.
pub const FTN_DIM: usize = 6;
/// Offset subtracted from the target leaf's components to form thresholds.
pub const FTN_THRESHOLD_OFFSET: f64 = 1e-3;

/// A full binary tree of the given depth whose leaves carry fixed
/// 6-dimensional unit-norm reward vectors.
#[derive(Debug, Clone)]
pub struct FtnSpec {
    pub depth: usize,
    pub rng_seed: u64,
    pub target_leaf: usize,
    leaf_rewards: Vec<Vec<f64>>,
}

impl FtnSpec {
    /// Draws leaf rewards from a seeded generator: components uniform on
    /// [0,1), each vector normalized to unit length. Rewards are re-drawn
    /// from the same stream until the target leaf is the unique optimum
    /// under the thresholds this spec derives, so the construction is
    /// reproducible from `rng_seed` alone.
    pub fn generate(depth: usize, rng_seed: u64, target_leaf: usize) -> Result<FtnSpec> {
        if depth == 0 || depth > 16 {
            return Err(Error::InvalidParameter(format!(
                "tree depth must be in 1..=16, got {depth}"
            )));
        }
        let n_leaves = 1usize << depth;
        if target_leaf >= n_leaves {
            return Err(Error::InvalidParameter(format!(
                "target leaf {target_leaf} out of range for {n_leaves} leaves"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        for _attempt in 0..1000 {
            let leaf_rewards: Vec<Vec<f64>> = (0..n_leaves)
                .map(|_| {
                    let v: Vec<f64> = (0..FTN_DIM).map(|_| rng.gen::<f64>()).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x / norm).collect()
                })
                .collect();
            let spec = FtnSpec {
                depth,
                rng_seed,
                target_leaf,
                leaf_rewards,
            };
            if spec.target_is_unique_optimum()? {
                return Ok(spec);
            }
        }
        Err(Error::NoConvergence(
            "could not draw leaf rewards with a unique optimal target leaf".into(),
        ))
    }

    /// Reward vector of one leaf.
    pub fn leaf_reward(&self, leaf: usize) -> &[f64] {
        &self.leaf_rewards[leaf]
    }

    pub fn n_leaves(&self) -> usize {
        1 << self.depth
    }

    /// Thresholds for the first 5 objectives: the target leaf's components
    /// minus a small offset, making the target the unique best leaf under
    /// the thresholded comparison.
    pub fn thresholds(&self) -> Vec<f64> {
        self.leaf_rewards[self.target_leaf][..FTN_DIM - 1]
            .iter()
            .map(|r| r - FTN_THRESHOLD_OFFSET)
            .collect()
    }

    fn target_is_unique_optimum(&self) -> Result<bool> {
        let tau = self.thresholds();
        let target = &self.leaf_rewards[self.target_leaf];
        for (leaf, r) in self.leaf_rewards.iter().enumerate() {
            if leaf == self.target_leaf {
                continue;
            }
            if lex_compare(target, r, &tau)? != Ordering::Greater {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// State index of the target leaf in the compiled MDP.
    pub fn target_state(&self) -> usize {
        (1 << self.depth) - 1 + self.target_leaf
    }
}

/// Compiles the fruit tree into a tabular MDP.
///
/// States are tree nodes in heap order (root 0, children of `i` at `2i+1`
/// and `2i+2`); actions 0/1 descend left/right. Entering leaf `l` pays that
/// leaf's reward vector and terminates; everything else pays zero. Every
/// episode from the root lasts exactly `depth` steps.
pub fn ftn_env(spec: &FtnSpec) -> Result<TabularMomdp> {
    let n_internal = (1 << spec.depth) - 1;
    let n = 2 * n_internal + 1;
    let mut b = TabularMomdp::builder(n, 2, FTN_DIM)
        .gamma(1.0)
        .initial_state(0);
    for leaf in 0..spec.n_leaves() {
        b = b.terminal(n_internal + leaf);
    }
    for s in 0..n_internal {
        for a in 0..2 {
            let s2 = 2 * s + 1 + a;
            b = b.transition(s, a, s2, 1.0);
            if s2 >= n_internal {
                for (i, &r) in spec.leaf_rewards[s2 - n_internal].iter().enumerate() {
                    b = b.reward(i, s, a, s2, r);
                }
            }
        }
    }
    b.build()
}
