//! TOML experiment configuration: one flat section per module, every key
//! optional (defaults are the library's frozen experiment settings), and
//! unknown keys rejected so typos in hyperparameter sweeps surface
//! immediately instead of silently running the defaults.

use crate::{CliError, CliResult};
use serde::Deserialize;
use std::path::Path;

/// Parsed experiment config file. Sections may be omitted wholesale.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub lpa: Option<LpaSection>,
    pub tlq: Option<TlqSection>,
    pub scan: Option<ScanSection>,
    pub reinforce: Option<ReinforceSection>,
    pub ftn: Option<FtnSection>,
    pub augment: Option<AugmentSection>,
}

/// Overrides for the differentiable-benchmark experiment.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpaSection {
    /// Fixed ascent step size.
    pub step_size: Option<f64>,
    /// Cone half-angle complement in degrees.
    pub delta_deg: Option<f64>,
    /// Threshold protecting the first objective.
    pub threshold: Option<f64>,
    pub max_iters: Option<usize>,
    /// Buffer for the active-constraint variant.
    pub buffer: Option<f64>,
    /// Start point (2 coordinates).
    pub start: Option<Vec<f64>>,
}

/// Overrides for tabular thresholded Q-learning training.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlqSection {
    /// Built-in maze name.
    pub maze: Option<String>,
    pub gamma: Option<f64>,
    /// "rectified" (clamped targets) or "raw" (plain targets).
    pub variant: Option<String>,
    /// "absolute-threshold", "absolute-slack", or "relative-slack".
    pub filter: Option<String>,
    /// Per-constrained-objective filter parameters.
    pub filter_params: Option<Vec<f64>>,
    /// Target-clamping thresholds (rectified variant).
    pub thresholds: Option<Vec<f64>>,
    pub learning_rate: Option<f64>,
    pub epsilon: Option<f64>,
    pub episodes: Option<usize>,
    pub horizon: Option<usize>,
    /// Enables informed primary targets with this buffer.
    pub informed_buffer: Option<f64>,
}

/// Overrides for the exhaustive filter-parameter scan.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub gamma: Option<f64>,
    /// Grid resolution per filter family.
    pub grid_points: Option<usize>,
}

/// Overrides shared by the two maze policy-gradient experiments.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReinforceSection {
    pub episodes: Option<usize>,
    pub learning_rate: Option<f64>,
    /// Cone angle in degrees.
    pub delta_deg: Option<f64>,
    pub horizon: Option<usize>,
}

/// Overrides for the fruit-tree policy-gradient experiment.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FtnSection {
    pub depth: Option<usize>,
    /// Seed for drawing the leaf reward vectors.
    pub reward_seed: Option<u64>,
    /// Leaf the thresholds single out.
    pub target_leaf: Option<usize>,
    /// Cone angle in degrees.
    pub delta_deg: Option<f64>,
    pub episodes: Option<usize>,
    pub learning_rate: Option<f64>,
}

/// Overrides for the budget-augmentation demonstration.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSection {
    pub gamma: Option<f64>,
    /// Violation penalty weight.
    pub lambda: Option<f64>,
}

/// Reads and validates a config file; `None` yields all defaults.
pub fn load(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parses a seed sweep: `"a..b"` (inclusive on both ends, so `0..9` names
/// ten seeds), a comma list, or a single seed. The sweep must be nonempty.
pub fn parse_seeds(text: &str) -> CliResult<Vec<u64>> {
    let bad = |msg: &str| CliError::Config(format!("seed sweep {text:?}: {msg}"));
    let seeds: Vec<u64> = if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad("bad range start"))?;
        let hi: u64 = hi.trim().parse().map_err(|_| bad("bad range end"))?;
        if hi < lo {
            return Err(bad("range end below start"));
        }
        (lo..=hi).collect()
    } else {
        text.split(',')
            .map(|t| t.trim().parse::<u64>().map_err(|_| bad("bad seed")))
            .collect::<CliResult<Vec<u64>>>()?
    };
    if seeds.is_empty() {
        return Err(bad("empty"));
    }
    Ok(seeds)
}
