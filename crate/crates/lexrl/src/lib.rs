//! Thresholded lexicographic multi-objective optimization and reinforcement learning.
//!
//! The crate is organized around a single idea: optimize objectives in priority
//! order, where every objective except the last only needs to clear a threshold.
//! Gradient-based pieces keep lower-priority progress from destroying
//! higher-priority guarantees by projecting update directions into hypercones
//! around the protected gradients; value-based pieces (thresholded Q-learning)
//! are included together with the demonstrations of where they break.
//!
//! Modules:
//! - [`cone`]: hypercones and the minimum-rotation cone projection.
//! - [`lmdp`]: tabular multi-objective MDPs, thresholded order, trajectories.
//! - [`lpa`]: lexicographic projection ascent for differentiable objectives.
//! - [`envs`]: grid mazes (ASCII format) and the fruit-tree benchmark.
//! - [`tlq`]: thresholded lexicographic Q-learning variants and their filters.
//! - [`reinforce`]: lexicographic policy-gradient training with a small MLP.
//! - [`augment`]: budget-augmented scalarization and constraint search.

pub mod augment;
pub mod cone;
pub mod envs;
pub mod experiments;
pub mod lmdp;
pub mod lpa;
pub mod reinforce;
pub mod tlq;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
