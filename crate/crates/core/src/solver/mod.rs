//! Markov chain approximation of the Agent's minimum time-to-go and value iteration.
//!
//! [`solve_baseline`] covers both players' Baseline controllers, [`solve_avoid`] adds
//! the set of states where the Target would win first, and [`solve_adversarial`]
//! plays the Agent against the Target's own Baseline policy.

mod controllers;
mod field;
mod grid;
mod iterate;
mod markov;
mod upsample;

pub use controllers::{avoid_set, solve_adversarial, solve_avoid, solve_baseline, Solution};
pub use field::{FieldMeta, ProblemRole, ValueField, Variant};
pub use grid::GridSpec;
pub use iterate::{
    bellman_update, classify_node, fixed_point_residual, value_iteration, BellmanOperator,
    ControlSet, ConvergenceTrace, NodeClass, OpponentControl, Problem, SolverConfig, TraceRow,
};
pub(crate) use iterate::thread_pool;
pub use markov::{cell_transition, implicit_time_step, split_drift, CellTransition, DiffusionAxis};
pub use upsample::upsample;

/// Noise intensity used for the Adversarial solve.
pub const ADVERSARIAL_SIGMA: f64 = 0.1;
