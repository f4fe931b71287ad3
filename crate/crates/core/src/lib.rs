//! Threat-aware weapon engagement zone (WEZ) placement between two Dubins vehicles.
//!
//! The engagement is reduced to the relative state `(r, xi_A, xi_T)`, the stochastic
//! Hamilton-Jacobi-Bellman equation for the Agent's minimum time-to-go is discretized
//! into a locally consistent Markov chain, and value iteration produces lookup-table
//! feedback policies. Those policies are stored on disk, interpolated, and exercised
//! in a closed-loop engagement simulator.
//!
//! Module map:
//!
//! - [`geometry`]: basic engagement zone boundary and terminal classification.
//! - [`dynamics`]: full planar kinematics, state reduction and reduced drifts.
//! - [`solver`]: upwind Markov chain, value iteration, upsampling, controller variants.
//! - [`policy_store`]: field persistence, trilinear sampling and plane slices.
//! - [`sim`]: engagement simulation, outcome classification and sweeps.
//! - [`verify`]: self-contained oracle suites used by the command-line `verify`.

pub mod angle;
pub mod dynamics;
mod error;
pub mod geometry;
pub mod policy_store;
pub mod sim;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
