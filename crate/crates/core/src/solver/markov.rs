//! Locally consistent Markov chain on the grid.
//!
//! Upwind differences split every drift into its positive and negative parts so
//! the coefficients of neighboring values are nonnegative. Normalizing by their sum
//! gives the implicit time step and turns the coefficients into transition
//! probabilities.

use serde::{Deserialize, Serialize};

use super::GridSpec;
use crate::dynamics::Drift;
use crate::{Error, Result};

/// Angle axis that carries the opponent's heading noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionAxis {
    #[default]
    XiA,
    XiT,
}

/// `(max(0, b), max(0, -b))`.
#[inline]
pub fn split_drift(b: f64) -> (f64, f64) {
    (b.max(0.0), (-b).max(0.0))
}

fn diffusion_terms(grid: &GridSpec, sigma: f64, axis: DiffusionAxis) -> (f64, f64) {
    let s2 = sigma * sigma;
    match axis {
        DiffusionAxis::XiA => (s2 / (grid.dxi_a() * grid.dxi_a()), 0.0),
        DiffusionAxis::XiT => (0.0, s2 / (grid.dxi_t() * grid.dxi_t())),
    }
}

/// Implicit time step: the inverse of the total outflow rate of the cell.
pub fn implicit_time_step(
    drift: &Drift,
    grid: &GridSpec,
    sigma: f64,
    axis: DiffusionAxis,
) -> Result<f64> {
    let (diff_a, diff_t) = diffusion_terms(grid, sigma, axis);
    let rate = drift.r.abs() / grid.dr()
        + drift.xi_a.abs() / grid.dxi_a()
        + drift.xi_t.abs() / grid.dxi_t()
        + diff_a
        + diff_t;
    if rate > 0.0 {
        Ok(1.0 / rate)
    } else {
        Err(Error::StationaryCell)
    }
}

/// Time step and the six neighbor probabilities of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellTransition {
    pub dt: f64,
    pub r_plus: f64,
    pub r_minus: f64,
    pub xi_a_plus: f64,
    pub xi_a_minus: f64,
    pub xi_t_plus: f64,
    pub xi_t_minus: f64,
}

impl CellTransition {
    pub fn probabilities(&self) -> [f64; 6] {
        [
            self.r_plus,
            self.r_minus,
            self.xi_a_plus,
            self.xi_a_minus,
            self.xi_t_plus,
            self.xi_t_minus,
        ]
    }

    pub fn total(&self) -> f64 {
        self.probabilities().iter().sum()
    }
}

pub fn cell_transition(
    drift: &Drift,
    grid: &GridSpec,
    sigma: f64,
    axis: DiffusionAxis,
) -> Result<CellTransition> {
    let dt = implicit_time_step(drift, grid, sigma, axis)?;
    let (diff_a, diff_t) = diffusion_terms(grid, sigma, axis);
    let (r_p, r_m) = split_drift(drift.r);
    let (a_p, a_m) = split_drift(drift.xi_a);
    let (t_p, t_m) = split_drift(drift.xi_t);
    Ok(CellTransition {
        dt,
        r_plus: dt * r_p / grid.dr(),
        r_minus: dt * r_m / grid.dr(),
        xi_a_plus: dt * (a_p / grid.dxi_a() + 0.5 * diff_a),
        xi_a_minus: dt * (a_m / grid.dxi_a() + 0.5 * diff_a),
        xi_t_plus: dt * (t_p / grid.dxi_t() + 0.5 * diff_t),
        xi_t_minus: dt * (t_m / grid.dxi_t() + 0.5 * diff_t),
    })
}
