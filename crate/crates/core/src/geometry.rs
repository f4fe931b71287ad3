//! Basic engagement zone (BEZ) geometry.
//!
//! A vehicle's weapon is a point with simple motion, speed `nu` times the
//! opponent's speed, limited range `R` and capture radius `r_c`. The distance
//! from the vehicle to the boundary of its WEZ depends only on the opponent's
//! aspect angle:
//!
//! ```text
//! rho(xi) = (R / nu) * [cos xi + sqrt(cos^2 xi - 1 + (R + r_c)^2 / R^2)]
//! ```
//!
//! Any other boundary model can be dropped in by replacing [`WezParams::boundary`].

use serde::{Deserialize, Serialize};

use crate::angle;
use crate::dynamics::ReducedState;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WezParams {
    pub weapon_speed_ratio: f64,
    pub weapon_range: f64,
    pub capture_radius: f64,
}

impl WezParams {
    pub fn new(weapon_speed_ratio: f64, weapon_range: f64, capture_radius: f64) -> Result<Self> {
        let params = Self {
            weapon_speed_ratio,
            weapon_range,
            capture_radius,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        // NaN fails every comparison below
        if !(self.weapon_speed_ratio > 1.0 && self.weapon_speed_ratio.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "weapon speed ratio must exceed 1, got {}",
                self.weapon_speed_ratio
            )));
        }
        if !(self.weapon_range > 0.0 && self.weapon_range.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "weapon range must be positive, got {}",
                self.weapon_range
            )));
        }
        if !(self.capture_radius > 0.0 && self.capture_radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "capture radius must be positive, got {}",
                self.capture_radius
            )));
        }
        Ok(())
    }

    /// Distance to the WEZ boundary at the given aspect angle.
    #[inline]
    pub fn boundary(&self, aspect: f64) -> f64 {
        bez_radius(self, aspect)
    }

    /// Largest boundary distance, attained head-on (`xi = 0`).
    pub fn max_radius(&self) -> f64 {
        let reach = (self.weapon_range + self.capture_radius) / self.weapon_range;
        self.weapon_range / self.weapon_speed_ratio * (1.0 + reach)
    }
}

/// BEZ boundary distance `rho(xi)`.
#[inline]
pub fn bez_radius(params: &WezParams, aspect: f64) -> f64 {
    let c = angle::wrap(aspect).cos();
    let reach = (params.weapon_range + params.capture_radius) / params.weapon_range;
    let radicand = c * c - 1.0 + reach * reach;
    params.weapon_range / params.weapon_speed_ratio * (c + radicand.sqrt())
}

/// Target inside the Agent's WEZ: `r <= rho_A(xi_A)`.
#[inline]
pub fn in_agent_wez(state: &ReducedState, agent_wez: &WezParams) -> bool {
    state.r <= agent_wez.boundary(state.xi_a)
}

/// Agent inside the Target's WEZ: `r <= rho_T(xi_T)`.
#[inline]
pub fn in_target_wez(state: &ReducedState, target_wez: &WezParams) -> bool {
    state.r <= target_wez.boundary(state.xi_t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalClass {
    InAgentWez,
    InTargetWez,
    Neither,
}

/// Terminal classification; the Target's WEZ is tested first and wins on overlap.
pub fn classify_terminal(
    state: &ReducedState,
    agent_wez: &WezParams,
    target_wez: &WezParams,
) -> TerminalClass {
    if in_target_wez(state, target_wez) {
        TerminalClass::InTargetWez
    } else if in_agent_wez(state, agent_wez) {
        TerminalClass::InAgentWez
    } else {
        TerminalClass::Neither
    }
}
