//! Planar Dubins kinematics for both vehicles and the reduced relative state.
//!
//! The full engagement has six states, two poses `(x, y, theta)`. Only the range `r`
//! and the two aspect angles matter for the engagement outcome:
//!
//! ```text
//! lambda = atan2(y_T - y_A, x_T - x_A)
//! xi_A   = lambda - theta_T + pi
//! xi_T   = lambda - theta_A
//! ```
//!
//! Their time derivatives are the reduced drifts used by the solver.

use serde::{Deserialize, Serialize};

use crate::angle;
use crate::geometry::WezParams;
use crate::{Error, Result};

/// Below this range the bearing is numerically meaningless.
pub const MIN_RANGE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub speed: f64,
    pub max_turn_rate: f64,
    pub wez: WezParams,
}

impl VehicleParams {
    pub fn new(speed: f64, max_turn_rate: f64, wez: WezParams) -> Result<Self> {
        let params = Self {
            speed,
            max_turn_rate,
            wez,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "speed must be positive, got {}",
                self.speed
            )));
        }
        if !(self.max_turn_rate > 0.0 && self.max_turn_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "max turn rate must be positive, got {}",
                self.max_turn_rate
            )));
        }
        self.wez.validate()
    }

    /// Reference Agent: faster, longer-ranged weapon.
    pub fn default_agent() -> Self {
        Self {
            speed: 1.0,
            max_turn_rate: 1.0,
            wez: WezParams {
                weapon_speed_ratio: 1.2,
                weapon_range: 1.0,
                capture_radius: 0.2,
            },
        }
    }

    /// Reference Target.
    pub fn default_target() -> Self {
        Self {
            speed: 0.8,
            max_turn_rate: 1.0,
            wez: WezParams {
                weapon_speed_ratio: 1.1,
                weapon_range: 0.9,
                capture_radius: 0.15,
            },
        }
    }
}

/// The pair of vehicles in their real-world roles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Engagement {
    pub agent: VehicleParams,
    pub target: VehicleParams,
}

impl Default for Engagement {
    fn default() -> Self {
        Self {
            agent: VehicleParams::default_agent(),
            target: VehicleParams::default_target(),
        }
    }
}

impl Engagement {
    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        self.target.validate()
    }

    /// Exchange roles: the Target becomes the controlling vehicle.
    pub fn swapped(&self) -> Self {
        Self {
            agent: self.target,
            target: self.agent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: angle::wrap(theta),
        }
    }
}

/// Relative state `(r, xi_A, xi_T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub r: f64,
    pub xi_a: f64,
    pub xi_t: f64,
}

impl ReducedState {
    /// Angles are wrapped into `[-pi, pi)`.
    pub fn new(r: f64, xi_a: f64, xi_t: f64) -> Self {
        Self {
            r,
            xi_a: angle::wrap(xi_a),
            xi_t: angle::wrap(xi_t),
        }
    }

    /// The same geometry seen from the Target: aspect angles exchange.
    pub fn swapped(&self) -> Self {
        Self {
            r: self.r,
            xi_a: self.xi_t,
            xi_t: self.xi_a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drift {
    pub r: f64,
    pub xi_a: f64,
    pub xi_t: f64,
}

/// Reduce two poses to `(r, xi_A, xi_T)`.
pub fn reduce_state(agent: &Pose, target: &Pose) -> Result<ReducedState> {
    let dx = target.x - agent.x;
    let dy = target.y - agent.y;
    let r = dx.hypot(dy);
    if !(r > MIN_RANGE) {
        return Err(Error::DegenerateGeometry { r });
    }
    let bearing = dy.atan2(dx);
    Ok(ReducedState::new(
        r,
        bearing - target.theta + std::f64::consts::PI,
        bearing - agent.theta,
    ))
}

/// Reduced drift `b(x, u_A, u_T)`.
pub fn drift(
    state: &ReducedState,
    u_agent: f64,
    u_target: f64,
    agent: &VehicleParams,
    target: &VehicleParams,
) -> Result<Drift> {
    if !(state.r > 0.0) {
        return Err(Error::DegenerateGeometry { r: state.r });
    }
    let (sin_a, cos_a) = state.xi_a.sin_cos();
    let (sin_t, cos_t) = state.xi_t.sin_cos();
    let turn = (target.speed * sin_a + agent.speed * sin_t) / state.r;
    Ok(Drift {
        r: -(target.speed * cos_a + agent.speed * cos_t),
        xi_a: -u_target + turn,
        xi_t: -u_agent + turn,
    })
}

/// One Euler-Maruyama step of both vehicles. `dw` is the Wiener increment driving the
/// Target's heading noise (`0` for deterministic steps).
#[allow(clippy::too_many_arguments)]
pub fn step_full(
    agent: &Pose,
    target: &Pose,
    u_agent: f64,
    u_target: f64,
    agent_params: &VehicleParams,
    target_params: &VehicleParams,
    sigma: f64,
    dt: f64,
    dw: f64,
) -> (Pose, Pose) {
    let (sa, ca) = agent.theta.sin_cos();
    let (st, ct) = target.theta.sin_cos();
    let next_agent = Pose {
        x: agent.x + agent_params.speed * ca * dt,
        y: agent.y + agent_params.speed * sa * dt,
        theta: angle::wrap(agent.theta + u_agent * dt),
    };
    let next_target = Pose {
        x: target.x + target_params.speed * ct * dt,
        y: target.y + target_params.speed * st * dt,
        theta: angle::wrap(target.theta + u_target * dt + sigma * dw),
    };
    (next_agent, next_target)
}

fn state_distance(a: &ReducedState, b: &ReducedState) -> f64 {
    let dr = (a.r - b.r).abs();
    let da = angle::diff(a.xi_a, b.xi_a).abs();
    let dt = angle::diff(a.xi_t, b.xi_t).abs();
    dr.max(da).max(dt)
}

/// Integrate the full poses and the reduced state side by side with forward Euler
/// under constant controls and no noise; returns the largest max-norm discrepancy
/// between the reduced full state and the directly integrated reduced state.
#[allow(clippy::too_many_arguments)]
pub fn reduction_residual(
    agent: &Pose,
    target: &Pose,
    u_agent: f64,
    u_target: f64,
    agent_params: &VehicleParams,
    target_params: &VehicleParams,
    dt: f64,
    horizon: f64,
) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let steps = (horizon / dt).round() as usize;
    let (mut full_a, mut full_t) = (*agent, *target);
    let mut reduced = reduce_state(agent, target)?;
    let mut worst = 0.0_f64;
    for _ in 0..steps {
        let b = drift(&reduced, u_agent, u_target, agent_params, target_params)?;
        reduced = ReducedState::new(
            reduced.r + b.r * dt,
            reduced.xi_a + b.xi_a * dt,
            reduced.xi_t + b.xi_t * dt,
        );
        (full_a, full_t) = step_full(
            &full_a,
            &full_t,
            u_agent,
            u_target,
            agent_params,
            target_params,
            0.0,
            dt,
            0.0,
        );
        let observed = reduce_state(&full_a, &full_t)?;
        worst = worst.max(state_distance(&observed, &reduced));
    }
    Ok(worst)
}
