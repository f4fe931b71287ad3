//! Closed-loop simulation of the full planar engagement.
//!
//! Both vehicles are integrated with the Euler-Maruyama step of the full kinematics.
//! Controllers read the reduced state every step; the engagement ends on the first
//! step whose reduced state lies in either WEZ, or at the stalemate timeout.

mod sweep;

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use sweep::{
    compare_capture_times, sweep, CaptureComparison, CaptureDelta, CellOutcome, OutcomeGrid,
    SweepCell, SweepSpec,
};

use crate::dynamics::{reduce_state, step_full, Engagement, Pose, ReducedState, VehicleParams};
use crate::geometry::{classify_terminal, in_agent_wez, in_target_wez, TerminalClass};
use crate::policy_store::{pure_pursuit, sample_control};
use crate::solver::{ProblemRole, ValueField};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    /// Stalemate timeout.
    pub t_max: f64,
    /// Target heading noise intensity during simulation.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_max: 60.0,
            sigma: 0.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max > self.dt && self.t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_max must exceed dt, got {}",
                self.t_max
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "simulation sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_max / self.dt - 1e-9).ceil() as usize
    }
}

/// Which vehicle a controller steers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Agent,
    Target,
}

impl Role {
    fn vehicle(self, engagement: &Engagement) -> &VehicleParams {
        match self {
            Role::Agent => &engagement.agent,
            Role::Target => &engagement.target,
        }
    }

    fn problem_role(self) -> ProblemRole {
        match self {
            Role::Agent => ProblemRole::AgentControls,
            Role::Target => ProblemRole::TargetControls,
        }
    }

    /// Reduced state from this vehicle's point of view.
    fn own_frame(self, state: &ReducedState) -> ReducedState {
        match self {
            Role::Agent => *state,
            Role::Target => state.swapped(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Controller {
    ConstantTurn(f64),
    StoredPolicy(Arc<ValueField>),
    PurePursuit,
}

impl Controller {
    pub fn stored(field: ValueField) -> Self {
        Controller::StoredPolicy(Arc::new(field))
    }

    /// A stored policy must have been solved for this vehicle in this engagement.
    pub fn validate(&self, role: Role, engagement: &Engagement) -> Result<()> {
        if let Controller::StoredPolicy(field) = self {
            field.check_shape()?;
            if field.meta.variant.role() != role.problem_role() {
                return Err(Error::Config(format!(
                    "{} policy cannot steer the {role:?}",
                    field.meta.variant
                )));
            }
            if field.meta.engagement != *engagement {
                return Err(Error::Config(format!(
                    "{} policy was solved for different vehicle parameters",
                    field.meta.variant
                )));
            }
        }
        Ok(())
    }

    /// Turn-rate command, clamped to the vehicle's limit. `state` is in Agent
    /// coordinates.
    pub fn command(&self, role: Role, state: &ReducedState, engagement: &Engagement) -> f64 {
        let limit = role.vehicle(engagement).max_turn_rate;
        let u = match self {
            Controller::ConstantTurn(u) => *u,
            Controller::PurePursuit => pure_pursuit(&role.own_frame(state), limit),
            Controller::StoredPolicy(field) => sample_control(field, &role.own_frame(state)),
        };
        u.clamp(-limit, limit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub agent: Pose,
    pub target: Pose,
    pub u_agent: f64,
    pub u_target: f64,
    pub state: ReducedState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    InitialBoth,
    InitialTargetWezOnly,
    InitialAgentWezOnly,
    EnteredTargetWez,
    EnteredAgentWez,
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: ReducedState,
    /// Empty when the initial state is already terminal.
    pub samples: Vec<Sample>,
    pub termination: Termination,
    pub t_f: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> ReducedState {
        self.samples.last().map_or(self.initial, |s| s.state)
    }

    pub const CSV_HEADER: &'static str =
        "t,x_A,y_A,theta_A,x_T,y_T,theta_T,u_A,u_T,r,xi_A,xi_T";

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                s.t,
                s.agent.x,
                s.agent.y,
                s.agent.theta,
                s.target.x,
                s.target.y,
                s.target.theta,
                s.u_agent,
                s.u_target,
                s.state.r,
                s.state.xi_a,
                s.state.xi_t
            )?;
        }
        Ok(())
    }

    /// Smallest lateral offset of the Agent from the Target's line of travel at the
    /// moments the Agent draws level with the Target (its along-track position relative
    /// to the Target changes from behind to ahead). `None` if it never overtakes.
    pub fn min_overtake_offset(&self) -> Option<f64> {
        let split = |s: &Sample| {
            let (sin, cos) = s.target.theta.sin_cos();
            let (dx, dy) = (s.agent.x - s.target.x, s.agent.y - s.target.y);
            (dx * cos + dy * sin, (dy * cos - dx * sin).abs())
        };
        self.samples
            .windows(2)
            .filter_map(|w| {
                let (along0, lat0) = split(&w[0]);
                let (along1, lat1) = split(&w[1]);
                (along0 < 0.0 && along1 >= 0.0).then(|| {
                    let f = -along0 / (along1 - along0);
                    lat0 + f * (lat1 - lat0)
                })
            })
            .min_by(f64::total_cmp)
    }
}

/// Six-way outcome of one engagement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Stalemate,
    InitialBoth,
    InitialTargetWezOnly,
    InitialAgentWezOnly,
    TerminatesInTargetWez,
    TerminatesInAgentWez,
}

impl Outcome {
    pub const ALL: [Outcome; 6] = [
        Outcome::Stalemate,
        Outcome::InitialBoth,
        Outcome::InitialTargetWezOnly,
        Outcome::InitialAgentWezOnly,
        Outcome::TerminatesInTargetWez,
        Outcome::TerminatesInAgentWez,
    ];

    /// Integer code used in sweep CSVs.
    pub fn code(self) -> i32 {
        match self {
            Outcome::Stalemate => 0,
            Outcome::InitialBoth => 1,
            Outcome::InitialTargetWezOnly => 2,
            Outcome::InitialAgentWezOnly => 3,
            Outcome::TerminatesInTargetWez => 4,
            Outcome::TerminatesInAgentWez => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Stalemate => "Stalemate",
            Outcome::InitialBoth => "InitialBoth",
            Outcome::InitialTargetWezOnly => "InitialTargetWezOnly",
            Outcome::InitialAgentWezOnly => "InitialAgentWezOnly",
            Outcome::TerminatesInTargetWez => "TerminatesInTargetWez",
            Outcome::TerminatesInAgentWez => "TerminatesInAgentWez",
        }
    }

    pub fn is_initial(self) -> bool {
        matches!(
            self,
            Outcome::InitialBoth | Outcome::InitialTargetWezOnly | Outcome::InitialAgentWezOnly
        )
    }
}

pub fn classify_outcome(trajectory: &Trajectory) -> Outcome {
    match trajectory.termination {
        Termination::InitialBoth => Outcome::InitialBoth,
        Termination::InitialTargetWezOnly => Outcome::InitialTargetWezOnly,
        Termination::InitialAgentWezOnly => Outcome::InitialAgentWezOnly,
        Termination::EnteredTargetWez => Outcome::TerminatesInTargetWez,
        Termination::EnteredAgentWez => Outcome::TerminatesInAgentWez,
        Termination::Timeout => Outcome::Stalemate,
    }
}

/// Simulate one engagement.
pub fn simulate(
    engagement: &Engagement,
    agent: Pose,
    target: Pose,
    agent_ctrl: &Controller,
    target_ctrl: &Controller,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    simulate_stream(engagement, agent, target, agent_ctrl, target_ctrl, cfg, 0)
}

/// Like [`simulate`], drawing heading noise from stream `stream` of the seeded
/// generator so independent runs get independent noise.
pub fn simulate_stream(
    engagement: &Engagement,
    agent: Pose,
    target: Pose,
    agent_ctrl: &Controller,
    target_ctrl: &Controller,
    cfg: &SimConfig,
    stream: u64,
) -> Result<Trajectory> {
    cfg.validate()?;
    engagement.validate()?;
    agent_ctrl.validate(Role::Agent, engagement)?;
    target_ctrl.validate(Role::Target, engagement)?;

    let initial = reduce_state(&agent, &target)?;
    let agent_wez = &engagement.agent.wez;
    let target_wez = &engagement.target.wez;
    let initial_class = match (in_agent_wez(&initial, agent_wez), in_target_wez(&initial, target_wez)) {
        (true, true) => Some(Termination::InitialBoth),
        (false, true) => Some(Termination::InitialTargetWezOnly),
        (true, false) => Some(Termination::InitialAgentWezOnly),
        (false, false) => None,
    };
    if let Some(termination) = initial_class {
        return Ok(Trajectory {
            initial,
            samples: Vec::new(),
            termination,
            t_f: 0.0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let noise = Normal::new(0.0, cfg.dt.sqrt())
        .map_err(|e| Error::InvalidParameter(format!("noise distribution: {e}")))?;

    let steps = cfg.steps();
    let mut samples = Vec::with_capacity(steps.min(1 << 16) + 1);
    let (mut pose_a, mut pose_t, mut state) = (agent, target, initial);
    let sample_at = |t: f64, a: Pose, tp: Pose, s: ReducedState| Sample {
        t,
        agent: a,
        target: tp,
        u_agent: agent_ctrl.command(Role::Agent, &s, engagement),
        u_target: target_ctrl.command(Role::Target, &s, engagement),
        state: s,
    };

    for k in 0..steps {
        let current = sample_at(k as f64 * cfg.dt, pose_a, pose_t, state);
        samples.push(current);
        let dw = if cfg.sigma > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        (pose_a, pose_t) = step_full(
            &pose_a,
            &pose_t,
            current.u_agent,
            current.u_target,
            &engagement.agent,
            &engagement.target,
            cfg.sigma,
            cfg.dt,
            dw,
        );
        state = reduce_state(&pose_a, &pose_t)?;
        let t = (k + 1) as f64 * cfg.dt;
        let termination = match classify_terminal(&state, agent_wez, target_wez) {
            TerminalClass::InTargetWez => Some(Termination::EnteredTargetWez),
            TerminalClass::InAgentWez => Some(Termination::EnteredAgentWez),
            TerminalClass::Neither => None,
        };
        if let Some(termination) = termination {
            samples.push(sample_at(t, pose_a, pose_t, state));
            return Ok(Trajectory {
                initial,
                samples,
                termination,
                t_f: t,
            });
        }
    }
    let t_f = steps as f64 * cfg.dt;
    samples.push(sample_at(t_f, pose_a, pose_t, state));
    Ok(Trajectory {
        initial,
        samples,
        termination: Termination::Timeout,
        t_f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn run(a: Pose, t: Pose, ua: Controller, ut: Controller, cfg: &SimConfig) -> Trajectory {
        simulate(&Engagement::default(), a, t, &ua, &ut, cfg).unwrap()
    }

    #[test]
    fn initial_terminal_states_short_circuit() {
        let cfg = SimConfig::default();
        // A points at T (xi_T = 0) from 1.0 behind it (xi_A = pi)
        let traj = run(
            Pose::new(0.0, 0.0, FRAC_PI_2),
            Pose::new(0.0, 1.0, FRAC_PI_2),
            Controller::ConstantTurn(0.0),
            Controller::ConstantTurn(0.0),
            &cfg,
        );
        assert_eq!(classify_outcome(&traj), Outcome::InitialTargetWezOnly);
        assert!(traj.samples.is_empty());
        assert_eq!(traj.t_f, 0.0);

        // head-on at r = 0.1: both
        let traj = run(
            Pose::new(0.0, 0.0, 0.0),
            Pose::new(0.1, 0.0, PI),
            Controller::PurePursuit,
            Controller::PurePursuit,
            &cfg,
        );
        assert_eq!(classify_outcome(&traj), Outcome::InitialBoth);

        // T flies at A from 1.0 while A faces away: only A's WEZ
        let traj = run(
            Pose::new(0.0, 0.0, PI),
            Pose::new(1.0, 0.0, PI),
            Controller::PurePursuit,
            Controller::PurePursuit,
            &cfg,
        );
        assert_eq!(classify_outcome(&traj), Outcome::InitialAgentWezOnly);
    }

    #[test]
    fn straight_tail_chase_ends_in_target_wez() {
        let traj = run(
            Pose::new(0.0, 0.0, FRAC_PI_2),
            Pose::new(0.0, 5.0, FRAC_PI_2),
            Controller::ConstantTurn(0.0),
            Controller::ConstantTurn(0.0),
            &SimConfig::default(),
        );
        assert_eq!(classify_outcome(&traj), Outcome::TerminatesInTargetWez);
        // closes at 0.2 until r <= rho_T(0) = 1.7727
        let expected = (5.0 - 1.772_727_272_727_272_7) / 0.2;
        assert!((traj.t_f - expected).abs() <= 0.011, "t_f {}", traj.t_f);
        assert!(in_target_wez(&traj.final_state(), &Engagement::default().target.wez));
        assert!(traj.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn timeout_is_stalemate() {
        // T circles tightly far away while A flies off
        let cfg = SimConfig {
            t_max: 2.0,
            ..SimConfig::default()
        };
        let traj = run(
            Pose::new(0.0, 0.0, PI),
            Pose::new(20.0, 0.0, 0.0),
            Controller::ConstantTurn(0.0),
            Controller::ConstantTurn(1.0),
            &cfg,
        );
        assert_eq!(classify_outcome(&traj), Outcome::Stalemate);
        assert!((traj.t_f - 2.0).abs() < 1e-12);
        assert_eq!(traj.samples.len(), 201);
    }

    #[test]
    fn mirrored_start_gives_mirrored_run() {
        let cfg = SimConfig {
            t_max: 5.0,
            ..SimConfig::default()
        };
        let a = Pose::new(0.0, 0.0, 0.3);
        let t = Pose::new(6.0, 2.0, 2.0);
        let mirror = |p: &Pose| Pose::new(p.x, -p.y, -p.theta);
        let one = run(a, t, Controller::ConstantTurn(1.0), Controller::ConstantTurn(1.0), &cfg);
        let two = run(
            mirror(&a),
            mirror(&t),
            Controller::ConstantTurn(-1.0),
            Controller::ConstantTurn(-1.0),
            &cfg,
        );
        assert_eq!(one.samples.len(), two.samples.len());
        for (p, q) in one.samples.iter().zip(&two.samples) {
            assert!((p.agent.x - q.agent.x).abs() < 1e-9);
            assert!((p.agent.y + q.agent.y).abs() < 1e-9);
            assert!((p.target.x - q.target.x).abs() < 1e-9);
            assert!((p.target.y + q.target.y).abs() < 1e-9);
            assert!((p.state.r - q.state.r).abs() < 1e-9);
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let cfg = SimConfig {
            sigma: 0.5,
            seed: 17,
            t_max: 3.0,
            ..SimConfig::default()
        };
        let go = || {
            run(
                Pose::new(0.0, 0.0, 0.0),
                Pose::new(8.0, 1.0, 1.0),
                Controller::PurePursuit,
                Controller::ConstantTurn(0.0),
                &cfg,
            )
        };
        let (a, b) = (go(), go());
        assert_eq!(a, b);
        let straight = run(
            Pose::new(0.0, 0.0, 0.0),
            Pose::new(8.0, 1.0, 1.0),
            Controller::PurePursuit,
            Controller::ConstantTurn(0.0),
            &SimConfig { sigma: 0.0, ..cfg },
        );
        assert_ne!(a.samples.last(), straight.samples.last());
    }

    #[test]
    fn stored_policy_must_match_role() {
        use crate::solver::{FieldMeta, GridSpec, Variant};
        let meta = FieldMeta {
            variant: Variant::BaselineTarget,
            engagement: Engagement::default(),
            sigma: 1.0,
            penalty: 100.0,
            converged: true,
            iterations: 1,
        };
        let field = ValueField::zeros(GridSpec::cubic(5, 10.0).unwrap(), meta);
        let ctrl = Controller::stored(field.clone());
        let err = simulate(
            &Engagement::default(),
            Pose::new(0.0, 0.0, 0.0),
            Pose::new(5.0, 0.0, 0.0),
            &ctrl,
            &Controller::ConstantTurn(0.0),
            &SimConfig::default(),
        );
        assert!(matches!(err, Err(Error::Config(_))));

        let mut other = Engagement::default();
        other.target.speed = 0.7;
        assert!(ctrl.validate(Role::Target, &other).is_err());
        assert!(ctrl.validate(Role::Target, &Engagement::default()).is_ok());
    }

    #[test]
    fn commands_are_clamped() {
        let e = Engagement::default();
        let s = ReducedState::new(3.0, 0.0, 0.0);
        assert_eq!(Controller::ConstantTurn(5.0).command(Role::Agent, &s, &e), 1.0);
    }

    #[test]
    fn overtake_offset_measured_at_crossing() {
        let sample = |t: f64, ax: f64, ay: f64| Sample {
            t,
            agent: Pose::new(ax, ay, FRAC_PI_2),
            target: Pose::new(0.0, 0.0, FRAC_PI_2),
            u_agent: 0.0,
            u_target: 0.0,
            state: ReducedState::new(1.0, 0.0, 0.0),
        };
        let traj = Trajectory {
            initial: ReducedState::new(1.0, 0.0, 0.0),
            samples: vec![sample(0.0, 1.0, -1.0), sample(1.0, 3.0, 1.0), sample(2.0, 0.5, 2.0)],
            termination: Termination::Timeout,
            t_f: 2.0,
        };
        assert!((traj.min_overtake_offset().unwrap() - 2.0).abs() < 1e-12);
    }
}
