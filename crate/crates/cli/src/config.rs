use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use weaponeer::dynamics::{Engagement, VehicleParams};
use weaponeer::sim::SimConfig;
use weaponeer::solver::{GridSpec, SolverConfig};

use crate::failure::Failure;

/// Everything a run needs. Missing sections and fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub agent: VehicleParams,
    pub target: VehicleParams,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub sim: SimConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            agent: VehicleParams::default_agent(),
            target: VehicleParams::default_target(),
            grid: GridSpec {
                n_r: 100,
                n_xi_a: 100,
                n_xi_t: 100,
                r_max: 10.0,
            },
            solver: SolverConfig::default(),
            sim: SimConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Failure> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Failure::Input(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config always serializes")
    }

    pub fn engagement(&self) -> Engagement {
        Engagement {
            agent: self.agent,
            target: self.target,
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        self.engagement().validate()?;
        self.grid.validate()?;
        if !self.grid.is_swappable() {
            return Err(Failure::Input(format!(
                "grid needs n_xi_a == n_xi_t so the two vehicles' frames share nodes (got {} and {})",
                self.grid.n_xi_a, self.grid.n_xi_t
            )));
        }
        self.solver.validate()?;
        self.sim.validate()?;
        Ok(())
    }

    /// Label used in output file names: `100^3` for cubic grids.
    pub fn grid_label(&self) -> String {
        let g = &self.grid;
        if g.n_r == g.n_xi_a && g.n_r == g.n_xi_t {
            format!("{}^3", g.n_r)
        } else {
            format!("{}x{}x{}", g.n_r, g.n_xi_a, g.n_xi_t)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_setup() {
        let c = RunConfig::default();
        assert_eq!((c.agent.speed, c.target.speed), (1.0, 0.8));
        assert_eq!((c.agent.max_turn_rate, c.target.max_turn_rate), (1.0, 1.0));
        let (wa, wt) = (c.agent.wez, c.target.wez);
        assert_eq!((wa.weapon_speed_ratio, wa.weapon_range, wa.capture_radius), (1.2, 1.0, 0.2));
        assert_eq!((wt.weapon_speed_ratio, wt.weapon_range, wt.capture_radius), (1.1, 0.9, 0.15));
        assert_eq!((c.grid.n_r, c.grid.n_xi_a, c.grid.n_xi_t, c.grid.r_max), (100, 100, 100, 10.0));
        assert_eq!(c.solver.sigma, 1.0);
        assert_eq!(c.solver.tolerance, 1e-6);
        assert_eq!(c.solver.max_iterations, 20_000);
        assert!(c.validate().is_ok());
        assert_eq!(c.grid_label(), "100^3");
    }

    #[test]
    fn round_trip_is_identity() {
        let mut c = RunConfig::default();
        c.grid.n_r = 33;
        c.sim.seed = 99;
        c.solver.upsample_schedule = vec![10];
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(RunConfig::from_json(&back.to_json()).unwrap(), back);
        assert_eq!(c.grid_label(), "33x100x100");
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c = RunConfig::from_json(r#"{"grid": {"n_r": 20, "n_xi_a": 20, "n_xi_t": 20, "r_max": 10.0}}"#)
            .unwrap();
        assert_eq!(c.grid.n_r, 20);
        assert_eq!(c.agent, RunConfig::default().agent);
    }

    #[test]
    fn rejects_zero_capture_radius() {
        let mut c = RunConfig::default();
        c.agent.wez.capture_radius = 0.0;
        assert!(matches!(RunConfig::from_json(&c.to_json()), Err(Failure::Input(_))));
    }

    #[test]
    fn rejects_unequal_aspect_resolution() {
        let mut c = RunConfig::default();
        c.grid.n_xi_t = 50;
        assert!(matches!(RunConfig::from_json(&c.to_json()), Err(Failure::Input(_))));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(RunConfig::from_json(r#"{"agnet": {}}"#).is_err());
    }
}
