use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GridSpec;
use crate::dynamics::Engagement;
use crate::{Error, Result};

/// Which vehicle minimizes its time-to-go in a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemRole {
    AgentControls,
    /// Vehicle parameters and the two aspect axes are exchanged; the field is indexed
    /// `(r, xi_T, xi_A)` in Agent coordinates.
    TargetControls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    BaselineAgent,
    BaselineTarget,
    Avoid,
    Adversarial,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::BaselineAgent,
        Variant::BaselineTarget,
        Variant::Avoid,
        Variant::Adversarial,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::BaselineAgent => "Baseline-A",
            Variant::BaselineTarget => "Baseline-T",
            Variant::Avoid => "Avoid",
            Variant::Adversarial => "Adversarial",
        }
    }

    pub fn role(self) -> ProblemRole {
        match self {
            Variant::BaselineTarget => ProblemRole::TargetControls,
            _ => ProblemRole::AgentControls,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == s)
            .ok_or_else(|| Error::MalformedHeader(format!("unknown solver variant `{s}`")))
    }
}

/// Provenance of a solved field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldMeta {
    pub variant: Variant,
    /// Vehicles in their real-world roles, regardless of who controls.
    pub engagement: Engagement,
    pub sigma: f64,
    pub penalty: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Value and optimal control at every grid node.
///
/// Values are times-to-go in `[0, penalty]`; controls are signed turn rates of the
/// controlling vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub controls: Vec<f64>,
    pub meta: FieldMeta,
}

impl ValueField {
    pub fn zeros(grid: GridSpec, meta: FieldMeta) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            controls: vec![0.0; grid.len()],
            meta,
        }
    }

    pub fn check_shape(&self) -> Result<()> {
        let n = self.grid.len();
        if self.values.len() != n || self.controls.len() != n {
            return Err(Error::GridMismatch(format!(
                "grid has {n} nodes but field stores {} values and {} controls",
                self.values.len(),
                self.controls.len()
            )));
        }
        Ok(())
    }

    /// Exchange the two aspect axes: maps a Target-controlled field into Agent
    /// coordinates, `V_T(r, xi_A, xi_T) = V~(r, xi_T, xi_A)`.
    pub fn swapped_axes(&self) -> Result<ValueField> {
        if !self.grid.is_swappable() {
            return Err(Error::GridMismatch(
                "aspect axes have different resolutions and cannot be exchanged".into(),
            ));
        }
        let grid = self.grid;
        let mut values = vec![0.0; grid.len()];
        let mut controls = vec![0.0; grid.len()];
        for idx in 0..grid.len() {
            let src = grid.swapped_index(idx);
            values[idx] = self.values[src];
            controls[idx] = self.controls[src];
        }
        Ok(ValueField {
            grid,
            values,
            controls,
            meta: self.meta,
        })
    }
}
