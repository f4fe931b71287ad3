use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{classify_outcome, simulate_stream, Controller, Outcome, SimConfig};
use crate::dynamics::{Engagement, Pose};
use crate::solver::thread_pool;
use crate::{Error, Result};

/// Lattice of Target initial positions and headings around a fixed Agent pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub agent: Pose,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub headings: Vec<f64>,
}

impl Default for SweepSpec {
    /// Agent at the origin heading north; Target on a 41x41 lattice over
    /// `[-5, 5]^2` with the four cardinal headings.
    fn default() -> Self {
        Self::uniform(Pose::new(0.0, 0.0, FRAC_PI_2), -5.0, 5.0, 41, vec![
            0.0,
            FRAC_PI_2,
            PI,
            3.0 * FRAC_PI_2,
        ])
    }
}

impl SweepSpec {
    /// Square lattice with `n` evenly spaced points per side, endpoints included.
    pub fn uniform(agent: Pose, lo: f64, hi: f64, n: usize, headings: Vec<f64>) -> Self {
        let axis: Vec<f64> = match n {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect(),
        };
        Self {
            agent,
            xs: axis.clone(),
            ys: axis,
            headings,
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ys.len() * self.headings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Target pose of cell `index`; headings vary slowest, then y, then x.
    pub fn target_pose(&self, index: usize) -> Pose {
        let nx = self.xs.len();
        let per_heading = nx * self.ys.len();
        let h = index / per_heading;
        let rem = index % per_heading;
        Pose::new(self.xs[rem % nx], self.ys[rem / nx], self.headings[h])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub outcome: Outcome,
    pub t_f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub target: Pose,
    /// Failures (such as coincident vehicles) are kept per cell.
    pub result: std::result::Result<CellOutcome, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeGrid {
    pub spec: SweepSpec,
    pub cells: Vec<SweepCell>,
}

impl OutcomeGrid {
    /// Code written for cells whose run failed.
    pub const ERROR_CODE: i32 = -1;
    pub const CSV_HEADER: &'static str = "x_T,y_T,theta_T,outcome,t_f";

    pub fn heading_cells(&self, heading: usize) -> &[SweepCell] {
        let per = self.spec.xs.len() * self.spec.ys.len();
        &self.cells[heading * per..(heading + 1) * per]
    }

    pub fn count(&self, outcome: Outcome) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.result, Ok(o) if o.outcome == outcome))
            .count()
    }

    pub fn errors(&self) -> usize {
        self.cells.iter().filter(|c| c.result.is_err()).count()
    }

    /// One heading's cells with integer outcome codes.
    pub fn write_csv<W: Write>(&self, heading: usize, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for cell in self.heading_cells(heading) {
            let (code, t_f) = match &cell.result {
                Ok(o) => (o.outcome.code(), o.t_f),
                Err(_) => (Self::ERROR_CODE, f64::NAN),
            };
            writeln!(
                out,
                "{},{},{},{},{}",
                cell.target.x, cell.target.y, cell.target.theta, code, t_f
            )?;
        }
        Ok(())
    }
}

/// Simulate every lattice cell. Heading noise for cell `i` comes from stream `i` of
/// the generator seeded with `cfg.seed`, so results do not depend on `threads`.
pub fn sweep(
    engagement: &Engagement,
    spec: &SweepSpec,
    agent_ctrl: &Controller,
    target_ctrl: &Controller,
    cfg: &SimConfig,
    threads: usize,
) -> Result<OutcomeGrid> {
    cfg.validate()?;
    engagement.validate()?;
    agent_ctrl.validate(super::Role::Agent, engagement)?;
    target_ctrl.validate(super::Role::Target, engagement)?;
    let cells = thread_pool(threads)?.install(|| {
        (0..spec.len())
            .into_par_iter()
            .map(|i| {
                let target = spec.target_pose(i);
                let result = simulate_stream(
                    engagement,
                    spec.agent,
                    target,
                    agent_ctrl,
                    target_ctrl,
                    cfg,
                    i as u64,
                )
                .map(|traj| CellOutcome {
                    outcome: classify_outcome(&traj),
                    t_f: traj.t_f,
                })
                .map_err(|e| e.to_string());
                SweepCell { target, result }
            })
            .collect()
    });
    Ok(OutcomeGrid {
        spec: spec.clone(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaptureDelta {
    pub target: Pose,
    pub t_first: f64,
    pub t_second: f64,
}

impl CaptureDelta {
    /// Positive when the second controller captures sooner.
    pub fn saving(&self) -> f64 {
        self.t_first - self.t_second
    }
}

/// Capture times of two Agent controllers over the cells where both end in the
/// Agent's WEZ after a nonzero flight.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureComparison {
    pub deltas: Vec<CaptureDelta>,
    pub excluded: usize,
}

impl CaptureComparison {
    pub const CSV_HEADER: &'static str = "x_T,y_T,theta_T,t_f_first,t_f_second,delta";

    pub fn mean_saving(&self) -> Option<f64> {
        (!self.deltas.is_empty())
            .then(|| self.deltas.iter().map(CaptureDelta::saving).sum::<f64>() / self.deltas.len() as f64)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for d in &self.deltas {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                d.target.x,
                d.target.y,
                d.target.theta,
                d.t_first,
                d.t_second,
                d.saving()
            )?;
        }
        Ok(())
    }
}

pub fn compare_capture_times(
    engagement: &Engagement,
    spec: &SweepSpec,
    first: &Controller,
    second: &Controller,
    target_ctrl: &Controller,
    cfg: &SimConfig,
    threads: usize,
) -> Result<CaptureComparison> {
    let a = sweep(engagement, spec, first, target_ctrl, cfg, threads)?;
    let b = sweep(engagement, spec, second, target_ctrl, cfg, threads)?;
    if a.cells.len() != b.cells.len() {
        return Err(Error::GridMismatch("sweeps differ in size".into()));
    }
    let captured = |c: &SweepCell| match c.result {
        Ok(o) if o.outcome == Outcome::TerminatesInAgentWez => Some(o.t_f),
        _ => None,
    };
    let mut deltas = Vec::new();
    for (ca, cb) in a.cells.iter().zip(&b.cells) {
        if let (Some(t_first), Some(t_second)) = (captured(ca), captured(cb)) {
            deltas.push(CaptureDelta {
                target: ca.target,
                t_first,
                t_second,
            });
        }
    }
    let excluded = a.cells.len() - deltas.len();
    Ok(CaptureComparison { deltas, excluded })
}
