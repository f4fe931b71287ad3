use super::field::{ProblemRole, ValueField, Variant};
use super::iterate::{value_iteration, ConvergenceTrace, Problem, SolverConfig};
use super::upsample::upsample;
use super::GridSpec;
use crate::dynamics::Engagement;
use crate::{Error, Result};

/// A solved field and the convergence history of every stage that produced it.
#[derive(Debug, Clone)]
pub struct Solution {
    pub field: ValueField,
    pub traces: Vec<ConvergenceTrace>,
}

impl Solution {
    /// Iterations spent on the final (finest) grid.
    pub fn final_iterations(&self) -> usize {
        self.traces.last().map_or(0, ConvergenceTrace::iterations)
    }
}

fn start_field(problem: &Problem<'_>, init: Option<&ValueField>) -> Result<ValueField> {
    match init {
        None => Ok(problem.zero_field()),
        Some(field) => {
            field.check_shape()?;
            if field.grid != problem.grid {
                return Err(Error::GridMismatch(
                    "hot-start field is on a different grid".into(),
                ));
            }
            let mut start = field.clone();
            start.meta = problem.zero_field().meta;
            Ok(start)
        }
    }
}

/// Baseline controller for either vehicle: the opponent's turn rate is modeled as
/// pure heading noise. Runs the coarse upsampling stages of the config first, each
/// hot-starting the next.
pub fn solve_baseline(
    role: ProblemRole,
    engagement: &Engagement,
    grid: GridSpec,
    config: &SolverConfig,
) -> Result<Solution> {
    let variant = match role {
        ProblemRole::AgentControls => Variant::BaselineAgent,
        ProblemRole::TargetControls => Variant::BaselineTarget,
    };
    let mut traces = Vec::new();
    let mut previous: Option<ValueField> = None;

    let mut stages = Vec::with_capacity(config.upsample_schedule.len() + 1);
    for &n in &config.upsample_schedule {
        let stage = GridSpec::cubic(n, grid.r_max)?;
        if n > grid.n_r || n > grid.n_xi_a || n > grid.n_xi_t || stage == grid {
            return Err(Error::Config(format!(
                "upsample stage {n} is not coarser than the {}x{}x{} grid",
                grid.n_r, grid.n_xi_a, grid.n_xi_t
            )));
        }
        stages.push(stage);
    }
    stages.push(grid);

    for stage in stages {
        let problem = Problem::new(variant, engagement, stage, config)?;
        let start = match &previous {
            None => problem.zero_field(),
            Some(coarse) => upsample(coarse, stage)?,
        };
        let (field, trace) = value_iteration(&problem, &start, config)?;
        traces.push(trace);
        previous = Some(field);
    }
    Ok(Solution {
        field: previous.expect("at least the final stage runs"),
        traces,
    })
}

/// States where the Target's Baseline time-to-go is strictly shorter than the
/// Agent's. `target` must already be in Agent coordinates (see
/// [`ValueField::swapped_axes`]).
pub fn avoid_set(agent: &ValueField, target: &ValueField) -> Result<Vec<bool>> {
    agent.check_shape()?;
    target.check_shape()?;
    if agent.grid != target.grid {
        return Err(Error::GridMismatch(
            "avoid set needs both Baseline fields on the same grid".into(),
        ));
    }
    Ok(agent
        .values
        .iter()
        .zip(&target.values)
        .map(|(&va, &vt)| vt < va)
        .collect())
}

/// Agent controller that additionally treats the avoid set as a loss. The mask is
/// held fixed for the whole solve.
pub fn solve_avoid(
    engagement: &Engagement,
    grid: GridSpec,
    config: &SolverConfig,
    mask: &[bool],
    init: Option<&ValueField>,
) -> Result<Solution> {
    let problem = Problem::new(Variant::Avoid, engagement, grid, config)?.with_avoid_mask(mask)?;
    let start = start_field(&problem, init)?;
    let (field, trace) = value_iteration(&problem, &start, config)?;
    Ok(Solution {
        field,
        traces: vec![trace],
    })
}

/// Agent controller assuming the Target flies its Baseline policy. `target_baseline`
/// is the Target-controlled field as solved (Target coordinates); its control is
/// read at the node-exact swapped index.
pub fn solve_adversarial(
    engagement: &Engagement,
    grid: GridSpec,
    config: &SolverConfig,
    target_baseline: &ValueField,
    init: Option<&ValueField>,
) -> Result<Solution> {
    target_baseline.check_shape()?;
    if target_baseline.meta.variant != Variant::BaselineTarget {
        return Err(Error::Config(format!(
            "adversarial solve needs the {} field, got {}",
            Variant::BaselineTarget,
            target_baseline.meta.variant
        )));
    }
    if target_baseline.grid != grid {
        return Err(Error::GridMismatch(
            "Target Baseline field is on a different grid".into(),
        ));
    }
    if target_baseline.meta.engagement != *engagement {
        return Err(Error::Config(
            "Target Baseline field was solved for different vehicle parameters".into(),
        ));
    }
    let target_controls = target_baseline.swapped_axes()?.controls;
    let problem = Problem::new(Variant::Adversarial, engagement, grid, config)?
        .with_opponent_controls(&target_controls)?;
    let start = start_field(&problem, init)?;
    let (field, trace) = value_iteration(&problem, &start, config)?;
    Ok(Solution {
        field,
        traces: vec![trace],
    })
}
