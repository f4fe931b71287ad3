//! Value iteration on the Markov chain.
//!
//! Every sweep is a Jacobi sweep: nodes read only the previous iterate, so the grid
//! can be split into constant-range slabs that are updated independently. The
//! convergence metric is reduced slab by slab in a fixed order, so results do not
//! depend on the number of workers.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::{FieldMeta, ProblemRole, ValueField, Variant};
use super::markov::DiffusionAxis;
use super::GridSpec;
use crate::dynamics::{drift, Drift, Engagement, VehicleParams};
use crate::geometry::WezParams;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Opponent heading noise intensity.
    pub sigma: f64,
    /// Terminal cost of ending inside the opponent's WEZ.
    pub penalty: f64,
    pub max_iterations: usize,
    /// Stop once the mean absolute change per node drops below this.
    pub tolerance: f64,
    pub diffusion_axis: DiffusionAxis,
    /// Points per dimension of the coarse stages solved before the final grid.
    pub upsample_schedule: Vec<usize>,
    /// Worker threads; `0` lets the pool pick.
    pub threads: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            penalty: 100.0,
            max_iterations: 20_000,
            tolerance: 1e-6,
            diffusion_axis: DiffusionAxis::XiA,
            upsample_schedule: vec![25, 50],
            threads: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "penalty must be positive, got {}",
                self.penalty
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if self.upsample_schedule.iter().any(|&n| n < 3) {
            return Err(Error::InvalidParameter(
                "upsample stages need at least 3 points per dimension".into(),
            ));
        }
        Ok(())
    }
}

/// Turn-rate levels of the minimizing player, in tie-break order `0, -max, +max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSet {
    levels: [f64; 3],
}

impl ControlSet {
    pub fn three_level(max_turn_rate: f64) -> Self {
        Self {
            levels: [0.0, -max_turn_rate, max_turn_rate],
        }
    }

    pub fn levels(&self) -> &[f64; 3] {
        &self.levels
    }
}

/// Where the non-minimizing vehicle's nominal turn rate comes from.
#[derive(Debug, Clone, Copy)]
pub enum OpponentControl<'a> {
    Zero,
    /// One turn rate per node, in the solve's own coordinates.
    PerNode(&'a [f64]),
}

impl OpponentControl<'_> {
    #[inline]
    fn at(&self, index: usize) -> f64 {
        match self {
            OpponentControl::Zero => 0.0,
            OpponentControl::PerNode(controls) => controls[index],
        }
    }
}

/// One controlled Markov chain: who minimizes, against whom, and which nodes are
/// terminal.
///
/// The solve is always phrased from the minimizing vehicle ("own") looking at its
/// opponent: the first aspect axis is the opponent's aspect seen by own, the second
/// own's aspect seen by the opponent. For [`ProblemRole::AgentControls`] that is the
/// Agent frame itself.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub grid: GridSpec,
    pub variant: Variant,
    pub engagement: Engagement,
    pub own: VehicleParams,
    pub opponent: VehicleParams,
    pub controls: ControlSet,
    pub sigma: f64,
    pub penalty: f64,
    pub diffusion: DiffusionAxis,
    pub opponent_control: OpponentControl<'a>,
    /// Extra nodes treated as losses, in own coordinates.
    pub avoid: Option<&'a [bool]>,
}

impl<'a> Problem<'a> {
    pub fn new(
        variant: Variant,
        engagement: &Engagement,
        grid: GridSpec,
        config: &SolverConfig,
    ) -> Result<Self> {
        engagement.validate()?;
        grid.validate()?;
        config.validate()?;
        let (own, opponent) = match variant.role() {
            ProblemRole::AgentControls => (engagement.agent, engagement.target),
            ProblemRole::TargetControls => {
                if !grid.is_swappable() {
                    return Err(Error::GridMismatch(
                        "the Target-controlled solve needs equal aspect resolutions".into(),
                    ));
                }
                (engagement.target, engagement.agent)
            }
        };
        Ok(Self {
            grid,
            variant,
            engagement: *engagement,
            own,
            opponent,
            controls: ControlSet::three_level(own.max_turn_rate),
            sigma: config.sigma,
            penalty: config.penalty,
            diffusion: config.diffusion_axis,
            opponent_control: OpponentControl::Zero,
            avoid: None,
        })
    }

    pub fn with_avoid_mask(mut self, mask: &'a [bool]) -> Result<Self> {
        if mask.len() != self.grid.len() {
            return Err(Error::GridMismatch(format!(
                "avoid mask has {} entries for {} nodes",
                mask.len(),
                self.grid.len()
            )));
        }
        self.avoid = Some(mask);
        Ok(self)
    }

    pub fn with_opponent_controls(mut self, controls: &'a [f64]) -> Result<Self> {
        if controls.len() != self.grid.len() {
            return Err(Error::GridMismatch(format!(
                "opponent policy has {} entries for {} nodes",
                controls.len(),
                self.grid.len()
            )));
        }
        self.opponent_control = OpponentControl::PerNode(controls);
        Ok(self)
    }

    fn own_wez(&self) -> &WezParams {
        &self.own.wez
    }

    fn opponent_wez(&self) -> &WezParams {
        &self.opponent.wez
    }

    /// Drift at a node for a candidate own control.
    pub fn node_drift(&self, index: usize, own_control: f64) -> Result<Drift> {
        let (i, j, k) = self.grid.unravel(index);
        drift(
            &self.grid.node_state(i, j, k),
            own_control,
            self.opponent_control.at(index),
            &self.own,
            &self.opponent,
        )
    }

    fn meta(&self, converged: bool, iterations: usize) -> FieldMeta {
        FieldMeta {
            variant: self.variant,
            engagement: self.engagement,
            sigma: self.sigma,
            penalty: self.penalty,
            converged,
            iterations,
        }
    }

    pub fn zero_field(&self) -> ValueField {
        ValueField::zeros(self.grid, self.meta(false, 0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    /// Copies the value at `source` (range boundary).
    ReflectiveBoundary { source: usize },
    /// Own WEZ reached: zero cost-to-go.
    TerminalZero,
    /// Opponent WEZ (or avoid set) reached: the penalty.
    TerminalPenalty,
    Interior,
}

/// Boundary first, then the opponent's WEZ (or the avoid set), then own WEZ.
pub fn classify_node(problem: &Problem<'_>, index: usize) -> NodeClass {
    let grid = &problem.grid;
    let (i, j, k) = grid.unravel(index);
    if i == 0 {
        return NodeClass::ReflectiveBoundary {
            source: grid.index(1, j, k),
        };
    }
    if i + 1 == grid.n_r {
        return NodeClass::ReflectiveBoundary {
            source: grid.index(i - 1, j, k),
        };
    }
    let state = grid.node_state(i, j, k);
    let in_avoid = problem.avoid.is_some_and(|mask| mask[index]);
    if state.r <= problem.opponent_wez().boundary(state.xi_t) || in_avoid {
        NodeClass::TerminalPenalty
    } else if state.r <= problem.own_wez().boundary(state.xi_a) {
        NodeClass::TerminalZero
    } else {
        NodeClass::Interior
    }
}

// sin(-pi) and friends come out as ~1e-16; grid nodes are never that close to a
// true zero otherwise.
fn node_sin_cos(angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    let snap = |x: f64| if x.abs() < 1e-12 { 0.0 } else { x };
    (snap(s), snap(c))
}

/// The right-hand side of the discrete Bellman equation with everything that does
/// not change between sweeps precomputed.
pub struct BellmanOperator<'p> {
    problem: &'p Problem<'p>,
    classes: Vec<NodeClass>,
    trig_a: Vec<(f64, f64)>,
    trig_t: Vec<(f64, f64)>,
    inv_r: Vec<f64>,
    inv_dr: f64,
    inv_da: f64,
    inv_dt: f64,
    diff_a: f64,
    diff_t: f64,
}

impl<'p> BellmanOperator<'p> {
    pub fn new(problem: &'p Problem<'p>) -> Self {
        let grid = &problem.grid;
        let classes = (0..grid.len()).map(|idx| classify_node(problem, idx)).collect();
        let s2 = problem.sigma * problem.sigma;
        let (diff_a, diff_t) = match problem.diffusion {
            DiffusionAxis::XiA => (s2 / (grid.dxi_a() * grid.dxi_a()), 0.0),
            DiffusionAxis::XiT => (0.0, s2 / (grid.dxi_t() * grid.dxi_t())),
        };
        Self {
            problem,
            classes,
            trig_a: (0..grid.n_xi_a).map(|j| node_sin_cos(grid.xi_a_at(j))).collect(),
            trig_t: (0..grid.n_xi_t).map(|k| node_sin_cos(grid.xi_t_at(k))).collect(),
            inv_r: (0..grid.n_r)
                .map(|i| if i == 0 { 0.0 } else { 1.0 / grid.r_at(i) })
                .collect(),
            inv_dr: 1.0 / grid.dr(),
            inv_da: 1.0 / grid.dxi_a(),
            inv_dt: 1.0 / grid.dxi_t(),
            diff_a,
            diff_t,
        }
    }

    pub fn class(&self, index: usize) -> NodeClass {
        self.classes[index]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.classes
    }

    /// Outflow rate and flux-weighted neighbor sum shared by all candidate controls,
    /// plus the data needed to finish them per control.
    #[inline]
    fn partial(&self, index: usize, values: &[f64]) -> Partial {
        let grid = &self.problem.grid;
        let (i, j, k) = grid.unravel(index);
        let (sin_a, cos_a) = self.trig_a[j];
        let (sin_t, cos_t) = self.trig_t[k];
        let v_own = self.problem.own.speed;
        let v_opp = self.problem.opponent.speed;
        let b_r = -(v_opp * cos_a + v_own * cos_t);
        let turn = (v_opp * sin_a + v_own * sin_t) * self.inv_r[i];
        let b_a = turn - self.problem.opponent_control.at(index);

        let slab = grid.slab_len();
        let row = grid.n_xi_t;
        let j_up = if j + 1 == grid.n_xi_a { 0 } else { j + 1 };
        let j_dn = if j == 0 { grid.n_xi_a - 1 } else { j - 1 };
        let k_up = if k + 1 == grid.n_xi_t { 0 } else { k + 1 };
        let k_dn = if k == 0 { grid.n_xi_t - 1 } else { k - 1 };
        let base = index - k;
        let a_up = index + (j_up * row) - j * row;
        let a_dn = index + (j_dn * row) - j * row;
        let t_up = base + k_up;
        let t_dn = base + k_dn;

        let (r_p, r_m) = (b_r.max(0.0) * self.inv_dr, (-b_r).max(0.0) * self.inv_dr);
        let half_a = 0.5 * self.diff_a;
        let half_t = 0.5 * self.diff_t;
        let a_p = b_a.max(0.0) * self.inv_da + half_a;
        let a_m = (-b_a).max(0.0) * self.inv_da + half_a;
        let rate = b_r.abs() * self.inv_dr + b_a.abs() * self.inv_da + self.diff_a + self.diff_t;
        let flow = r_p * values[index + slab]
            + r_m * values[index - slab]
            + a_p * values[a_up]
            + a_m * values[a_dn]
            + half_t * (values[t_up] + values[t_dn]);
        Partial {
            rate,
            flow,
            turn,
            v_up: values[t_up],
            v_dn: values[t_dn],
        }
    }

    #[inline]
    fn finish(&self, p: &Partial, own_control: f64) -> Option<f64> {
        let b_t = p.turn - own_control;
        let rate = p.rate + b_t.abs() * self.inv_dt;
        if !(rate > 0.0) {
            return None;
        }
        let flow =
            p.flow + b_t.max(0.0) * self.inv_dt * p.v_up + (-b_t).max(0.0) * self.inv_dt * p.v_dn;
        // dt + sum(p * V) with dt = 1 / rate and p = dt * coefficient
        Some((1.0 + flow) / rate)
    }

    /// Right-hand side for one candidate control at an interior node; `None` if the
    /// cell is stationary under that control.
    pub fn candidate(&self, index: usize, own_control: f64, values: &[f64]) -> Option<f64> {
        let p = self.partial(index, values);
        self.finish(&p, own_control)
    }

    /// Minimum over the control set, ties kept by the earlier level. Capped at the
    /// penalty. `None` when every control leaves the cell stationary.
    #[inline]
    pub fn minimize(&self, index: usize, values: &[f64]) -> Option<(f64, f64)> {
        let p = self.partial(index, values);
        let mut best: Option<(f64, f64)> = None;
        for &u in self.problem.controls.levels() {
            if let Some(rhs) = self.finish(&p, u) {
                match best {
                    Some((v, _)) if rhs >= v => {}
                    _ => best = Some((rhs, u)),
                }
            }
        }
        best.map(|(v, u)| (v.min(self.problem.penalty), u))
    }

    /// New value and control for any node given the previous iterate.
    #[inline]
    pub fn update(&self, index: usize, values: &[f64], controls: &[f64]) -> (f64, f64) {
        match self.classes[index] {
            NodeClass::ReflectiveBoundary { source } => (values[source], controls[source]),
            NodeClass::TerminalPenalty => (self.problem.penalty, 0.0),
            NodeClass::TerminalZero => (0.0, 0.0),
            NodeClass::Interior => self
                .minimize(index, values)
                .unwrap_or((values[index], controls[index])),
        }
    }

    /// Update one constant-range slab; returns the summed absolute change.
    fn sweep_slab(
        &self,
        i_r: usize,
        values: &[f64],
        controls: &[f64],
        next_values: &mut [f64],
        next_controls: &mut [f64],
    ) -> f64 {
        let offset = i_r * self.problem.grid.slab_len();
        let mut change = 0.0;
        for (local, (nv, nc)) in next_values.iter_mut().zip(next_controls.iter_mut()).enumerate() {
            let idx = offset + local;
            let (v, u) = self.update(idx, values, controls);
            change += (v - values[idx]).abs();
            *nv = v;
            *nc = u;
        }
        change
    }
}

struct Partial {
    rate: f64,
    flow: f64,
    turn: f64,
    v_up: f64,
    v_dn: f64,
}

/// Single-node Bellman update against a snapshot.
pub fn bellman_update(problem: &Problem<'_>, index: usize, snapshot: &ValueField) -> (f64, f64) {
    BellmanOperator::new(problem).update(index, &snapshot.values, &snapshot.controls)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub mean_delta: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub grid: GridSpec,
    pub rows: Vec<TraceRow>,
    pub converged: bool,
}

impl ConvergenceTrace {
    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    pub fn final_delta(&self) -> Option<f64> {
        self.rows.last().map(|r| r.mean_delta)
    }

    pub const CSV_HEADER: &'static str = "stage,n_r,n_xi_a,n_xi_t,iteration,mean_delta_v,wall_time_s";

    /// Write one or more stages (e.g. an upsampling pipeline) as CSV.
    pub fn write_csv<W: Write>(stages: &[ConvergenceTrace], mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for (stage, trace) in stages.iter().enumerate() {
            let g = trace.grid;
            for row in &trace.rows {
                writeln!(
                    out,
                    "{stage},{},{},{},{},{:e},{:.6}",
                    g.n_r, g.n_xi_a, g.n_xi_t, row.iteration, row.mean_delta, row.wall_seconds
                )?;
            }
        }
        Ok(())
    }
}

pub(crate) fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Jacobi value iteration from `init` until the mean absolute change per node falls
/// below the tolerance or the iteration budget runs out. Non-convergence is reported
/// through `meta.converged`, not as an error.
pub fn value_iteration(
    problem: &Problem<'_>,
    init: &ValueField,
    config: &SolverConfig,
) -> Result<(ValueField, ConvergenceTrace)> {
    config.validate()?;
    init.check_shape()?;
    if init.grid != problem.grid {
        return Err(Error::GridMismatch(format!(
            "initial field grid {:?} differs from problem grid {:?}",
            init.grid, problem.grid
        )));
    }
    let grid = problem.grid;
    let op = BellmanOperator::new(problem);
    let pool = thread_pool(config.threads)?;
    let slab = grid.slab_len();
    let n = grid.len() as f64;

    let mut values = init.values.clone();
    let mut controls = init.controls.clone();
    let mut next_values = vec![0.0; grid.len()];
    let mut next_controls = vec![0.0; grid.len()];
    let mut rows = Vec::new();
    let mut converged = false;
    let start = Instant::now();

    for iteration in 1..=config.max_iterations {
        let slab_changes: Vec<f64> = pool.install(|| {
            next_values
                .par_chunks_mut(slab)
                .zip(next_controls.par_chunks_mut(slab))
                .enumerate()
                .map(|(i_r, (nv, nc))| op.sweep_slab(i_r, &values, &controls, nv, nc))
                .collect()
        });
        let mean_delta = slab_changes.iter().sum::<f64>() / n;
        std::mem::swap(&mut values, &mut next_values);
        std::mem::swap(&mut controls, &mut next_controls);
        rows.push(TraceRow {
            iteration,
            mean_delta,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        if mean_delta < config.tolerance {
            converged = true;
            break;
        }
    }

    let field = ValueField {
        grid,
        values,
        controls,
        meta: problem.meta(converged, rows.len()),
    };
    Ok((
        field,
        ConvergenceTrace {
            grid,
            rows,
            converged,
        },
    ))
}

/// `|T(V) - V|` at every interior node; zero elsewhere.
pub fn fixed_point_residual(problem: &Problem<'_>, field: &ValueField) -> Result<Vec<f64>> {
    field.check_shape()?;
    if field.grid != problem.grid {
        return Err(Error::GridMismatch("field and problem grids differ".into()));
    }
    let op = BellmanOperator::new(problem);
    Ok((0..problem.grid.len())
        .map(|idx| match op.class(idx) {
            NodeClass::Interior => {
                let (v, _) = op.update(idx, &field.values, &field.controls);
                (v - field.values[idx]).abs()
            }
            _ => 0.0,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{in_agent_wez, in_target_wez};
    use crate::solver::markov::cell_transition;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn equal_speeds() -> Engagement {
        let mut e = Engagement::default();
        e.target.speed = e.agent.speed;
        e
    }

    fn quiet() -> SolverConfig {
        SolverConfig {
            upsample_schedule: vec![],
            threads: 1,
            ..SolverConfig::default()
        }
    }

    fn snapshot(problem: &Problem<'_>, value: f64) -> ValueField {
        let mut f = problem.zero_field();
        f.values.iter_mut().for_each(|v| *v = value);
        f
    }

    #[test]
    fn zero_drift_candidate_is_the_time_step() {
        let grid = GridSpec::new(11, 100, 100, 10.0).unwrap();
        let p = Problem::new(Variant::BaselineAgent, &equal_speeds(), grid, &quiet()).unwrap();
        let op = BellmanOperator::new(&p);
        let idx = grid.index(5, 0, 50);
        let s = grid.node_state(5, 0, 50);
        assert_eq!((s.r, s.xi_a), (5.0, -PI));
        assert!(s.xi_t.abs() < 1e-12);
        let zero = p.zero_field();
        let expected = grid.dxi_a() * grid.dxi_a();
        assert_abs_diff_eq!(op.candidate(idx, 0.0, &zero.values).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn stationary_candidate_without_noise() {
        let grid = GridSpec::new(11, 100, 100, 10.0).unwrap();
        let cfg = SolverConfig { sigma: 0.0, ..quiet() };
        let p = Problem::new(Variant::BaselineAgent, &equal_speeds(), grid, &cfg).unwrap();
        let op = BellmanOperator::new(&p);
        let zero = p.zero_field();
        let idx = grid.index(5, 0, 50);
        assert_eq!(op.candidate(idx, 0.0, &zero.values), None);
        assert!(op.candidate(idx, 1.0, &zero.values).is_some());
        // the turning levels still move the chain
        assert_eq!(op.minimize(idx, &zero.values).unwrap().1, -1.0);
    }

    #[test]
    fn ties_go_to_the_left_turn() {
        let grid = GridSpec::new(11, 100, 100, 10.0).unwrap();
        let p = Problem::new(Variant::BaselineAgent, &equal_speeds(), grid, &quiet()).unwrap();
        let op = BellmanOperator::new(&p);
        let snap = snapshot(&p, 50.0);
        let idx = grid.index(5, 0, 50);
        let left = op.candidate(idx, -1.0, &snap.values).unwrap();
        let right = op.candidate(idx, 1.0, &snap.values).unwrap();
        assert_eq!(left, right);
        assert!(op.candidate(idx, 0.0, &snap.values).unwrap() > left);
        assert_eq!(op.minimize(idx, &snap.values), Some((left, -1.0)));
    }

    #[test]
    fn classification_examples() {
        let grid = GridSpec::new(101, 100, 100, 10.0).unwrap();
        let p = Problem::new(Variant::BaselineAgent, &Engagement::default(), grid, &quiet()).unwrap();
        assert_eq!(classify_node(&p, grid.index(1, 30, 50)), NodeClass::TerminalPenalty);
        assert_eq!(classify_node(&p, grid.index(10, 50, 0)), NodeClass::TerminalZero);
        assert_eq!(
            classify_node(&p, grid.index(0, 7, 9)),
            NodeClass::ReflectiveBoundary { source: grid.index(1, 7, 9) }
        );
        assert_eq!(
            classify_node(&p, grid.index(100, 7, 9)),
            NodeClass::ReflectiveBoundary { source: grid.index(99, 7, 9) }
        );
        assert_eq!(classify_node(&p, grid.index(50, 7, 9)), NodeClass::Interior);
    }

    #[test]
    fn avoid_mask_overrides_own_wez() {
        let grid = GridSpec::new(101, 100, 100, 10.0).unwrap();
        let mut mask = vec![false; grid.len()];
        let idx = grid.index(10, 50, 0);
        mask[idx] = true;
        let p = Problem::new(Variant::Avoid, &Engagement::default(), grid, &quiet())
            .unwrap()
            .with_avoid_mask(&mask)
            .unwrap();
        assert_eq!(classify_node(&p, idx), NodeClass::TerminalPenalty);
        assert!(Problem::new(Variant::Avoid, &Engagement::default(), grid, &quiet())
            .unwrap()
            .with_avoid_mask(&mask[1..])
            .is_err());
    }

    #[test]
    fn update_matches_transition_probabilities() {
        let grid = GridSpec::new(9, 10, 12, 6.0).unwrap();
        let e = Engagement::default();
        for axis in [DiffusionAxis::XiA, DiffusionAxis::XiT] {
            let cfg = SolverConfig { diffusion_axis: axis, sigma: 0.7, ..quiet() };
            let p = Problem::new(Variant::BaselineAgent, &e, grid, &cfg).unwrap();
            let op = BellmanOperator::new(&p);
            let mut snap = p.zero_field();
            for (idx, v) in snap.values.iter_mut().enumerate() {
                *v = ((idx * 37) % 101) as f64 * 0.9;
            }
            for idx in 0..grid.len() {
                let (i, j, k) = grid.unravel(idx);
                if op.class(idx) != NodeClass::Interior {
                    continue;
                }
                let nb = |di: isize, dj: isize, dk: isize| {
                    let jj = (j as isize + dj).rem_euclid(grid.n_xi_a as isize) as usize;
                    let kk = (k as isize + dk).rem_euclid(grid.n_xi_t as isize) as usize;
                    snap.values[grid.index((i as isize + di) as usize, jj, kk)]
                };
                for &u in p.controls.levels() {
                    let d = p.node_drift(idx, u).unwrap();
                    let c = cell_transition(&d, &grid, cfg.sigma, axis).unwrap();
                    let direct = c.dt
                        + c.r_plus * nb(1, 0, 0)
                        + c.r_minus * nb(-1, 0, 0)
                        + c.xi_a_plus * nb(0, 1, 0)
                        + c.xi_a_minus * nb(0, -1, 0)
                        + c.xi_t_plus * nb(0, 0, 1)
                        + c.xi_t_minus * nb(0, 0, -1);
                    let fast = op.candidate(idx, u, &snap.values).unwrap();
                    assert_abs_diff_eq!(fast, direct, epsilon = 1e-12 * direct.max(1.0));
                }
            }
        }
    }

    #[test]
    fn penalty_snapshot_stays_bounded() {
        let grid = GridSpec::cubic(12, 6.0).unwrap();
        let cfg = quiet();
        let p = Problem::new(Variant::BaselineAgent, &Engagement::default(), grid, &cfg).unwrap();
        let snap = snapshot(&p, cfg.penalty);
        let op = BellmanOperator::new(&p);
        for idx in 0..grid.len() {
            let (v, _) = bellman_update(&p, idx, &snap);
            assert!(v <= cfg.penalty && v >= 0.0);
            if op.class(idx) == NodeClass::Interior {
                assert_eq!(v, cfg.penalty);
            }
        }
        let few = SolverConfig { max_iterations: 200, ..cfg.clone() };
        let (field, trace) = value_iteration(&p, &snap, &few).unwrap();
        assert!(!trace.converged || field.meta.converged);
        let near_wez = (0..grid.len())
            .filter(|&idx| op.class(idx) == NodeClass::Interior)
            .any(|idx| field.values[idx] < cfg.penalty);
        assert!(near_wez);
    }

    #[test]
    fn all_own_wez_converges_in_one_sweep() {
        let mut e = Engagement::default();
        e.target.wez = WezParams::new(1.1, 0.01, 0.001).unwrap();
        let grid = GridSpec::new(5, 8, 8, 0.1).unwrap();
        let p = Problem::new(Variant::BaselineAgent, &e, grid, &quiet()).unwrap();
        let (field, trace) = value_iteration(&p, &p.zero_field(), &quiet()).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations(), 1);
        assert!(field.values.iter().all(|&v| v == 0.0));
        assert!(BellmanOperator::new(&p)
            .classes()
            .iter()
            .all(|c| matches!(c, NodeClass::TerminalZero | NodeClass::ReflectiveBoundary { .. })));
    }

    fn solve_small(threads: usize) -> (ValueField, ConvergenceTrace) {
        let cfg = SolverConfig { threads, ..quiet() };
        let grid = GridSpec::cubic(14, 8.0).unwrap();
        let p = Problem::new(Variant::BaselineAgent, &Engagement::default(), grid, &cfg).unwrap();
        value_iteration(&p, &p.zero_field(), &cfg).unwrap()
    }

    #[test]
    fn converged_small_solve() {
        let (field, trace) = solve_small(1);
        assert!(trace.converged && field.meta.converged);
        assert_eq!(field.meta.iterations, trace.iterations());
        assert!(trace.final_delta().unwrap() < 1e-6);
        let cfg = quiet();
        let p = Problem::new(Variant::BaselineAgent, &Engagement::default(), field.grid, &cfg).unwrap();
        let op = BellmanOperator::new(&p);
        for idx in 0..field.grid.len() {
            let v = field.values[idx];
            assert!((0.0..=cfg.penalty).contains(&v));
            match op.class(idx) {
                NodeClass::TerminalZero => assert_eq!(v, 0.0),
                NodeClass::TerminalPenalty => assert_eq!(v, cfg.penalty),
                NodeClass::ReflectiveBoundary { .. } => {}
                NodeClass::Interior => assert!(p.controls.levels().contains(&field.controls[idx])),
            }
        }
        let residual = fixed_point_residual(&p, &field).unwrap();
        assert!(residual.iter().all(|&r| r < 1e-5));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let (a, ta) = solve_small(1);
        let (b, tb) = solve_small(4);
        assert_eq!(a.values, b.values);
        assert_eq!(a.controls, b.controls);
        let deltas = |t: &ConvergenceTrace| t.rows.iter().map(|r| r.mean_delta).collect::<Vec<_>>();
        assert_eq!(deltas(&ta), deltas(&tb));
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let cfg = SolverConfig { max_iterations: 3, ..quiet() };
        let grid = GridSpec::cubic(10, 8.0).unwrap();
        let p = Problem::new(Variant::BaselineAgent, &Engagement::default(), grid, &cfg).unwrap();
        let (field, trace) = value_iteration(&p, &p.zero_field(), &cfg).unwrap();
        assert!(!field.meta.converged);
        assert_eq!(trace.iterations(), 3);
    }

    #[test]
    fn target_problem_uses_the_swapped_geometry() {
        let grid = GridSpec::cubic(20, 5.0).unwrap();
        let e = Engagement::default();
        let p = Problem::new(Variant::BaselineTarget, &e, grid, &quiet()).unwrap();
        for idx in 0..grid.len() {
            let (i, _, _) = grid.unravel(idx);
            if i == 0 || i + 1 == grid.n_r {
                continue;
            }
            let (ii, j, k) = grid.unravel(grid.swapped_index(idx));
            let agent_frame = grid.node_state(ii, j, k);
            let class = classify_node(&p, idx);
            assert_eq!(
                class == NodeClass::TerminalPenalty,
                in_agent_wez(&agent_frame, &e.agent.wez),
            );
            if class == NodeClass::TerminalZero {
                assert!(in_target_wez(&agent_frame, &e.target.wez));
            }
        }
        let uneven = GridSpec::new(10, 8, 12, 5.0).unwrap();
        assert!(Problem::new(Variant::BaselineTarget, &e, uneven, &quiet()).is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let (_, trace) = solve_small(1);
        let mut out = Vec::new();
        ConvergenceTrace::write_csv(std::slice::from_ref(&trace), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(ConvergenceTrace::CSV_HEADER));
        assert_eq!(lines.count(), trace.iterations());
    }

    #[test]
    fn config_rejects_nonsense() {
        assert!(SolverConfig { sigma: -1.0, ..quiet() }.validate().is_err());
        assert!(SolverConfig { penalty: 0.0, ..quiet() }.validate().is_err());
        assert!(SolverConfig { tolerance: 0.0, ..quiet() }.validate().is_err());
        assert!(SolverConfig { upsample_schedule: vec![2], ..quiet() }.validate().is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }
}
