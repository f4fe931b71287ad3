//! Persistence and lookup of solved fields.
//!
//! Stored controls take only the three discrete levels, but simulation blends them
//! trilinearly into a continuous turn-rate command. Outside the solved range the
//! controller falls back to pure pursuit.

mod format;

use std::io::Write;

pub use format::{
    decode_field, encode_field, load_field, read_header, save_field, FieldFileHeader,
    FORMAT_VERSION,
};

use crate::dynamics::ReducedState;
use crate::solver::{GridSpec, ProblemRole, ValueField};

/// Max turn rate of the vehicle whose policy a field stores.
pub fn controlling_turn_rate(field: &ValueField) -> f64 {
    let e = &field.meta.engagement;
    match field.meta.variant.role() {
        ProblemRole::AgentControls => e.agent.max_turn_rate,
        ProblemRole::TargetControls => e.target.max_turn_rate,
    }
}

/// Turn toward the opponent at full rate.
///
/// `xi_T` is the bearing to the opponent measured from own heading, and a positive
/// turn rate increases heading, so pointing at the opponent means turning with the
/// sign of `xi_T`.
pub fn pure_pursuit(state: &ReducedState, max_turn_rate: f64) -> f64 {
    if state.xi_t > 0.0 {
        max_turn_rate
    } else if state.xi_t < 0.0 {
        -max_turn_rate
    } else {
        0.0
    }
}

/// Interpolated control; pure pursuit beyond `r_max`. `state` is in the field's own
/// coordinates.
pub fn sample_control(field: &ValueField, state: &ReducedState) -> f64 {
    if state.r > field.grid.r_max {
        return pure_pursuit(state, controlling_turn_rate(field));
    }
    field.grid.interpolate(&field.controls, state)
}

/// Interpolated value; range is clamped to `[0, r_max]`.
pub fn sample_value(field: &ValueField, state: &ReducedState) -> f64 {
    field.grid.interpolate(&field.values, state)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceRow {
    pub r: f64,
    pub xi_t: f64,
    pub value: f64,
    pub control: f64,
}

/// A constant-`xi_A` plane of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub xi_a: f64,
    pub i_xi_a: usize,
    pub rows: Vec<SliceRow>,
}

impl Slice {
    pub const CSV_HEADER: &'static str = "r,xi_T,value,control";

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for row in &self.rows {
            writeln!(out, "{},{},{},{}", row.r, row.xi_t, row.value, row.control)?;
        }
        Ok(())
    }
}

/// Plane at the node nearest to `xi_a`, rows ordered by range then `xi_T`.
pub fn extract_slice(field: &ValueField, xi_a: f64) -> Slice {
    let g: GridSpec = field.grid;
    let j = GridSpec::nearest_angle_node(g.n_xi_a, xi_a);
    let rows = (0..g.n_r)
        .flat_map(|i| (0..g.n_xi_t).map(move |k| (i, k)))
        .map(|(i, k)| {
            let idx = g.index(i, j, k);
            SliceRow {
                r: g.r_at(i),
                xi_t: g.xi_t_at(k),
                value: field.values[idx],
                control: field.controls[idx],
            }
        })
        .collect();
    Slice {
        xi_a: g.xi_a_at(j),
        i_xi_a: j,
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Engagement;
    use crate::solver::{FieldMeta, Variant};
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    fn blank(grid: GridSpec) -> ValueField {
        ValueField::zeros(
            grid,
            FieldMeta {
                variant: Variant::BaselineAgent,
                engagement: Engagement::default(),
                sigma: 1.0,
                penalty: 100.0,
                converged: true,
                iterations: 1,
            },
        )
    }

    fn grid() -> GridSpec {
        GridSpec::new(6, 8, 10, 5.0).unwrap()
    }

    #[test]
    fn node_exact_sampling() {
        let g = grid();
        let mut f = blank(g);
        for idx in 0..g.len() {
            f.controls[idx] = [-1.0, 0.0, 1.0][idx % 3];
            f.values[idx] = idx as f64 * 0.5;
        }
        for idx in 0..g.len() {
            let (i, j, k) = g.unravel(idx);
            let s = g.node_state(i, j, k);
            assert_eq!(sample_control(&f, &s), f.controls[idx]);
            assert_eq!(sample_value(&f, &s), f.values[idx]);
        }
    }

    #[test]
    fn midpoint_of_opposite_turns_is_straight() {
        let g = grid();
        let mut f = blank(g);
        f.controls[g.index(2, 3, 4)] = -1.0;
        f.controls[g.index(2, 3, 5)] = 1.0;
        let s = ReducedState::new(g.r_at(2), g.xi_a_at(3), g.xi_t_at(4) + g.dxi_t() / 2.0);
        assert!(sample_control(&f, &s).abs() < 1e-12);
    }

    #[test]
    fn aspect_wraps_periodically() {
        let g = grid();
        let mut f = blank(g);
        f.controls[g.index(1, g.n_xi_a - 1, 0)] = 1.0;
        f.controls[g.index(1, 0, 0)] = -1.0;
        let s = ReducedState::new(g.r_at(1), PI - g.dxi_a() / 2.0, g.xi_t_at(0));
        assert!(sample_control(&f, &s).abs() < 1e-12);
        let quarter = ReducedState::new(g.r_at(1), PI - g.dxi_a() / 4.0, g.xi_t_at(0));
        assert!((sample_control(&f, &quarter) - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn far_field_turns_toward_opponent() {
        let f = blank(grid());
        assert_eq!(sample_control(&f, &ReducedState::new(6.0, 0.0, 0.5)), 1.0);
        assert_eq!(sample_control(&f, &ReducedState::new(6.0, 0.0, -0.5)), -1.0);
        assert_eq!(sample_control(&f, &ReducedState::new(6.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn constant_fields_sample_constant() {
        let g = grid();
        let mut f = blank(g);
        f.values.iter_mut().for_each(|v| *v = 4.5);
        for (r, a, t) in [(0.3, 1.0, -2.0), (4.9, -3.1, 3.1), (2.2, 0.0, 0.0)] {
            assert_eq!(sample_value(&f, &ReducedState::new(r, a, t)), 4.5);
        }
        let slice = extract_slice(&f, 0.4);
        assert_eq!(slice.rows.len(), g.n_r * g.n_xi_t);
        assert!(slice.rows.iter().all(|r| r.value == 4.5));
    }

    #[test]
    fn slice_picks_nearest_plane() {
        let g = grid();
        let mut f = blank(g);
        for idx in 0..g.len() {
            f.values[idx] = g.unravel(idx).1 as f64;
        }
        let s = extract_slice(&f, PI);
        assert_eq!(s.i_xi_a, 0);
        assert!(s.rows.iter().all(|r| r.value == 0.0));
        let s = extract_slice(&f, g.xi_a_at(5) + 0.4 * g.dxi_a());
        assert_eq!(s.i_xi_a, 5);
        let mut csv = Vec::new();
        s.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("r,xi_T,value,control\n"));
        assert_eq!(text.lines().count(), 1 + g.n_r * g.n_xi_t);
    }

    proptest! {
        #[test]
        fn multilinear_cells_reproduced(
            r in 0.0f64..5.0, a in -PI..PI, t in -PI..PI,
        ) {
            // Field that is trilinear in (r, xi_A index, xi_T index) within every cell:
            // a product of per-axis node functions.
            let g = grid();
            let mut f = blank(g);
            let fr = |i: usize| 1.0 + 0.3 * i as f64;
            let fa = |j: usize| [2.0, -1.0, 0.5, 3.0, 1.0, -2.0, 0.0, 4.0][j];
            let ft = |k: usize| (k as f64 * 1.3).cos();
            for idx in 0..g.len() {
                let (i, j, k) = g.unravel(idx);
                f.values[idx] = fr(i) * fa(j) * ft(k);
            }
            let s = ReducedState::new(r, a, t);
            let along = |x: f64, n: usize, h: f64, fx: &dyn Fn(usize) -> f64, periodic: bool| {
                let p = x / h;
                let lo = (p.floor() as usize).min(if periodic { n - 1 } else { n - 2 });
                let w = p - lo as f64;
                let hi = if periodic { (lo + 1) % n } else { lo + 1 };
                (1.0 - w) * fx(lo) + w * fx(hi)
            };
            let expected = along(s.r, g.n_r, g.dr(), &fr, false)
                * along(s.xi_a + PI, g.n_xi_a, TAU / g.n_xi_a as f64, &fa, true)
                * along(s.xi_t + PI, g.n_xi_t, TAU / g.n_xi_t as f64, &ft, true);
            prop_assert!((sample_value(&f, &s) - expected).abs() < 1e-9);

            let shifted = ReducedState { xi_a: s.xi_a + TAU, ..s };
            prop_assert!((sample_value(&f, &ReducedState::new(shifted.r, shifted.xi_a, shifted.xi_t))
                - sample_value(&f, &s)).abs() < 1e-9);
        }
    }
}
