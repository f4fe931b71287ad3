//! Self-checks against independently computed reference values and invariants.
//!
//! Each suite reports how many checks it ran and how many failed; a failing check is
//! report content, never an error.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{drift, reduction_residual, Engagement, Pose, VehicleParams};
use crate::geometry::{bez_radius, WezParams};
use crate::policy_store::{decode_field, encode_field};
use crate::solver::{
    cell_transition, DiffusionAxis, FieldMeta, GridSpec, ProblemRole, ValueField, Variant,
};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub checks: usize,
    pub failures: usize,
    /// First failure, or a short summary.
    pub detail: String,
}

impl SuiteReport {
    fn new(name: &'static str, checks: usize, failures: Vec<String>, summary: String) -> Self {
        Self {
            name,
            passed: failures.is_empty(),
            checks,
            failures: failures.len(),
            detail: failures.into_iter().next().unwrap_or(summary),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub simplex_samples: usize,
    pub reduction_runs: usize,
    pub round_trips: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            simplex_samples: 100_000,
            reduction_runs: 100,
            round_trips: 10_000,
            seed: 0,
        }
    }
}

/// Run every suite. The simplex and reduction suites use `engagement`, `grid`,
/// `sigma` and `axis`; the boundary spot values are fixed reference numbers.
pub fn run_all(
    engagement: &Engagement,
    grid: &GridSpec,
    sigma: f64,
    axis: DiffusionAxis,
    opts: &VerifyOptions,
) -> VerifyReport {
    let suites = vec![
        bez_spot_values(),
        probability_simplex(engagement, grid, sigma, axis, opts.simplex_samples, opts.seed),
        reduction_consistency(engagement, opts.reduction_runs, opts.seed),
        field_round_trip(opts.round_trips, opts.seed),
    ];
    VerifyReport {
        passed: suites.iter().all(|s| s.passed),
        suites,
    }
}

/// Boundary radii of the reference vehicles against high-precision evaluations.
pub fn bez_spot_values() -> SuiteReport {
    let agent = WezParams {
        weapon_speed_ratio: 1.2,
        weapon_range: 1.0,
        capture_radius: 0.2,
    };
    let target = WezParams {
        weapon_speed_ratio: 1.1,
        weapon_range: 0.9,
        capture_radius: 0.15,
    };
    let cases = [
        ("agent, aspect 0", agent, 0.0, 1.833_333_333_333_333_3),
        ("agent, aspect pi", agent, PI, 0.166_666_666_666_666_67),
        ("agent, aspect pi/2", agent, FRAC_PI_2, 0.552_770_798_392_566_6),
        ("target, aspect 0", target, 0.0, 1.772_727_272_727_272_7),
    ];
    let failures = cases
        .iter()
        .filter_map(|(label, params, aspect, expected)| {
            let got = bez_radius(params, *aspect);
            ((got - expected).abs() > 1e-9)
                .then(|| format!("{label}: expected {expected}, got {got}"))
        })
        .collect();
    SuiteReport::new("bez_spot_values", cases.len(), failures, "4 reference radii match".into())
}

/// Random (node, control, variant) cells: probabilities nonnegative and summing to 1.
pub fn probability_simplex(
    engagement: &Engagement,
    grid: &GridSpec,
    sigma: f64,
    axis: DiffusionAxis,
    samples: usize,
    seed: u64,
) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut stationary = 0;
    for _ in 0..samples {
        let variant = Variant::ALL[rng.random_range(0..Variant::ALL.len())];
        let (own, opp): (&VehicleParams, &VehicleParams) = match variant.role() {
            ProblemRole::AgentControls => (&engagement.agent, &engagement.target),
            ProblemRole::TargetControls => (&engagement.target, &engagement.agent),
        };
        let level = |rng: &mut ChaCha8Rng, max: f64| [0.0, -max, max][rng.random_range(0..3)];
        let u_own = level(&mut rng, own.max_turn_rate);
        let u_opp = match variant {
            Variant::Adversarial => level(&mut rng, opp.max_turn_rate),
            _ => 0.0,
        };
        let state = grid.node_state(
            rng.random_range(1..grid.n_r),
            rng.random_range(0..grid.n_xi_a),
            rng.random_range(0..grid.n_xi_t),
        );
        let outcome = drift(&state, u_own, u_opp, own, opp)
            .and_then(|b| cell_transition(&b, grid, sigma, axis));
        match outcome {
            Ok(c) => {
                let probs = c.probabilities();
                let total = c.total();
                if probs.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-12 {
                    failures.push(format!("{variant} at {state:?}: {probs:?} sums to {total}"));
                }
            }
            Err(Error::StationaryCell) => stationary += 1,
            Err(e) => failures.push(format!("{variant} at {state:?}: {e}")),
        }
    }
    SuiteReport::new(
        "probability_simplex",
        samples,
        failures,
        format!("{samples} cells checked, {stationary} stationary"),
    )
}

/// Reduced dynamics track the full kinematics to first order in the step size.
pub fn reduction_consistency(engagement: &Engagement, runs: usize, seed: u64) -> SuiteReport {
    const DT: f64 = 1e-3;
    const HORIZON: f64 = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for run in 0..runs {
        let (agent, target) = loop {
            let a = Pose::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-PI..PI),
            );
            let t = Pose::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(0.0..TAU),
            );
            // far enough apart that neither can reach the other within the horizon
            if (a.x - t.x).hypot(a.y - t.y) >= 3.0 {
                break (a, t);
            }
        };
        let u_a = rng.random_range(-1.0..=1.0) * engagement.agent.max_turn_rate;
        let u_t = rng.random_range(-1.0..=1.0) * engagement.target.max_turn_rate;
        let residual = |dt| {
            reduction_residual(
                &agent,
                &target,
                u_a,
                u_t,
                &engagement.agent,
                &engagement.target,
                dt,
                HORIZON,
            )
        };
        match (residual(DT), residual(DT / 2.0)) {
            (Ok(coarse), Ok(fine)) => {
                worst = worst.max(coarse);
                let ratio = coarse / fine;
                if coarse > 1e-2 {
                    failures.push(format!("run {run}: residual {coarse:e} exceeds 1e-2"));
                } else if !(1.7..=2.3).contains(&ratio) {
                    failures.push(format!("run {run}: halving dt changed residual by {ratio}"));
                }
            }
            (Err(e), _) | (_, Err(e)) => failures.push(format!("run {run}: {e}")),
        }
    }
    SuiteReport::new(
        "reduction_consistency",
        runs,
        failures,
        format!("{runs} runs, worst residual {worst:e}"),
    )
}

fn random_field(rng: &mut ChaCha8Rng) -> ValueField {
    let grid = GridSpec::new(
        rng.random_range(3..7),
        rng.random_range(3..7),
        rng.random_range(3..7),
        rng.random_range(0.5..20.0),
    )
    .expect("sizes are valid");
    let mut engagement = Engagement::default();
    engagement.agent.speed = rng.random_range(0.1..2.0);
    engagement.target.wez.capture_radius = rng.random_range(0.01..1.0);
    let meta = FieldMeta {
        variant: Variant::ALL[rng.random_range(0..Variant::ALL.len())],
        engagement,
        sigma: rng.random_range(0.0..2.0),
        penalty: rng.random_range(1.0..1000.0),
        converged: rng.random(),
        iterations: rng.random_range(0..100_000),
    };
    let mut field = ValueField::zeros(grid, meta);
    for v in &mut field.values {
        *v = f64::from_bits(rng.random::<u64>() >> 2);
    }
    for u in &mut field.controls {
        *u = [-1.0, 0.0, 1.0][rng.random_range(0..3)];
    }
    field
}

/// Encode/decode is bit-exact; flipped and missing payload bytes are detected.
pub fn field_round_trip(count: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf1e1d);
    let mut failures = Vec::new();
    for n in 0..count {
        let field = random_field(&mut rng);
        let bytes = match encode_field(&field) {
            Ok(b) => b,
            Err(e) => {
                failures.push(format!("trip {n}: encode failed: {e}"));
                continue;
            }
        };
        match decode_field(&bytes) {
            Ok(back) => {
                let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                if back.grid != field.grid
                    || back.meta != field.meta
                    || bits(&back.values) != bits(&field.values)
                    || bits(&back.controls) != bits(&field.controls)
                {
                    failures.push(format!("trip {n}: decoded field differs"));
                }
            }
            Err(e) => failures.push(format!("trip {n}: decode failed: {e}")),
        }
        let payload = field.grid.len() * 16;
        let at = bytes.len() - 1 - rng.random_range(0..payload);
        let mut corrupt = bytes.clone();
        corrupt[at] ^= 1 << rng.random_range(0..8);
        if !matches!(decode_field(&corrupt), Err(Error::ChecksumMismatch { .. })) {
            failures.push(format!("trip {n}: flipped byte {at} not detected"));
        }
        let cut = rng.random_range(1..=payload);
        if !matches!(
            decode_field(&bytes[..bytes.len() - cut]),
            Err(Error::TruncatedPayload { .. })
        ) {
            failures.push(format!("trip {n}: truncation by {cut} bytes not detected"));
        }
    }
    SuiteReport::new(
        "field_round_trip",
        count,
        failures,
        format!("{count} fields round-tripped"),
    )
}
