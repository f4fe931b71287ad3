use std::f64::consts::FRAC_PI_2;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use weaponeer::dynamics::Pose;
use weaponeer::policy_store::{extract_slice, load_field, save_field};
use weaponeer::sim::{
    classify_outcome, compare_capture_times, simulate, sweep, Controller, Outcome, SweepSpec,
};
use weaponeer::solver::{
    avoid_set, solve_adversarial, solve_avoid, solve_baseline, ConvergenceTrace, ProblemRole,
    Solution, ValueField, Variant, ADVERSARIAL_SIGMA,
};
use weaponeer::verify::{run_all, VerifyOptions};

use crate::config::RunConfig;
use crate::failure::Failure;

pub struct Context {
    pub config: RunConfig,
    pub force: bool,
}

/// File-name stem of a variant.
pub fn slug(variant: Variant) -> &'static str {
    match variant {
        Variant::BaselineAgent => "baseline-agent",
        Variant::BaselineTarget => "baseline-target",
        Variant::Avoid => "avoid",
        Variant::Adversarial => "adversarial",
    }
}

impl Context {
    pub fn field_path(&self, variant: Variant) -> PathBuf {
        self.config
            .output_dir
            .join(format!("{}_{}.field", slug(variant), self.config.grid_label()))
    }

    fn trace_path(&self, variant: Variant) -> PathBuf {
        self.config
            .output_dir
            .join(format!("{}_convergence.csv", slug(variant)))
    }

    fn output(&self, path: &Path) -> Result<BufWriter<File>, Failure> {
        self.check_writable(path)?;
        Ok(BufWriter::new(File::create(path).map_err(|e| {
            Failure::Input(format!("cannot create {}: {e}", path.display()))
        })?))
    }

    fn check_writable(&self, path: &Path) -> Result<(), Failure> {
        if path.exists() && !self.force {
            return Err(Failure::Input(format!(
                "refusing to overwrite {} (pass --force)",
                path.display()
            )));
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)
                .map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))?;
        }
        Ok(())
    }

    fn load_checked(&self, variant: Variant) -> Result<ValueField, Failure> {
        let path = self.field_path(variant);
        let field = load_field(&path)?;
        if field.meta.variant != variant {
            return Err(Failure::Input(format!(
                "{} holds a {} field, expected {variant}",
                path.display(),
                field.meta.variant
            )));
        }
        if field.grid != self.config.grid {
            return Err(Failure::Input(format!(
                "{} was solved on a different grid",
                path.display()
            )));
        }
        if field.meta.engagement != self.config.engagement() {
            return Err(Failure::Input(format!(
                "{} was solved for different vehicle parameters",
                path.display()
            )));
        }
        Ok(field)
    }
}

pub fn solve(ctx: &Context, variant: Variant, with_deps: bool) -> Result<(), Failure> {
    let field_path = ctx.field_path(variant);
    let trace_path = ctx.trace_path(variant);
    ctx.check_writable(&field_path)?;
    ctx.check_writable(&trace_path)?;

    let deps: &[Variant] = match variant {
        Variant::BaselineAgent | Variant::BaselineTarget => &[],
        Variant::Avoid => &[Variant::BaselineAgent, Variant::BaselineTarget],
        Variant::Adversarial => &[Variant::BaselineTarget],
    };
    let missing: Vec<Variant> = deps
        .iter()
        .copied()
        .filter(|&d| !ctx.field_path(d).exists())
        .collect();
    if !missing.is_empty() {
        if !with_deps {
            return Err(Failure::MissingDependency(
                missing.iter().map(|&d| ctx.field_path(d)).collect(),
            ));
        }
        for dep in missing {
            solve(ctx, dep, false)?;
        }
    }

    let config = &ctx.config;
    let engagement = config.engagement();
    let solution: Solution = match variant {
        Variant::BaselineAgent => {
            solve_baseline(ProblemRole::AgentControls, &engagement, config.grid, &config.solver)?
        }
        Variant::BaselineTarget => {
            solve_baseline(ProblemRole::TargetControls, &engagement, config.grid, &config.solver)?
        }
        Variant::Avoid => {
            let agent = ctx.load_checked(Variant::BaselineAgent)?;
            let target = ctx.load_checked(Variant::BaselineTarget)?;
            let mask = avoid_set(&agent, &target.swapped_axes()?)?;
            println!(
                "avoid set: {} of {} nodes",
                mask.iter().filter(|&&m| m).count(),
                mask.len()
            );
            solve_avoid(&engagement, config.grid, &config.solver, &mask, Some(&agent))?
        }
        Variant::Adversarial => {
            let target = ctx.load_checked(Variant::BaselineTarget)?;
            let mut solver = config.solver.clone();
            solver.sigma = ADVERSARIAL_SIGMA;
            println!("adversarial solve uses sigma = {ADVERSARIAL_SIGMA}");
            solve_adversarial(&engagement, config.grid, &solver, &target, None)?
        }
    };

    save_field(&solution.field, &field_path)?;
    let mut out = ctx.output(&trace_path)?;
    ConvergenceTrace::write_csv(&solution.traces, &mut out)?;
    out.flush()?;

    let last = solution.traces.last().expect("every solve runs a stage");
    println!(
        "{variant}: {} iterations on the final grid, mean |dV| {:e}, {}",
        last.iterations(),
        last.final_delta().unwrap_or(f64::NAN),
        if solution.field.meta.converged { "converged" } else { "NOT converged" }
    );
    println!("wrote {}", field_path.display());
    println!("wrote {}", trace_path.display());
    if !solution.field.meta.converged {
        return Err(Failure::NotConverged(format!(
            "{variant} stopped after {} iterations; {} is flagged as unconverged",
            last.iterations(),
            field_path.display()
        )));
    }
    Ok(())
}

/// Controller named on the command line.
pub fn controller(ctx: &Context, spec: &str) -> Result<Controller, Failure> {
    let stored = |variant| -> Result<Controller, Failure> {
        let path = ctx.field_path(variant);
        if !path.exists() {
            return Err(Failure::MissingDependency(vec![path]));
        }
        Ok(Controller::stored(ctx.load_checked(variant)?))
    };
    match spec {
        "pure-pursuit" => Ok(Controller::PurePursuit),
        "straight" => Ok(Controller::ConstantTurn(0.0)),
        "baseline-agent" => stored(Variant::BaselineAgent),
        "baseline-target" => stored(Variant::BaselineTarget),
        "avoid" => stored(Variant::Avoid),
        "adversarial" => stored(Variant::Adversarial),
        other => {
            if let Some(u) = other.strip_prefix("turn:") {
                u.parse()
                    .map(Controller::ConstantTurn)
                    .map_err(|_| Failure::Input(format!("bad turn rate in {other:?}")))
            } else if let Some(path) = other.strip_prefix("field:") {
                Ok(Controller::stored(load_field(path)?))
            } else {
                Err(Failure::Input(format!(
                    "unknown controller {other:?}; expected pure-pursuit, straight, turn:<rate>, \
                     baseline-agent, baseline-target, avoid, adversarial or field:<path>"
                )))
            }
        }
    }
}

pub fn parse_pose(text: &str) -> Result<Pose, String> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("pose {text:?}: {e}"))?;
    match parts[..] {
        [x, y, theta] => Ok(Pose::new(x, y, theta)),
        _ => Err(format!("pose {text:?} needs x,y,theta")),
    }
}

pub fn run_simulation(
    ctx: &Context,
    agent: Pose,
    target: Pose,
    agent_ctrl: &str,
    target_ctrl: &str,
    csv: Option<PathBuf>,
) -> Result<(), Failure> {
    let a = controller(ctx, agent_ctrl)?;
    let t = controller(ctx, target_ctrl)?;
    let path = csv.unwrap_or_else(|| ctx.config.output_dir.join("trajectory.csv"));
    ctx.check_writable(&path)?;
    let traj = simulate(&ctx.config.engagement(), agent, target, &a, &t, &ctx.config.sim)?;
    let mut out = ctx.output(&path)?;
    traj.write_csv(&mut out)?;
    out.flush()?;
    let outcome = classify_outcome(&traj);
    println!("outcome {} (code {}) t_f {}", outcome.name(), outcome.code(), traj.t_f);
    println!("wrote {}", path.display());
    Ok(())
}

fn heading_label(degrees: f64) -> String {
    if degrees.fract() == 0.0 {
        format!("{degrees:.0}")
    } else {
        format!("{degrees}")
    }
}

pub fn run_sweep(
    ctx: &Context,
    agent_ctrl: &str,
    target_ctrl: &str,
    points: usize,
    extent: f64,
    headings_deg: &[f64],
) -> Result<(), Failure> {
    if points == 0 {
        return Err(Failure::Input("--points must be at least 1".into()));
    }
    let a = controller(ctx, agent_ctrl)?;
    let t = controller(ctx, target_ctrl)?;
    let dir = &ctx.config.output_dir;
    let paths: Vec<PathBuf> = headings_deg
        .iter()
        .map(|&h| dir.join(format!("sweep_{}.csv", heading_label(h))))
        .collect();
    let legend = dir.join("sweep_legend.json");
    for p in paths.iter().chain([&legend]) {
        ctx.check_writable(p)?;
    }
    let spec = SweepSpec::uniform(
        Pose::new(0.0, 0.0, FRAC_PI_2),
        -extent,
        extent,
        points,
        headings_deg.iter().map(|h| h.to_radians()).collect(),
    );
    let grid = sweep(
        &ctx.config.engagement(),
        &spec,
        &a,
        &t,
        &ctx.config.sim,
        ctx.config.solver.threads,
    )?;
    for (h, path) in paths.iter().enumerate() {
        let mut out = ctx.output(path)?;
        grid.write_csv(h, &mut out)?;
        out.flush()?;
        println!("wrote {}", path.display());
    }
    let mut codes = serde_json::Map::new();
    for o in Outcome::ALL {
        codes.insert(o.code().to_string(), o.name().into());
    }
    codes.insert(
        weaponeer::sim::OutcomeGrid::ERROR_CODE.to_string(),
        "Error".into(),
    );
    let mut out = ctx.output(&legend)?;
    serde_json::to_writer_pretty(&mut out, &serde_json::json!({ "outcome_codes": codes }))
        .map_err(|e| Failure::Input(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    println!("wrote {}", legend.display());
    for o in Outcome::ALL {
        println!("{:>22} {}", o.name(), grid.count(o));
    }
    println!("{:>22} {}", "Error", grid.errors());
    Ok(())
}

pub fn run_compare(
    ctx: &Context,
    first: &str,
    second: &str,
    target_ctrl: &str,
    points: usize,
    extent: f64,
    heading_deg: f64,
) -> Result<(), Failure> {
    if points == 0 {
        return Err(Failure::Input("--points must be at least 1".into()));
    }
    let (a1, a2, t) = (
        controller(ctx, first)?,
        controller(ctx, second)?,
        controller(ctx, target_ctrl)?,
    );
    let path = ctx.config.output_dir.join(format!(
        "compare_{}_vs_{}_{}.csv",
        first.replace([':', '/'], "-"),
        second.replace([':', '/'], "-"),
        heading_label(heading_deg)
    ));
    ctx.check_writable(&path)?;
    let spec = SweepSpec::uniform(
        Pose::new(0.0, 0.0, FRAC_PI_2),
        -extent,
        extent,
        points,
        vec![heading_deg.to_radians()],
    );
    let cmp = compare_capture_times(
        &ctx.config.engagement(),
        &spec,
        &a1,
        &a2,
        &t,
        &ctx.config.sim,
        ctx.config.solver.threads,
    )?;
    let mut out = ctx.output(&path)?;
    cmp.write_csv(&mut out)?;
    out.flush()?;
    println!(
        "{} cells where both capture, {} excluded; mean t_f({first}) - t_f({second}) = {}",
        cmp.deltas.len(),
        cmp.excluded,
        cmp.mean_saving().map_or("n/a".into(), |m| format!("{m}"))
    );
    println!("wrote {}", path.display());
    Ok(())
}

pub fn run_slice(
    ctx: &Context,
    field: &Path,
    xi_a: f64,
    csv: Option<PathBuf>,
) -> Result<(), Failure> {
    let loaded = load_field(field)?;
    let slice = extract_slice(&loaded, xi_a);
    let path = csv.unwrap_or_else(|| {
        ctx.config.output_dir.join(format!(
            "slice_{}_{}.csv",
            slug(loaded.meta.variant),
            slice.i_xi_a
        ))
    });
    let mut out = ctx.output(&path)?;
    slice.write_csv(&mut out)?;
    out.flush()?;
    println!("slice at xi_A = {} (node {})", slice.xi_a, slice.i_xi_a);
    println!("wrote {}", path.display());
    Ok(())
}

pub fn run_verify(ctx: &Context, quick: bool) -> Result<(), Failure> {
    let opts = if quick {
        VerifyOptions {
            simplex_samples: 10_000,
            reduction_runs: 20,
            round_trips: 500,
            seed: ctx.config.sim.seed,
        }
    } else {
        VerifyOptions {
            seed: ctx.config.sim.seed,
            ..VerifyOptions::default()
        }
    };
    let c = &ctx.config;
    let report = run_all(
        &c.engagement(),
        &c.grid,
        c.solver.sigma,
        c.solver.diffusion_axis,
        &opts,
    );
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(|e| Failure::Input(e.to_string()))?
    );
    Ok(())
}

/// Default pose text for the Target in `simulate`: the straight tail chase.
pub const DEFAULT_TARGET_POSE: &str = "0,5,1.5707963267948966";
pub const DEFAULT_AGENT_POSE: &str = "0,0,1.5707963267948966";
