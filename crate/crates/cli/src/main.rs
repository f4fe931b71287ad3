//! `weaponeer`: solve engagement fields, simulate engagements and sweep initial
//! conditions from the command line.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use weaponeer::solver::Variant;

use commands::{Context, DEFAULT_AGENT_POSE, DEFAULT_TARGET_POSE};
use config::RunConfig;
use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "weaponeer", version, about = "WEZ-aware pursuit policies for Dubins vehicles")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags that override the config file.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON run configuration; defaults apply to anything it leaves out
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Points per dimension for a cubic grid
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true)]
    r_max: Option<f64>,
    /// Heading noise intensity used by the solver
    #[arg(long, global = true)]
    sigma: Option<f64>,
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[arg(long, global = true)]
    max_iterations: Option<usize>,
    /// Coarse pre-solve grid sizes, e.g. `--schedule 25,50`; `none` or empty for a cold solve
    #[arg(long, global = true, value_parser = parse_schedule)]
    schedule: Option<Schedule>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true)]
    t_max: Option<f64>,
    /// Target heading noise during simulation
    #[arg(long, global = true)]
    sim_sigma: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overwrite existing outputs
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Clone, Debug)]
struct Schedule(Vec<usize>);

fn parse_schedule(text: &str) -> Result<Schedule, String> {
    let text = text.trim();
    if text.is_empty() || text == "none" {
        return Ok(Schedule(Vec::new()));
    }
    text.split(',')
        .map(|n| n.trim().parse::<usize>().map_err(|e| format!("{n:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(Schedule)
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a value field and write it with its convergence trace
    Solve {
        #[arg(long, value_enum)]
        variant: VariantArg,
        /// Also solve missing prerequisite fields
        #[arg(long)]
        with_deps: bool,
    },
    /// Simulate one engagement and write its trajectory
    Simulate {
        /// Agent pose `x,y,theta`
        #[arg(long, default_value = DEFAULT_AGENT_POSE, allow_hyphen_values = true)]
        agent: String,
        /// Target pose `x,y,theta`
        #[arg(long, default_value = DEFAULT_TARGET_POSE, allow_hyphen_values = true)]
        target: String,
        /// pure-pursuit, straight, turn:<rate>, a variant name or field:<path>
        #[arg(long, default_value = "baseline-agent")]
        agent_ctrl: String,
        #[arg(long, default_value = "straight")]
        target_ctrl: String,
        /// Trajectory CSV (default `<out>/trajectory.csv`)
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Sweep Target initial states and write one outcome CSV per heading
    Sweep {
        #[arg(long, default_value = "baseline-agent")]
        agent_ctrl: String,
        #[arg(long, default_value = "baseline-target")]
        target_ctrl: String,
        /// Lattice points per side
        #[arg(long, default_value_t = 41)]
        points: usize,
        /// Half-width of the square lattice
        #[arg(long, default_value_t = 5.0)]
        extent: f64,
        /// Target headings in degrees
        #[arg(long, value_delimiter = ',', default_value = "0,90,180,270")]
        headings: Vec<f64>,
    },
    /// Compare capture times of two Agent controllers over a sweep
    Compare {
        #[arg(long, default_value = "baseline-agent")]
        first: String,
        #[arg(long, default_value = "adversarial")]
        second: String,
        #[arg(long, default_value = "baseline-target")]
        target_ctrl: String,
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[arg(long, default_value_t = 5.0)]
        extent: f64,
        /// Target heading in degrees
        #[arg(long, default_value_t = 180.0, allow_hyphen_values = true)]
        heading: f64,
    },
    /// Write the constant-aspect plane of a field nearest to `--xi-a`
    Slice {
        #[arg(long)]
        field: PathBuf,
        /// Radians
        #[arg(long, default_value_t = std::f64::consts::PI, allow_hyphen_values = true)]
        xi_a: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the self-check suites and print a JSON report
    Verify {
        /// Smaller sample counts
        #[arg(long)]
        quick: bool,
    },
    /// Print the effective configuration as JSON
    Config,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    BaselineAgent,
    BaselineTarget,
    Avoid,
    Adversarial,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::BaselineAgent => Variant::BaselineAgent,
            VariantArg::BaselineTarget => Variant::BaselineTarget,
            VariantArg::Avoid => Variant::Avoid,
            VariantArg::Adversarial => Variant::Adversarial,
        }
    }
}

impl Overrides {
    fn apply(&self, mut c: RunConfig) -> Result<RunConfig, Failure> {
        if let Some(out) = &self.out {
            c.output_dir = out.clone();
        }
        if let Some(n) = self.grid {
            c.grid.n_r = n;
            c.grid.n_xi_a = n;
            c.grid.n_xi_t = n;
        }
        if let Some(r) = self.r_max {
            c.grid.r_max = r;
        }
        if let Some(s) = self.sigma {
            c.solver.sigma = s;
        }
        if let Some(t) = self.tolerance {
            c.solver.tolerance = t;
        }
        if let Some(m) = self.max_iterations {
            c.solver.max_iterations = m;
        }
        if let Some(Schedule(s)) = &self.schedule {
            c.solver.upsample_schedule = s.clone();
        }
        if let Some(t) = self.threads {
            c.solver.threads = t;
        }
        if let Some(dt) = self.dt {
            c.sim.dt = dt;
        }
        if let Some(t) = self.t_max {
            c.sim.t_max = t;
        }
        if let Some(s) = self.sim_sigma {
            c.sim.sigma = s;
        }
        if let Some(s) = self.seed {
            c.sim.seed = s;
        }
        // stages at least as fine as the final grid are dropped when --grid shrinks it
        if self.grid.is_some() && self.schedule.is_none() {
            let n = c.grid.n_r;
            c.solver.upsample_schedule.retain(|&s| s < n);
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let base = match &cli.overrides.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let ctx = Context {
        config: cli.overrides.apply(base)?,
        force: cli.overrides.force,
    };
    match cli.command {
        Command::Solve { variant, with_deps } => commands::solve(&ctx, variant.into(), with_deps),
        Command::Simulate {
            agent,
            target,
            agent_ctrl,
            target_ctrl,
            csv,
        } => {
            let a = commands::parse_pose(&agent).map_err(Failure::Input)?;
            let t = commands::parse_pose(&target).map_err(Failure::Input)?;
            commands::run_simulation(&ctx, a, t, &agent_ctrl, &target_ctrl, csv)
        }
        Command::Sweep {
            agent_ctrl,
            target_ctrl,
            points,
            extent,
            headings,
        } => commands::run_sweep(&ctx, &agent_ctrl, &target_ctrl, points, extent, &headings),
        Command::Compare {
            first,
            second,
            target_ctrl,
            points,
            extent,
            heading,
        } => commands::run_compare(&ctx, &first, &second, &target_ctrl, points, extent, heading),
        Command::Slice { field, xi_a, csv } => commands::run_slice(&ctx, &field, xi_a, csv),
        Command::Verify { quick } => commands::run_verify(&ctx, quick),
        Command::Config => {
            println!("{}", ctx.config.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Failure::Input(String::new()).exit_code())
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
