use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use sttopo_core::analysis::{intermediate_fraction, orbit_tracking};
use sttopo_core::io::{thresholded, write_vtk, Field, MetricsWriter};
use sttopo_core::optimizer::gradient_check;
use sttopo_core::reference::{ts_forward, TimeSteppingConfig};
use sttopo_core::{
    build_hierarchy, CoarseningStrategy, DesignMode, Error, HeatSource, LevelCount, Optimizer, Result, RunConfig,
    SpaceTimeProblem,
};

/// Environment variable overriding the worker thread count.
const THREADS_ENV: &str = "STTOPO_THREADS";

/// Exit status when a check (gradient audit, consistency bound) fails without an error.
const EXIT_CHECK_FAILED: u8 = 1;

#[derive(Parser, Debug)]
#[command(name = "sttopo", version, about = "Space-time topology optimisation for transient heat conduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the coarsening hierarchy of the configured mesh.
    Hierarchy {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Solve the state equation once for a uniform or random design.
    Forward {
        #[command(flatten)]
        run: RunArgs,
        /// Uniform design value; defaults to the volume fraction.
        #[arg(long)]
        density: Option<f64>,
        /// Use a seeded random design in [0, 1) instead of a uniform one.
        #[arg(long)]
        random: bool,
    },
    /// Run the optimisation loop and write metrics, snapshots and the final design.
    Optimize {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compare the all-at-once solve with backward-Euler time stepping on a uniform density.
    CompareTs {
        #[command(flatten)]
        run: RunArgs,
        /// Uniform projected density; defaults to the volume fraction.
        #[arg(long)]
        density: Option<f64>,
        /// Exit 1 when the final-time relative L2 difference exceeds this.
        #[arg(long, default_value_t = 0.05)]
        max_rel_diff: f64,
    },
    /// Finite-difference audit of the adjoint gradient at a seeded random design.
    Gradcheck {
        #[command(flatten)]
        run: RunArgs,
        /// Number of sampled design variables.
        #[arg(long, default_value_t = 10)]
        samples: usize,
        /// Central-difference step.
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        /// Largest acceptable relative error.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct RunArgs {
    /// JSON configuration file; may name a preset under the key "preset".
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Named preset such as ex1a or ex2b-reduced. Ignored when --config is given.
    #[arg(long, short)]
    preset: Option<String>,
    #[arg(long)]
    nx: Option<usize>,
    /// Defaults to --nx when only that is given.
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    nt: Option<usize>,
    /// Maximum number of design iterations.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides the environment variable and the configuration.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Number of multigrid levels, or 0 for automatic selection.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long)]
    volume_fraction: Option<f64>,
    /// Snapshot interval in design iterations; 0 writes only the final design.
    #[arg(long)]
    vtk_every: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    TimeConstant,
    SpaceTime,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum StrategyArg {
    Semi,
    Full,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut c = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::from_file(path)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => RunConfig::default(),
        };
        if let Some(nx) = self.nx {
            c.mesh.nx = nx;
            c.mesh.ny = self.ny.unwrap_or(nx);
        } else if let Some(ny) = self.ny {
            c.mesh.ny = ny;
        }
        if let Some(nt) = self.nt {
            c.mesh.nt = nt;
        }
        if let Some(n) = self.iterations {
            c.optimizer.max_iterations = n;
        }
        if let Some(d) = &self.output_dir {
            c.output_dir = d.clone();
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(t) = self.threads {
            c.threads = Some(t);
        } else if let Ok(v) = std::env::var(THREADS_ENV) {
            let t = v.trim().parse::<usize>().map_err(|_| {
                Error::Config(vec![format!("{THREADS_ENV} must be a positive integer, got {v:?}")])
            })?;
            c.threads = Some(t);
        }
        if let Some(m) = self.mode {
            c.design_mode = match m {
                ModeArg::TimeConstant => DesignMode::TimeConstant,
                ModeArg::SpaceTime => DesignMode::SpaceTime,
            };
        }
        if let Some(l) = self.levels {
            c.hierarchy.levels = if l == 0 { LevelCount::Auto } else { LevelCount::Fixed(l) };
        }
        if let Some(s) = self.strategy {
            c.hierarchy.strategy = match s {
                StrategyArg::Semi => CoarseningStrategy::Semi,
                StrategyArg::Full => CoarseningStrategy::Full,
            };
        }
        if let Some(v) = self.volume_fraction {
            c.objective.volume_fraction = v;
        }
        if let Some(v) = self.vtk_every {
            c.vtk_every = v;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Installs the global thread pool once; later calls in the same process are ignored.
fn init_threads(config: &RunConfig) {
    if let Some(n) = config.threads {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::warn!("thread pool already initialised; ignoring threads = {n}");
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn build_problem(config: &RunConfig) -> Result<SpaceTimeProblem> {
    SpaceTimeProblem::new(config.problem_setup()?, config.objective)
}

fn mean(values: impl Iterator<Item = usize>) -> f64 {
    let (s, n) = values.fold((0usize, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s as f64 / n as f64
    }
}

fn run_hierarchy(args: &RunArgs) -> Result<u8> {
    let config = args.load()?;
    let mesh = config.space_time_mesh()?;
    let h = build_hierarchy(
        &mesh,
        &config.materials,
        config.hierarchy.levels,
        config.hierarchy.lambda_crit,
        config.hierarchy.strategy,
    )?;
    print!("{}", h.table());
    Ok(0)
}

fn run_forward(args: &RunArgs, density: Option<f64>, random: bool) -> Result<u8> {
    let config = args.load()?;
    init_threads(&config);
    let mut problem = build_problem(&config)?;
    let n = problem.num_design_variables();
    let gamma: Vec<f64> = if random {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        (0..n).map(|_| rng.gen::<f64>()).collect()
    } else {
        vec![density.unwrap_or(config.objective.volume_fraction); n]
    };
    let eval = problem.evaluate(&gamma, false)?;
    create_dir(&config.output_dir)?;
    let mesh = *problem.mesh();
    let vtk = config.output_dir.join("forward.vtk");
    write_vtk(
        &vtk,
        &mesh,
        &[Field::new("gamma_bar", &eval.design.gamma_bar)],
        &[Field::new("temperature", &eval.state)],
    )?;
    let report = json!({
        "name": config.name,
        "mesh": config.mesh,
        "phi": eval.phi,
        "chi": eval.chi,
        "max_temperature": eval.state.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        "hierarchy": problem.hierarchy().dims(),
        "state": eval.state_stats,
        "vtk": vtk,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}

fn run_optimize(args: &RunArgs) -> Result<u8> {
    let config = args.load()?;
    init_threads(&config);
    let dir = config.output_dir.clone();
    create_dir(&dir)?;
    write_json(&dir.join("config.json"), &serde_json::to_value(&config)?)?;
    let problem = build_problem(&config)?;
    let mesh = *problem.mesh();
    let mut optimizer = Optimizer::new(problem, config.optimizer)?;
    let mut metrics = MetricsWriter::create(&dir.join("metrics.csv"))?;
    let every = config.vtk_every;
    let result = optimizer.run(None, |record, eval| {
        metrics.write(record)?;
        if every > 0 && record.adjoint.is_some() && record.iter % every == 0 {
            let path = dir.join(format!("design_{:04}.vtk", record.iter));
            write_vtk(&path, &mesh, &[Field::new("gamma_bar", &eval.design.gamma_bar)], &[])?;
        }
        Ok(())
    })?;

    let problem = optimizer.problem();
    let gamma_full = result.design.gamma_full(problem.pipeline().extrusion())?;
    let threshold = thresholded(&result.design.gamma_bar, 0.5);
    write_vtk(
        &dir.join("design_final.vtk"),
        &mesh,
        &[
            Field::new("gamma", &gamma_full),
            Field::new("gamma_tilde", &result.design.gamma_tilde),
            Field::new("gamma_bar", &result.design.gamma_bar),
            Field::new("threshold", &threshold),
        ],
        &[Field::new("temperature", &result.state)],
    )?;

    let records = &result.records;
    let first = records.first().expect("at least the final record");
    let last = records.last().expect("at least the final record");
    let orbit = match config.problem.source {
        HeatSource::OrbitingGaussian { .. } => Some(orbit_tracking(
            &mesh,
            &result.design.gamma_bar,
            &config.problem.source,
            0.5,
        )?),
        _ => None,
    };
    let summary = json!({
        "name": config.name,
        "design_iterations": records.len() - 1,
        "converged": result.converged,
        "phi_initial": first.phi,
        "phi_final": last.phi,
        "chi_final": last.chi,
        "intermediate_fraction": intermediate_fraction(&result.design.gamma_bar, 0.05, 0.95),
        "mean_state_iterations": mean(records.iter().map(|r| r.state.outer_iterations)),
        "mean_adjoint_iterations": mean(records.iter().filter_map(|r| r.adjoint.as_ref()).map(|s| s.outer_iterations)),
        "wall_seconds": records.iter().map(|r| r.wall_seconds).sum::<f64>(),
        "orbit_tracking": orbit,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(0)
}

fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

fn run_compare_ts(args: &RunArgs, density: Option<f64>, max_rel_diff: f64) -> Result<u8> {
    let config = args.load()?;
    init_threads(&config);
    let mut problem = build_problem(&config)?;
    let mesh = *problem.mesh();
    let rho = density.unwrap_or(config.objective.volume_fraction);
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(vec![format!("density must lie in [0, 1], got {rho}")]));
    }
    let (st, stats) = problem.solve_physical(&vec![rho; mesh.num_elements()])?;
    let ts_config = TimeSteppingConfig {
        nx: mesh.nx(),
        ny: mesh.ny(),
        n_steps: mesh.nt(),
        problem: config.problem,
        materials: config.materials,
    };
    let ts = ts_forward(&ts_config, &vec![rho; mesh.elements_per_slab()], config.objective.p, true)?;
    let history = ts.history.as_ref().expect("history requested");
    let per = mesh.nodes_per_slab();
    let final_diff = relative_l2(&st[per * mesh.nt()..], &ts.final_field);
    let ts_all: Vec<f64> = history.iter().flatten().copied().collect();
    let all_diff = relative_l2(&st, &ts_all);
    let report = json!({
        "mesh": config.mesh,
        "density": rho,
        "final_time_relative_l2": final_diff,
        "space_time_relative_l2": all_diff,
        "space_time": { "outer_iterations": stats.outer_iterations, "wall_seconds": stats.wall_seconds },
        "time_stepping": { "cg_iterations": ts.cg_iterations, "wall_seconds": ts.wall_seconds, "phi": ts.phi },
        "max_rel_diff": max_rel_diff,
        "pass": final_diff <= max_rel_diff,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if final_diff <= max_rel_diff { 0 } else { EXIT_CHECK_FAILED })
}

fn run_gradcheck(args: &RunArgs, samples: usize, step: f64, tol: f64) -> Result<u8> {
    let mut config = args.load()?;
    init_threads(&config);
    // Finite differences need every inner solve far below the step size.
    config.filter.rtol = config.filter.rtol.min(1e-12);
    config.solver.outer_rtol = config.solver.outer_rtol.min(1e-11);
    let mut problem = build_problem(&config)?;
    let n = problem.num_design_variables();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let gamma: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..0.9)).collect();
    let mut vars = Vec::new();
    while vars.len() < samples.min(n) {
        let v = rng.gen_range(0..n);
        if !vars.contains(&v) {
            vars.push(v);
        }
    }
    let report = gradient_check(&mut problem, &gamma, &vars, step)?;
    let pass = report.max_relative_error <= tol;
    let out = json!({ "report": report, "tol": tol, "pass": pass });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(if pass { 0 } else { EXIT_CHECK_FAILED })
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "config" => 2,
        "solver" => 3,
        "io" => 4,
        _ => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Hierarchy { run } => run_hierarchy(run),
        Command::Forward { run, density, random } => run_forward(run, *density, *random),
        Command::Optimize { run } => run_optimize(run),
        Command::CompareTs { run, density, max_rel_diff } => run_compare_ts(run, *density, *max_rel_diff),
        Command::Gradcheck { run, samples, step, tol } => run_gradcheck(run, *samples, *step, *tol),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let details = match &e {
                Error::Config(v) => v.clone(),
                other => vec![other.to_string()],
            };
            let report = json!({ "error": e.category(), "message": e.to_string(), "details": details });
            eprintln!("{report}");
            ExitCode::from(exit_code(&e))
        }
    }
}
