//! Batch driver for the sparse-grid Monte Carlo nonlocal diffusion solver.
//!
//! Subcommands:
//! * `solve`; one run of a built-in problem; writes `errors.csv` (when an
//!   exact solution exists), `solution.bin`, and `manifest.txt` to `--out`.
//! * `sweep`; convergence sweep along `dt` or `paths`; writes `sweep.csv`.
//! * `reference`; fine run persisted as an error baseline for `sweep
//!   --reference`.
//!
//! Flags override the optional TOML config file (`--config`), which mirrors
//! them under the keys `seed`, `kernel.*`, `grid.*`, `solver.*`.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pide_mc::harness::{
    self, l2_error, run_sweep_jobs, write_error_csv, write_reference, write_sweep_csv,
    ReferenceField, SweepAxis,
};
use pide_mc::kernels::{KernelFamily, KernelSpec};
use pide_mc::problems::{
    example1_with_kernel, example2_with_dimension, example3_custom, example3_warm_start, ProblemSpec,
};
use pide_mc::solver::{solve, PathEstimator, SolverConfig, TimeQuadrature};
use pide_mc::sparse_grid::ExteriorPolicy;
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "pide-mc", version, about = "Sparse-grid Monte Carlo solver for semi-linear nonlocal diffusion equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for the internal pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solve and report the terminal-time error when available.
    Solve(RunArgs),
    /// Run a convergence sweep along one axis.
    Sweep(SweepArgs),
    /// Build and persist a fine reference solution.
    Reference(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Problem selector.
    #[arg(long, value_enum)]
    problem: ProblemName,
    /// Spatial dimension (defaults: example1 = 2, example2 = 100, example3 = 10).
    #[arg(long)]
    dim: Option<usize>,
    /// Kernel exponent α for hypersingular/tempered kernels.
    #[arg(long)]
    alpha: Option<f64>,
    /// Interaction radius δ.
    #[arg(long)]
    delta: Option<f64>,
    /// Time step Δt.
    #[arg(long)]
    dt: Option<f64>,
    /// Number of time steps (default: horizon / dt).
    #[arg(long)]
    steps: Option<usize>,
    /// Simulated paths per node per step.
    #[arg(long)]
    paths: Option<usize>,
    /// Sparse-grid level.
    #[arg(long)]
    level: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on applied jumps per step.
    #[arg(long)]
    max_jumps: Option<u64>,
    /// Per-path estimator.
    #[arg(long, value_enum)]
    estimator: Option<EstimatorName>,
    /// Forcing time quadrature.
    #[arg(long, value_enum)]
    time_quadrature: Option<QuadratureName>,
    /// Exterior evaluation policy for the interpolant.
    #[arg(long, value_enum)]
    exterior: Option<PolicyName>,
    /// Evaluation points for the L² error estimate.
    #[arg(long, default_value_t = 100_000)]
    eval_points: usize,
    /// Seed of the error-evaluation point stream.
    #[arg(long, default_value_t = 777)]
    eval_seed: u64,
    /// Allow dimensions ≥ 50 (long-running configurations).
    #[arg(long)]
    long: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Sweep axis.
    #[arg(long, value_enum)]
    axis: AxisName,
    /// Comma-separated sweep values (dt values or path counts), sorted.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    /// Master-seed replicates averaged per sweep value.
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Concurrent solves (they share the worker pool).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Directory of a persisted reference solution to measure against.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemName {
    Example1,
    Example2,
    Example3,
    /// example3 with a Gaussian-bump initial condition.
    Example3Warm,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisName {
    Dt,
    Paths,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorName {
    Sampled,
    Conditioned,
}

#[derive(Clone, Copy, ValueEnum)]
enum QuadratureName {
    Gauss2,
    Trapezoid,
    Left,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyName {
    Clamp,
    Extrapolate,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    kernel: Option<KernelConfig>,
    grid: Option<GridConfig>,
    solver: Option<SolverFileConfig>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct KernelConfig {
    family: Option<String>,
    alpha: Option<f64>,
    beta: Option<f64>,
    sigma: Option<f64>,
    delta: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct GridConfig {
    level: Option<usize>,
    #[serde(rename = "box")]
    bounds: Option<Vec<[f64; 2]>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SolverFileConfig {
    dt: Option<f64>,
    n_steps: Option<usize>,
    m_paths: Option<usize>,
    max_jumps: Option<u64>,
    time_quadrature: Option<String>,
    estimator: Option<String>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("building the worker pool")?;
    }
    #[cfg(not(feature = "parallel"))]
    if cli.threads.is_some() {
        eprintln!("note: built without the parallel feature; --threads ignored");
    }

    let file: FileConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    match cli.command {
        Command::Solve(args) => cmd_solve(args, &file),
        Command::Sweep(args) => cmd_sweep(args, &file),
        Command::Reference(args) => cmd_reference(args, &file),
    }
}

fn build_problem(args: &RunArgs, file: &FileConfig) -> Result<ProblemSpec> {
    let kc = file.kernel.as_ref();
    let default_dim = match args.problem {
        ProblemName::Example1 => 2,
        ProblemName::Example2 => 100,
        ProblemName::Example3 | ProblemName::Example3Warm => 10,
    };
    let dim = args.dim.unwrap_or(default_dim);
    if dim >= 50 && !args.long {
        bail!("dimension {dim} is a long-running configuration; pass --long to allow it");
    }
    let delta = args.delta.or(kc.and_then(|k| k.delta)).unwrap_or(0.4);
    let alpha = args.alpha.or(kc.and_then(|k| k.alpha)).unwrap_or(0.5);

    let mut problem = match args.problem {
        ProblemName::Example1 => {
            let family = match kc.and_then(|k| k.family.as_deref()) {
                None | Some("constant") => KernelFamily::ConstantIndicator,
                Some("hypersingular") => KernelFamily::Hypersingular { alpha },
                Some("tempered") => KernelFamily::Tempered {
                    alpha,
                    beta: kc.and_then(|k| k.beta).unwrap_or(1.0),
                },
                Some("gaussian") => KernelFamily::Gaussian {
                    sigma: kc.and_then(|k| k.sigma).unwrap_or(1.0),
                },
                Some(other) => bail!("unknown kernel family {other:?}"),
            };
            example1_with_kernel(dim, KernelSpec::new(family, delta, dim)?)?
        }
        ProblemName::Example2 => example2_with_dimension(dim)?,
        ProblemName::Example3 => example3_custom(dim, alpha, delta)?,
        ProblemName::Example3Warm => example3_warm_start(dim, alpha, delta)?,
    };
    if let Some(bounds) = file.grid.as_ref().and_then(|g| g.bounds.as_ref()) {
        if bounds.len() != dim {
            bail!("grid.box has {} intervals but the problem dimension is {dim}", bounds.len());
        }
        let lo = bounds.iter().map(|b| b[0]).collect();
        let hi = bounds.iter().map(|b| b[1]).collect();
        problem.domain = pide_mc::domain::DomainBox::new(lo, hi)?;
    }
    Ok(problem)
}

fn build_config(args: &RunArgs, file: &FileConfig, problem: &ProblemSpec) -> Result<SolverConfig> {
    let sf = file.solver.as_ref();
    let dt = args
        .dt
        .or(sf.and_then(|s| s.dt))
        .context("missing --dt (or solver.dt in the config file)")?;
    let n_steps = args
        .steps
        .or(sf.and_then(|s| s.n_steps))
        .unwrap_or_else(|| (problem.horizon / dt).round() as usize);
    let m_paths = args
        .paths
        .or(sf.and_then(|s| s.m_paths))
        .context("missing --paths (or solver.m_paths in the config file)")?;
    let level = args
        .level
        .or(file.grid.as_ref().and_then(|g| g.level))
        .unwrap_or(3);
    let seed = args.seed.or(file.seed).unwrap_or(0);

    let mut config = SolverConfig::new(dt, n_steps, m_paths, level).with_seed(seed);
    if let Some(mj) = args.max_jumps.or(sf.and_then(|s| s.max_jumps)) {
        config.max_jumps = mj;
    }
    config.time_quadrature = match args.time_quadrature {
        Some(QuadratureName::Gauss2) => TimeQuadrature::GaussTwo,
        Some(QuadratureName::Trapezoid) => TimeQuadrature::Trapezoid,
        Some(QuadratureName::Left) => TimeQuadrature::LeftEndpoint,
        None => match sf.and_then(|s| s.time_quadrature.as_deref()) {
            None | Some("gauss2") => TimeQuadrature::GaussTwo,
            Some("trapezoid") => TimeQuadrature::Trapezoid,
            Some("left") => TimeQuadrature::LeftEndpoint,
            Some(other) => bail!("unknown time quadrature {other:?}"),
        },
    };
    config.estimator = match args.estimator {
        Some(EstimatorName::Sampled) => PathEstimator::Sampled,
        Some(EstimatorName::Conditioned) => PathEstimator::Conditioned,
        None => match sf.and_then(|s| s.estimator.as_deref()) {
            None | Some("sampled") => PathEstimator::Sampled,
            Some("conditioned") => PathEstimator::Conditioned,
            Some(other) => bail!("unknown estimator {other:?}"),
        },
    };
    if let Some(PolicyName::Extrapolate) = args.exterior {
        config.exterior_policy = ExteriorPolicy::Extrapolate;
    }
    Ok(config)
}

fn out_dir(args: &RunArgs) -> Result<PathBuf> {
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn cmd_solve(args: RunArgs, file: &FileConfig) -> Result<()> {
    let problem = build_problem(&args, file)?;
    let config = build_config(&args, file, &problem)?;
    let dir = out_dir(&args)?;
    eprintln!(
        "solving {} (dt = {}, steps = {}, paths = {}, level = {}, seed = {})",
        problem.name, config.dt, config.n_steps, config.m_paths, config.grid_level, config.master_seed
    );
    let started = std::time::Instant::now();
    let snapshots = solve(&problem, &config)?;
    let last = snapshots.last().expect("at least one snapshot");
    eprintln!("done in {:.1?}; {} grid points", started.elapsed(), last.node_values.len());

    write_reference(&dir, &problem, &config, last)?;
    std::fs::rename(dir.join("reference.bin"), dir.join("solution.bin"))
        .with_context(|| "renaming solution file")?;

    if let Some(exact) = &problem.exact {
        let value = exact.value.clone();
        let horizon = problem.horizon;
        let report = l2_error(
            &problem,
            &config,
            last,
            |x| value(horizon, x),
            args.eval_points,
            args.eval_seed,
        )?;
        write_error_csv(&dir.join("errors.csv"), &report)?;
        println!("l2_error = {}", report.l2_error);
    } else {
        println!("no exact solution; nodal data written to {}", dir.join("solution.bin").display());
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs, file: &FileConfig) -> Result<()> {
    let problem = build_problem(&args.run, file)?;
    let mut base = build_config(&args.run, file, &problem)?;
    let dir = out_dir(&args.run)?;
    let axis = match args.axis {
        AxisName::Dt => SweepAxis::Dt,
        AxisName::Paths => SweepAxis::Paths,
    };
    if matches!(axis, SweepAxis::Dt) {
        // base dt is re-derived per value; keep the config valid
        base.n_steps = (problem.horizon / base.dt).round() as usize;
    }

    let stored;
    let reference_interp;
    let reference: ReferenceField<'_> = match &args.reference {
        Some(ref_dir) => {
            stored = harness::read_reference(ref_dir)?;
            reference_interp = stored.interpolant(base.exterior_policy)?;
            ReferenceField::Frozen(&|x: &[f64]| {
                reference_interp.eval(x).expect("reference evaluation")
            })
        }
        None => ReferenceField::Exact,
    };

    let sweep = run_sweep_jobs(
        &problem,
        &base,
        axis,
        &args.values,
        args.replicates,
        args.run.eval_points,
        args.run.eval_seed,
        reference,
        args.jobs,
    )?;
    let path = dir.join("sweep.csv");
    write_sweep_csv(&path, &sweep)?;
    println!("axis = {}", sweep.axis.column());
    for ((v, e), rate) in sweep
        .points
        .iter()
        .zip(std::iter::once(&f64::NAN).chain(sweep.pairwise_rates.iter()))
    {
        if rate.is_nan() {
            println!("{v}\t{e:.6e}\t-");
        } else {
            println!("{v}\t{e:.6e}\t{rate:.4}");
        }
    }
    println!("fitted slope = {:.4} (r² = {:.4}); wrote {}", sweep.fitted_slope, sweep.fit_r2, path.display());
    Ok(())
}

fn cmd_reference(args: RunArgs, file: &FileConfig) -> Result<()> {
    let problem = build_problem(&args, file)?;
    let config = build_config(&args, file, &problem)?;
    let dir = out_dir(&args)?;
    eprintln!(
        "building reference for {} (dt = {}, steps = {}, paths = {})",
        problem.name, config.dt, config.n_steps, config.m_paths
    );
    let snapshot = harness::reference_solution(&problem, &config)?;
    write_reference(&dir, &problem, &config, &snapshot)?;
    println!("reference written to {}", dir.display());
    Ok(())
}
