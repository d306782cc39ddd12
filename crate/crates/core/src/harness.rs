//! Experiment engine: L² error measurement, convergence sweeps, reference
//! solutions, and CSV/binary output.
//!
//! Errors follow the integral definition ‖e‖ = (∫_Ω e² dx)^{1/2}, estimated
//! by Monte Carlo quadrature over uniform points drawn from a dedicated
//! evaluation seed: ‖e‖ ≈ sqrt(|Ω|/n · Σ e(x_k)²).  Deterministic given the
//! seed, and usable at any dimension.
//!
//! Sweeps vary Δt or the path count, report pairwise Richardson rates
//! log(e_k/e_{k+1})/log(v_k/v_{k+1}) alongside a global least-squares slope
//! of log e against log v, and serialize losslessly to CSV (values are
//! printed with shortest-round-trip formatting).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::domain::DomainBox;
use crate::problems::ProblemSpec;
use crate::rng::StreamKey;
use crate::solver::{solve, PathEstimator, SolutionSnapshot, SolverConfig, TimeQuadrature};
use crate::sparse_grid::{build_grid, fit, EvalScratch, ExteriorPolicy, SparseInterpolant};
use crate::util::CompensatedSum;
use crate::{Error, Result};

/// Seed namespace for evaluation-point streams, separate from solver paths.
const EVAL_STREAM_STEP: u64 = u64::MAX;

/// Echo of the run parameters behind a measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct RunParameters {
    pub problem: String,
    pub dim: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub m_paths: usize,
    pub grid_level: usize,
    pub max_jumps: u64,
    pub master_seed: u64,
}

impl RunParameters {
    pub fn of(problem: &ProblemSpec, config: &SolverConfig) -> Self {
        Self {
            problem: problem.name.clone(),
            dim: problem.dim,
            dt: config.dt,
            n_steps: config.n_steps,
            m_paths: config.m_paths,
            grid_level: config.grid_level,
            max_jumps: config.max_jumps,
            master_seed: config.master_seed,
        }
    }
}

/// One L² error measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub l2_error: f64,
    pub n_eval_points: usize,
    pub eval_seed: u64,
    pub params: RunParameters,
}

/// Monte Carlo L² distance between a snapshot's interpolant and a reference
/// field over the problem box.
pub fn l2_error<F: Fn(&[f64]) -> f64>(
    problem: &ProblemSpec,
    config: &SolverConfig,
    snapshot: &SolutionSnapshot,
    reference: F,
    n_eval: usize,
    eval_seed: u64,
) -> Result<ErrorReport> {
    if n_eval == 0 {
        return Err(Error::invalid("need at least one evaluation point"));
    }
    let domain = &problem.domain;
    let d = problem.dim;
    let mut stream = StreamKey::new(eval_seed, EVAL_STREAM_STEP, 0, 0).stream();
    let mut x = vec![0.0; d];
    let mut scratch = EvalScratch::for_design(snapshot.interpolant.design());
    let mut acc = CompensatedSum::new();
    for _ in 0..n_eval {
        for (xi, (a, b)) in x.iter_mut().zip(domain.lo().iter().zip(domain.hi())) {
            *xi = a + (b - a) * stream.uniform();
        }
        let diff = snapshot.interpolant.eval_with(&mut scratch, &x) - reference(&x);
        acc.add(diff * diff);
    }
    let mean_sq = acc.total() / n_eval as f64;
    Ok(ErrorReport {
        l2_error: (domain.volume() * mean_sq).sqrt(),
        n_eval_points: n_eval,
        eval_seed,
        params: RunParameters::of(problem, config),
    })
}

/// Sweep axis: time step or path count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Dt,
    Paths,
}

impl SweepAxis {
    pub fn column(&self) -> &'static str {
        match self {
            SweepAxis::Dt => "dt",
            SweepAxis::Paths => "paths",
        }
    }
}

/// Result of a convergence sweep.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis: SweepAxis,
    /// (parameter value, mean L² error over replicates).
    pub points: Vec<(f64, f64)>,
    pub fitted_slope: f64,
    pub fit_r2: f64,
    /// Pairwise Richardson rates, one per adjacent pair.
    pub pairwise_rates: Vec<f64>,
}

/// Least-squares slope and R² of log y against log x.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::invalid("need at least two points for a slope fit"));
    }
    if points.iter().any(|(x, y)| *x <= 0.0 || *y <= 0.0) {
        return Err(Error::invalid("power-law fit requires positive values"));
    }
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("degenerate fit: all abscissae equal"));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((slope, r2))
}

/// log(e_k/e_{k+1}) / log(v_k/v_{k+1}) per adjacent pair.
pub fn pairwise_rates(points: &[(f64, f64)]) -> Vec<f64> {
    points
        .windows(2)
        .map(|w| ((w[0].1 / w[1].1).ln()) / ((w[0].0 / w[1].0).ln()))
        .collect()
}

/// Reference field a sweep measures against.
pub enum ReferenceField<'a> {
    /// The problem's exact solution at the terminal time.
    Exact,
    /// A frozen field, e.g. a fine reference interpolant.
    Frozen(&'a (dyn Fn(&[f64]) -> f64 + Sync)),
}

/// Runs one solve per sweep value (other parameters held at `base`),
/// averaging errors over `replicates` master seeds.  Solves run one after
/// another (each is internally parallel); see [`run_sweep_jobs`] for
/// concurrent solves.
pub fn run_sweep(
    problem: &ProblemSpec,
    base: &SolverConfig,
    axis: SweepAxis,
    values: &[f64],
    replicates: usize,
    n_eval: usize,
    eval_seed: u64,
    reference: ReferenceField<'_>,
) -> Result<SweepResult> {
    run_sweep_jobs(problem, base, axis, values, replicates, n_eval, eval_seed, reference, 1)
}

/// [`run_sweep`] with `jobs > 1` running the individual solves concurrently
/// (they share the worker pool; useful when single solves underfill it).
#[allow(clippy::too_many_arguments)]
pub fn run_sweep_jobs(
    problem: &ProblemSpec,
    base: &SolverConfig,
    axis: SweepAxis,
    values: &[f64],
    replicates: usize,
    n_eval: usize,
    eval_seed: u64,
    reference: ReferenceField<'_>,
    jobs: usize,
) -> Result<SweepResult> {
    if values.len() < 3 {
        return Err(Error::invalid("a sweep needs at least three points"));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) && values.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::invalid("sweep values must be sorted"));
    }
    if replicates == 0 || jobs == 0 {
        return Err(Error::invalid("need at least one replicate and one job"));
    }
    let exact_fn = match &reference {
        ReferenceField::Exact => {
            let exact = problem
                .exact
                .as_ref()
                .ok_or_else(|| Error::invalid("problem has no exact solution; provide a frozen reference"))?;
            Some(exact.value.clone())
        }
        ReferenceField::Frozen(_) => None,
    };
    let horizon = problem.horizon;
    let reference_at = |x: &[f64]| -> f64 {
        match &reference {
            ReferenceField::Exact => (exact_fn.as_ref().expect("set above"))(horizon, x),
            ReferenceField::Frozen(f) => f(x),
        }
    };

    // One task per (value, replicate); errors land in task order either way.
    let mut configs = Vec::with_capacity(values.len() * replicates);
    for &v in values {
        let mut config = base.clone();
        match axis {
            SweepAxis::Dt => {
                config.dt = v;
                config.n_steps = (problem.horizon / v).round() as usize;
            }
            SweepAxis::Paths => {
                config.m_paths = v.round() as usize;
            }
        }
        for r in 0..replicates {
            let mut cfg = config.clone();
            cfg.master_seed = base.master_seed.wrapping_add(r as u64);
            configs.push(cfg);
        }
    }
    let run_one = |cfg: &SolverConfig| -> Result<f64> {
        let snaps = solve(problem, cfg)?;
        let last = snaps.last().expect("at least the initial snapshot");
        Ok(l2_error(problem, cfg, last, &reference_at, n_eval, eval_seed)?.l2_error)
    };
    let errors: Vec<f64> = if jobs > 1 {
        crate::util::try_map_indexed(configs.len(), |i| run_one(&configs[i]))?
    } else {
        configs.iter().map(run_one).collect::<Result<_>>()?
    };

    let points: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let mean = errors[k * replicates..(k + 1) * replicates].iter().sum::<f64>()
                / replicates as f64;
            (v, mean)
        })
        .collect();
    let (fitted_slope, fit_r2) = fit_power_law(&points)?;
    let rates = pairwise_rates(&points);
    Ok(SweepResult { axis, points, fitted_slope, fit_r2, pairwise_rates: rates })
}

/// Solves at a fine configuration and returns the terminal snapshot, to be
/// used as the error baseline for problems without exact solutions.
pub fn reference_solution(problem: &ProblemSpec, fine_config: &SolverConfig) -> Result<SolutionSnapshot> {
    let mut cfg = fine_config.clone();
    cfg.keep_last = Some(1);
    let snaps = solve(problem, &cfg)?;
    Ok(snaps.into_iter().last().expect("at least one snapshot"))
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

/// Writes a sweep as CSV: `<axis>,l2_error,rate` with one row per point.
/// The first row's rate column is empty (no preceding pair).
pub fn write_sweep_csv(path: &Path, sweep: &SweepResult) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{},l2_error,rate\n", sweep.axis.column()));
    for (i, (v, e)) in sweep.points.iter().enumerate() {
        if i == 0 {
            out.push_str(&format!("{v},{e},\n"));
        } else {
            out.push_str(&format!("{v},{e},{}\n", sweep.pairwise_rates[i - 1]));
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads back a sweep CSV: (header axis column, rows of (value, error, rate)).
pub fn read_sweep_csv(path: &Path) -> Result<(String, Vec<(f64, f64, Option<f64>)>)> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty csv".into()))?;
    let axis = header
        .split(',')
        .next()
        .ok_or_else(|| Error::Parse("missing header columns".into()))?
        .to_string();
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Parse(format!("expected 3 columns, got {}", cols.len())));
        }
        let v: f64 = cols[0].parse().map_err(|_| Error::Parse(format!("bad value {}", cols[0])))?;
        let e: f64 = cols[1].parse().map_err(|_| Error::Parse(format!("bad error {}", cols[1])))?;
        let rate = if cols[2].is_empty() {
            None
        } else {
            Some(cols[2].parse().map_err(|_| Error::Parse(format!("bad rate {}", cols[2])))?)
        };
        rows.push((v, e, rate));
    }
    Ok((axis, rows))
}

/// Writes one error report as CSV with a full parameter echo.
pub fn write_error_csv(path: &Path, report: &ErrorReport) -> Result<()> {
    let p = &report.params;
    let out = format!(
        "problem,dim,dt,n_steps,m_paths,level,max_jumps,seed,eval_seed,n_eval,l2_error\n{},{},{},{},{},{},{},{},{},{},{}\n",
        p.problem,
        p.dim,
        p.dt,
        p.n_steps,
        p.m_paths,
        p.grid_level,
        p.max_jumps,
        p.master_seed,
        report.eval_seed,
        report.n_eval_points,
        report.l2_error,
    );
    fs::write(path, out).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// Reference persistence (binary nodal data + plain-text manifest)
// ---------------------------------------------------------------------------

const REFERENCE_FILE: &str = "reference.bin";
const MANIFEST_FILE: &str = "manifest.txt";

/// A reference solution loaded from disk.
#[derive(Debug, Clone)]
pub struct StoredReference {
    pub dim: usize,
    pub grid_level: usize,
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    pub domain: DomainBox,
    pub manifest: Vec<(String, String)>,
}

/// Persists a terminal snapshot: `reference.bin` holds little-endian u64
/// (dimension, level, point count) followed by point coordinates and nodal
/// values as little-endian f64; `manifest.txt` echoes the run parameters.
pub fn write_reference(
    dir: &Path,
    problem: &ProblemSpec,
    config: &SolverConfig,
    snapshot: &SolutionSnapshot,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let design = snapshot.interpolant.design();
    let bin_path = dir.join(REFERENCE_FILE);
    let mut buf: Vec<u8> = Vec::with_capacity(24 + 8 * design.points_flat().len() + 8 * snapshot.node_values.len());
    for header in [design.dim() as u64, design.level() as u64, design.n_points() as u64] {
        buf.extend_from_slice(&header.to_le_bytes());
    }
    for v in design.points_flat() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in snapshot.node_values.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(&bin_path).map_err(|e| io_err(&bin_path, e))?;
    f.write_all(&buf).map_err(|e| io_err(&bin_path, e))?;

    let lo = problem.domain.lo().iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let hi = problem.domain.hi().iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let manifest = format!(
        "problem = {}\ndim = {}\nbox_lo = {}\nbox_hi = {}\ndt = {}\nn_steps = {}\nm_paths = {}\ngrid_level = {}\nmax_jumps = {}\nseed = {}\ntime = {}\nbuild = {} {}\n",
        problem.name,
        problem.dim,
        lo,
        hi,
        config.dt,
        config.n_steps,
        config.m_paths,
        config.grid_level,
        config.max_jumps,
        config.master_seed,
        snapshot.time,
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
    );
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, manifest).map_err(|e| io_err(&mpath, e))
}

/// Loads a persisted reference and validates its header against the manifest.
pub fn read_reference(dir: &Path) -> Result<StoredReference> {
    let bin_path = dir.join(REFERENCE_FILE);
    let mut bytes = Vec::new();
    fs::File::open(&bin_path)
        .map_err(|e| io_err(&bin_path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| io_err(&bin_path, e))?;
    if bytes.len() < 24 {
        return Err(Error::Parse("reference file too short".into()));
    }
    let read_u64 = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
    let dim = read_u64(0) as usize;
    let grid_level = read_u64(8) as usize;
    let n_points = read_u64(16) as usize;
    let expected = 24 + 8 * n_points * dim + 8 * n_points;
    if bytes.len() != expected {
        return Err(Error::Parse(format!(
            "reference file length {} does not match header (want {expected})",
            bytes.len()
        )));
    }
    let mut points = Vec::with_capacity(n_points * dim);
    let mut off = 24;
    for _ in 0..n_points * dim {
        points.push(f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes")));
        off += 8;
    }
    let mut values = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        values.push(f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes")));
        off += 8;
    }

    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| io_err(&mpath, e))?;
    let manifest: Vec<(String, String)> = text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    let lookup = |key: &str| -> Result<&str> {
        manifest
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Parse(format!("manifest missing key {key}")))
    };
    let parse_list = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number {t}"))))
            .collect()
    };
    let domain = DomainBox::new(parse_list(lookup("box_lo")?)?, parse_list(lookup("box_hi")?)?)?;
    if domain.dim() != dim {
        return Err(Error::Parse("manifest box dimension disagrees with binary header".into()));
    }
    Ok(StoredReference { dim, grid_level, points, values, domain, manifest })
}

impl StoredReference {
    /// Rebuilds the interpolant; the reconstructed grid must reproduce the
    /// stored point set exactly.
    pub fn interpolant(&self, policy: ExteriorPolicy) -> Result<SparseInterpolant> {
        let design = build_grid(self.dim, self.grid_level, self.domain.clone())?;
        if design.points_flat().len() != self.points.len() {
            return Err(Error::Parse("stored point set does not match the rebuilt grid".into()));
        }
        for (a, b) in design.points_flat().iter().zip(&self.points) {
            if a.to_bits() != b.to_bits() {
                return Err(Error::Parse("stored point coordinates do not match the rebuilt grid".into()));
            }
        }
        fit(design, self.values.clone(), policy)
    }
}

/// Convenience: solve fine, persist, reload, and return the interpolant.
pub fn build_and_store_reference(
    dir: &Path,
    problem: &ProblemSpec,
    fine_config: &SolverConfig,
) -> Result<SparseInterpolant> {
    let snapshot = reference_solution(problem, fine_config)?;
    write_reference(dir, problem, fine_config, &snapshot)?;
    read_reference(dir)?.interpolant(fine_config.exterior_policy)
}

/// Helper shared by the CLI and the acceptance suite: a config with the step
/// count derived from Δt and the horizon.
pub fn config_for_dt(problem: &ProblemSpec, dt: f64, m_paths: usize, level: usize, seed: u64) -> SolverConfig {
    let n = (problem.horizon / dt).round() as usize;
    SolverConfig {
        dt,
        n_steps: n,
        m_paths,
        grid_level: level,
        max_jumps: 1,
        exterior_policy: ExteriorPolicy::Clamp,
        time_quadrature: TimeQuadrature::GaussTwo,
        estimator: PathEstimator::Sampled,
        master_seed: seed,
        keep_last: None,
    }
}
