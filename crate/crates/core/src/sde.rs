//! One-step jump-diffusion path simulation with exit detection.
//!
//! A step from x over [t, t + Δt] freezes the coefficients at (t, x):
//!
//!   X = x + μ(t, x) Δt + σ(t, x) √Δt ξ + Σ_{k=1}^{N ∧ max_jumps} c(t, x, z_k),
//!
//! with ξ i.i.d. standard normal, N Poisson with mean λΔt, and z_k drawn from
//! the kernel's jump density.  The exit time is approximated by the step end:
//! the step always advances by the full Δt and only the landing point is
//! tested against the open box.  Draw order per path is fixed (normals,
//! Poisson uniform, then ξ/direction per applied jump), so a (step, node,
//! path) key fully determines the outcome.

use std::sync::Arc;

use crate::domain::DomainBox;
use crate::kernels::{sample_direction_into, KernelSpec};
use crate::rng::{KeyedStream, StreamKey};
use crate::{Error, Result};

pub type ScalarField = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type InitialField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// f(t, x, u).
pub type ForcingField = Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>;

/// Drift μ(t, x), written into a buffer of length d.
#[derive(Clone)]
pub enum Drift {
    Zero,
    Field(Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>),
}

/// Diffusion σ(t, x).
#[derive(Clone)]
pub enum Diffusion {
    Zero,
    /// Writes the d diagonal entries.
    Diagonal(Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>),
    /// Writes the full d×d matrix, row-major.
    Full(Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>),
}

/// Jump amplitude c(t, x, z).
#[derive(Clone)]
pub enum JumpAmplitude {
    /// c(t, x, z) = z.
    Displacement,
    /// Writes c(t, x, z) into the output buffer.
    Field(Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>),
}

/// Problem coefficients: drift, diffusion, jump amplitude, forcing f(t, x, u),
/// volume-constraint data g(t, x), and initial data u₀(x).
#[derive(Clone)]
pub struct CoefficientSet {
    pub drift: Drift,
    pub diffusion: Diffusion,
    pub jump_amplitude: JumpAmplitude,
    pub forcing: ForcingField,
    pub exterior_value: ScalarField,
    pub initial_value: InitialField,
}

impl std::fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientSet").finish_non_exhaustive()
    }
}

/// Result of one simulated step.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub x_end: Vec<f64>,
    /// True iff `x_end` lies outside the open box.
    pub exited: bool,
    /// Poisson jump count as sampled (displacement applies the first
    /// `max_jumps` of them).
    pub jumps: u64,
    /// The step always advances by the full Δt.
    pub dt_effective: f64,
}

/// Frozen per-(t, x) step data: everything that does not depend on the path.
#[derive(Debug, Clone)]
pub struct FrozenStep {
    /// μ(t, x)·Δt.
    drift_dt: Vec<f64>,
    /// σ(t, x)·√Δt; empty, diagonal, or full row-major.
    diffusion_sqrt_dt: Vec<f64>,
    diffusion_kind: DiffusionKind,
    /// λ·Δt for the Poisson draw (0 when there is no kernel).
    pub jump_mean: f64,
    dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum DiffusionKind {
    Zero,
    Diagonal,
    Full,
}

/// Scratch buffers reused across many steps by one worker.
#[derive(Debug, Clone)]
pub struct StepScratch {
    pub normals: Vec<f64>,
    pub z: Vec<f64>,
    pub c: Vec<f64>,
}

impl StepScratch {
    pub fn new(dim: usize) -> Self {
        Self { normals: vec![0.0; dim], z: vec![0.0; dim], c: vec![0.0; dim] }
    }
}

/// Evaluates the coefficients once at (t, x).
pub fn freeze_step(
    coeffs: &CoefficientSet,
    kernel: Option<&KernelSpec>,
    x: &[f64],
    t: f64,
    dt: f64,
) -> Result<FrozenStep> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("step size must be positive, got {dt}")));
    }
    let d = x.len();
    let mut drift_dt = vec![0.0; d];
    if let Drift::Field(mu) = &coeffs.drift {
        mu(t, x, &mut drift_dt);
        for v in drift_dt.iter_mut() {
            *v *= dt;
        }
    }
    let sqrt_dt = dt.sqrt();
    let (diffusion_kind, diffusion_sqrt_dt) = match &coeffs.diffusion {
        Diffusion::Zero => (DiffusionKind::Zero, Vec::new()),
        Diffusion::Diagonal(sig) => {
            let mut buf = vec![0.0; d];
            sig(t, x, &mut buf);
            for v in buf.iter_mut() {
                *v *= sqrt_dt;
            }
            (DiffusionKind::Diagonal, buf)
        }
        Diffusion::Full(sig) => {
            let mut buf = vec![0.0; d * d];
            sig(t, x, &mut buf);
            for v in buf.iter_mut() {
                *v *= sqrt_dt;
            }
            (DiffusionKind::Full, buf)
        }
    };
    let jump_mean = kernel.map(|k| k.jump_intensity() * dt).unwrap_or(0.0);
    Ok(FrozenStep { drift_dt, diffusion_sqrt_dt, diffusion_kind, jump_mean, dim: d })
}

impl FrozenStep {
    /// out = x + μΔt + sign · σ√Δt · ξ.
    pub fn displace(&self, x: &[f64], normals: &[f64], sign: f64, out: &mut [f64]) {
        let d = self.dim;
        match self.diffusion_kind {
            DiffusionKind::Zero => {
                for i in 0..d {
                    out[i] = x[i] + self.drift_dt[i];
                }
            }
            DiffusionKind::Diagonal => {
                for i in 0..d {
                    out[i] = x[i] + self.drift_dt[i] + sign * self.diffusion_sqrt_dt[i] * normals[i];
                }
            }
            DiffusionKind::Full => {
                for i in 0..d {
                    let row = &self.diffusion_sqrt_dt[i * d..(i + 1) * d];
                    let noise: f64 = row.iter().zip(normals).map(|(a, w)| a * w).sum();
                    out[i] = x[i] + self.drift_dt[i] + sign * noise;
                }
            }
        }
    }

    pub fn has_diffusion(&self) -> bool {
        self.diffusion_kind != DiffusionKind::Zero
    }
}

/// Draws one jump displacement c(t, x, z) into `out` from an open stream:
/// radius quantile first, then direction normals.  `z_buf` receives z = r·ẑ.
pub fn draw_jump_increment(
    kernel: &KernelSpec,
    amplitude: &JumpAmplitude,
    x: &[f64],
    t: f64,
    stream: &mut KeyedStream,
    z_buf: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    let xi = stream.uniform();
    let r = kernel.sample_radius(xi)?;
    sample_direction_into(stream, z_buf);
    for v in z_buf.iter_mut() {
        *v *= r;
    }
    match amplitude {
        JumpAmplitude::Displacement => out.copy_from_slice(z_buf),
        JumpAmplitude::Field(c) => c(t, x, z_buf, out),
    }
    Ok(())
}

/// Advances one path from `x` using frozen coefficients, writing the landing
/// point into `out`.  Returns the sampled jump count.
pub fn advance_frozen(
    frozen: &FrozenStep,
    coeffs: &CoefficientSet,
    kernel: Option<&KernelSpec>,
    x: &[f64],
    t: f64,
    stream: &mut KeyedStream,
    max_jumps: u64,
    scratch: &mut StepScratch,
    out: &mut [f64],
) -> Result<u64> {
    let d = frozen.dim;
    debug_assert_eq!(x.len(), d);
    debug_assert_eq!(out.len(), d);
    let StepScratch { normals, z, c } = scratch;

    // Brownian increment first, always drawn from the key's normal stream.
    stream.fill_normals(normals);
    frozen.displace(x, normals, 1.0, out);

    // Compound Poisson part, truncated at max_jumps applied jumps.
    let mut jumps = 0u64;
    if frozen.jump_mean > 0.0 {
        jumps = stream.poisson(frozen.jump_mean)?;
        let kernel = kernel.expect("positive jump mean requires a kernel");
        let applied = jumps.min(max_jumps);
        for _ in 0..applied {
            draw_jump_increment(kernel, &coeffs.jump_amplitude, x, t, stream, z, c)?;
            for i in 0..d {
                out[i] += c[i];
            }
        }
    }
    Ok(jumps)
}

/// Simulates one step of the jump-diffusion from `x ∈ Ω` over [t, t + dt].
pub fn step_path(
    coeffs: &CoefficientSet,
    kernel: Option<&KernelSpec>,
    domain: &DomainBox,
    x: &[f64],
    t: f64,
    dt: f64,
    key: StreamKey,
    max_jumps: u64,
) -> Result<PathOutcome> {
    if x.len() != domain.dim() {
        return Err(Error::invalid("point dimension does not match the domain"));
    }
    if !domain.contains_open(x) {
        return Err(Error::invalid(format!("step_path requires an interior start point, got {x:?}")));
    }
    let frozen = freeze_step(coeffs, kernel, x, t, dt)?;
    let mut scratch = StepScratch::new(x.len());
    let mut stream = key.stream();
    let mut x_end = vec![0.0; x.len()];
    let jumps =
        advance_frozen(&frozen, coeffs, kernel, x, t, &mut stream, max_jumps, &mut scratch, &mut x_end)?;
    if x_end.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("path landing point at t = {t}, start {x:?}")));
    }
    let exited = !domain.contains_open(&x_end);
    Ok(PathOutcome { x_end, exited, jumps, dt_effective: dt })
}
