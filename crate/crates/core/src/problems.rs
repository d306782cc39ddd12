//! Built-in benchmark problems and the manufactured-solution machinery.
//!
//! Each problem fixes the box Ω = (−1, 1)^d, the horizon T = 1, the
//! coefficients (μ, σ, c), the kernel, the volume-constraint data g, and the
//! initial data u₀.  The first two ship a closed-form solution; their source
//! term is derived analytically and folded into the forcing, and
//! [`residual_oracle`] re-checks the whole construction by finite
//! differences, so a transcription slip in any coefficient shows up as a
//! non-zero residual.
//!
//! The nonlocal term of a separable polynomial solution with displacement
//! jumps collapses to even ball moments,
//!
//!   ∫ [u(x+z) − u(x)] w(z) dz = Σ_j Σ_{k even ≥ 2} p_j^{(k)}(x_j)/k! · M_k,
//!
//! where w is the sampled jump measure (λψ) and M_k its k-th axis moment;
//! odd moments vanish by symmetry.  [`nonlocal_apply_mc`] provides the
//! independent Monte Carlo route for cross-checking.

use std::sync::Arc;

use crate::domain::DomainBox;
use crate::kernels::{sample_jump_into, KernelFamily, KernelSpec};
use crate::rng::StreamKey;
use crate::sde::{CoefficientSet, Diffusion, Drift, InitialField, JumpAmplitude};
use crate::{Error, Result};

/// Dense univariate polynomial with ascending coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial1D {
    coeffs: Vec<f64>,
}

impl Polynomial1D {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("polynomial coefficients must be finite"));
        }
        Ok(Self { coeffs })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|c| *c != 0.0).unwrap_or(0)
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * y + c)
    }

    /// Value of the k-th derivative at y.
    pub fn eval_derivative(&self, k: usize, y: f64) -> f64 {
        let mut acc = 0.0;
        for (n, c) in self.coeffs.iter().enumerate().skip(k).rev() {
            // falling factorial n (n−1) ⋯ (n−k+1)
            let mut fall = 1.0;
            for j in 0..k {
                fall *= (n - j) as f64;
            }
            acc = acc * y + c * fall;
        }
        acc
    }
}

/// Closed-form solution attached to a problem.
#[derive(Clone)]
pub struct ExactSolution {
    pub value: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
    /// Present when u(t, x) = θ(t) Σ_j p_j(x_j); enables the exact moment
    /// route for the nonlocal term.
    pub separable: Option<SeparableForm>,
}

#[derive(Clone)]
pub struct SeparableForm {
    pub time_factor: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub components: Vec<Polynomial1D>,
}

/// A fully specified volume-constrained problem on a box.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub dim: usize,
    pub domain: DomainBox,
    pub kernel: Option<KernelSpec>,
    pub coeffs: CoefficientSet,
    /// Terminal time T.
    pub horizon: f64,
    pub exact: Option<ExactSolution>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("kernel", &self.kernel)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Same problem with replaced initial data.
    pub fn with_initial(mut self, name: impl Into<String>, u0: InitialField) -> Self {
        self.name = name.into();
        self.coeffs.initial_value = u0;
        self
    }
}

// ---------------------------------------------------------------------------
// Example 1: constant kernel, separable degree-5 solution, manufactured source
// ---------------------------------------------------------------------------

fn ex1_polynomials(d: usize) -> Vec<Polynomial1D> {
    (1..=d)
        .map(|j| {
            let j = j as f64;
            // y⁵/j − y³/(j+1)
            Polynomial1D::new(vec![0.0, 0.0, 0.0, -1.0 / (j + 1.0), 0.0, 1.0 / j]).expect("finite")
        })
        .collect()
}

#[inline]
fn ex1_drift_component(t: f64, y: f64) -> f64 {
    let y7 = y.powi(7);
    0.1 * (2.0 * std::f64::consts::PI * t).cos() * (2.0 * y7 - y7 * y)
}

#[inline]
fn ex1_sigma_component(t: f64, y: f64) -> f64 {
    let s = (std::f64::consts::PI * y).sin();
    0.05 * (-t).exp() * s * s
}

#[inline]
fn ex1_f_base(v: f64) -> f64 {
    (1.0 - v) / (1.0 + v)
}

/// Accuracy benchmark: constant indicator kernel with interaction radius δ,
/// displacement jumps, nonlinearity (1−u)/(1+u), and the exact solution
/// sin(10t) Σ_j (x_j⁵/j − x_j³/(j+1)); the implied source term is folded into
/// the forcing.
pub fn example1_with_kernel(d: usize, kernel: KernelSpec) -> Result<ProblemSpec> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if kernel.dim() != d {
        return Err(Error::invalid("kernel dimension must match the problem dimension"));
    }
    let domain = DomainBox::centered_cube(d, 1.0)?;
    let polys = ex1_polynomials(d);
    let m2 = kernel.axis_moment(2)?;
    let m4 = kernel.axis_moment(4)?;

    let sum_p = {
        let polys = polys.clone();
        move |x: &[f64]| -> f64 { polys.iter().zip(x).map(|(p, xi)| p.eval(*xi)).sum() }
    };

    let exact_value: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync> = {
        let sum_p = sum_p.clone();
        Arc::new(move |t, x| (10.0 * t).sin() * sum_p(x))
    };

    let forcing = {
        let polys = polys.clone();
        let sum_p = sum_p.clone();
        Arc::new(move |t: f64, x: &[f64], v: f64| -> f64 {
            let theta = (10.0 * t).sin();
            let theta_dot = 10.0 * (10.0 * t).cos();
            let mut local = 0.0;
            let mut nonlocal = 0.0;
            for (p, xi) in polys.iter().zip(x) {
                let sig = ex1_sigma_component(t, *xi);
                let d2 = p.eval_derivative(2, *xi);
                local += 0.5 * sig * sig * d2 + ex1_drift_component(t, *xi) * p.eval_derivative(1, *xi);
                nonlocal += d2 / 2.0 * m2 + p.eval_derivative(4, *xi) / 24.0 * m4;
            }
            let s = sum_p(x);
            let u = theta * s;
            let source = theta_dot * s - theta * (local + nonlocal) - ex1_f_base(u);
            ex1_f_base(v) + source
        })
    };

    let coeffs = CoefficientSet {
        drift: Drift::Field(Arc::new(|t, x, out| {
            for (o, xi) in out.iter_mut().zip(x) {
                *o = ex1_drift_component(t, *xi);
            }
        })),
        diffusion: Diffusion::Diagonal(Arc::new(|t, x, out| {
            for (o, xi) in out.iter_mut().zip(x) {
                *o = ex1_sigma_component(t, *xi);
            }
        })),
        jump_amplitude: JumpAmplitude::Displacement,
        forcing,
        exterior_value: {
            let exact = exact_value.clone();
            Arc::new(move |t, x| exact(t, x))
        },
        initial_value: Arc::new(|_| 0.0), // sin(0) = 0
    };

    Ok(ProblemSpec {
        name: format!("example1(d={d})"),
        dim: d,
        domain,
        kernel: Some(kernel),
        coeffs,
        horizon: 1.0,
        exact: Some(ExactSolution {
            value: exact_value,
            separable: Some(SeparableForm {
                time_factor: Arc::new(|t| (10.0 * t).sin()),
                components: polys,
            }),
        }),
    })
}

/// [`example1_with_kernel`] with the standard setup: indicator kernel, δ = 0.4.
pub fn example1(d: usize) -> Result<ProblemSpec> {
    example1_with_kernel(d, KernelSpec::new(KernelFamily::ConstantIndicator, 0.4, d)?)
}

// ---------------------------------------------------------------------------
// Example 2: pure diffusion (no jumps), Gaussian-bump solution in high d
// ---------------------------------------------------------------------------

#[inline]
fn ex2_drift_component(t: f64, y: f64) -> f64 {
    t.sin() / (1.0 + t * t) * (-y * y).exp()
}

#[inline]
fn ex2_sigma_component(t: f64, x: &[f64], i: usize) -> f64 {
    let e = (-5.0 * t).exp();
    if i + 1 < x.len() {
        e * (x[i] + x[i + 1]).cos()
    } else {
        e * x[i].sin()
    }
}

/// High-dimensional diffusion benchmark without jumps: exact solution
/// cos(t²) e^{−|x|²}, forcing e^{−2|u|} plus the manufactured source.
pub fn example2_with_dimension(d: usize) -> Result<ProblemSpec> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    let domain = DomainBox::centered_cube(d, 1.0)?;

    let exact_value: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync> = Arc::new(|t, x| {
        (t * t).cos() * (-x.iter().map(|v| v * v).sum::<f64>()).exp()
    });

    let forcing: Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync> = Arc::new(move |t, x, v| {
        let norm_sq: f64 = x.iter().map(|v| v * v).sum();
        let bump = (-norm_sq).exp();
        let theta = (t * t).cos();
        let u = theta * bump;
        let u_t = -2.0 * t * (t * t).sin() * bump;
        let mut elliptic = 0.0;
        for (i, xi) in x.iter().enumerate() {
            let sig = ex2_sigma_component(t, x, i);
            elliptic += 0.5 * sig * sig * (4.0 * xi * xi - 2.0) * u
                + ex2_drift_component(t, *xi) * (-2.0 * xi) * u;
        }
        let source = u_t - elliptic - (-2.0 * u.abs()).exp();
        (-2.0 * v.abs()).exp() + source
    });

    let coeffs = CoefficientSet {
        drift: Drift::Field(Arc::new(|t, x, out| {
            for (o, xi) in out.iter_mut().zip(x) {
                *o = ex2_drift_component(t, *xi);
            }
        })),
        diffusion: Diffusion::Diagonal(Arc::new(|t, x, out| {
            for i in 0..x.len() {
                out[i] = ex2_sigma_component(t, x, i);
            }
        })),
        jump_amplitude: JumpAmplitude::Displacement,
        forcing,
        exterior_value: {
            let exact = exact_value.clone();
            Arc::new(move |t, x| exact(t, x))
        },
        initial_value: Arc::new(|x: &[f64]| (-x.iter().map(|v| v * v).sum::<f64>()).exp()),
    };

    Ok(ProblemSpec {
        name: format!("example2(d={d})"),
        dim: d,
        domain,
        kernel: None,
        coeffs,
        horizon: 1.0,
        exact: Some(ExactSolution { value: exact_value, separable: None }),
    })
}

/// The 100-dimensional instance.
pub fn example2() -> Result<ProblemSpec> {
    example2_with_dimension(100)
}

// ---------------------------------------------------------------------------
// Example 3: hypersingular kernel, no closed-form solution
// ---------------------------------------------------------------------------

/// Hypersingular-kernel benchmark: f(u) = |sin u|^{2/3}, g ≡ 0, u₀ ≡ 0,
/// log drift, and per-component jump amplitude e^{−z_k} + t x_k / k.
/// No exact solution; use the reference-solution workflow.
pub fn example3_custom(d: usize, alpha: f64, delta: f64) -> Result<ProblemSpec> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    let kernel = KernelSpec::new(KernelFamily::Hypersingular { alpha }, delta, d)?;
    let domain = DomainBox::centered_cube(d, 1.0)?;

    let coeffs = CoefficientSet {
        drift: Drift::Field(Arc::new(|t, x, out| {
            let decay = (-t * t).exp();
            let denom = 1.0 + t;
            for (o, xi) in out.iter_mut().zip(x) {
                *o = decay * (3.0 + xi.abs() / denom).ln();
            }
        })),
        diffusion: Diffusion::Diagonal(Arc::new(|t, x, out| {
            let scale = t.cos() / (1.0 + 10.0 * t * t);
            let d = x.len();
            for i in 0..d {
                out[i] = if i + 1 < d {
                    let k = (i + 2) as f64; // 1-based i+1
                    scale * (x[i] * x[i + 1].powi(i as i32 + 2) / k).sin()
                } else {
                    scale * (x[0] * x[d - 1]).cos()
                };
            }
        })),
        jump_amplitude: JumpAmplitude::Field(Arc::new(|t, x, z, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = (-z[i]).exp() + t * x[i] / (i as f64 + 1.0);
            }
        })),
        forcing: Arc::new(|_, _, v: f64| v.sin().abs().powf(2.0 / 3.0)),
        exterior_value: Arc::new(|_, _| 0.0),
        initial_value: Arc::new(|_| 0.0),
    };

    Ok(ProblemSpec {
        name: format!("example3(d={d},alpha={alpha})"),
        dim: d,
        domain,
        kernel: Some(kernel),
        coeffs,
        horizon: 1.0,
        exact: None,
    })
}

/// [`example3_custom`] with the default interaction radius δ = 0.4.
pub fn example3(d: usize, alpha: f64) -> Result<ProblemSpec> {
    example3_custom(d, alpha, 0.4)
}

/// Example 3 with a Gaussian-bump initial condition.  As written, u₀ ≡ 0 and
/// g ≡ 0 make u ≡ 0 an exact fixed point of the scheme (f(0) = 0), which is
/// useless for convergence studies; this variant gives the dynamics a
/// nontrivial state to evolve.
pub fn example3_warm_start(d: usize, alpha: f64, delta: f64) -> Result<ProblemSpec> {
    Ok(example3_custom(d, alpha, delta)?.with_initial(
        format!("example3-warm(d={d},alpha={alpha})"),
        Arc::new(|x: &[f64]| (-x.iter().map(|v| v * v).sum::<f64>()).exp()),
    ))
}

/// All-zero data on the unit cube; every snapshot of the solve is zero.
pub fn zero_problem(d: usize) -> Result<ProblemSpec> {
    Ok(ProblemSpec {
        name: format!("zero(d={d})"),
        dim: d,
        domain: DomainBox::centered_cube(d, 1.0)?,
        kernel: None,
        coeffs: CoefficientSet {
            drift: Drift::Zero,
            diffusion: Diffusion::Zero,
            jump_amplitude: JumpAmplitude::Displacement,
            forcing: Arc::new(|_, _, _| 0.0),
            exterior_value: Arc::new(|_, _| 0.0),
            initial_value: Arc::new(|_| 0.0),
        },
        horizon: 1.0,
        exact: Some(ExactSolution { value: Arc::new(|_, _| 0.0), separable: None }),
    })
}

// ---------------------------------------------------------------------------
// Nonlocal term evaluation and the residual oracle
// ---------------------------------------------------------------------------

/// Jump part of the generator for a separable polynomial u(x) = Σ_j p_j(x_j)
/// and displacement jumps, via even axis moments of the sampled jump measure.
pub fn nonlocal_apply_separable(kernel: &KernelSpec, components: &[Polynomial1D], x: &[f64]) -> Result<f64> {
    if components.len() != kernel.dim() || x.len() != kernel.dim() {
        return Err(Error::invalid("component/point count must match the kernel dimension"));
    }
    let max_degree = components.iter().map(|p| p.degree()).max().unwrap_or(0);
    let mut moments = vec![0.0; max_degree + 1];
    for k in (2..=max_degree).step_by(2) {
        moments[k] = kernel.axis_moment(k)?;
    }
    let mut acc = 0.0;
    for (p, xi) in components.iter().zip(x) {
        let mut k_fact = 2.0; // 2!
        for k in (2..=p.degree()).step_by(2) {
            acc += p.eval_derivative(k, *xi) / k_fact * moments[k];
            // (k+2)! = k! (k+1)(k+2)
            k_fact *= ((k + 1) * (k + 2)) as f64;
        }
    }
    Ok(acc)
}

/// Monte Carlo route for the same quantity with a general integrand:
/// λ · E_{z∼ψ}[u(x + z) − u(x)].  Returns (estimate, standard error).
pub fn nonlocal_apply_mc<F: Fn(&[f64]) -> f64>(
    kernel: &KernelSpec,
    u: F,
    x: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let d = kernel.dim();
    if x.len() != d {
        return Err(Error::invalid("point dimension must match the kernel"));
    }
    let lambda = kernel.jump_intensity();
    let base = u(x);
    let mut stream = StreamKey::new(seed, 0, 0, 0).stream();
    let mut z = vec![0.0; d];
    let mut shifted = vec![0.0; d];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        sample_jump_into(kernel, &mut stream, &mut z)?;
        for i in 0..d {
            shifted[i] = x[i] + z[i];
        }
        let v = u(&shifted) - base;
        sum += v;
        sum_sq += v * v;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Ok((lambda * mean, lambda * (var / n).sqrt()))
}

/// PDE residual ∂ₜu − 𝓛u − f(t, x, u) of the attached exact solution,
/// with time/space derivatives by central finite differences and the
/// nonlocal term by moments (separable solutions) or Monte Carlo.
///
/// A manufactured source that matches its solution drives this to zero; the
/// residual magnitude is the oracle for the whole problem construction.
pub fn residual_oracle(problem: &ProblemSpec, t: f64, x: &[f64]) -> Result<f64> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::invalid("residual oracle requires an exact solution"))?;
    if x.len() != problem.dim {
        return Err(Error::invalid("point dimension mismatch"));
    }
    let u = &exact.value;
    let d = problem.dim;

    let ht = 1e-5 * t.abs().max(1.0);
    let u_t = (u(t + ht, x) - u(t - ht, x)) / (2.0 * ht);

    let mut xp = x.to_vec();
    let mut grad = vec![0.0; d];
    let mut hess_diag = vec![0.0; d];
    let u0 = u(t, x);
    for i in 0..d {
        let h1 = 1e-5 * x[i].abs().max(1.0);
        xp[i] = x[i] + h1;
        let up = u(t, &xp);
        xp[i] = x[i] - h1;
        let um = u(t, &xp);
        grad[i] = (up - um) / (2.0 * h1);
        // second differences need a larger step for rounding
        let h2 = 1e-4 * x[i].abs().max(1.0);
        xp[i] = x[i] + h2;
        let up2 = u(t, &xp);
        xp[i] = x[i] - h2;
        let um2 = u(t, &xp);
        hess_diag[i] = (up2 - 2.0 * u0 + um2) / (h2 * h2);
        xp[i] = x[i];
    }

    let mut elliptic = 0.0;
    match &problem.coeffs.diffusion {
        Diffusion::Zero => {}
        Diffusion::Diagonal(sig) => {
            let mut diag = vec![0.0; d];
            sig(t, x, &mut diag);
            for i in 0..d {
                elliptic += 0.5 * diag[i] * diag[i] * hess_diag[i];
            }
        }
        Diffusion::Full(sig) => {
            let mut mat = vec![0.0; d * d];
            sig(t, x, &mut mat);
            // a = σσᵀ; Σ_ij a_ij ∂²u/∂x_i∂x_j with mixed FD stencils
            for i in 0..d {
                for j in 0..d {
                    let a_ij: f64 = (0..d).map(|k| mat[i * d + k] * mat[j * d + k]).sum();
                    if a_ij == 0.0 {
                        continue;
                    }
                    let h_ij = if i == j {
                        hess_diag[i]
                    } else {
                        let hi = 1e-4 * x[i].abs().max(1.0);
                        let hj = 1e-4 * x[j].abs().max(1.0);
                        let mut q = x.to_vec();
                        q[i] = x[i] + hi;
                        q[j] = x[j] + hj;
                        let pp = u(t, &q);
                        q[j] = x[j] - hj;
                        let pm = u(t, &q);
                        q[i] = x[i] - hi;
                        let mm = u(t, &q);
                        q[j] = x[j] + hj;
                        let mp = u(t, &q);
                        (pp - pm - mp + mm) / (4.0 * hi * hj)
                    };
                    elliptic += 0.5 * a_ij * h_ij;
                }
            }
        }
    }

    let mut drift_dot = 0.0;
    if let Drift::Field(mu) = &problem.coeffs.drift {
        let mut m = vec![0.0; d];
        mu(t, x, &mut m);
        drift_dot = m.iter().zip(&grad).map(|(a, b)| a * b).sum();
    }

    let nonlocal = match (&problem.kernel, exact.separable.as_ref()) {
        (None, _) => 0.0,
        (Some(kernel), Some(sep)) => {
            if !matches!(problem.coeffs.jump_amplitude, JumpAmplitude::Displacement) {
                return Err(Error::invalid("moment route requires displacement jumps"));
            }
            (sep.time_factor)(t) * nonlocal_apply_separable(kernel, &sep.components, x)?
        }
        (Some(kernel), None) => {
            if !matches!(problem.coeffs.jump_amplitude, JumpAmplitude::Displacement) {
                return Err(Error::invalid("Monte Carlo route requires displacement jumps"));
            }
            nonlocal_apply_mc(kernel, |y| u(t, y), x, 200_000, 0x4e4c)?.0
        }
    };

    let f = (problem.coeffs.forcing)(t, x, u0);
    Ok(u_t - (elliptic + drift_dot + nonlocal) - f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    fn interior_points(problem: &ProblemSpec, n: usize, seed: u64) -> Vec<(f64, Vec<f64>)> {
        let mut stream = StreamKey::new(seed, 0, 0, 0).stream();
        (0..n)
            .map(|_| {
                let t = 0.05 + 0.9 * stream.uniform() * problem.horizon;
                let x: Vec<f64> = (0..problem.dim).map(|_| -0.9 + 1.8 * stream.uniform()).collect();
                (t, x)
            })
            .collect()
    }

    #[test]
    fn polynomial_derivatives() {
        // p(y) = y⁵ − y³/2
        let p = Polynomial1D::new(vec![0.0, 0.0, 0.0, -0.5, 0.0, 1.0]).unwrap();
        assert_eq!(p.degree(), 5);
        let y = 0.7;
        assert!((p.eval(y) - (y.powi(5) - 0.5 * y.powi(3))).abs() < 1e-15);
        assert!((p.eval_derivative(1, y) - (5.0 * y.powi(4) - 1.5 * y * y)).abs() < 1e-14);
        assert!((p.eval_derivative(2, y) - (20.0 * y.powi(3) - 3.0 * y)).abs() < 1e-14);
        assert!((p.eval_derivative(4, y) - 120.0 * y).abs() < 1e-13);
        assert_eq!(p.eval_derivative(6, y), 0.0);
    }

    #[test]
    fn example1_exact_values() {
        let p = example1(3).unwrap();
        let exact = p.exact.as_ref().unwrap();
        // sin(0) = 0 at any x
        assert_eq!((exact.value)(0.0, &[0.3, -0.7, 0.1]), 0.0);
        // odd polynomial vanishes at the origin
        assert_eq!((exact.value)(1.0, &[0.0, 0.0, 0.0]), 0.0);
        // initial data is the t = 0 slice
        assert_eq!((p.coeffs.initial_value)(&[0.5, 0.5, 0.5]), 0.0);
    }

    #[test]
    fn example1_manufactured_residual() {
        for d in [2usize, 3] {
            let p = example1(d).unwrap();
            let mut worst: f64 = 0.0;
            for (t, x) in interior_points(&p, 100, 7 + d as u64) {
                let r = residual_oracle(&p, t, &x).unwrap().abs();
                worst = worst.max(r);
            }
            assert!(worst < 1e-6, "example1 d={d} residual {worst}");
        }
    }

    #[test]
    fn example2_exact_values() {
        let p = example2_with_dimension(10).unwrap();
        let exact = p.exact.as_ref().unwrap();
        assert!(((exact.value)(0.0, &vec![0.0; 10]) - 1.0).abs() < 1e-15);
        // both factors bounded by one
        for (t, x) in interior_points(&p, 50, 11) {
            assert!((exact.value)(t, &x) <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn example2_manufactured_residual() {
        let p = example2_with_dimension(10).unwrap();
        let mut worst: f64 = 0.0;
        for (t, x) in interior_points(&p, 100, 13) {
            let r = residual_oracle(&p, t, &x).unwrap().abs();
            worst = worst.max(r);
        }
        assert!(worst < 1e-6, "example2 residual {worst}");
    }

    #[test]
    fn example3_fixed_data() {
        let p = example3(10, 0.5).unwrap();
        for (t, x) in interior_points(&p, 20, 17) {
            assert_eq!((p.coeffs.initial_value)(&x), 0.0);
            assert_eq!((p.coeffs.exterior_value)(t, &x), 0.0);
        }
        assert_eq!(p.kernel.as_ref().unwrap().jump_intensity(), 1.0);
        assert!(example3(4, 2.5).is_err());
    }

    #[test]
    fn example3_warm_start_initial_data() {
        let p = example3_warm_start(4, 1.5, 0.4).unwrap();
        assert!(((p.coeffs.initial_value)(&[0.0; 4]) - 1.0).abs() < 1e-15);
        assert!(p.exact.is_none());
    }

    #[test]
    fn zero_problem_residual_is_zero() {
        let p = zero_problem(3).unwrap();
        for (t, x) in interior_points(&p, 10, 19) {
            assert_eq!(residual_oracle(&p, t, &x).unwrap(), 0.0);
        }
    }

    #[test]
    fn constructions_are_deterministic() {
        let a = example1(3).unwrap();
        let b = example1(3).unwrap();
        for (t, x) in interior_points(&a, 25, 23) {
            assert_eq!((a.coeffs.forcing)(t, &x, 0.2), (b.coeffs.forcing)(t, &x, 0.2));
            let mut da = vec![0.0; 3];
            let mut db = vec![0.0; 3];
            if let (Drift::Field(fa), Drift::Field(fb)) = (&a.coeffs.drift, &b.coeffs.drift) {
                fa(t, &x, &mut da);
                fb(t, &x, &mut db);
            }
            assert_eq!(da, db);
        }
    }

    #[test]
    fn nonlocal_moments_linear_vanishes() {
        let kernel = KernelSpec::new(KernelFamily::ConstantIndicator, 0.4, 2).unwrap();
        let comps = vec![
            Polynomial1D::new(vec![0.3, 2.0]).unwrap(),
            Polynomial1D::new(vec![-1.0, 0.5]).unwrap(),
        ];
        let v = nonlocal_apply_separable(&kernel, &comps, &[0.2, -0.4]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn nonlocal_moments_quadratic_d1() {
        // u(x) = x²: value is M₂ = 2δ³/3.
        let kernel = KernelSpec::new(KernelFamily::ConstantIndicator, 0.4, 1).unwrap();
        let comps = vec![Polynomial1D::new(vec![0.0, 0.0, 1.0]).unwrap()];
        let v = nonlocal_apply_separable(&kernel, &comps, &[0.3]).unwrap();
        let expect = 2.0 * 0.4f64.powi(3) / 3.0;
        assert!((v - expect).abs() < 1e-10, "moment route {v}, analytic {expect}");
    }

    #[test]
    fn nonlocal_moment_route_matches_monte_carlo() {
        let kernel = KernelSpec::new(KernelFamily::ConstantIndicator, 0.4, 2).unwrap();
        let comps = vec![
            Polynomial1D::new(vec![0.0, 0.0, 1.0, 0.0, 0.25]).unwrap(), // x² + x⁴/4
            Polynomial1D::new(vec![0.0, 1.0, -0.5]).unwrap(),           // y − y²/2
        ];
        let x = [0.3, -0.2];
        let exact = nonlocal_apply_separable(&kernel, &comps, &x).unwrap();
        let u = |y: &[f64]| comps[0].eval(y[0]) + comps[1].eval(y[1]);
        let (mc, se) = nonlocal_apply_mc(&kernel, u, &x, 10_000_000, 31).unwrap();
        assert!(
            (mc - exact).abs() <= 3.0 * se,
            "moment route {exact}, MC {mc} ± {se}"
        );
    }

    #[test]
    fn nonlocal_mc_hypersingular_class() {
        // Second-moment class: the sampled measure is φ|z|², so the moment
        // route and the MC route must agree on it as well.
        let kernel = KernelSpec::new(KernelFamily::Hypersingular { alpha: 1.5 }, 0.4, 2).unwrap();
        let comps = vec![
            Polynomial1D::new(vec![0.0, 0.0, 1.0]).unwrap(),
            Polynomial1D::new(vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap(),
        ];
        let x = [0.1, 0.5];
        let exact = nonlocal_apply_separable(&kernel, &comps, &x).unwrap();
        let u = |y: &[f64]| comps[0].eval(y[0]) + comps[1].eval(y[1]);
        let (mc, se) = nonlocal_apply_mc(&kernel, u, &x, 2_000_000, 37).unwrap();
        assert!((mc - exact).abs() <= 3.0 * se, "moment {exact}, MC {mc} ± {se}");
    }

    #[test]
    fn residual_oracle_requires_exact() {
        let p = example3(3, 0.5).unwrap();
        assert!(residual_oracle(&p, 0.5, &[0.0, 0.0, 0.0]).is_err());
    }
}
