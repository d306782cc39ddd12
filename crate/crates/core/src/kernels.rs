//! Nonlocal kernel families with exact inverse-CDF jump sampling.
//!
//! A kernel φ on the ball B_δ together with the dimension fixes the jump part
//! of the process: jumps arrive with intensity λ and sizes are drawn from the
//! density ψ.  Integrable kernels use ψ = φ/λ with λ = ∫ φ; hypersingular
//! kernels (|z|^{−d−α} type) are not integrable, so they use the
//! second-moment weighting ψ = φ|z|²/λ with λ = ∫ φ|z|²,
//! which is the density the sampler below inverts.
//!
//! With the built-in normalization constants the defining integral is 1 for
//! the hypersingular, tempered, and Gaussian families, so λ = 1 there; the
//! constant indicator kernel has λ equal to the ball volume.
//!
//! Radial sampling is exact: the radial CDF is inverted in closed form
//! (power law) or through the inverse regularized incomplete gamma function.
//! Directions are i.i.d. standard normal vectors normalized to the sphere.

use crate::quadrature::radial_power_integral;
use crate::rng::{KeyedStream, StreamKey};
use crate::specfun::{inverse_regularized_lower_gamma, ln_gamma, omega_d, regularized_lower_gamma};
use crate::{Error, Result};

/// Supported kernel families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    /// φ(z) = 1 for |z| ≤ δ.
    ConstantIndicator,
    /// φ(z) = C_H |z|^{−d−α}, C_H = (2−α) δ^{α−2} / ω_d.
    Hypersingular { alpha: f64 },
    /// φ(z) = C_T e^{−β|z|} |z|^{−d−α}, C_T = β^{2−α} / (ω_d γ(2−α, βδ)).
    Tempered { alpha: f64, beta: f64 },
    /// φ(z) = C_G e^{−|z|²/(2σ²)}, C_G = 2^{1−d/2} / (ω_d σ^d γ(d/2, δ²/(2σ²))).
    Gaussian { sigma: f64 },
}

/// A validated kernel: family, interaction radius δ, and dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    delta: f64,
    dim: usize,
}

/// One sampled jump: radius, unit direction, and the displacement z = r·ẑ.
#[derive(Debug, Clone)]
pub struct JumpSample {
    pub r: f64,
    pub direction: Vec<f64>,
    pub z: Vec<f64>,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, delta: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("kernel dimension must be >= 1"));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::invalid(format!("interaction radius must be positive, got {delta}")));
        }
        match family {
            KernelFamily::Hypersingular { alpha } => {
                if !(alpha > 0.0 && alpha < 2.0) {
                    return Err(Error::invalid(format!("hypersingular exponent must lie in (0, 2), got {alpha}")));
                }
            }
            KernelFamily::Tempered { alpha, beta } => {
                if !(alpha > 0.0 && alpha < 2.0) {
                    return Err(Error::invalid(format!("tempered exponent must lie in (0, 2), got {alpha}")));
                }
                if !(beta > 0.0) || !beta.is_finite() {
                    return Err(Error::invalid(format!("tempering rate must be positive, got {beta}")));
                }
            }
            KernelFamily::Gaussian { sigma } => {
                if !(sigma > 0.0) || !sigma.is_finite() {
                    return Err(Error::invalid(format!("kernel deviation must be positive, got {sigma}")));
                }
            }
            KernelFamily::ConstantIndicator => {}
        }
        Ok(Self { family, delta, dim })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True for families whose sampling density carries the |z|² weight.
    pub fn is_second_moment_class(&self) -> bool {
        matches!(self.family, KernelFamily::Hypersingular { .. } | KernelFamily::Tempered { .. })
    }

    /// The normalization constant in front of the kernel shape.
    pub fn normalization_constant(&self) -> f64 {
        let d = self.dim;
        let delta = self.delta;
        let omega = omega_d(d).expect("dim >= 1 by construction");
        match self.family {
            KernelFamily::ConstantIndicator => 1.0,
            KernelFamily::Hypersingular { alpha } => (2.0 - alpha) * delta.powf(alpha - 2.0) / omega,
            KernelFamily::Tempered { alpha, beta } => {
                let s = 2.0 - alpha;
                let g = regularized_lower_gamma(s, beta * delta).expect("valid domain") * ln_gamma(s).exp();
                beta.powf(s) / (omega * g)
            }
            KernelFamily::Gaussian { sigma } => {
                let half_d = d as f64 / 2.0;
                let arg = delta * delta / (2.0 * sigma * sigma);
                // log form: γ(d/2, ·) underflows long before the constant does
                let ln_lower = crate::specfun::ln_regularized_lower_gamma(half_d, arg).expect("valid domain")
                    + ln_gamma(half_d);
                ((1.0 - half_d) * std::f64::consts::LN_2
                    - omega_ln(d)
                    - d as f64 * sigma.ln()
                    - ln_lower)
                    .exp()
            }
        }
    }

    /// Jump intensity λ of the compound Poisson part.
    pub fn jump_intensity(&self) -> f64 {
        match self.family {
            // ∫_{B_δ} dz = ω_d δ^d / d
            KernelFamily::ConstantIndicator => {
                omega_d(self.dim).expect("dim >= 1") * self.delta.powi(self.dim as i32) / self.dim as f64
            }
            // normalization makes the defining integral exactly one
            KernelFamily::Hypersingular { .. } | KernelFamily::Tempered { .. } | KernelFamily::Gaussian { .. } => 1.0,
        }
    }

    /// Inverse radial CDF: the jump radius at quantile ξ ∈ [0, 1].
    pub fn sample_radius(&self, xi: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::invalid(format!("radial quantile must lie in [0, 1], got {xi}")));
        }
        if xi == 0.0 {
            return Ok(0.0);
        }
        if xi == 1.0 {
            return Ok(self.delta);
        }
        let delta = self.delta;
        let r = match self.family {
            KernelFamily::ConstantIndicator => delta * xi.powf(1.0 / self.dim as f64),
            KernelFamily::Hypersingular { alpha } => delta * xi.powf(1.0 / (2.0 - alpha)),
            KernelFamily::Tempered { alpha, beta } => {
                let s = 2.0 - alpha;
                let scale = regularized_lower_gamma(s, beta * delta)?;
                inverse_regularized_lower_gamma(s, xi * scale)? / beta
            }
            KernelFamily::Gaussian { sigma } => {
                let half_d = self.dim as f64 / 2.0;
                let scale = regularized_lower_gamma(half_d, delta * delta / (2.0 * sigma * sigma))?;
                sigma * (2.0 * inverse_regularized_lower_gamma(half_d, xi * scale)?).sqrt()
            }
        };
        Ok(r.clamp(0.0, delta))
    }

    /// Radial CDF F(r) of the sampling density; the statistical-test oracle.
    pub fn radial_cdf(&self, r: f64) -> Result<f64> {
        if !(0.0..=self.delta).contains(&r) {
            return Err(Error::invalid(format!("radius {r} outside [0, {}]", self.delta)));
        }
        let delta = self.delta;
        Ok(match self.family {
            KernelFamily::ConstantIndicator => (r / delta).powi(self.dim as i32),
            KernelFamily::Hypersingular { alpha } => (r / delta).powf(2.0 - alpha),
            KernelFamily::Tempered { alpha, beta } => {
                let s = 2.0 - alpha;
                regularized_lower_gamma(s, beta * r)? / regularized_lower_gamma(s, beta * delta)?
            }
            KernelFamily::Gaussian { sigma } => {
                let half_d = self.dim as f64 / 2.0;
                let scale = 2.0 * sigma * sigma;
                regularized_lower_gamma(half_d, r * r / scale)?
                    / regularized_lower_gamma(half_d, delta * delta / scale)?
            }
        })
    }

    /// M_k = ∫_{B_δ} z₁^k λψ(z) dz, the k-th axis moment of the sampled jump
    /// measure (λψ = φ for integrable kernels, φ|z|² for the second-moment
    /// class).  Odd moments vanish by symmetry.  The radial factor is done by
    /// quadrature, the spherical factor in closed form.
    pub fn axis_moment(&self, k: usize) -> Result<f64> {
        if k % 2 == 1 {
            return Ok(0.0);
        }
        let d = self.dim;
        let omega = omega_d(d)?;
        let c = self.normalization_constant();
        // E[ẑ₁^k] over the unit sphere: (k−1)!! / (d (d+2) ⋯ (d+k−2))
        let mut sphere = 1.0;
        let mut num = 1.0;
        for j in 0..(k / 2) {
            sphere *= num / (d as f64 + 2.0 * j as f64);
            num += 2.0;
        }
        let radial = self.radial_weight_integral(k as f64)?;
        Ok(omega * c * sphere * radial)
    }

    /// ∫₀^δ r^{k+d−1} shape(r) [r² for the second-moment class] dr with the
    /// power factor handled exactly by substitution.
    fn radial_weight_integral(&self, k: f64) -> Result<f64> {
        let d = self.dim as f64;
        let delta = self.delta;
        match self.family {
            KernelFamily::ConstantIndicator => radial_power_integral(k + d - 1.0, delta, |_| 1.0, 1e-12),
            KernelFamily::Hypersingular { alpha } => {
                radial_power_integral(k + 1.0 - alpha, delta, |_| 1.0, 1e-12)
            }
            KernelFamily::Tempered { alpha, beta } => {
                radial_power_integral(k + 1.0 - alpha, delta, |r: f64| (-beta * r).exp(), 1e-12)
            }
            KernelFamily::Gaussian { sigma } => {
                let inv = 1.0 / (2.0 * sigma * sigma);
                radial_power_integral(k + d - 1.0, delta, move |r: f64| (-r * r * inv).exp(), 1e-12)
            }
        }
    }

    /// Quadrature oracle for the defining normalization integral:
    /// ∫ φ|z|² dz for the second-moment class, ∫ φ dz otherwise.  Equals λ;
    /// equals 1 for the normalized families.
    pub fn normalization_integral(&self) -> Result<f64> {
        self.axis_moment(0)
    }
}

fn omega_ln(d: usize) -> f64 {
    std::f64::consts::LN_2 + (d as f64 / 2.0) * 1.1447298858494002 - ln_gamma(d as f64 / 2.0)
}

/// Uniform direction on S^{d−1} by normalizing i.i.d. standard normals,
/// drawn from `stream` (d draws; resampled on the measure-zero zero vector).
pub fn sample_direction_into(stream: &mut KeyedStream, out: &mut [f64]) {
    debug_assert!(!out.is_empty());
    loop {
        let mut norm_sq = 0.0;
        for v in out.iter_mut() {
            *v = stream.normal();
            norm_sq += *v * *v;
        }
        if norm_sq > 0.0 {
            let inv = 1.0 / norm_sq.sqrt();
            for v in out.iter_mut() {
                *v *= inv;
            }
            return;
        }
    }
}

/// Keyed variant of [`sample_direction_into`].
pub fn sample_direction(key: StreamKey, d: usize) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::invalid("direction dimension must be >= 1"));
    }
    let mut out = vec![0.0; d];
    sample_direction_into(&mut key.stream(), &mut out);
    Ok(out)
}

/// Draws one jump from an open stream: radius quantile first, then the
/// direction normals.  Writes z = r·ẑ into `z_out` and returns r.
pub fn sample_jump_into(spec: &KernelSpec, stream: &mut KeyedStream, z_out: &mut [f64]) -> Result<f64> {
    debug_assert_eq!(z_out.len(), spec.dim());
    let xi = stream.uniform();
    let r = spec.sample_radius(xi)?;
    sample_direction_into(stream, z_out);
    for v in z_out.iter_mut() {
        *v *= r;
    }
    Ok(r)
}

/// Draws one jump z = r·ẑ for a key.
pub fn sample_jump(spec: &KernelSpec, key: StreamKey) -> Result<JumpSample> {
    let mut stream = key.stream();
    let xi = stream.uniform();
    let r = spec.sample_radius(xi)?;
    let mut direction = vec![0.0; spec.dim()];
    sample_direction_into(&mut stream, &mut direction);
    let z = direction.iter().map(|v| v * r).collect();
    Ok(JumpSample { r, direction, z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn hyper(alpha: f64, delta: f64, d: usize) -> KernelSpec {
        KernelSpec::new(KernelFamily::Hypersingular { alpha }, delta, d).unwrap()
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(KernelSpec::new(KernelFamily::Hypersingular { alpha: 2.0 }, 0.4, 2).is_err());
        assert!(KernelSpec::new(KernelFamily::Hypersingular { alpha: 0.0 }, 0.4, 2).is_err());
        assert!(KernelSpec::new(KernelFamily::Tempered { alpha: 1.0, beta: 0.0 }, 0.4, 2).is_err());
        assert!(KernelSpec::new(KernelFamily::Gaussian { sigma: -1.0 }, 0.4, 2).is_err());
        assert!(KernelSpec::new(KernelFamily::ConstantIndicator, 0.0, 2).is_err());
        assert!(KernelSpec::new(KernelFamily::ConstantIndicator, 0.4, 0).is_err());
    }

    #[test]
    fn hypersingular_constant_d2() {
        // C_H = (2−α) δ^{α−2} / ω_d at α = 1, δ = 1, d = 2.
        let spec = hyper(1.0, 1.0, 2);
        assert!((spec.normalization_constant() - 1.0 / (2.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn indicator_intensity_is_ball_volume() {
        let disk = KernelSpec::new(KernelFamily::ConstantIndicator, 0.4, 2).unwrap();
        assert!((disk.jump_intensity() - PI * 0.16).abs() < 1e-12);
        let ball = KernelSpec::new(KernelFamily::ConstantIndicator, 1.0, 3).unwrap();
        assert!((ball.jump_intensity() - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_families_have_unit_intensity() {
        assert_eq!(hyper(0.7, 0.4, 3).jump_intensity(), 1.0);
        let t = KernelSpec::new(KernelFamily::Tempered { alpha: 1.0, beta: 1.0 }, 0.4, 3).unwrap();
        assert_eq!(t.jump_intensity(), 1.0);
        let g = KernelSpec::new(KernelFamily::Gaussian { sigma: 1.0 }, 0.4, 3).unwrap();
        assert_eq!(g.jump_intensity(), 1.0);
    }

    #[test]
    fn normalization_integral_oracle() {
        // The defining integral of each normalized family must equal 1;
        // checked against adaptive radial quadrature, not the closed form.
        for d in [1, 2, 3, 10, 100] {
            for delta in [0.1, 0.4, 1.0] {
                for spec in [
                    hyper(0.5, delta, d),
                    hyper(1.5, delta, d),
                    KernelSpec::new(KernelFamily::Tempered { alpha: 1.0, beta: 1.0 }, delta, d).unwrap(),
                    KernelSpec::new(KernelFamily::Gaussian { sigma: 1.0 }, delta, d).unwrap(),
                ] {
                    let v = spec.normalization_integral().unwrap();
                    assert!(
                        (v - 1.0).abs() < 1e-8,
                        "normalization integral {v} for {:?} d={d} delta={delta}",
                        spec.family()
                    );
                }
            }
        }
    }

    #[test]
    fn indicator_normalization_integral_is_volume() {
        let spec = KernelSpec::new(KernelFamily::ConstantIndicator, 0.4, 2).unwrap();
        let v = spec.normalization_integral().unwrap();
        assert!((v - spec.jump_intensity()).abs() < 1e-10);
    }

    #[test]
    fn radius_closed_forms() {
        // Hypersingular: r = δ ξ^{1/(2−α)}.
        let spec = hyper(1.0, 0.4, 2);
        assert!((spec.sample_radius(0.25).unwrap() - 0.1).abs() < 1e-14);

        // Gaussian d = 2 reduces to r = σ √(−2 ln(1 − ξ(1 − e^{−δ²/(2σ²)}))).
        let g = KernelSpec::new(KernelFamily::Gaussian { sigma: 1.0 }, 1.0, 2).unwrap();
        let xi = 0.5;
        let closed = (-2.0 * (1.0 - xi * (1.0 - (-0.5f64).exp())).ln()).sqrt();
        assert!((g.sample_radius(xi).unwrap() - closed).abs() < 1e-10);

        // Tempered at α = 1, β = 1, δ = 1: γ(1, r) = ξ γ(1, 1).
        let t = KernelSpec::new(KernelFamily::Tempered { alpha: 1.0, beta: 1.0 }, 1.0, 2).unwrap();
        let closed = -(1.0 - 0.5 * (1.0 - (-1.0f64).exp())).ln();
        assert!((t.sample_radius(0.5).unwrap() - closed).abs() < 1e-10);
    }

    #[test]
    fn radius_endpoints() {
        for spec in [
            KernelSpec::new(KernelFamily::ConstantIndicator, 0.4, 3).unwrap(),
            hyper(0.5, 0.4, 3),
            KernelSpec::new(KernelFamily::Tempered { alpha: 1.3, beta: 2.0 }, 0.4, 3).unwrap(),
            KernelSpec::new(KernelFamily::Gaussian { sigma: 0.7 }, 0.4, 3).unwrap(),
        ] {
            assert_eq!(spec.sample_radius(0.0).unwrap(), 0.0);
            assert_eq!(spec.sample_radius(1.0).unwrap(), spec.delta());
            assert!(spec.sample_radius(-0.1).is_err());
            assert!(spec.sample_radius(1.1).is_err());
        }
    }

    #[test]
    fn radial_cdf_endpoints_and_plug() {
        let spec = hyper(1.0, 1.0, 2);
        assert_eq!(spec.radial_cdf(1.0).unwrap(), 1.0);
        assert!((spec.radial_cdf(0.25).unwrap() - 0.25).abs() < 1e-14);
        assert!(spec.radial_cdf(1.5).is_err());
    }

    #[test]
    fn cdf_sample_round_trip_all_families() {
        let specs = [
            KernelSpec::new(KernelFamily::ConstantIndicator, 0.4, 3).unwrap(),
            hyper(0.5, 0.4, 3),
            hyper(1.5, 0.4, 3),
            KernelSpec::new(KernelFamily::Tempered { alpha: 1.0, beta: 1.0 }, 0.4, 3).unwrap(),
            KernelSpec::new(KernelFamily::Gaussian { sigma: 1.0 }, 0.4, 3).unwrap(),
        ];
        for spec in &specs {
            for i in 1..10 {
                let xi = i as f64 / 10.0;
                let r = spec.sample_radius(xi).unwrap();
                let back = spec.radial_cdf(r).unwrap();
                assert!((back - xi).abs() < 1e-10, "{:?}: F(r(ξ)) = {back}, ξ = {xi}", spec.family());
            }
        }
    }

    #[test]
    fn direction_is_unit_and_symmetric() {
        let mut max_norm_err: f64 = 0.0;
        let mut coord_sum = [0.0f64; 2];
        let n = 1_000_000;
        for p in 0..n {
            let dir = sample_direction(StreamKey::new(3, 0, 0, p), 2).unwrap();
            let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            max_norm_err = max_norm_err.max((norm - 1.0).abs());
            coord_sum[0] += dir[0];
            coord_sum[1] += dir[1];
        }
        assert!(max_norm_err < 1e-12);
        for s in coord_sum {
            // per-coordinate variance is 1/d = 1/2; 0.004 is > 5 sigma
            assert!((s / n as f64).abs() < 0.004, "direction coordinate mean {}", s / n as f64);
        }
    }

    #[test]
    fn direction_angle_chi_squared() {
        // 36-bin χ² test of the planar angle; 99.9% critical value for
        // 35 dof is 66.62.
        let n = 1_000_000;
        let mut bins = [0u64; 36];
        for p in 0..n {
            let dir = sample_direction(StreamKey::new(5, 1, 0, p), 2).unwrap();
            let angle = dir[1].atan2(dir[0]) + PI;
            let idx = ((angle / (2.0 * PI) * 36.0) as usize).min(35);
            bins[idx] += 1;
        }
        let expect = n as f64 / 36.0;
        let chi2: f64 = bins.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        assert!(chi2 < 66.62, "angle χ² = {chi2}");
    }

    #[test]
    fn jump_stays_in_ball_and_d1_directions() {
        let spec = hyper(0.5, 0.4, 1);
        for p in 0..2000 {
            let j = sample_jump(&spec, StreamKey::new(9, 0, 0, p)).unwrap();
            assert!(j.z[0].abs() <= 0.4 + 1e-15);
            assert!((j.direction[0].abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sampled_radii_ks_statistic() {
        // Full-pipeline radii vs the analytic radial CDF.
        let spec = hyper(0.5, 0.4, 2);
        let n = 200_000usize;
        let mut radii: Vec<f64> = (0..n)
            .map(|p| sample_jump(&spec, StreamKey::new(13, 0, 0, p as u64)).unwrap().r)
            .collect();
        radii.sort_by(f64::total_cmp);
        let mut ks: f64 = 0.0;
        for (i, r) in radii.iter().enumerate() {
            let f = spec.radial_cdf(*r).unwrap();
            ks = ks.max((f - i as f64 / n as f64).abs());
            ks = ks.max(((i + 1) as f64 / n as f64 - f).abs());
        }
        // 99.9% critical value at n = 2e5 is ~0.00436
        assert!(ks < 0.00436, "KS = {ks}");
    }

    #[test]
    fn gaussian_second_moment_matches_quadrature() {
        let spec = KernelSpec::new(KernelFamily::Gaussian { sigma: 1.0 }, 0.4, 3).unwrap();
        // E[|z|²] = d · M₂ by symmetry.
        let m2 = spec.axis_moment(2).unwrap();
        let n = 200_000usize;
        let mut acc = 0.0;
        for p in 0..n {
            let j = sample_jump(&spec, StreamKey::new(17, 0, 0, p as u64)).unwrap();
            acc += j.z.iter().map(|v| v * v).sum::<f64>();
        }
        let emp = acc / n as f64;
        let expect = 3.0 * m2;
        assert!((emp - expect).abs() / expect < 0.01, "E|z|² = {emp}, quadrature {expect}");
    }

    #[test]
    fn rotational_symmetry_of_moments() {
        // Componentwise second moments agree across axes.
        let spec = hyper(1.5, 0.4, 3);
        let n = 100_000usize;
        let mut acc = [0.0f64; 3];
        for p in 0..n {
            let j = sample_jump(&spec, StreamKey::new(21, 0, 0, p as u64)).unwrap();
            for (a, v) in acc.iter_mut().zip(&j.z) {
                *a += v * v;
            }
        }
        let mean: f64 = acc.iter().sum::<f64>() / 3.0;
        for a in acc {
            assert!((a - mean).abs() / mean < 0.03, "axis moments {acc:?}");
        }
    }

    proptest! {
        #[test]
        fn radial_round_trip_property(xi in 0.0f64..=1.0, alpha in 0.05f64..1.95) {
            let spec = hyper(alpha, 0.4, 3);
            let r = spec.sample_radius(xi).unwrap();
            prop_assert!((0.0..=0.4).contains(&r));
            let back = spec.radial_cdf(r).unwrap();
            prop_assert!((back - xi).abs() < 1e-9);
        }
    }
}
