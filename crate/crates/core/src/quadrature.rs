//! Adaptive Gauss-Kronrod quadrature (7-15 pair) used by the normalization
//! and moment oracles.  Worst-interval-first bisection; endpoints are never
//! evaluated, so integrable endpoint singularities are fine.

use crate::{Error, Result};

// 15-point Kronrod abscissae (positive half) and weights, with the embedded
// 7-point Gauss weights.  Values from the QUADPACK dqk15 tables.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_33,
    0.949_107_912_342_758_524_526_189_684_047_85,
    0.864_864_423_359_769_072_789_712_788_640_93,
    0.741_531_185_599_394_439_863_864_773_280_79,
    0.586_087_235_467_691_130_294_144_838_258_73,
    0.405_845_151_377_397_166_906_606_412_076_96,
    0.207_784_955_007_898_467_600_689_403_773_24,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_2,
    0.104_790_010_322_250_183_839_876_322_541_52,
    0.140_653_259_715_525_918_745_189_590_510_24,
    0.169_004_726_639_267_902_826_583_426_598_55,
    0.190_350_578_064_785_409_913_256_402_421_01,
    0.204_432_940_075_298_892_414_161_999_234_65,
    0.209_482_141_084_727_828_012_999_174_891_71,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_08,
    0.279_705_391_489_276_667_901_467_771_423_78,
    0.381_830_050_505_118_944_950_369_775_488_98,
    0.417_959_183_673_469_387_755_102_040_816_33,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let fsum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * fsum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * fsum;
        }
    }
    kronrod *= half;
    gauss *= half;
    Panel {
        a,
        b,
        value: kronrod,
        error: (kronrod - gauss).abs().max(f64::MIN_POSITIVE),
    }
}

/// Integrates `f` over `[a, b]` to the requested absolute/relative tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    if !a.is_finite() || !b.is_finite() || a >= b {
        return Err(Error::invalid(format!("bad integration interval [{a}, {b}]")));
    }
    const MAX_PANELS: usize = 4000;
    let mut panels = vec![kronrod_15(&f, a, b)];
    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.error).sum();
        if !total.is_finite() {
            return Err(Error::NonFinite("quadrature integrand".into()));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::Convergence(format!(
                "adaptive quadrature stalled: error {err:.3e} after {} panels",
                panels.len()
            )));
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("panel list is non-empty");
        let Panel { a, b, .. } = panels.swap_remove(worst);
        let mid = 0.5 * (a + b);
        panels.push(kronrod_15(&f, a, mid));
        panels.push(kronrod_15(&f, mid, b));
    }
}

/// ∫₀^δ r^a h(r) dr computed after the substitution r = δ u^{1/(a+1)}, which
/// absorbs the power factor exactly:
///
///   ∫₀^δ r^a h(r) dr = δ^{a+1}/(a+1) ∫₀¹ h(δ u^{1/(a+1)}) du.
///
/// Works for any a > −1, covering both integrable endpoint singularities
/// (a < 0) and sharply peaked high-dimensional radial weights (a ≫ 1).
pub fn radial_power_integral<H: Fn(f64) -> f64>(a: f64, delta: f64, h: H, rel_tol: f64) -> Result<f64> {
    if a <= -1.0 {
        return Err(Error::invalid(format!("radial power {a} is not integrable")));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("radius must be positive, got {delta}")));
    }
    let p = 1.0 / (a + 1.0);
    let scale = delta.powf(a + 1.0) / (a + 1.0);
    let inner = integrate(|u| h(delta * u.powf(p)), 0.0, 1.0, rel_tol, 0.0)?;
    Ok(scale * inner)
}
