//! Axis-aligned box domains.

use crate::{Error, Result};

/// Open box Ω = Π (aᵢ, bᵢ).  The volume constraint applies on everything
/// outside the open box, including its topological boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::invalid("box bounds must be non-empty and of equal length"));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !a.is_finite() || !b.is_finite() || a >= b {
                return Err(Error::invalid(format!("bad box interval [{a}, {b}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    /// The symmetric cube (−half, half)^d.
    pub fn centered_cube(dim: usize, half: f64) -> Result<Self> {
        Self::new(vec![-half; dim], vec![half; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// Strict interior test: aᵢ < xᵢ < bᵢ for every coordinate.
    #[inline]
    pub fn contains_open(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.lo.len());
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(xi, (a, b))| *a < *xi && *xi < *b)
    }

    /// Componentwise projection onto the closed box.
    pub fn clamp_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, xi), (a, b)) in out.iter_mut().zip(x).zip(self.lo.iter().zip(&self.hi)) {
            *o = xi.clamp(*a, *b);
        }
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }
}

/// True iff `x` lies strictly inside the open box.
pub fn in_domain(domain: &DomainBox, x: &[f64]) -> bool {
    domain.contains_open(x)
}
