//! First-detection statistics of a quantum system monitored either by
//! stroboscopic projective measurements or by a non-Hermitian optical
//! potential, together with their Zeno-limit closed forms.
//!
//! Units: ħ = γ = 1 throughout. Times are in ħ/γ, energies in γ.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod electro;
pub mod error;
pub mod infline;
pub mod io;
pub mod linalg;
pub mod model;
pub mod nhh;
pub mod quad;
mod roots;
pub mod strobo;
pub mod validation;
pub mod zeno;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Which monitoring scheme a quantity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Strobo,
    Nhh,
}

impl Framework {
    pub fn as_str(self) -> &'static str {
        match self {
            Framework::Strobo => "strobo",
            Framework::Nhh => "nhh",
        }
    }
}

/// Detection statistics: total probability and conditional moments.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstDetectionStats {
    pub p_det: f64,
    /// `moments[k]` holds the conditional ⟨T^(k+1)⟩.
    pub moments: Vec<f64>,
    pub truncation_n: usize,
    pub tail_estimate: f64,
}

impl FirstDetectionStats {
    pub fn mean(&self) -> f64 {
        self.moments[0]
    }

    pub fn variance(&self) -> Option<f64> {
        let m2 = *self.moments.get(1)?;
        Some(m2 - self.moments[0] * self.moments[0])
    }
}

pub(crate) fn factorial(m: usize) -> f64 {
    (1..=m).fold(1.0, |acc, k| acc * k as f64)
}
