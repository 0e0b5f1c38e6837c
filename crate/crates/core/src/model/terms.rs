//! Component-function grammar.
//!
//! Components are restricted to a small closed-form family (polynomials,
//! sin/cos with a frequency, exponentials, products, and compositions with
//! the coordinate product `x*y`) so that smoothness and identifiability
//! constants can be bounded analytically when writing configs.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnivariateTerm {
    /// `coeffs[0] + coeffs[1] t + coeffs[2] t^2 + ...`
    Poly { coeffs: Vec<f64> },
    /// `amp * sin(freq * t)`
    Sin { amp: f64, freq: f64 },
    /// `amp * cos(freq * t)`
    Cos { amp: f64, freq: f64 },
    /// `amp * exp(rate * t)`
    Exp { amp: f64, rate: f64 },
    Sum { terms: Vec<UnivariateTerm> },
}

impl UnivariateTerm {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            UnivariateTerm::Poly { coeffs } => {
                let mut acc = 0.0;
                for &c in coeffs.iter().rev() {
                    acc = acc * t + c;
                }
                acc
            }
            UnivariateTerm::Sin { amp, freq } => amp * (freq * t).sin(),
            UnivariateTerm::Cos { amp, freq } => amp * (freq * t).cos(),
            UnivariateTerm::Exp { amp, rate } => amp * (rate * t).exp(),
            UnivariateTerm::Sum { terms } => terms.iter().map(|u| u.eval(t)).sum(),
        }
    }

    pub fn linear(slope: f64) -> Self {
        UnivariateTerm::Poly { coeffs: vec![0.0, slope] }
    }

    pub fn quadratic(coeff: f64) -> Self {
        UnivariateTerm::Poly { coeffs: vec![0.0, 0.0, coeff] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BivariateTerm {
    /// `inner(x * y)` — covers terms like `c*x*y`, `sin(pi*x*y)`, `exp(r*x*y)`.
    OfProduct { inner: UnivariateTerm },
    /// `fx(x) * fy(y)`
    Separable { fx: UnivariateTerm, fy: UnivariateTerm },
    Sum { terms: Vec<BivariateTerm> },
}

impl BivariateTerm {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            BivariateTerm::OfProduct { inner } => inner.eval(x * y),
            BivariateTerm::Separable { fx, fy } => fx.eval(x) * fy.eval(y),
            BivariateTerm::Sum { terms } => terms.iter().map(|b| b.eval(x, y)).sum(),
        }
    }

    pub fn bilinear(coeff: f64) -> Self {
        BivariateTerm::OfProduct { inner: UnivariateTerm::linear(coeff) }
    }
}
