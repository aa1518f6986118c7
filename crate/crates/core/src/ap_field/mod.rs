//! Almost-periodic coefficients represented by trigonometric polynomials.

mod coefficients;
mod trig;

pub use coefficients::{saturation, Bounds, Certificate, CoefficientSet, ForcingLaw};
pub use trig::{Term, TrigPolynomial};
