//! Scalar fields the solvers run over: `f64` and `Complex64`.

use nalgebra::ComplexField;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Real or complex entry type. The real case is the specialization where
/// conjugation is the identity.
pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync + 'static {
    const IS_COMPLEX: bool;

    /// Zero-mean Gaussian with `E|z|^2 = var`. Complex draws split the
    /// variance evenly between the real and imaginary parts.
    fn gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Self;

    fn from_parts(re: f64, im: f64) -> Self;

    fn re(self) -> f64;

    fn im(self) -> f64;
}

impl Scalar for f64 {
    const IS_COMPLEX: bool = false;

    fn gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Self {
        let z: f64 = StandardNormal.sample(rng);
        z * var.sqrt()
    }

    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }

    fn re(self) -> f64 {
        self
    }

    fn im(self) -> f64 {
        0.0
    }
}

impl Scalar for Complex64 {
    const IS_COMPLEX: bool = true;

    fn gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Self {
        let s = (var / 2.0).sqrt();
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        Complex64::new(a * s, b * s)
    }

    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }

    fn re(self) -> f64 {
        self.re
    }

    fn im(self) -> f64 {
        self.im
    }
}

/// Field selector used by reports and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Real,
    Complex,
}

impl std::fmt::Display for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Field::Real => write!(f, "real"),
            Field::Complex => write!(f, "complex"),
        }
    }
}

impl std::str::FromStr for Field {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "real" => Ok(Field::Real),
            "complex" => Ok(Field::Complex),
            other => Err(crate::error::invalid(format!("unknown field '{other}'"))),
        }
    }
}
