//! Random sensing matrices and measurements.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceMode {
    /// Entries with unit variance.
    Unit,
    /// Entries with variance `1/m`.
    OneOverM,
}

impl std::str::FromStr for VarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(VarianceMode::Unit),
            "one_over_m" | "1/m" => Ok(VarianceMode::OneOverM),
            other => Err(invalid(format!("unknown variance mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix<T: Scalar> {
    pub entries: DMatrix<T>,
    pub normalized: bool,
}

impl<T: Scalar> SensingMatrix<T> {
    pub fn new(entries: DMatrix<T>) -> Self {
        Self { entries, normalized: false }
    }

    pub fn identity(n: usize) -> Self {
        Self { entries: DMatrix::identity(n, n), normalized: true }
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.entries.ncols()
    }

    /// Rescales every column to unit norm. Columns already within 1e-12 of
    /// unit norm are left untouched, so repeating the call is a no-op.
    pub fn normalize(&mut self) {
        for mut col in self.entries.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 && (norm - 1.0).abs() > 1e-12 {
                col.unscale_mut(norm);
            }
        }
        self.normalized = true;
    }
}

/// i.i.d. zero-mean Gaussian matrix, drawn column by column.
pub fn gaussian_matrix<T: Scalar, R: Rng + ?Sized>(
    m: usize,
    n: usize,
    mode: VarianceMode,
    normalize: bool,
    rng: &mut R,
) -> SensingMatrix<T> {
    let var = match mode {
        VarianceMode::Unit => 1.0,
        VarianceMode::OneOverM => 1.0 / m as f64,
    };
    let mut entries = DMatrix::<T>::zeros(m, n);
    for j in 0..n {
        for i in 0..m {
            entries[(i, j)] = T::gaussian(rng, var);
        }
    }
    let mut phi = SensingMatrix::new(entries);
    if normalize {
        phi.normalize();
    }
    phi
}

#[derive(Debug, Clone, PartialEq)]
pub enum Noise<T: Scalar> {
    None,
    /// i.i.d. Gaussian entries with standard deviation `sigma`.
    Gaussian(f64),
    Fixed(DVector<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement<T: Scalar> {
    pub y: DVector<T>,
    /// Norm of the noise that was added.
    pub noise_bound: f64,
}

/// `y = Phi x + e`.
pub fn measure<T: Scalar, R: Rng + ?Sized>(
    phi: &SensingMatrix<T>,
    x: &DVector<T>,
    noise: &Noise<T>,
    rng: &mut R,
) -> Result<Measurement<T>> {
    if x.len() != phi.n() {
        return Err(Error::DimensionMismatch(format!("x has length {}, matrix has {} columns", x.len(), phi.n())));
    }
    let mut y = &phi.entries * x;
    let e = match noise {
        Noise::None => return Ok(Measurement { y, noise_bound: 0.0 }),
        Noise::Gaussian(sigma) => DVector::from_fn(phi.m(), |_, _| T::gaussian(rng, sigma * sigma)),
        Noise::Fixed(e) => {
            if e.len() != phi.m() {
                return Err(Error::DimensionMismatch(format!("noise has length {}, expected {}", e.len(), phi.m())));
            }
            e.clone()
        }
    };
    y += &e;
    Ok(Measurement { y, noise_bound: e.norm() })
}
