//! Least squares, incremental orthogonalization and Gram deviations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Columns `cols` of `phi` as a dense matrix.
pub fn select_columns<T: Scalar>(phi: &DMatrix<T>, cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(phi.nrows(), cols.len(), |i, j| phi[(i, cols[j])])
}

/// Relative threshold on the QR diagonal below which a column set is
/// treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// `argmin_u ||y - Phi_cols u||`, the minimum-norm minimizer when the
/// selected columns are linearly dependent.
pub fn least_squares_on<T: Scalar>(phi: &DMatrix<T>, cols: &[usize], y: &DVector<T>) -> Result<DVector<T>> {
    if cols.is_empty() {
        return Err(Error::EmptyColumns);
    }
    if y.len() != phi.nrows() {
        return Err(Error::DimensionMismatch(format!("y has length {}, matrix has {} rows", y.len(), phi.nrows())));
    }
    if let Some(&bad) = cols.iter().find(|&&c| c >= phi.ncols()) {
        return Err(Error::DimensionMismatch(format!("column {} out of range", bad + 1)));
    }
    let a = select_columns(phi, cols);
    let (m, s) = a.shape();
    if s <= m {
        let qr = a.clone().qr();
        let r = qr.r();
        let diag_max = (0..s).map(|i| r[(i, i)].modulus()).fold(0.0, f64::max);
        let full_rank = diag_max > 0.0 && (0..s).all(|i| r[(i, i)].modulus() > RANK_TOL * diag_max);
        if full_rank {
            let qty = qr.q().ad_mul(y);
            if let Some(u) = r.solve_upper_triangular(&qty) {
                return Ok(u);
            }
        }
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = (smax * RANK_TOL).max(f64::MIN_POSITIVE);
    svd.solve(y, eps).map_err(|e| Error::Domain(e.to_string()))
}

/// `Phi_cols^H r`.
pub fn correlate<T: Scalar>(phi: &DMatrix<T>, cols: &[usize], r: &DVector<T>) -> DVector<T> {
    DVector::from_fn(cols.len(), |j, _| phi.column(cols[j]).dotc(r))
}

/// Orthonormal basis grown one column at a time (modified Gram-Schmidt,
/// applied twice), with the running projection of a fixed right-hand side.
#[derive(Debug, Clone)]
pub struct IncrementalQr<T: Scalar> {
    q: Vec<DVector<T>>,
    /// Upper-triangular factor stored by columns.
    r: Vec<Vec<T>>,
    /// Columns accepted into the basis, in insertion order.
    cols: Vec<usize>,
    /// `Q^H y` for the accepted columns.
    qty: Vec<T>,
    residual: DVector<T>,
    skipped: usize,
}

impl<T: Scalar> IncrementalQr<T> {
    pub fn new(y: &DVector<T>) -> Self {
        Self { q: Vec::new(), r: Vec::new(), cols: Vec::new(), qty: Vec::new(), residual: y.clone(), skipped: 0 }
    }

    /// Adds column `j` of `phi`. Returns false when the column is
    /// numerically in the span of the current basis.
    pub fn push(&mut self, phi: &DMatrix<T>, j: usize) -> bool {
        let a = phi.column(j).clone_owned();
        let anorm = a.norm();
        let mut v = a;
        let mut coeffs = vec![T::zero(); self.q.len()];
        for _ in 0..2 {
            for (i, qi) in self.q.iter().enumerate() {
                let c = qi.dotc(&v);
                v.axpy(-c, qi, T::one());
                coeffs[i] += c;
            }
        }
        let vnorm = v.norm();
        if anorm == 0.0 || vnorm <= RANK_TOL * anorm {
            self.skipped += 1;
            return false;
        }
        v.unscale_mut(vnorm);
        coeffs.push(T::from_real(vnorm));
        let c = v.dotc(&self.residual);
        self.residual.axpy(-c, &v, T::one());
        // Second pass keeps the residual orthogonal to the new direction.
        let c2 = v.dotc(&self.residual);
        self.residual.axpy(-c2, &v, T::one());
        self.qty.push(c + c2);
        self.q.push(v);
        self.r.push(coeffs);
        self.cols.push(j);
        true
    }

    pub fn residual(&self) -> &DVector<T> {
        &self.residual
    }

    pub fn columns(&self) -> &[usize] {
        &self.cols
    }

    /// Number of columns rejected as dependent.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn rank(&self) -> usize {
        self.q.len()
    }

    /// Coefficients on the accepted columns, in insertion order.
    pub fn coefficients(&self) -> DVector<T> {
        let k = self.q.len();
        let mut u = DVector::<T>::zeros(k);
        for i in (0..k).rev() {
            let mut s = self.qty[i];
            for j in i + 1..k {
                s -= self.r[j][i] * u[j];
            }
            u[i] = s / self.r[i][i];
        }
        u
    }
}

/// Largest absolute eigenvalue of the Hermitian matrix `h`.
pub fn hermitian_spectral_radius<T: Scalar>(h: DMatrix<T>) -> f64 {
    if h.nrows() == 0 {
        return 0.0;
    }
    h.symmetric_eigenvalues().iter().fold(0.0, |acc: f64, &v| acc.max(v.abs()))
}

/// `||Phi_S^H Phi_S - I||_2`.
pub fn operator_norm_dev<T: Scalar>(phi: &DMatrix<T>, cols: &[usize]) -> Result<f64> {
    if cols.is_empty() {
        return Err(Error::EmptyColumns);
    }
    let a = select_columns(phi, cols);
    let mut g = a.ad_mul(&a);
    for i in 0..cols.len() {
        g[(i, i)] -= T::one();
    }
    Ok(hermitian_spectral_radius(g))
}

/// `||G_S - I||_2` from a precomputed Gram matrix `G = Phi^H Phi`.
pub fn gram_dev<T: Scalar>(gram: &DMatrix<T>, cols: &[usize]) -> f64 {
    let s = cols.len();
    let mut g = DMatrix::<T>::from_fn(s, s, |i, j| gram[(cols[i], cols[j])]);
    for i in 0..s {
        g[(i, i)] -= T::one();
    }
    hermitian_spectral_radius(g)
}

/// `P_perp v`: the component of `v` orthogonal to the span of `Phi_cols`.
pub fn project_out<T: Scalar>(phi: &DMatrix<T>, cols: &[usize], v: &DVector<T>) -> Result<DVector<T>> {
    if cols.is_empty() {
        return Ok(v.clone());
    }
    let u = least_squares_on(phi, cols, v)?;
    let a = select_columns(phi, cols);
    Ok(v - a * u)
}
