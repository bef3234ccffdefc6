//! Two-stage generalized block OMP and the block OMP baseline.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg::{least_squares_on, IncrementalQr};
use crate::scalar::Scalar;
use crate::signal::SignalInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    ResidualThreshold,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopReason::Budget => write!(f, "budget"),
            StopReason::ResidualThreshold => write!(f, "residual-threshold"),
        }
    }
}

/// One greedy iteration. Indices are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep<T: Scalar> {
    pub k: usize,
    /// Selected window (TSGBOMP) or partition block (BOMP).
    pub window: usize,
    /// First column of the selected cluster.
    pub start: usize,
    /// Block starts added to the selection.
    pub block_starts: Vec<usize>,
    /// Number of distinct columns selected after this step.
    pub columns: usize,
    pub residual_norm: f64,
    /// Residual after this step, when requested.
    pub residual: Option<DVector<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult<T: Scalar> {
    /// Sorted, duplicate-free selected columns.
    pub estimated_columns: Vec<usize>,
    pub x_hat: DVector<T>,
    pub trace: Vec<TraceStep<T>>,
    pub iterations: usize,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsgbompConfig {
    /// Iteration budget.
    pub k: usize,
    /// Window length `L`.
    pub window: usize,
    pub b: usize,
    pub p: usize,
    /// Residual threshold.
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BompConfig {
    pub k: usize,
    /// Fixed partition block length.
    pub block: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RecoveryOptions {
    /// Keep a copy of the residual in every trace step.
    pub record_residuals: bool,
}

/// Least-squares state shared by both greedy solvers.
struct Greedy<'a, T: Scalar> {
    phi: &'a DMatrix<T>,
    y: &'a DVector<T>,
    qr: IncrementalQr<T>,
    selected: BTreeSet<usize>,
    trace: Vec<TraceStep<T>>,
    opts: RecoveryOptions,
}

impl<'a, T: Scalar> Greedy<'a, T> {
    fn new(phi: &'a DMatrix<T>, y: &'a DVector<T>, opts: RecoveryOptions) -> Result<Self> {
        if y.len() != phi.nrows() {
            return Err(Error::DimensionMismatch(format!("y has length {}, matrix has {} rows", y.len(), phi.nrows())));
        }
        Ok(Self { phi, y, qr: IncrementalQr::new(y), selected: BTreeSet::new(), trace: Vec::new(), opts })
    }

    fn residual_norm(&self) -> f64 {
        self.qr.residual().norm()
    }

    /// Squared correlations `|phi_j^H r|^2` for every column.
    fn energies(&self) -> Vec<f64> {
        let c = self.phi.ad_mul(self.qr.residual());
        c.iter().map(|v| v.modulus_squared()).collect()
    }

    fn add(&mut self, window: usize, start: usize, block_starts: Vec<usize>, cols: std::ops::Range<usize>) {
        for j in cols {
            if self.selected.insert(j) {
                self.qr.push(self.phi, j);
            }
        }
        let residual_norm = self.residual_norm();
        let residual = self.opts.record_residuals.then(|| self.qr.residual().clone());
        let k = self.trace.len() + 1;
        self.trace.push(TraceStep { k, window, start, block_starts, columns: self.selected.len(), residual_norm, residual });
    }

    fn finish(self, epsilon: f64) -> Result<RecoveryResult<T>> {
        let n = self.phi.ncols();
        let estimated_columns: Vec<usize> = self.selected.iter().copied().collect();
        let mut x_hat = DVector::<T>::zeros(n);
        if !estimated_columns.is_empty() {
            if self.qr.skipped() == 0 {
                let u = self.qr.coefficients();
                for (&j, &v) in self.qr.columns().iter().zip(u.iter()) {
                    x_hat[j] = v;
                }
            } else {
                let u = least_squares_on(self.phi, &estimated_columns, self.y)?;
                for (&j, &v) in estimated_columns.iter().zip(u.iter()) {
                    x_hat[j] = v;
                }
            }
        }
        let stop_reason =
            if self.residual_norm() < epsilon { StopReason::ResidualThreshold } else { StopReason::Budget };
        Ok(RecoveryResult { estimated_columns, x_hat, iterations: self.trace.len(), trace: self.trace, stop_reason })
    }
}

fn argmax_first(values: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((i, v));
        }
    }
    best
}

/// Candidate cluster starts for window `w` (0-based), clamped so every
/// candidate cluster lies inside the signal.
pub fn candidate_range(w: usize, window: usize, capacity: usize, n: usize) -> std::ops::RangeInclusive<usize> {
    let lo = (window * w).saturating_sub(capacity - 1);
    let hi = (window * w + window - 1).min(n - capacity);
    lo.min(hi)..=hi
}

pub fn tsgbomp<T: Scalar>(phi: &DMatrix<T>, y: &DVector<T>, cfg: &TsgbompConfig) -> Result<RecoveryResult<T>> {
    tsgbomp_with(phi, y, cfg, RecoveryOptions::default())
}

pub fn tsgbomp_with<T: Scalar>(
    phi: &DMatrix<T>,
    y: &DVector<T>,
    cfg: &TsgbompConfig,
    opts: RecoveryOptions,
) -> Result<RecoveryResult<T>> {
    let n = phi.ncols();
    let TsgbompConfig { k: budget, window, b, p, epsilon } = *cfg;
    if window == 0 || b == 0 || p == 0 {
        return Err(invalid("window, b and p must be at least 1"));
    }
    if n % window != 0 {
        return Err(Error::NotDivisible { n, by: window });
    }
    let capacity = p * b;
    if window < capacity {
        return Err(invalid(format!("window length {window} is shorter than the cluster capacity {capacity}")));
    }
    let mut g = Greedy::new(phi, y, opts)?;
    let windows = n / window;
    while g.residual_norm() >= epsilon && g.trace.len() < budget {
        let e = g.energies();
        // Stage 1: the window with the largest correlation energy.
        let (w, _) = argmax_first((0..windows).map(|l| e[l * window..(l + 1) * window].iter().sum()))
            .expect("at least one window");
        // Stage 2: the cluster start in the window's candidate range.
        let range = candidate_range(w, window, capacity, n);
        let lo = *range.start();
        let (off, _) = argmax_first(range.map(|i| e[i..i + capacity].iter().sum())).expect("nonempty range");
        let start = lo + off;
        let block_starts = (0..p).map(|t| start + t * b).collect();
        g.add(w, start, block_starts, start..start + capacity);
    }
    g.finish(epsilon)
}

pub fn bomp<T: Scalar>(phi: &DMatrix<T>, y: &DVector<T>, cfg: &BompConfig) -> Result<RecoveryResult<T>> {
    bomp_with(phi, y, cfg, RecoveryOptions::default())
}

pub fn bomp_with<T: Scalar>(
    phi: &DMatrix<T>,
    y: &DVector<T>,
    cfg: &BompConfig,
    opts: RecoveryOptions,
) -> Result<RecoveryResult<T>> {
    let n = phi.ncols();
    let BompConfig { k: budget, block, epsilon } = *cfg;
    if block == 0 {
        return Err(invalid("block length must be at least 1"));
    }
    if n % block != 0 {
        return Err(Error::NotDivisible { n, by: block });
    }
    let mut g = Greedy::new(phi, y, opts)?;
    while g.residual_norm() >= epsilon && g.trace.len() < budget {
        let e = g.energies();
        let (blk, _) =
            argmax_first((0..n / block).map(|l| e[l * block..(l + 1) * block].iter().sum())).expect("one block");
        let start = blk * block;
        g.add(blk, start, vec![start], start..start + block);
    }
    g.finish(epsilon)
}

/// Support containment plus relative error: every nonzero of the truth is
/// selected and `||x_hat - x|| <= rel_tol ||x||`.
pub fn success_check<T: Scalar>(result: &RecoveryResult<T>, truth: &SignalInstance<T>, rel_tol: f64) -> bool {
    success_against(result, &truth.x, rel_tol)
}

pub fn success_against<T: Scalar>(result: &RecoveryResult<T>, x: &DVector<T>, rel_tol: f64) -> bool {
    if result.x_hat.len() != x.len() {
        return false;
    }
    let contained = x
        .iter()
        .enumerate()
        .filter(|(_, v)| v.modulus() != 0.0)
        .all(|(j, _)| result.estimated_columns.binary_search(&j).is_ok());
    contained && (&result.x_hat - x).norm() <= rel_tol * x.norm()
}

/// Human-readable trace table and estimated support, 1-based.
pub fn report_text<T: Scalar>(result: &RecoveryResult<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>4} {:>7} {:>7} {:>8} {:>14}  block starts", "k", "window", "start", "columns", "residual");
    for s in &result.trace {
        let starts: Vec<String> = s.block_starts.iter().map(|v| (v + 1).to_string()).collect();
        let _ = writeln!(
            out,
            "{:>4} {:>7} {:>7} {:>8} {:>14.6e}  {}",
            s.k,
            s.window + 1,
            s.start + 1,
            s.columns,
            s.residual_norm,
            starts.join(" ")
        );
    }
    let cols: Vec<String> = result.estimated_columns.iter().map(|v| (v + 1).to_string()).collect();
    let _ = writeln!(out, "iterations: {}", result.iterations);
    let _ = writeln!(out, "stop: {}", result.stop_reason);
    let _ = writeln!(out, "estimated support: {}", cols.join(" "));
    out
}

/// Trace as CSV with header `k,window,start,block_starts,columns,residual_norm`.
pub fn trace_csv<T: Scalar>(result: &RecoveryResult<T>) -> String {
    let mut out = String::from("k,window,start,block_starts,columns,residual_norm\n");
    for s in &result.trace {
        let starts: Vec<String> = s.block_starts.iter().map(|v| (v + 1).to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.k,
            s.window + 1,
            s.start + 1,
            starts.join(";"),
            s.columns,
            s.residual_norm
        );
    }
    out
}
