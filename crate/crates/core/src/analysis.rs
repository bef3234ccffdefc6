//! Restricted isometry constants over PIBS supports, executable versions of
//! the supporting inequalities, and the recovery and probability bounds.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::{gram_dev, hermitian_spectral_radius, select_columns};
use crate::scalar::{Field, Scalar};
use crate::signal::{count_union, Enumerator, Item, PibsParams, Support, SupportSampler, SupportView};

/// Largest deviation over one class `Sigma(k, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMax {
    pub max: f64,
    pub argmax: Option<Support>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RicEstimate {
    pub delta: f64,
    pub argmax_support: Support,
    pub supports_scanned: u64,
}

/// Exact per-class maxima of `||G_S - I||` for every `Sigma(k, r)`,
/// `k <= k_max`, `r <= r_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct RicTable {
    pub params: PibsParams,
    pub k_max: usize,
    pub r_max: usize,
    /// Indexed `[k][r]`.
    pub classes: Vec<Vec<ClassMax>>,
}

impl RicTable {
    /// The constant of order `(k, r)`: the maximum over the union of all
    /// classes with at most `k` blocks and `r` pseudo blocks. Ties go to the
    /// support visited first.
    pub fn delta(&self, k: usize, r: usize) -> RicEstimate {
        assert!(k <= self.k_max && r <= self.r_max, "order ({k},{r}) outside the table");
        let mut best = RicEstimate { delta: 0.0, argmax_support: Support::empty(), supports_scanned: 0 };
        let mut best_key: Option<Vec<(usize, u8, usize)>> = None;
        for kk in 0..=k {
            for rr in 0..=r {
                let c = &self.classes[kk][rr];
                best.supports_scanned += c.count;
                let Some(s) = &c.argmax else { continue };
                let key = visit_key(s);
                let better = c.max > best.delta
                    || (c.max == best.delta && best_key.as_ref().is_none_or(|bk| key < *bk));
                if better {
                    best.delta = c.max;
                    best.argmax_support = s.clone();
                    best_key = Some(key);
                }
            }
        }
        best
    }
}

/// Sort key reproducing the enumeration's visiting order.
fn visit_key(s: &Support) -> Vec<(usize, u8, usize)> {
    let mut items: Vec<(usize, u8, usize)> = s
        .clusters()
        .iter()
        .map(|c| (c.start, 0u8, c.blocks))
        .chain(s.pseudo().iter().map(|&p| (p, 1u8, 0)))
        .collect();
    items.sort();
    items
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RicOptions {
    pub jobs: usize,
    /// Maximum number of supports to scan.
    pub cap: u64,
}

impl Default for RicOptions {
    fn default() -> Self {
        Self { jobs: 1, cap: 1_000_000 }
    }
}

/// Cholesky test for positive definiteness of a Hermitian matrix stored
/// column-major in `a`. Overwrites `a`.
fn positive_definite<T: Scalar>(a: &mut [T], s: usize) -> bool {
    for j in 0..s {
        let mut d = a[j * s + j].real();
        for k in 0..j {
            d -= a[k * s + j].modulus_squared();
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * s + j] = T::from_real(d);
        for i in j + 1..s {
            let mut v = a[j * s + i];
            for k in 0..j {
                v -= a[k * s + i] * a[k * s + j].conjugate();
            }
            a[j * s + i] = v.unscale(d);
        }
    }
    true
}

struct Scan<'a, T: Scalar> {
    gram: &'a DMatrix<T>,
    params: PibsParams,
    r_max: usize,
    classes: Vec<ClassMax>,
    buf: Vec<T>,
}

impl<T: Scalar> Scan<'_, T> {
    fn class(&self, k: usize, r: usize) -> usize {
        k * (self.r_max + 1) + r
    }

    /// True when `||G_S - I|| < t` is certified by two factorizations.
    fn below(&mut self, cols: &[usize], t: f64) -> bool {
        let s = cols.len();
        self.buf.resize(s * s, T::zero());
        for sign in [1.0, -1.0] {
            // sign = 1: (1+t)I - G, sign = -1: G - (1-t)I
            for j in 0..s {
                for i in 0..s {
                    let g = self.gram[(cols[i], cols[j])];
                    self.buf[j * s + i] = if sign > 0.0 { -g } else { g };
                }
                let shift = if sign > 0.0 { 1.0 + t } else { t - 1.0 };
                self.buf[j * s + j] += T::from_real(shift);
            }
            let mut buf = std::mem::take(&mut self.buf);
            let pd = positive_definite(&mut buf, s);
            self.buf = buf;
            if !pd {
                return false;
            }
        }
        true
    }

    fn visit(&mut self, v: &SupportView<'_>) {
        let idx = self.class(v.blocks, v.pseudo.len());
        self.classes[idx].count += 1;
        let current = self.classes[idx].argmax.as_ref().map(|_| self.classes[idx].max);
        if v.columns.is_empty() {
            if current.is_none() {
                self.classes[idx].max = 0.0;
                self.classes[idx].argmax = Some(Support::empty());
            }
            return;
        }
        if let Some(t) = current {
            if self.below(v.columns, t) {
                return;
            }
        }
        let d = gram_dev(self.gram, v.columns);
        if current.is_none_or(|t| d > t) {
            self.classes[idx].max = d;
            self.classes[idx].argmax = Some(v.to_support(self.params.b, self.params.l));
        }
    }
}

fn empty_classes(k_max: usize, r_max: usize) -> Vec<ClassMax> {
    vec![ClassMax { max: 0.0, argmax: None, count: 0 }; (k_max + 1) * (r_max + 1)]
}

/// Per-class maxima from a precomputed Gram matrix `Phi^H Phi`.
pub fn pibric_table_gram<T: Scalar>(
    gram: &DMatrix<T>,
    params: &PibsParams,
    k_max: usize,
    r_max: usize,
    opts: RicOptions,
) -> Result<RicTable> {
    if gram.ncols() != params.n {
        return Err(Error::DimensionMismatch(format!("matrix has {} columns, params say n = {}", gram.ncols(), params.n)));
    }
    let total = count_union(params, k_max, r_max);
    if total > BigUint::from(opts.cap) {
        return Err(Error::CapExceeded { count: total.to_string(), cap: opts.cap });
    }
    let en = Enumerator::new(params, k_max, r_max);
    let fresh = || Scan { gram, params: *params, r_max, classes: empty_classes(k_max, r_max), buf: Vec::new() };

    // The empty support is its own branch, ahead of every first item.
    let mut head = fresh();
    head.visit(&SupportView { clusters: &[], pseudo: &[], columns: &[], blocks: 0 });
    let branches: Vec<Item> = en.first_items();
    let run = |item: &Item| {
        let mut scan = fresh();
        en.walk_from(*item, |v| scan.visit(v));
        scan.classes
    };
    let parts: Vec<Vec<ClassMax>> = if opts.jobs <= 1 {
        branches.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| invalid(format!("thread pool: {e}")))?;
        pool.install(|| branches.par_iter().map(run).collect())
    };
    let mut merged = head.classes;
    for part in parts {
        for (m, c) in merged.iter_mut().zip(part) {
            m.count += c.count;
            if let Some(s) = c.argmax {
                if m.argmax.is_none() || c.max > m.max {
                    m.max = c.max;
                    m.argmax = Some(s);
                }
            }
        }
    }
    let classes = merged.chunks(r_max + 1).map(|c| c.to_vec()).collect();
    Ok(RicTable { params: *params, k_max, r_max, classes })
}

pub fn gram<T: Scalar>(phi: &DMatrix<T>) -> DMatrix<T> {
    phi.ad_mul(phi)
}

pub fn pibric_table<T: Scalar>(
    phi: &DMatrix<T>,
    params: &PibsParams,
    k_max: usize,
    r_max: usize,
    opts: RicOptions,
) -> Result<RicTable> {
    pibric_table_gram(&gram(phi), params, k_max, r_max, opts)
}

/// Brute-force constant `delta_{b,p,l,lsep}(k, r)`.
pub fn pibric<T: Scalar>(phi: &DMatrix<T>, params: &PibsParams, k: usize, r: usize, opts: RicOptions) -> Result<RicEstimate> {
    Ok(pibric_table(phi, params, k, r, opts)?.delta(k, r))
}

/// Conventional restricted isometry constant of order `s`: the maximum
/// over every column subset of size `s` (smaller subsets are dominated).
pub fn classical_ric<T: Scalar>(phi: &DMatrix<T>, s: usize) -> f64 {
    let n = phi.ncols();
    if s == 0 || s > n {
        return 0.0;
    }
    let g = gram(phi);
    let mut idx: Vec<usize> = (0..s).collect();
    let mut best = 0.0f64;
    loop {
        best = best.max(gram_dev(&g, &idx));
        let mut i = s;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < n - s + i {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..s {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Lemma checks

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaCheck {
    pub lemma: u8,
    pub description: String,
    pub instances: u64,
    pub violations: u64,
    /// Smallest `rhs - lhs` seen; negative means the inequality failed.
    pub worst_margin: f64,
    pub skipped: bool,
    pub note: String,
}

impl LemmaCheck {
    fn new(lemma: u8, description: impl Into<String>) -> Self {
        Self {
            lemma,
            description: description.into(),
            instances: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            skipped: false,
            note: String::new(),
        }
    }

    /// Records `lhs <= rhs` with absolute slack.
    fn record(&mut self, lhs: f64, rhs: f64, slack: f64) {
        self.instances += 1;
        let margin = rhs - lhs;
        if margin < self.worst_margin {
            self.worst_margin = margin;
        }
        if margin < -slack {
            self.violations += 1;
        }
    }

    fn skip(&mut self, why: impl Into<String>) {
        self.skipped = true;
        self.note = why.into();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    pub checks: Vec<LemmaCheck>,
    /// Constants computed along the way: (label, value).
    pub constants: Vec<(String, f64)>,
}

impl LemmaReport {
    pub fn violations(&self) -> u64 {
        self.checks.iter().map(|c| c.violations).sum()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (label, v) in &self.constants {
            let _ = writeln!(out, "{label} = {v:.12}");
        }
        for c in &self.checks {
            let status = if c.skipped {
                "skipped"
            } else if c.violations == 0 {
                "pass"
            } else {
                "FAIL"
            };
            let _ = writeln!(
                out,
                "lemma {} {:<8} instances={} violations={} worst_margin={:.3e} {}{}",
                c.lemma,
                status,
                c.instances,
                c.violations,
                c.worst_margin,
                c.description,
                if c.note.is_empty() { String::new() } else { format!(" ({})", c.note) }
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lemma,description,instances,violations,worst_margin,skipped\n");
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.lemma,
                c.description.replace(',', ";"),
                c.instances,
                c.violations,
                c.worst_margin,
                c.skipped
            );
        }
        out
    }

    pub fn merge(&mut self, other: &LemmaReport) {
        for c in &other.checks {
            if let Some(mine) = self.checks.iter_mut().find(|m| m.lemma == c.lemma && m.description == c.description) {
                mine.instances += c.instances;
                mine.violations += c.violations;
                mine.worst_margin = mine.worst_margin.min(c.worst_margin);
                mine.skipped &= c.skipped;
            } else {
                self.checks.push(c.clone());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaOptions {
    /// Pseudo-block lengths below the separation compared against it.
    pub shorter_lengths: Vec<usize>,
    /// Supports drawn per class for the vector-valued checks.
    pub sampled_supports: usize,
    /// Random vectors per support for the plain sandwich.
    pub sandwich_vectors: usize,
    /// Random vectors per split for the projected sandwich.
    pub projected_vectors: usize,
    /// Random (split, u, v) draws per projection set for the inner-product bound.
    pub inner_draws: usize,
    pub slack: f64,
    pub seed: u64,
    pub ric: RicOptions,
}

impl Default for LemmaOptions {
    fn default() -> Self {
        Self {
            shorter_lengths: Vec::new(),
            sampled_supports: 4,
            sandwich_vectors: 50,
            projected_vectors: 20,
            inner_draws: 100,
            slack: 1e-10,
            seed: 0,
            ric: RicOptions::default(),
        }
    }
}

fn random_unit<T: Scalar, R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<T> {
    loop {
        let v = DVector::<T>::from_fn(len, |_, _| T::gaussian(rng, 1.0));
        let n = v.norm();
        if n > 0.0 {
            return v.unscale(n);
        }
    }
}

/// Orthonormal basis of the span of `Phi_cols` (modified Gram-Schmidt,
/// twice), dropping numerically dependent columns.
fn basis<T: Scalar>(phi: &DMatrix<T>, cols: &[usize]) -> Vec<DVector<T>> {
    let mut q: Vec<DVector<T>> = Vec::with_capacity(cols.len());
    for &c in cols {
        let a = phi.column(c).clone_owned();
        let anorm = a.norm();
        let mut v = a;
        for _ in 0..2 {
            for qi in &q {
                let d = qi.dotc(&v);
                v.axpy(-d, qi, T::one());
            }
        }
        let vn = v.norm();
        if vn > 1e-10 * anorm {
            q.push(v.unscale(vn));
        }
    }
    q
}

fn project_perp<T: Scalar>(q: &[DVector<T>], v: &DVector<T>) -> DVector<T> {
    let mut v = v.clone();
    for _ in 0..2 {
        for qi in q {
            let d = qi.dotc(&v);
            v.axpy(-d, qi, T::one());
        }
    }
    v
}

/// Block starts inside the clusters of a support.
fn block_starts(s: &Support, b: usize) -> Vec<usize> {
    s.clusters().iter().flat_map(|c| (0..c.blocks).map(move |t| c.start + t * b)).collect()
}

fn subsets<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    (0..1usize << items.len())
        .map(|mask| items.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, v)| v.clone()).collect())
        .collect()
}

/// Representative supports per class: the argmax plus uniform draws.
fn sample_supports<R: Rng + ?Sized>(table: &RicTable, per_class: usize, rng: &mut R) -> Vec<(usize, usize, Support)> {
    let mut out = Vec::new();
    for k in 0..=table.k_max {
        for r in 0..=table.r_max {
            let c = &table.classes[k][r];
            let Some(arg) = &c.argmax else { continue };
            out.push((k, r, arg.clone()));
            if let Ok(sampler) = SupportSampler::new(&table.params, k, r) {
                for _ in 0..per_class {
                    out.push((k, r, sampler.sample(rng)));
                }
            }
        }
    }
    out
}

/// Checks the supporting inequalities on one matrix.
///
/// `params` supplies `b`, `p`, the separation and the budgets `K = params.k`,
/// `R = params.r`; its pseudo-block length is ignored. Constants are computed
/// exhaustively; vector-valued inequalities are instantiated on each class's
/// maximizing support plus `sampled_supports` uniform draws per class.
pub fn verify_lemmas<T: Scalar>(phi: &DMatrix<T>, params: &PibsParams, opts: &LemmaOptions) -> Result<LemmaReport> {
    let (k_max, r_max, lsep, b) = (params.k, params.r, params.lsep, params.b);
    let slack = opts.slack;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let g = gram(phi);
    let at_len = |l: usize| params.with_pseudo_len(l);
    let full = pibric_table_gram(&g, &at_len(lsep)?, k_max, r_max, opts.ric)?;
    let mut constants = Vec::new();
    for k in 0..=k_max {
        for r in 0..=r_max {
            constants.push((format!("delta[l={lsep}]({k},{r})"), full.delta(k, r).delta));
        }
    }
    let mut checks = Vec::new();

    // Lemma 1: sandwich for vectors on the supports.
    let mut l1 = LemmaCheck::new(1, "(1-d)|x|^2 <= |Phi x|^2 <= (1+d)|x|^2");
    let reps = sample_supports(&full, opts.sampled_supports, &mut rng);
    for (k, r, s) in &reps {
        if s.is_empty() {
            continue;
        }
        for (kk, rr) in [(*k, *r), (k_max, r_max)] {
            let d = full.delta(kk, rr).delta;
            let a = select_columns(phi, s.columns());
            for _ in 0..opts.sandwich_vectors {
                let x = random_unit::<T, _>(s.columns().len(), &mut rng);
                let e = (&a * &x).norm_squared();
                l1.record(1.0 - d, e, slack);
                l1.record(e, 1.0 + d, slack);
            }
        }
    }
    checks.push(l1);

    // Lemma 2: monotonicity in both orders, for every pseudo-block length.
    let mut tables = vec![(lsep, full.clone())];
    let mut lengths = opts.shorter_lengths.clone();
    lengths.sort_unstable();
    lengths.dedup();
    for &l in &lengths {
        if l >= lsep {
            return Err(invalid(format!("shorter pseudo length {l} is not below the separation {lsep}")));
        }
        tables.push((l, pibric_table_gram(&g, &at_len(l)?, k_max, r_max, opts.ric)?));
    }
    let mut l2 = LemmaCheck::new(2, "delta nondecreasing in K and in R");
    for (_, t) in &tables {
        for k in 0..=k_max {
            for r in 0..=r_max {
                let d = t.delta(k, r).delta;
                if k < k_max {
                    l2.record(d, t.delta(k + 1, r).delta, 0.0);
                }
                if r < r_max {
                    l2.record(d, t.delta(k, r + 1).delta, 0.0);
                }
            }
        }
    }
    checks.push(l2);

    // Lemma 3: shorter pseudo blocks never raise the constant (R <= 2).
    let mut l3 = LemmaCheck::new(3, "delta_{l,L'}(K,R) <= delta_{L',L'}(K,R) for l < L'");
    for (l, t) in tables.iter().skip(1) {
        for k in 0..=k_max {
            for r in 0..=r_max.min(2) {
                let lhs = t.delta(k, r).delta;
                constants.push((format!("delta[l={l}]({k},{r})"), lhs));
                l3.record(lhs, full.delta(k, r).delta, 0.0);
            }
        }
    }
    if lengths.is_empty() {
        l3.skip("no shorter pseudo-block lengths requested");
    }
    checks.push(l3);

    // Lemma 4: one pseudo block more and one true block less dominates.
    let mut l4 = LemmaCheck::new(4, "delta_{L',L'}(K,1) <= delta_{L',L'}(K-1,2)");
    if r_max >= 2 {
        for k in 1..=k_max {
            l4.record(full.delta(k, 1).delta, full.delta(k - 1, 2).delta, 0.0);
        }
    } else {
        l4.skip("needs R >= 2");
    }
    checks.push(l4);

    // Lemmas 5 and 6: projections away from subsets of true blocks.
    let mut l5 = LemmaCheck::new(5, "(1-d)|x|^2 <= |P_perp Phi_S2 x|^2 <= (1+d)|x|^2");
    let mut l6 = LemmaCheck::new(6, "|<P_perp Phi u, Phi v>| <= d |u||v|");
    // Each support is checked against the constant of its own order; when
    // that constant is 1 or more the lower bound is vacuous but still recorded.
    let mut vacuous = 0u64;
    {
        for (k, r, s) in &reps {
            let d_full = full.delta(*k, *r).delta;
            if d_full >= 1.0 {
                vacuous += 1;
            }
            let starts = block_starts(s, b);
            for s1 in subsets(&starts) {
                let i_s1: Vec<usize> = s1.iter().flat_map(|&st| st..st + b).collect();
                let s2: Vec<usize> = s.columns().iter().copied().filter(|c| !i_s1.contains(c)).collect();
                if s2.is_empty() {
                    continue;
                }
                let q = basis(phi, &i_s1);
                let a2 = select_columns(phi, &s2);
                for _ in 0..opts.projected_vectors {
                    let x = random_unit::<T, _>(s2.len(), &mut rng);
                    let e = project_perp(&q, &(&a2 * &x)).norm_squared();
                    l5.record(1.0 - d_full, e, slack);
                    l5.record(e, 1.0 + d_full, slack);
                }
                if s2.len() < 2 {
                    continue;
                }
                for _ in 0..opts.inner_draws {
                    let mut cols = s2.clone();
                    cols.shuffle(&mut rng);
                    let cut = rng.random_range(1..cols.len());
                    let (c2, c3) = cols.split_at(cut);
                    let u = random_unit::<T, _>(c2.len(), &mut rng);
                    let v = random_unit::<T, _>(c3.len(), &mut rng);
                    let pu = project_perp(&q, &(select_columns(phi, c2) * u));
                    let pv = select_columns(phi, c3) * v;
                    l6.record(pv.dotc(&pu).modulus(), d_full, slack);
                }
            }
        }
    }
    if vacuous > 0 {
        l5.note = format!("{vacuous} supports with delta >= 1");
    }
    checks.push(l5);
    checks.push(l6);

    // Lemma 7: projected columns keep a guaranteed norm. Exhaustive over
    // cluster-only supports of each size k whose constant is below 1, and
    // over all columns outside them.
    let mut l7 = LemmaCheck::new(7, "|P_perp phi_j| >= sqrt(1 - delta_{1,L'}(k,1)^2)");
    if r_max >= 1 {
        let unit = pibric_table_gram(&g, &at_len(1.min(lsep))?, k_max, 1, opts.ric)?;
        let clusters_only = params.with_pseudo_len(0)?;
        let mut too_large = Vec::new();
        for k in 1..=k_max {
            let d1 = unit.delta(k, 1).delta;
            constants.push((format!("delta[l=1]({k},1)"), d1));
            if d1 >= 1.0 {
                too_large.push(k);
                continue;
            }
            let bound = (1.0 - d1 * d1).sqrt();
            let mut supports = Vec::new();
            Enumerator::new(&clusters_only, k, 0).walk(|v| {
                if v.blocks == k {
                    supports.push(v.columns.to_vec())
                }
            });
            for cols in supports {
                let q = basis(phi, &cols);
                for j in 0..phi.ncols() {
                    if cols.binary_search(&j).is_ok() {
                        continue;
                    }
                    let pj = project_perp(&q, &phi.column(j).clone_owned());
                    l7.record(bound, pj.norm(), slack);
                }
            }
        }
        if too_large.len() == k_max {
            l7.skip("delta >= 1 for every block count");
        } else if !too_large.is_empty() {
            l7.note = format!("block counts {too_large:?} skipped, delta >= 1");
        }
    } else {
        l7.skip("needs R >= 1");
    }
    checks.push(l7);

    Ok(LemmaReport { checks, constants })
}

// ---------------------------------------------------------------------------
// Real part of a normalized sum

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealPartCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub real_ratio: bool,
    pub ok: bool,
}

/// `Re((z+w)/|z+w| * conj(z)) >= |z| sqrt(1 - |w/z|^2)`, with equality to
/// `|z|` when `w/z` is real.
pub fn real_part_lower_bound_check(z: Complex64, w: Complex64) -> Result<RealPartCheck> {
    if z.norm() == 0.0 {
        return Err(Error::Domain("z must be nonzero".into()));
    }
    let v = w / z;
    if v.norm() >= 1.0 {
        return Err(Error::Domain(format!("|w/z| = {} is not below 1", v.norm())));
    }
    let s = z + w;
    let lhs = (s / s.norm() * z.conj()).re;
    let rhs = z.norm() * (1.0 - v.norm_sqr()).sqrt();
    let real_ratio = v.im.abs() <= 1e-15 * v.norm().max(f64::MIN_POSITIVE) || v.im == 0.0;
    let tol = 1e-12 * z.norm().max(1.0);
    let mut ok = lhs >= rhs - tol;
    if real_ratio {
        ok &= (lhs - z.norm()).abs() <= tol;
    }
    Ok(RealPartCheck { lhs, rhs, real_ratio, ok })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealPartSuite {
    pub trials: u64,
    pub failures: u64,
    pub real_trials: u64,
    pub real_failures: u64,
    /// Largest `|lhs - |z||` over the real-ratio draws.
    pub worst_equality_gap: f64,
}

/// Random complex draws with `|w/z| < 1`; one in four uses a real ratio.
pub fn real_part_suite<R: Rng + ?Sized>(trials: u64, rng: &mut R) -> RealPartSuite {
    let mut out = RealPartSuite { trials, failures: 0, real_trials: 0, real_failures: 0, worst_equality_gap: 0.0 };
    for t in 0..trials {
        let z = Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)) * 3.0;
        if z.norm() == 0.0 {
            continue;
        }
        let radius: f64 = rng.random::<f64>() * 0.999;
        let real = t % 4 == 0;
        let v = if real {
            Complex64::new(if rng.random::<bool>() { radius } else { -radius }, 0.0)
        } else {
            Complex64::from_polar(radius, rng.random::<f64>() * 2.0 * PI)
        };
        let w = z * v;
        match real_part_lower_bound_check(z, w) {
            Ok(c) => {
                if !c.ok {
                    out.failures += 1;
                }
                if real {
                    out.real_trials += 1;
                    if !c.ok || !c.real_ratio {
                        out.real_failures += 1;
                    }
                    out.worst_equality_gap = out.worst_equality_gap.max((c.lhs - z.norm()).abs());
                }
            }
            Err(_) => out.failures += 1,
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Recovery condition

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryCertificate {
    pub delta_used: f64,
    pub k: usize,
    pub b: usize,
    pub p: usize,
    pub bprime: usize,
    pub epsilon: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub field: Field,
    /// `delta < 1/sqrt(2K+1)`.
    pub delta_ok: bool,
    /// `x_min` above the required level.
    pub amplitude_ok: bool,
    pub delta_margin: f64,
    /// Smallest admissible `x_min` (exclusive).
    pub required_x_min: f64,
    pub amplitude_margin: f64,
}

impl RecoveryCertificate {
    pub fn passed(&self) -> bool {
        self.delta_ok && self.amplitude_ok
    }

    /// Output codes used in reports: (delta condition, amplitude condition).
    pub fn tags(&self) -> (u8, u8) {
        match self.field {
            Field::Real => (17, 18),
            Field::Complex => (19, 20),
        }
    }

    /// `PASS`, or `FAIL(<tag>)` naming the first failing condition.
    pub fn verdict(&self) -> String {
        let (a, b) = self.tags();
        if !self.delta_ok {
            format!("FAIL({a})")
        } else if !self.amplitude_ok {
            format!("FAIL({b})")
        } else {
            "PASS".into()
        }
    }
}

fn bprime(b: usize, p: usize) -> usize {
    p * b - b + 1
}

/// `f_K(u) = u sqrt(B'b)/(1+u) * (K(1+u)/(4B') + sqrt(K+1) + 1)`.
pub fn f_k(u: f64, k: usize, b: usize, p: usize) -> f64 {
    let bp = bprime(b, p) as f64;
    let kf = k as f64;
    u * (bp * b as f64).sqrt() / (1.0 + u) * (kf * (1.0 + u) / (4.0 * bp) + (kf + 1.0).sqrt() + 1.0)
}

/// Inverse of `f_K` by bisection on `[0, 1000]` to `1e-12`.
pub fn f_k_inverse(target: f64, k: usize, b: usize, p: usize) -> Result<f64> {
    let (mut lo, mut hi) = (0.0f64, 1e3f64);
    if !(target >= 0.0) || f_k(hi, k, b, p) < target {
        return Err(Error::Domain(format!("f_K never reaches {target} on [0, 1000]")));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f_k(mid, k, b, p) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Noise term `sqrt(2(1+B')(1+d)) eps / (1 - d sqrt(2K+1))`.
fn noise_term(delta: f64, k: usize, bp: f64, epsilon: f64) -> f64 {
    if epsilon == 0.0 {
        return 0.0;
    }
    let den = 1.0 - delta * (2.0 * k as f64 + 1.0).sqrt();
    if den <= 0.0 {
        return f64::INFINITY;
    }
    (2.0 * (1.0 + bp) * (1.0 + delta)).sqrt() * epsilon / den
}

/// Smallest admissible `x_min` for the given constant and `x_max`.
pub fn required_x_min(delta: f64, k: usize, b: usize, p: usize, epsilon: f64, x_max: f64, field: Field) -> f64 {
    let bp = bprime(b, p) as f64;
    let signal = match field {
        Field::Real => x_max * f_k(delta, k, b, p),
        Field::Complex => {
            let d2 = delta * delta;
            let lead = delta * ((k * b) as f64).sqrt() + (1.0 - d2) * f_k(delta, k, b, p);
            lead * x_max / ((1.0 - d2).powi(2) + d2).sqrt()
        }
    };
    signal + noise_term(delta, k, bp, epsilon)
}

pub fn thm1_certificate(
    delta: f64,
    k: usize,
    b: usize,
    p: usize,
    epsilon: f64,
    x_min: f64,
    x_max: f64,
    field: Field,
) -> RecoveryCertificate {
    let limit = 1.0 / (2.0 * k as f64 + 1.0).sqrt();
    let req = required_x_min(delta, k, b, p, epsilon, x_max, field);
    RecoveryCertificate {
        delta_used: delta,
        k,
        b,
        p,
        bprime: bprime(b, p),
        epsilon,
        x_min,
        x_max,
        field,
        delta_ok: delta < limit,
        amplitude_ok: x_min > req,
        delta_margin: limit - delta,
        required_x_min: req,
        amplitude_margin: x_min - req,
    }
}

// ---------------------------------------------------------------------------
// Random-matrix probability bound

/// `w(a) = (2/pi) acot(a) - 1/2`.
pub fn w_of(a: f64) -> f64 {
    let acot = if a == 0.0 { PI / 2.0 } else { (1.0 / a).atan() };
    2.0 / PI * acot - 0.5
}

/// Bounds `(Kb w(a)^(Kb-1), Kb w(a))` on `P(x_min/x_max > a)` for a standard
/// Gaussian vector of length `Kb`. With a single entry the ratio is always 1.
pub fn g_bounds(a: f64, k: usize, b: usize) -> (f64, f64) {
    let kb = k * b;
    if a >= 1.0 || kb == 0 {
        return (0.0, 0.0);
    }
    if kb == 1 {
        return (1.0, 1.0);
    }
    let w = w_of(a.max(0.0));
    let kbf = kb as f64;
    (kbf * w.powi(kb as i32 - 1), kbf * w)
}

/// Monte Carlo estimate of `P(x_min/x_max > a)` with its standard error.
pub fn g_empirical<R: Rng + ?Sized>(a: f64, k: usize, b: usize, trials: u64, rng: &mut R) -> (f64, f64) {
    let kb = k * b;
    let mut hits = 0u64;
    let mut buf = vec![0.0f64; kb];
    for _ in 0..trials {
        for v in buf.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = z.abs();
        }
        let (mn, mx) = buf.iter().fold((f64::INFINITY, 0.0f64), |(mn, mx), &v| (mn.min(v), mx.max(v)));
        if mx > 0.0 && mn / mx > a {
            hits += 1;
        }
    }
    let est = hits as f64 / trials as f64;
    // Agresti-Coull adjusted proportion, so a zero hit count keeps a
    // nonzero standard error.
    let adj = (hits as f64 + 2.0) / (trials as f64 + 4.0);
    (est, (adj * (1.0 - adj) / (trials as f64 + 4.0)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaVariant {
    /// `(K-1)b + 2L'` under the root.
    Separation,
    /// `(K-1)b + 2L` under the root.
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thm2Params {
    pub lsep: usize,
    pub lambda: f64,
    pub nu: f64,
    pub rho: f64,
    pub h: f64,
    pub a: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub c1: f64,
    pub c2: f64,
    pub eps0: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Thm2Flags {
    pub n_large_enough: bool,
    pub three_p_le_k: bool,
    pub m_large_enough: bool,
    pub nu_lt_rho_lt_3: bool,
    pub slack_window: bool,
}

impl Thm2Flags {
    pub fn all(&self) -> bool {
        self.n_large_enough && self.three_p_le_k && self.m_large_enough && self.nu_lt_rho_lt_3 && self.slack_window
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thm2Result {
    pub params: Thm2Params,
    /// Amplitude-ratio threshold `f_K(nu + eps)`.
    pub ratio_threshold: f64,
    pub g_lower: f64,
    pub g_upper: f64,
    /// `g - (1+g) c1 exp(-c2 eps0^2)` with `g` at its lower bound.
    pub bound: f64,
    /// `g (1 - c1 exp(-c2 eps^2)) - c1 exp(-c2 eps0^2)` with the same `g`.
    pub bound_split_tail: f64,
    pub flags: Thm2Flags,
}

impl Thm2Result {
    /// The stated bound for a caller-supplied `g`.
    pub fn bound_with_g(&self, g: f64) -> f64 {
        g - (1.0 + g) * self.params.c1 * (-self.params.c2 * self.params.eps0.powi(2)).exp()
    }

    pub fn to_text(&self) -> String {
        let p = &self.params;
        let f = &self.flags;
        let mut out = String::new();
        for (k, v) in [
            ("L'", p.lsep as f64),
            ("lambda", p.lambda),
            ("nu", p.nu),
            ("rho", p.rho),
            ("A", p.a),
            ("C", p.c),
            ("D", p.d),
            ("E", p.e),
            ("h", p.h),
            ("c1", p.c1),
            ("c2", p.c2),
            ("eps0", p.eps0),
            ("eps", p.eps),
            ("ratio_threshold", self.ratio_threshold),
            ("g_lower", self.g_lower),
            ("g_upper", self.g_upper),
            ("bound", self.bound),
            ("bound_split_tail", self.bound_split_tail),
        ] {
            let _ = writeln!(out, "{k} = {v:.12e}");
        }
        for (k, v) in [
            ("n_large_enough", f.n_large_enough),
            ("three_p_le_k", f.three_p_le_k),
            ("m_large_enough", f.m_large_enough),
            ("nu_lt_rho_lt_3", f.nu_lt_rho_lt_3),
            ("slack_window", f.slack_window),
        ] {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "valid = {}", f.all());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thm2Inputs {
    pub b: usize,
    pub p: usize,
    pub window: usize,
    pub k: usize,
    pub r: usize,
    pub m: usize,
    pub n: usize,
    pub eps0: f64,
    pub eps: f64,
    pub lambda: LambdaVariant,
}

/// Probability lower bound for a Gaussian matrix with `N(0, 1/m)` entries
/// and a Gaussian signal. Side conditions are reported, never enforced.
pub fn thm2_bound(inp: &Thm2Inputs) -> Result<Thm2Result> {
    let Thm2Inputs { b, p, window, k, r, m, n, eps0, eps, lambda } = *inp;
    if b == 0 || p == 0 || k == 0 || m == 0 {
        return Err(invalid("b, p, K and m must be positive"));
    }
    let lsep = window + 2 * p * b - b;
    let (bf, pf, kf, lf, lwf) = (b as f64, p as f64, k as f64, lsep as f64, window as f64);
    let under = (kf - 1.0) * bf
        + 2.0
            * match lambda {
                LambdaVariant::Separation => lf,
                LambdaVariant::Window => lwf,
            };
    let lam = (under / m as f64).sqrt();
    let nu = lam * lam + 2.0 * lam;
    let rho = f_k_inverse(1.0, k, b, p)?;
    let a = 3.0 * pf * (kf - 1.0) / (2.0 * (pf + 1.0).powi(2)) + r as f64;
    let c = pf.ln() + 21.0 / 8.0 - 1.0 / pf;
    let d = n as f64 - (kf - 1.0) * bf + lf;
    let e = lf - 1.0;
    let arg = pf * d / kf - e;
    let h = if arg > 0.0 { a + kf * c + kf * arg.ln() } else { f64::NAN };
    let c1 = 2.0 * h.exp();
    let c2 = m as f64 / (lam + 1.0 + (1.0 + rho).sqrt()).powi(2);
    let ratio_threshold = f_k(nu + eps, k, b, p);
    let (g_lower, g_upper) = g_bounds(ratio_threshold, k, b);
    let tail0 = c1 * (-c2 * eps0 * eps0).exp();
    let tail = c1 * (-c2 * eps * eps).exp();
    let bound = g_lower - (1.0 + g_lower) * tail0;
    let bound_split_tail = g_lower * (1.0 - tail) - tail0;
    let limit = 1.0 / (2.0 * kf + 1.0).sqrt();
    let flags = Thm2Flags {
        n_large_enough: n >= k * b + r * lsep + (k + 1) * (lsep - 1),
        three_p_le_k: 3 * p <= k,
        m_large_enough: m >= (k - 1) * b + 2 * lsep,
        nu_lt_rho_lt_3: nu < rho && rho < 3.0,
        slack_window: nu + eps0 < limit && limit < rho,
    };
    Ok(Thm2Result {
        params: Thm2Params { lsep, lambda: lam, nu, rho, h, a, c, d, e, c1, c2, eps0, eps },
        ratio_threshold,
        g_lower,
        g_upper,
        bound,
        bound_split_tail,
        flags,
    })
}

/// Spectral radius helper re-exported for callers holding a Hermitian matrix.
pub fn spectral_radius<T: Scalar>(h: DMatrix<T>) -> f64 {
    hermitian_spectral_radius(h)
}
