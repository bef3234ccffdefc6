//! Pseudoblock-interleaved block-sparse (PIBS) supports: parameters,
//! validation, sampling, enumeration and counting.
//!
//! Indices are 0-based in memory. The text form is 1-based.

use std::fmt;

use nalgebra::DVector;
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Minimum number of indices between consecutive clusters for window
/// length `window`: `window + 2pb - b`.
pub fn min_separation(b: usize, p: usize, window: usize) -> usize {
    window + 2 * p * b - b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PibsParams {
    pub n: usize,
    /// Elementary block length.
    pub b: usize,
    /// Maximum number of blocks in one cluster.
    pub p: usize,
    /// Pseudo-block length.
    pub l: usize,
    /// Minimum gap between consecutive clusters.
    pub lsep: usize,
    /// True-block budget.
    pub k: usize,
    /// Pseudo-block budget.
    pub r: usize,
    /// Window length the separation was derived from, if any.
    pub window: Option<usize>,
}

impl PibsParams {
    pub fn new(n: usize, b: usize, p: usize, l: usize, lsep: usize, k: usize, r: usize) -> Result<Self> {
        if n == 0 || b == 0 || p == 0 {
            return Err(invalid("n, b and p must be at least 1"));
        }
        if l > lsep {
            return Err(invalid(format!("pseudo-block length {l} exceeds separation {lsep}")));
        }
        Ok(Self { n, b, p, l, lsep, k, r, window: None })
    }

    pub fn with_window(n: usize, b: usize, p: usize, window: usize, l: usize, k: usize, r: usize) -> Result<Self> {
        if window == 0 {
            return Err(invalid("window length must be at least 1"));
        }
        if b == 0 || p == 0 {
            return Err(invalid("n, b and p must be at least 1"));
        }
        let mut params = Self::new(n, b, p, l, min_separation(b, p, window), k, r)?;
        params.window = Some(window);
        Ok(params)
    }

    /// Cluster capacity `B = pb`.
    pub fn capacity(&self) -> usize {
        self.p * self.b
    }

    /// `B' = pb - b + 1`, the number of cluster starts covering a block.
    pub fn bprime(&self) -> usize {
        self.p * self.b - self.b + 1
    }

    /// Window length, recovered from the separation when not recorded.
    pub fn window_len(&self) -> Option<usize> {
        self.window.or_else(|| (self.lsep + self.b).checked_sub(2 * self.p * self.b))
    }

    /// Whether `n >= Kb + R*lsep + (K+1)(lsep-1)`, the length needed to host
    /// every arrangement counted by the closed-form formula.
    pub fn hosts_all_arrangements(&self) -> bool {
        let need = self.k * self.b + self.r * self.lsep + (self.k + 1) * self.lsep.saturating_sub(1);
        self.n >= need
    }

    pub fn with_budgets(mut self, k: usize, r: usize) -> Self {
        self.k = k;
        self.r = r;
        self
    }

    pub fn with_pseudo_len(mut self, l: usize) -> Result<Self> {
        if l > self.lsep {
            return Err(invalid(format!("pseudo-block length {l} exceeds separation {}", self.lsep)));
        }
        self.l = l;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cluster {
    pub start: usize,
    pub blocks: usize,
}

impl Cluster {
    pub fn end(&self, b: usize) -> usize {
        self.start + self.blocks * b
    }
}

/// A PIBS support: clusters of true blocks plus pseudo blocks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Support {
    clusters: Vec<Cluster>,
    pseudo: Vec<usize>,
    columns: Vec<usize>,
}

impl Support {
    pub fn new(mut clusters: Vec<Cluster>, mut pseudo: Vec<usize>, b: usize, l: usize) -> Self {
        clusters.sort();
        pseudo.sort();
        let mut columns: Vec<usize> = clusters
            .iter()
            .flat_map(|c| c.start..c.end(b))
            .chain(pseudo.iter().flat_map(|&s| s..s + l))
            .collect();
        columns.sort_unstable();
        columns.dedup();
        Self { clusters, pseudo, columns }
    }

    pub fn empty() -> Self {
        Self { clusters: Vec::new(), pseudo: Vec::new(), columns: Vec::new() }
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn pseudo(&self) -> &[usize] {
        &self.pseudo
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn total_blocks(&self) -> usize {
        self.clusters.iter().map(|c| c.blocks).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Line-oriented text form, 1-based.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.clusters {
            out.push_str(&format!("cluster {} {}\n", c.start + 1, c.blocks));
        }
        for s in &self.pseudo {
            out.push_str(&format!("pseudo {}\n", s + 1));
        }
        out
    }

    /// Parses the text form. Blank lines and `#` comments are skipped.
    pub fn parse_text(text: &str, b: usize, l: usize) -> Result<Self> {
        let mut clusters = Vec::new();
        let mut pseudo = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse { line: i + 1, msg: msg.to_string() };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let index = |s: &str| -> Result<usize> {
                let v: usize = s.parse().map_err(|_| err("expected a positive integer"))?;
                v.checked_sub(1).ok_or_else(|| err("indices are 1-based"))
            };
            match fields.as_slice() {
                ["cluster", start, blocks] => {
                    let blocks: usize = blocks.parse().map_err(|_| err("bad block count"))?;
                    clusters.push(Cluster { start: index(start)?, blocks });
                }
                ["pseudo", start] => pseudo.push(index(start)?),
                _ => return Err(err("expected `cluster <start> <blocks>` or `pseudo <start>`")),
            }
        }
        Ok(Self::new(clusters, pseudo, b, l))
    }
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .clusters
            .iter()
            .map(|c| format!("C{}x{}", c.start + 1, c.blocks))
            .chain(self.pseudo.iter().map(|s| format!("P{}", s + 1)))
            .collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    BlockCount { cluster: usize, blocks: usize },
    Range { start: usize, end: usize },
    Separation { first: usize, second: usize, gap: usize },
    PseudoOverlap { pseudo: usize, cluster: usize },
    PseudoCollision { first: usize, second: usize },
    PseudoLength,
    BlockBudget { blocks: usize },
    PseudoBudget { count: usize },
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::BlockCount { .. } => "block-count",
            Violation::Range { .. } => "range",
            Violation::Separation { .. } => "separation",
            Violation::PseudoOverlap { .. } => "pseudo-overlap",
            Violation::PseudoCollision { .. } => "pseudo-collision",
            Violation::PseudoLength => "pseudo-length",
            Violation::BlockBudget { .. } => "block-budget",
            Violation::PseudoBudget { .. } => "pseudo-budget",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BlockCount { cluster, blocks } => {
                write!(f, "block-count: cluster at {} has {blocks} blocks", cluster + 1)
            }
            Violation::Range { start, end } => write!(f, "range: [{}, {end}] leaves the signal", start + 1),
            Violation::Separation { first, second, gap } => write!(
                f,
                "separation: clusters at {} and {} are {gap} apart",
                first + 1,
                second + 1
            ),
            Violation::PseudoOverlap { pseudo, cluster } => write!(
                f,
                "pseudo-overlap: pseudo block at {} meets cluster at {}",
                pseudo + 1,
                cluster + 1
            ),
            Violation::PseudoCollision { first, second } => {
                write!(f, "pseudo-collision: pseudo blocks at {} and {}", first + 1, second + 1)
            }
            Violation::PseudoLength => write!(f, "pseudo-length: pseudo blocks present with l = 0"),
            Violation::BlockBudget { blocks } => write!(f, "block-budget: {blocks} blocks"),
            Violation::PseudoBudget { count } => write!(f, "pseudo-budget: {count} pseudo blocks"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Validation {
    pub violations: Vec<Violation>,
}

impl Validation {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: &str) -> bool {
        self.violations.iter().any(|v| v.kind() == kind)
    }
}

/// Checks every structural constraint of a support against `params`,
/// independently of how the support was produced.
pub fn validate_support(support: &Support, params: &PibsParams) -> Validation {
    let (b, l, n) = (params.b, params.l, params.n);
    let mut violations = Vec::new();
    let clusters = support.clusters();
    let pseudo = support.pseudo();
    for c in clusters {
        if c.blocks == 0 || c.blocks > params.p {
            violations.push(Violation::BlockCount { cluster: c.start, blocks: c.blocks });
        }
        if c.end(b) > n {
            violations.push(Violation::Range { start: c.start, end: c.end(b) });
        }
    }
    for w in clusters.windows(2) {
        let end = w[0].end(b);
        let gap = w[1].start.saturating_sub(end);
        if w[1].start < end || gap < params.lsep {
            violations.push(Violation::Separation { first: w[0].start, second: w[1].start, gap });
        }
    }
    if !pseudo.is_empty() && l == 0 {
        violations.push(Violation::PseudoLength);
    }
    for &s in pseudo {
        if s + l > n {
            violations.push(Violation::Range { start: s, end: s + l });
        }
        for c in clusters {
            if s < c.end(b) && c.start < s + l {
                violations.push(Violation::PseudoOverlap { pseudo: s, cluster: c.start });
            }
        }
    }
    for w in pseudo.windows(2) {
        if w[1] < w[0] + l.max(1) {
            violations.push(Violation::PseudoCollision { first: w[0], second: w[1] });
        }
    }
    let blocks = support.total_blocks();
    if blocks > params.k {
        violations.push(Violation::BlockBudget { blocks });
    }
    if pseudo.len() > params.r {
        violations.push(Violation::PseudoBudget { count: pseudo.len() });
    }
    Validation { violations }
}

// Completion-count tables.
//
// State (i, k, r, g): positions i..n remain, exactly k more true blocks and r
// more pseudo blocks must be placed, and g is the distance from the last
// cluster end capped at lsep (lsep also stands for "no cluster yet").

struct Table<T> {
    k: usize,
    r: usize,
    lsep: usize,
    data: Vec<T>,
}

impl<T> Table<T> {
    fn idx(&self, i: usize, k: usize, r: usize, g: usize) -> usize {
        ((i * (self.k + 1) + k) * (self.r + 1) + r) * (self.lsep + 1) + g
    }

    fn get(&self, i: usize, k: usize, r: usize, g: usize) -> &T {
        &self.data[self.idx(i, k, r, g)]
    }
}

fn completion_table<T>(params: &PibsParams, k_max: usize, r_max: usize) -> Table<T>
where
    T: Clone + Zero + One + for<'a> std::ops::AddAssign<&'a T>,
{
    let (n, b, p, l, lsep) = (params.n, params.b, params.p, params.l, params.lsep);
    let mut t = Table { k: k_max, r: r_max, lsep, data: vec![T::zero(); (n + 1) * (k_max + 1) * (r_max + 1) * (lsep + 1)] };
    for g in 0..=lsep {
        let at = t.idx(n, 0, 0, g);
        t.data[at] = T::one();
    }
    for i in (0..n).rev() {
        for k in 0..=k_max {
            for r in 0..=r_max {
                for g in 0..=lsep {
                    let mut acc = t.get(i + 1, k, r, (g + 1).min(lsep)).clone();
                    if l > 0 && r > 0 && i + l <= n {
                        acc += t.get(i + l, k, r - 1, (g + l).min(lsep));
                    }
                    if g >= lsep {
                        for j in 1..=p.min(k) {
                            if i + j * b <= n {
                                acc += t.get(i + j * b, k - j, r, 0);
                            }
                        }
                    }
                    let at = t.idx(i, k, r, g);
                    t.data[at] = acc;
                }
            }
        }
    }
    t
}

/// Exact `|Sigma(k, r)|` for all `k <= k_max`, `r <= r_max`, indexed `[k][r]`.
/// Counted by dynamic programming, independently of the enumerator.
pub fn count_supports_exact(params: &PibsParams, k_max: usize, r_max: usize) -> Vec<Vec<BigUint>> {
    let t: Table<BigUint> = completion_table(params, k_max, r_max);
    (0..=k_max)
        .map(|k| (0..=r_max).map(|r| t.get(0, k, r, params.lsep).clone()).collect())
        .collect()
}

/// Total size of the union of `Sigma(k, r)` over `k <= k_max`, `r <= r_max`.
pub fn count_union(params: &PibsParams, k_max: usize, r_max: usize) -> BigUint {
    count_supports_exact(params, k_max, r_max).into_iter().flatten().sum()
}

/// Uniform sampler over `Sigma(total_blocks, pseudo_count)`.
pub struct SupportSampler {
    params: PibsParams,
    blocks: usize,
    pseudo: usize,
    table: Table<f64>,
}

impl SupportSampler {
    pub fn new(params: &PibsParams, total_blocks: usize, pseudo_count: usize) -> Result<Self> {
        if pseudo_count > 0 && params.l == 0 {
            return Err(invalid("pseudo blocks requested with pseudo-block length 0"));
        }
        let table: Table<f64> = completion_table(params, total_blocks, pseudo_count);
        if *table.get(0, total_blocks, pseudo_count, params.lsep) <= 0.0 {
            return Err(Error::InfeasibleGeometry(format!(
                "no arrangement of {total_blocks} blocks and {pseudo_count} pseudo blocks fits in n = {}",
                params.n
            )));
        }
        Ok(Self { params: *params, blocks: total_blocks, pseudo: pseudo_count, table })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Support {
        let PibsParams { n, b, p, l, lsep, .. } = self.params;
        let t = &self.table;
        let (mut i, mut k, mut r, mut g) = (0usize, self.blocks, self.pseudo, lsep);
        let mut clusters = Vec::new();
        let mut pseudo = Vec::new();
        while i < n {
            let total = *t.get(i, k, r, g);
            let mut u = rng.random::<f64>() * total;
            // Options in a fixed order: zero, pseudo block, clusters of 1..p blocks.
            let mut options: Vec<(f64, u8, usize)> = Vec::with_capacity(p + 2);
            options.push((*t.get(i + 1, k, r, (g + 1).min(lsep)), 0, 0));
            if l > 0 && r > 0 && i + l <= n {
                options.push((*t.get(i + l, k, r - 1, (g + l).min(lsep)), 1, 0));
            }
            if g >= lsep {
                for j in 1..=p.min(k) {
                    if i + j * b <= n {
                        options.push((*t.get(i + j * b, k - j, r, 0), 2, j));
                    }
                }
            }
            let mut pick = None;
            for (idx, &(w, _, _)) in options.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                pick = Some(idx);
                if u < w {
                    break;
                }
                u -= w;
            }
            let (_, kind, j) = options[pick.expect("completion count is positive")];
            match kind {
                0 => {
                    i += 1;
                    g = (g + 1).min(lsep);
                }
                1 => {
                    pseudo.push(i);
                    i += l;
                    r -= 1;
                    g = (g + l).min(lsep);
                }
                _ => {
                    clusters.push(Cluster { start: i, blocks: j });
                    i += j * b;
                    k -= j;
                    g = 0;
                }
            }
        }
        debug_assert!(k == 0 && r == 0);
        Support::new(clusters, pseudo, b, l)
    }
}

/// Draws a support uniformly from `Sigma(total_blocks, pseudo_count)`.
pub fn sample_support<R: Rng + ?Sized>(
    params: &PibsParams,
    total_blocks: usize,
    pseudo_count: usize,
    rng: &mut R,
) -> Result<Support> {
    if total_blocks > params.k || pseudo_count > params.r {
        return Err(invalid("requested counts exceed the budgets in params"));
    }
    Ok(SupportSampler::new(params, total_blocks, pseudo_count)?.sample(rng))
}

/// First placed item of a support, used to split an enumeration into
/// independent branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Item {
    Cluster { start: usize, blocks: usize },
    Pseudo { start: usize },
}

/// Borrowed view of the support currently visited by an enumeration.
#[derive(Debug, Clone, Copy)]
pub struct SupportView<'a> {
    pub clusters: &'a [Cluster],
    pub pseudo: &'a [usize],
    pub columns: &'a [usize],
    pub blocks: usize,
}

impl SupportView<'_> {
    pub fn to_support(&self, b: usize, l: usize) -> Support {
        Support::new(self.clusters.to_vec(), self.pseudo.to_vec(), b, l)
    }
}

/// Depth-first walk over `Sigma(k, r)` for all `k <= k_max`, `r <= r_max`
/// without materializing supports.
#[derive(Debug, Clone, Copy)]
pub struct Enumerator {
    params: PibsParams,
    k_max: usize,
    r_max: usize,
}

struct Walk {
    clusters: Vec<Cluster>,
    pseudo: Vec<usize>,
    columns: Vec<usize>,
    blocks: usize,
    last_end: Option<usize>,
}

impl Enumerator {
    pub fn new(params: &PibsParams, k_max: usize, r_max: usize) -> Self {
        Self { params: *params, k_max, r_max }
    }

    pub fn params(&self) -> &PibsParams {
        &self.params
    }

    /// Every item that can be the first (leftmost) item of a support.
    pub fn first_items(&self) -> Vec<Item> {
        let mut out = Vec::new();
        let p = &self.params;
        for s in 0..p.n {
            for j in 1..=p.p.min(self.k_max) {
                if s + j * p.b <= p.n {
                    out.push(Item::Cluster { start: s, blocks: j });
                }
            }
            if p.l > 0 && self.r_max > 0 && s + p.l <= p.n {
                out.push(Item::Pseudo { start: s });
            }
        }
        out
    }

    /// Visits every support, the empty one first.
    pub fn walk<F: FnMut(&SupportView<'_>)>(&self, mut f: F) {
        let mut w = self.fresh();
        self.rec(&mut w, 0, &mut f);
    }

    /// Visits the supports whose leftmost item is `first`.
    pub fn walk_from<F: FnMut(&SupportView<'_>)>(&self, first: Item, mut f: F) {
        let mut w = self.fresh();
        let next = self.push(&mut w, first);
        self.rec(&mut w, next, &mut f);
    }

    fn fresh(&self) -> Walk {
        Walk {
            clusters: Vec::with_capacity(self.k_max),
            pseudo: Vec::with_capacity(self.r_max),
            columns: Vec::with_capacity(self.k_max * self.params.b + self.r_max * self.params.l),
            blocks: 0,
            last_end: None,
        }
    }

    fn push(&self, w: &mut Walk, item: Item) -> usize {
        match item {
            Item::Cluster { start, blocks } => {
                let end = start + blocks * self.params.b;
                w.clusters.push(Cluster { start, blocks });
                w.columns.extend(start..end);
                w.blocks += blocks;
                w.last_end = Some(end);
                end
            }
            Item::Pseudo { start } => {
                w.pseudo.push(start);
                w.columns.extend(start..start + self.params.l);
                start + self.params.l
            }
        }
    }

    fn rec<F: FnMut(&SupportView<'_>)>(&self, w: &mut Walk, pos: usize, f: &mut F) {
        f(&SupportView { clusters: &w.clusters, pseudo: &w.pseudo, columns: &w.columns, blocks: w.blocks });
        let PibsParams { n, b, p, l, lsep, .. } = self.params;
        for s in pos..n {
            let separated = w.last_end.is_none_or(|e| s - e >= lsep);
            if separated {
                for j in 1..=p.min(self.k_max - w.blocks) {
                    if s + j * b > n {
                        break;
                    }
                    let saved = (w.columns.len(), w.last_end);
                    let next = self.push(w, Item::Cluster { start: s, blocks: j });
                    self.rec(w, next, f);
                    w.clusters.pop();
                    w.columns.truncate(saved.0);
                    w.blocks -= j;
                    w.last_end = saved.1;
                }
            }
            if l > 0 && w.pseudo.len() < self.r_max && s + l <= n {
                let saved = w.columns.len();
                let next = self.push(w, Item::Pseudo { start: s });
                self.rec(w, next, f);
                w.pseudo.pop();
                w.columns.truncate(saved);
            }
        }
    }
}

/// Default cap on materialized enumerations.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Every support in the union of `Sigma(k, r)` over `k <= k_max`,
/// `r <= r_max`, in depth-first order (empty support first).
pub fn enumerate_supports(params: &PibsParams, k_max: usize, r_max: usize, cap: u64) -> Result<Vec<Support>> {
    let count = count_union(params, k_max, r_max);
    if count > BigUint::from(cap) {
        return Err(Error::CapExceeded { count: count.to_string(), cap });
    }
    let mut out = Vec::with_capacity(count.to_usize().unwrap_or(0));
    Enumerator::new(params, k_max, r_max).walk(|v| out.push(v.to_support(params.b, params.l)));
    Ok(out)
}

fn binom(top: i64, k: i64) -> BigUint {
    if k < 0 || top < 0 || k > top {
        return BigUint::zero();
    }
    let k = k.min(top - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from((top - i) as u64) / BigUint::from((i + 1) as u64);
    }
    acc
}

/// Number of compositions of `total` into `parts` parts, each in `1..=p`.
pub fn compositions(total: usize, parts: usize, p: usize) -> BigUint {
    // ways[s] = compositions of s into the parts placed so far
    let mut ways = vec![BigUint::zero(); total + 1];
    ways[0] = BigUint::one();
    for _ in 0..parts {
        let mut next = vec![BigUint::zero(); total + 1];
        for s in 0..=total {
            if ways[s].is_zero() {
                continue;
            }
            for j in 1..=p {
                if s + j <= total {
                    let v = ways[s].clone();
                    next[s + j] += v;
                }
            }
        }
        ways = next;
    }
    ways[total].clone()
}

/// Closed-form count together with the derivation assumptions it violates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormulaCount {
    pub value: BigUint,
    pub violated: Vec<&'static str>,
}

impl FormulaCount {
    pub fn assumptions_hold(&self) -> bool {
        self.violated.is_empty()
    }
}

/// Closed-form stars-and-bars count of `Sigma(k, r)` with exactly `k` true
/// blocks and `r` pseudo blocks. For `r >= 1` the pseudo-block length is
/// taken to be the separation.
pub fn count_supports_formula(params: &PibsParams, k: usize, r: usize) -> Result<FormulaCount> {
    let PibsParams { n, b, p, lsep, .. } = *params;
    let mut violated = Vec::new();
    if r >= 1 {
        match params.window_len() {
            Some(w) if w >= p * b => {}
            _ => violated.push("window >= pb"),
        }
        if (r + 1) * p > k {
            violated.push("(R+1)p <= K");
        }
        if params.l != lsep {
            violated.push("l == separation");
        }
    }
    let (n, b, lsep, k_i, r_i) = (n as i64, b as i64, lsep as i64, k as i64, r as i64);
    let mut total = BigUint::zero();
    for parts in k.div_ceil(p)..=k {
        let comp = compositions(k, parts, p);
        if comp.is_zero() {
            continue;
        }
        let kk = parts as i64;
        let inner = if r == 0 {
            let free = n - k_i * b;
            binom(kk + free - lsep * (kk - 1), kk)
        } else {
            let free = n - k_i * b - lsep * r_i;
            let mut acc = BigUint::zero();
            for q in 1..=r_i {
                acc += binom(kk - 1, q) * binom(r_i + 1, r_i - q) * binom(kk + free - lsep * (kk - 1 - q), kk);
            }
            acc
        };
        total += comp * inner;
    }
    Ok(FormulaCount { value: total, violated })
}

/// How the pseudo blocks of a support sit relative to its clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrangementClass {
    /// Number of interior gaps (between two clusters) holding a pseudo block.
    pub interior_gaps: usize,
    /// Whether every gap's pseudo blocks are packed against the left end of
    /// the gap (signal start, or the preceding cluster's end).
    pub packed: bool,
}

pub fn classify_arrangement(support: &Support, b: usize, l: usize) -> ArrangementClass {
    let clusters = support.clusters();
    let mut interior = std::collections::BTreeSet::new();
    let mut packed = true;
    let mut by_gap: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for &s in support.pseudo() {
        let gap = clusters.iter().filter(|c| c.start < s).count();
        by_gap.entry(gap).or_default().push(s);
        if gap >= 1 && gap < clusters.len() {
            interior.insert(gap);
        }
    }
    for (gap, starts) in by_gap {
        let origin = if gap == 0 { 0 } else { clusters[gap - 1].end(b) };
        for (t, &s) in starts.iter().enumerate() {
            if s != origin + t * l {
                packed = false;
            }
        }
    }
    ArrangementClass { interior_gaps: interior.len(), packed }
}

/// Enumeration count of `Sigma(k, r)` split by arrangement class, next to
/// the closed-form value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountComparison {
    pub k: usize,
    pub r: usize,
    pub enumerated: BigUint,
    pub formula: FormulaCount,
    /// Packed arrangements with at least one interior gap used.
    pub packed_interior: BigUint,
    /// Arrangements with every pseudo block in the two edge gaps.
    pub edge_only: BigUint,
    /// Arrangements with an interior gap used but not packed.
    pub unpacked_interior: BigUint,
}

impl CountComparison {
    pub fn agrees(&self) -> bool {
        self.enumerated == self.formula.value
    }

    /// Whether the closed form is fully accounted for: it equals the packed
    /// interior arrangements and the remainder is the two uncounted classes.
    pub fn explained(&self) -> bool {
        if self.r == 0 {
            return self.agrees();
        }
        self.formula.value == self.packed_interior
            && &self.packed_interior + &self.edge_only + &self.unpacked_interior == self.enumerated
    }
}

/// Enumerates `Sigma(k, r)` exactly and compares it with the closed form.
pub fn compare_counts(params: &PibsParams, k: usize, r: usize, cap: u64) -> Result<CountComparison> {
    let exact = count_supports_exact(params, k, r);
    let target = exact[k][r].clone();
    if target > BigUint::from(cap) {
        return Err(Error::CapExceeded { count: target.to_string(), cap });
    }
    let formula = count_supports_formula(params, k, r)?;
    let (mut enumerated, mut packed_interior, mut edge_only, mut unpacked_interior) = (0u64, 0u64, 0u64, 0u64);
    let (b, l) = (params.b, params.l);
    Enumerator::new(params, k, r).walk(|v| {
        if v.blocks != k || v.pseudo.len() != r {
            return;
        }
        enumerated += 1;
        if r == 0 {
            return;
        }
        let class = classify_arrangement(&v.to_support(b, l), b, l);
        match (class.interior_gaps, class.packed) {
            (0, _) => edge_only += 1,
            (_, true) => packed_interior += 1,
            (_, false) => unpacked_interior += 1,
        }
    });
    Ok(CountComparison {
        k,
        r,
        enumerated: enumerated.into(),
        formula,
        packed_interior: packed_interior.into(),
        edge_only: edge_only.into(),
        unpacked_interior: unpacked_interior.into(),
    })
}

/// Natural log of the closed-form upper bound on the number of supports.
pub fn count_supports_bound_ln(params: &PibsParams, k: usize, r: usize) -> Result<f64> {
    let PibsParams { n, b, p, lsep, .. } = *params;
    match params.window_len() {
        Some(w) if w >= p * b => {}
        _ => return Err(Error::Precondition("window length must be at least pb".into())),
    }
    if (r + 1) * p > k {
        return Err(Error::Precondition("(R+1)p <= K is required".into()));
    }
    let (pf, kf) = (p as f64, k as f64);
    let a = 3.0 * pf * kf / (2.0 * (pf + 1.0).powi(2)) + r as f64;
    let c = pf.ln() + 21.0 / 8.0 - 1.0 / pf;
    let d = n as f64 - kf * b as f64 + lsep as f64;
    let e = lsep as f64 - 1.0;
    let arg = pf * d / kf - e;
    if arg <= 0.0 {
        return Err(Error::Domain(format!("log argument pD/K - E = {arg} is not positive")));
    }
    Ok(a + kf * c + kf * arg.ln())
}

pub fn count_supports_bound(params: &PibsParams, k: usize, r: usize) -> Result<f64> {
    count_supports_bound_ln(params, k, r).map(f64::exp)
}

/// Entry law for the nonzero entries of a signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueScheme {
    /// `+c` or `-c` with equal probability.
    PlusMinus(f64),
    /// Standard Gaussian (circular complex Gaussian with unit variance in
    /// the complex field).
    Gaussian,
}

impl std::str::FromStr for ValueScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "gaussian" {
            return Ok(ValueScheme::Gaussian);
        }
        if let Some(v) = s.strip_prefix("pm:").or_else(|| s.strip_prefix("pm")) {
            let c: f64 = v.parse().map_err(|_| invalid(format!("bad constant in '{s}'")))?;
            return Ok(ValueScheme::PlusMinus(c));
        }
        Err(invalid(format!("unknown value scheme '{s}' (expected gaussian or pm:<c>)")))
    }
}

impl fmt::Display for ValueScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueScheme::PlusMinus(c) => write!(f, "pm:{c}"),
            ValueScheme::Gaussian => write!(f, "gaussian"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalInstance<T: Scalar> {
    pub x: DVector<T>,
    pub support: Support,
    pub params: PibsParams,
    x_min: Option<f64>,
    x_max: Option<f64>,
}

impl<T: Scalar> SignalInstance<T> {
    pub fn new(x: DVector<T>, support: Support, params: PibsParams) -> Self {
        let mags: Vec<f64> = support.columns().iter().map(|&j| x[j].modulus()).collect();
        let x_min = mags.iter().copied().reduce(f64::min);
        let x_max = mags.iter().copied().reduce(f64::max);
        Self { x, support, params, x_min, x_max }
    }

    /// Smallest magnitude on the support, `None` for the empty support.
    pub fn x_min(&self) -> Option<f64> {
        self.x_min
    }

    pub fn x_max(&self) -> Option<f64> {
        self.x_max
    }
}

/// Fills a cluster-only support with random values.
pub fn fill_values<T: Scalar, R: Rng + ?Sized>(
    support: &Support,
    params: &PibsParams,
    scheme: ValueScheme,
    rng: &mut R,
) -> Result<SignalInstance<T>> {
    if !support.pseudo().is_empty() {
        return Err(invalid("signal supports carry no pseudo blocks"));
    }
    let mut x = DVector::<T>::zeros(params.n);
    for &j in support.columns() {
        if j >= params.n {
            return Err(invalid(format!("support index {} exceeds n = {}", j + 1, params.n)));
        }
        x[j] = match scheme {
            ValueScheme::PlusMinus(c) => {
                let s = if rng.random::<bool>() { c } else { -c };
                T::from_parts(s, 0.0)
            }
            ValueScheme::Gaussian => loop {
                let v = T::gaussian(rng, 1.0);
                if v.modulus() != 0.0 {
                    break v;
                }
            },
        };
    }
    Ok(SignalInstance::new(x, support.clone(), *params))
}
