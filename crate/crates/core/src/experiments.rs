//! Monte Carlo recovery curves and the certified-instance suite.

use std::fmt::{self, Write as _};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::analysis::{pibric, thm1_certificate, f_k, RicOptions};
use crate::error::{invalid, Error, Result};
use crate::recovery::{bomp, success_check, tsgbomp, BompConfig, RecoveryResult, TsgbompConfig};
use crate::scalar::Field;
use crate::sensing::{gaussian_matrix, measure, Noise, SensingMatrix, VarianceMode};
use crate::signal::{fill_values, min_separation, PibsParams, SignalInstance, Support, SupportSampler, ValueScheme};
use crate::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Tsgbomp,
    Bomp,
}

impl Algorithm {
    pub fn id(self) -> u64 {
        match self {
            Algorithm::Tsgbomp => 1,
            Algorithm::Bomp => 2,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Tsgbomp => "tsgbomp",
            Algorithm::Bomp => "bomp",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "tsgbomp" => Ok(Algorithm::Tsgbomp),
            "bomp" => Ok(Algorithm::Bomp),
            other => Err(invalid(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensingKind {
    /// Unit-variance Gaussian entries, columns normalized.
    Gaussian,
    /// The identity (requires `m = n`).
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub b: usize,
    pub p: usize,
    /// Window length.
    pub window: usize,
    /// Minimum gap between clusters of the generated signals. Defaults to
    /// `window + 2pb - b`.
    pub separation: Option<usize>,
    pub k_grid: Vec<usize>,
    pub value_scheme: ValueScheme,
    pub trials: usize,
    /// Residual threshold relative to `||y||`.
    pub epsilon: f64,
    pub algorithms: Vec<Algorithm>,
    pub master_seed: u64,
    pub sensing: SensingKind,
    /// Relative-error tolerance of the success check.
    pub rel_tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 200,
            m: 160,
            b: 4,
            p: 2,
            window: 8,
            separation: None,
            k_grid: (1..=16).collect(),
            value_scheme: ValueScheme::PlusMinus(10.0),
            trials: 200,
            epsilon: 1e-6,
            algorithms: vec![Algorithm::Tsgbomp, Algorithm::Bomp],
            master_seed: 0,
            sensing: SensingKind::Gaussian,
            rel_tol: 1e-6,
        }
    }
}

fn parse_list(v: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = part.split_once('-') {
            let a: usize = a.trim().parse().map_err(|_| invalid(format!("bad range '{part}'")))?;
            let b: usize = b.trim().parse().map_err(|_| invalid(format!("bad range '{part}'")))?;
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| invalid(format!("bad integer '{part}'")))?);
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Parses `key = value` lines. `#` starts a comment. Unknown keys are
    /// rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(Error::Parse { line: i + 1, msg: "expected key = value".into() })?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| -> Result<usize> {
                v.parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad integer '{v}' for {k}") })
            };
            match k {
                "n" => c.n = num(v)?,
                "m" => c.m = num(v)?,
                "b" => c.b = num(v)?,
                "p" => c.p = num(v)?,
                "L" | "window" => c.window = num(v)?,
                "separation" => c.separation = Some(num(v)?),
                "K_grid" | "k_grid" => c.k_grid = parse_list(v)?,
                "value_scheme" => c.value_scheme = v.parse()?,
                "trials" => c.trials = num(v)?,
                "epsilon" => {
                    c.epsilon = v.parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad number '{v}'") })?
                }
                "rel_tol" => {
                    c.rel_tol = v.parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad number '{v}'") })?
                }
                "algorithms" => {
                    c.algorithms =
                        v.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?
                }
                "master_seed" | "seed" => {
                    c.master_seed = v.parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad seed '{v}'") })?
                }
                "sensing" => {
                    c.sensing = match v {
                        "gaussian" => SensingKind::Gaussian,
                        "identity" => SensingKind::Identity,
                        other => return Err(Error::Parse { line: i + 1, msg: format!("unknown sensing '{other}'") }),
                    }
                }
                other => return Err(Error::Parse { line: i + 1, msg: format!("unknown key '{other}'") }),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let grid: Vec<String> = self.k_grid.iter().map(usize::to_string).collect();
        let algs: Vec<String> = self.algorithms.iter().map(Algorithm::to_string).collect();
        let mut out = String::new();
        let _ = writeln!(out, "n = {}\nm = {}\nb = {}\np = {}\nL = {}", self.n, self.m, self.b, self.p, self.window);
        if let Some(s) = self.separation {
            let _ = writeln!(out, "separation = {s}");
        }
        let _ = writeln!(out, "K_grid = {}", grid.join(","));
        let _ = writeln!(out, "value_scheme = {}", self.value_scheme);
        let _ = writeln!(out, "trials = {}\nepsilon = {:e}\nrel_tol = {:e}", self.trials, self.epsilon, self.rel_tol);
        let _ = writeln!(out, "algorithms = {}", algs.join(","));
        let _ = writeln!(out, "master_seed = {}", self.master_seed);
        let _ = writeln!(
            out,
            "sensing = {}",
            match self.sensing {
                SensingKind::Gaussian => "gaussian",
                SensingKind::Identity => "identity",
            }
        );
        out
    }

    pub fn separation(&self) -> usize {
        self.separation.unwrap_or_else(|| min_separation(self.b, self.p, self.window))
    }

    /// Geometry of the generated signals for `k` blocks.
    pub fn params(&self, k: usize) -> Result<PibsParams> {
        let mut params = PibsParams::new(self.n, self.b, self.p, 0, self.separation(), k, 0)?;
        params.window = Some(self.window);
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.window == 0 || self.n % self.window != 0 {
            return Err(Error::NotDivisible { n: self.n, by: self.window });
        }
        if self.n % self.b != 0 {
            return Err(Error::NotDivisible { n: self.n, by: self.b });
        }
        if self.algorithms.is_empty() {
            return Err(invalid("no algorithms selected"));
        }
        if self.sensing == SensingKind::Identity && self.m != self.n {
            return Err(invalid("identity sensing needs m = n"));
        }
        for &k in &self.k_grid {
            SupportSampler::new(&self.params(k)?, k, 0)?;
        }
        Ok(())
    }
}

/// SplitMix64 finalizer.
fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one trial: SplitMix64 folded over (master, K, algorithm, trial).
pub fn trial_seed(master: u64, k: usize, algorithm: Algorithm, trial: usize) -> u64 {
    mix(mix(mix(mix(master) ^ k as u64) ^ algorithm.id()) ^ trial as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub k: usize,
    pub algorithm: Algorithm,
    pub success: bool,
    pub iterations: usize,
    pub rel_error: f64,
    pub runtime: Duration,
}

fn solve(
    alg: Algorithm,
    cfg: &ExperimentConfig,
    k: usize,
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<RecoveryResult<f64>> {
    let epsilon = cfg.epsilon * y.norm();
    match alg {
        Algorithm::Tsgbomp => {
            tsgbomp(phi, y, &TsgbompConfig { k, window: cfg.window, b: cfg.b, p: cfg.p, epsilon })
        }
        Algorithm::Bomp => bomp(phi, y, &BompConfig { k, block: cfg.b * cfg.p, epsilon }),
    }
}

/// One seeded trial: matrix, then support, then values, all from `seed`.
pub fn run_trial(cfg: &ExperimentConfig, k: usize, algorithm: Algorithm, seed: u64) -> Result<TrialRecord> {
    let t0 = Instant::now();
    let params = cfg.params(k)?;
    let sampler = SupportSampler::new(&params, k, 0)?;
    let mut rng = seeded_rng(seed);
    let phi: SensingMatrix<f64> = match cfg.sensing {
        SensingKind::Gaussian => gaussian_matrix(cfg.m, cfg.n, VarianceMode::Unit, true, &mut rng),
        SensingKind::Identity => SensingMatrix::identity(cfg.n),
    };
    let support = sampler.sample(&mut rng);
    let truth: SignalInstance<f64> = fill_values(&support, &params, cfg.value_scheme, &mut rng)?;
    let y = measure(&phi, &truth.x, &Noise::None, &mut rng)?.y;
    let result = solve(algorithm, cfg, k, &phi.entries, &y)?;
    let norm = truth.x.norm();
    let rel_error = if norm > 0.0 { (&result.x_hat - &truth.x).norm() / norm } else { 0.0 };
    Ok(TrialRecord {
        seed,
        k,
        algorithm,
        success: success_check(&result, &truth, cfg.rel_tol),
        iterations: result.iterations,
        rel_error,
        runtime: t0.elapsed(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub k: usize,
    pub algorithm: Algorithm,
    pub successes: usize,
    pub trials: usize,
}

impl CurvePoint {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Curve computed so far plus the error that stopped it, if any.
#[derive(Debug)]
pub struct CurveRun {
    pub points: Vec<CurvePoint>,
    pub error: Option<Error>,
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("K,algorithm,success_rate,trials\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.k, p.algorithm, p.success_rate(), p.trials);
    }
    out
}

/// Every (K, algorithm) point of the grid in order; stops at the first
/// failing point and keeps the points completed before it.
pub fn run_curve_partial(cfg: &ExperimentConfig, jobs: usize) -> CurveRun {
    let mut points = Vec::new();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => return CurveRun { points, error: Some(invalid(format!("thread pool: {e}"))) },
    };
    for &k in &cfg.k_grid {
        for &alg in &cfg.algorithms {
            let records: Vec<Result<TrialRecord>> = pool.install(|| {
                (0..cfg.trials)
                    .into_par_iter()
                    .map(|t| run_trial(cfg, k, alg, trial_seed(cfg.master_seed, k, alg, t)))
                    .collect()
            });
            let mut successes = 0;
            for r in records {
                match r {
                    Ok(r) => successes += usize::from(r.success),
                    Err(e) => return CurveRun { points, error: Some(e) },
                }
            }
            points.push(CurvePoint { k, algorithm: alg, successes, trials: cfg.trials });
        }
    }
    CurveRun { points, error: None }
}

pub fn run_curve(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<CurvePoint>> {
    let run = run_curve_partial(cfg, jobs);
    match run.error {
        Some(e) => Err(e),
        None => Ok(run.points),
    }
}

// ---------------------------------------------------------------------------
// Certified instances

/// Geometry of one family of certified instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteGeometry {
    pub n: usize,
    pub m: usize,
    pub b: usize,
    pub p: usize,
    pub window: usize,
    pub k: usize,
    pub identity: bool,
}

impl SuiteGeometry {
    pub fn lsep(&self) -> usize {
        min_separation(self.b, self.p, self.window)
    }
}

/// Small geometries where the constant is computed exhaustively in well
/// under a second.
pub fn default_suite_geometries() -> Vec<SuiteGeometry> {
    let g = |b, p, window, k, m| SuiteGeometry { n: 40, m, b, p, window, k, identity: false };
    vec![g(1, 1, 1, 1, 200), g(1, 1, 1, 2, 400), g(1, 2, 2, 1, 400), g(2, 1, 2, 1, 400), g(1, 2, 2, 2, 800), g(2, 1, 2, 2, 1200)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteInstance {
    pub geometry: SuiteGeometry,
    pub delta: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub required_x_min: f64,
    pub recovered: bool,
    pub support: Support,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteReport {
    pub attempts: usize,
    /// Attempts whose constant failed the condition on delta.
    pub rejected: usize,
    pub instances: Vec<SuiteInstance>,
}

impl SuiteReport {
    pub fn certified(&self) -> usize {
        self.instances.len()
    }

    pub fn recovered(&self) -> usize {
        self.instances.iter().filter(|i| i.recovered).count()
    }

    pub fn success_rate(&self) -> Option<f64> {
        (!self.instances.is_empty()).then(|| self.recovered() as f64 / self.certified() as f64)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if self.attempts > 0 && self.instances.is_empty() {
            out.push_str("no certified instances found\n");
        }
        let _ = writeln!(out, "attempts = {}", self.attempts);
        let _ = writeln!(out, "rejected = {}", self.rejected);
        let _ = writeln!(out, "certified = {}", self.certified());
        let _ = writeln!(out, "recovered = {}", self.recovered());
        if let Some(r) = self.success_rate() {
            let _ = writeln!(out, "success_rate = {r}");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,m,b,p,L,K,delta,x_min,x_max,required_x_min,recovered,support\n");
        for i in &self.instances {
            let g = &i.geometry;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                g.n,
                g.m,
                g.b,
                g.p,
                g.window,
                g.k,
                i.delta,
                i.x_min,
                i.x_max,
                i.required_x_min,
                i.recovered,
                i.support.to_text().trim_end().replace('\n', ";")
            );
        }
        out
    }
}

/// One attempt: fresh matrix, exact constant of order (K-1, 2) with pseudo
/// blocks of the separation length, and if the constant qualifies, a signal
/// whose magnitude spread satisfies the amplitude condition.
fn suite_attempt<R: Rng + ?Sized>(g: &SuiteGeometry, rng: &mut R) -> Result<Option<SuiteInstance>> {
    let lsep = g.lsep();
    let phi: SensingMatrix<f64> = if g.identity {
        SensingMatrix::identity(g.n)
    } else {
        gaussian_matrix(g.m, g.n, VarianceMode::Unit, true, rng)
    };
    let ric_params = PibsParams::new(g.n, g.b, g.p, lsep, lsep, g.k - 1, 2)?;
    let delta = pibric(&phi.entries, &ric_params, g.k - 1, 2, RicOptions { jobs: 1, cap: 5_000_000 })?.delta;
    let fk = f_k(delta, g.k, g.b, g.p);
    let limit = 1.0 / (2.0 * g.k as f64 + 1.0).sqrt();
    if delta >= limit || fk >= 1.0 {
        return Ok(None);
    }
    let ratio = (1.05 * fk + 1e-9).min(1.0);
    let mut params = PibsParams::new(g.n, g.b, g.p, 0, lsep, g.k, 0)?;
    params.window = Some(g.window);
    let support = SupportSampler::new(&params, g.k, 0)?.sample(rng);
    let mut x = DVector::<f64>::zeros(g.n);
    for &j in support.columns() {
        let mag = ratio + (1.0 - ratio) * rng.random::<f64>();
        x[j] = if rng.random::<bool>() { mag } else { -mag };
    }
    let truth = SignalInstance::new(x, support.clone(), params);
    let (x_min, x_max) = (truth.x_min().unwrap_or(0.0), truth.x_max().unwrap_or(0.0));
    let cert = thm1_certificate(delta, g.k, g.b, g.p, 0.0, x_min, x_max, Field::Real);
    if !cert.passed() {
        return Ok(None);
    }
    let y = &phi.entries * &truth.x;
    let result = tsgbomp(&phi.entries, &y, &TsgbompConfig { k: g.k, window: g.window, b: g.b, p: g.p, epsilon: 0.0 })?;
    Ok(Some(SuiteInstance {
        geometry: *g,
        delta,
        x_min,
        x_max,
        required_x_min: cert.required_x_min,
        recovered: success_check(&result, &truth, 1e-6),
        support,
    }))
}

/// Collects `count` certified instances, cycling through `geometries`, and
/// runs the solver on each. Gives up after `max_attempts` draws.
pub fn theorem_regime_suite<R: Rng + ?Sized>(
    count: usize,
    geometries: &[SuiteGeometry],
    max_attempts: usize,
    rng: &mut R,
) -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    if count == 0 {
        return Ok(report);
    }
    if geometries.is_empty() {
        return Err(invalid("no geometries given"));
    }
    for g in geometries {
        if g.k == 0 || g.n % g.window != 0 || g.window < g.b * g.p || (g.identity && g.m != g.n) {
            return Err(invalid(format!("unusable suite geometry {g:?}")));
        }
    }
    while report.instances.len() < count && report.attempts < max_attempts {
        let g = &geometries[report.attempts % geometries.len()];
        report.attempts += 1;
        match suite_attempt(g, rng)? {
            Some(inst) => report.instances.push(inst),
            None => report.rejected += 1,
        }
    }
    Ok(report)
}
