use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use tsgbomp::analysis::{
    g_bounds, g_empirical, pibric, thm1_certificate, thm2_bound, verify_lemmas, LambdaVariant, LemmaOptions,
    LemmaReport, RicOptions, Thm2Inputs,
};
use tsgbomp::experiments::{
    curve_csv, default_suite_geometries, run_curve_partial, theorem_regime_suite, Algorithm, ExperimentConfig,
    SuiteGeometry,
};
use tsgbomp::io::{load_matrix, save_matrix, signal_from_csv, signal_to_csv};
use tsgbomp::recovery::{bomp, report_text, trace_csv, tsgbomp, BompConfig, TsgbompConfig};
use tsgbomp::sensing::{gaussian_matrix, SensingMatrix, VarianceMode};
use tsgbomp::signal::{
    compare_counts, count_supports_bound, count_supports_exact, count_supports_formula, count_union, fill_values,
    min_separation, PibsParams, SupportSampler, ValueScheme,
};
use tsgbomp::{seeded_rng, Error, Field, Scalar};

/// Block-sparse recovery with unknown block boundaries.
#[derive(Parser)]
#[command(name = "tsgbomp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random block-sparse signal.
    GenSignal(GenSignal),
    /// Draw a random Gaussian sensing matrix.
    GenMatrix(GenMatrix),
    /// Recover a signal from measurements.
    Recover(Recover),
    /// Brute-force restricted isometry constant over structured supports.
    Ric(Ric),
    /// Check the supporting inequalities on random matrices.
    Lemmas(Lemmas),
    /// Count structured supports.
    Count(Count),
    /// Check the deterministic recovery condition.
    Thm1(Thm1),
    /// Evaluate the probability lower bound for Gaussian matrices.
    Thm2(Thm2),
    /// Bounds on the probability that the amplitude ratio exceeds a level.
    Gbounds(Gbounds),
    /// Monte Carlo recovery curve from a config file.
    Curve(Curve),
    /// Certified random instances and their recovery rate.
    TheoremSuite(TheoremSuite),
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldArg {
    Real,
    Complex,
}

impl From<FieldArg> for Field {
    fn from(f: FieldArg) -> Self {
        match f {
            FieldArg::Real => Field::Real,
            FieldArg::Complex => Field::Complex,
        }
    }
}

/// Geometry shared by several commands. The separation is taken from
/// `--lsep` if given, otherwise derived from `--L`.
#[derive(Args, Clone)]
struct Geometry {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    b: usize,
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// Window length.
    #[arg(long = "L")]
    window: Option<usize>,
    /// Minimum gap between clusters.
    #[arg(long)]
    lsep: Option<usize>,
    /// Pseudo-block length (defaults to the separation).
    #[arg(long)]
    l: Option<usize>,
    #[arg(long = "K")]
    k: usize,
    #[arg(long = "R", default_value_t = 0)]
    r: usize,
}

impl Geometry {
    fn params(&self) -> Result<PibsParams, Error> {
        let lsep = match (self.lsep, self.window) {
            (Some(s), _) => s,
            (None, Some(w)) => min_separation(self.b, self.p, w),
            (None, None) => return Err(Error::InvalidParameter("give --L or --lsep".into())),
        };
        let mut params = PibsParams::new(self.n, self.b, self.p, self.l.unwrap_or(lsep), lsep, self.k, self.r)?;
        params.window = self.window;
        Ok(params)
    }
}

#[derive(Args)]
struct GenSignal {
    #[command(flatten)]
    geometry: Geometry,
    /// `pm:<c>` or `gaussian`.
    #[arg(long, default_value = "pm:10")]
    values: String,
    #[arg(long, value_enum, default_value = "real")]
    field: FieldArg,
    #[arg(long)]
    seed: u64,
    /// Signal CSV; the support goes to stdout. Without it the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenMatrix {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    /// `unit` or `one_over_m`.
    #[arg(long, default_value = "unit")]
    variance: String,
    /// Keep the raw columns instead of normalizing them.
    #[arg(long)]
    no_normalize: bool,
    #[arg(long, value_enum, default_value = "real")]
    field: FieldArg,
    #[arg(long)]
    seed: u64,
    /// `.bin` for the binary form, anything else for CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Tsgbomp,
    Bomp,
}

#[derive(Args)]
struct Recover {
    #[arg(long)]
    matrix: PathBuf,
    /// Measurement CSV (`index,value` or `index,re,im`).
    #[arg(long)]
    y: PathBuf,
    #[arg(long, value_enum, default_value = "tsgbomp")]
    algorithm: AlgorithmArg,
    /// Iteration budget.
    #[arg(long = "K")]
    k: usize,
    #[arg(long = "L")]
    window: Option<usize>,
    #[arg(long)]
    b: usize,
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// BOMP partition length (defaults to pb).
    #[arg(long)]
    block: Option<usize>,
    /// Residual threshold.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "real")]
    field: FieldArg,
    /// Estimate CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct Ric {
    #[command(flatten)]
    geometry: Geometry,
    /// Matrix file; otherwise a Gaussian matrix is drawn from `--m` and `--seed`.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "real")]
    field: FieldArg,
    #[arg(long, default_value_t = 1_000_000)]
    cap: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct Lemmas {
    #[arg(long, default_value_t = 100)]
    matrices: usize,
    #[arg(long, default_value_t = 40)]
    m: usize,
    #[arg(long, default_value_t = 60)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    b: usize,
    #[arg(long, default_value_t = 2)]
    p: usize,
    #[arg(long = "L", default_value_t = 4)]
    window: usize,
    #[arg(long = "K", default_value_t = 2)]
    k: usize,
    #[arg(long = "R", default_value_t = 2)]
    r: usize,
    /// Pseudo-block lengths below the separation, comma separated
    /// (defaults to 0 and separation - 1).
    #[arg(long, value_delimiter = ',')]
    shorter: Vec<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Report CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Count {
    #[command(flatten)]
    geometry: Geometry,
    /// Count the union over all orders up to (K, R) instead of the exact class.
    #[arg(long)]
    union: bool,
    /// Also print the closed form, its assumptions, and how any gap splits.
    #[arg(long)]
    compare: bool,
    /// Print the logarithm-based upper bound as well.
    #[arg(long)]
    bound: bool,
}

#[derive(Args)]
struct Thm1 {
    #[arg(long)]
    delta: f64,
    #[arg(long = "K")]
    k: usize,
    #[arg(long, default_value_t = 1)]
    b: usize,
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    x_min: f64,
    #[arg(long, default_value_t = 1.0)]
    x_max: f64,
    #[arg(long, value_enum, default_value = "real")]
    field: FieldArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum LambdaArg {
    Separation,
    Window,
}

#[derive(Args)]
struct Thm2 {
    #[arg(long)]
    b: usize,
    #[arg(long)]
    p: usize,
    #[arg(long = "L")]
    window: usize,
    #[arg(long = "K")]
    k: usize,
    #[arg(long = "R", default_value_t = 2)]
    r: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    eps0: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, value_enum, default_value = "separation")]
    lambda: LambdaArg,
    /// Use this value of the amplitude-ratio probability instead of its lower bound.
    #[arg(long)]
    g: Option<f64>,
    /// Exit 1 when a side condition fails.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct Gbounds {
    #[arg(long)]
    a: f64,
    #[arg(long = "K")]
    k: usize,
    #[arg(long)]
    b: usize,
    /// Monte Carlo trials for an empirical estimate.
    #[arg(long, default_value_t = 0)]
    trials: u64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Curve {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit 1 unless tsgbomp is at least as successful as bomp at every K.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct TheoremSuite {
    #[arg(long, default_value_t = 50)]
    count: usize,
    #[arg(long, default_value_t = 2000)]
    max_attempts: usize,
    #[arg(long)]
    seed: u64,
    /// Per-instance CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit 1 unless `count` instances were certified and all recovered.
    #[arg(long)]
    check: bool,
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Ok,
    CheckFailed,
}

fn write_out(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(Error::from)
}

fn gen_signal(a: &GenSignal) -> Result<Outcome, Error> {
    match a.field {
        FieldArg::Real => gen_signal_in::<f64>(a),
        FieldArg::Complex => gen_signal_in::<Complex64>(a),
    }
}

fn gen_signal_in<T: Scalar>(a: &GenSignal) -> Result<Outcome, Error> {
    let params = a.geometry.params()?.with_pseudo_len(0)?;
    let scheme: ValueScheme = a.values.parse()?;
    let mut rng = seeded_rng(a.seed);
    let support = SupportSampler::new(&params, params.k, 0)?.sample(&mut rng);
    let inst = fill_values::<T, _>(&support, &params, scheme, &mut rng)?;
    let csv = signal_to_csv(&inst.x);
    match &a.out {
        Some(path) => {
            write_out(path, &csv)?;
            print!("{}", support.to_text());
        }
        None => print!("{csv}"),
    }
    Ok(Outcome::Ok)
}

fn gen_matrix(a: &GenMatrix) -> Result<Outcome, Error> {
    let mode: VarianceMode = a.variance.parse()?;
    let mut rng = seeded_rng(a.seed);
    match a.field {
        FieldArg::Real => {
            let phi: SensingMatrix<f64> = gaussian_matrix(a.m, a.n, mode, !a.no_normalize, &mut rng);
            save_matrix(&phi, &a.out)?;
        }
        FieldArg::Complex => {
            let phi: SensingMatrix<Complex64> = gaussian_matrix(a.m, a.n, mode, !a.no_normalize, &mut rng);
            save_matrix(&phi, &a.out)?;
        }
    }
    Ok(Outcome::Ok)
}

fn recover(a: &Recover) -> Result<Outcome, Error> {
    match a.field {
        FieldArg::Real => recover_in::<f64>(a),
        FieldArg::Complex => recover_in::<Complex64>(a),
    }
}

fn recover_in<T: Scalar>(a: &Recover) -> Result<Outcome, Error> {
    let phi = load_matrix::<T>(&a.matrix)?;
    let y = signal_from_csv::<T>(&std::fs::read_to_string(&a.y)?, Some(phi.m()))?;
    let result = match a.algorithm {
        AlgorithmArg::Tsgbomp => {
            let window = a.window.ok_or_else(|| Error::InvalidParameter("tsgbomp needs --L".into()))?;
            tsgbomp(&phi.entries, &y, &TsgbompConfig { k: a.k, window, b: a.b, p: a.p, epsilon: a.epsilon })?
        }
        AlgorithmArg::Bomp => {
            let block = a.block.unwrap_or(a.b * a.p);
            bomp(&phi.entries, &y, &BompConfig { k: a.k, block, epsilon: a.epsilon })?
        }
    };
    print!("{}", report_text(&result));
    if let Some(path) = &a.out {
        write_out(path, &signal_to_csv(&result.x_hat))?;
    }
    if let Some(path) = &a.trace {
        write_out(path, &trace_csv(&result))?;
    }
    Ok(Outcome::Ok)
}

fn ric(a: &Ric) -> Result<Outcome, Error> {
    match a.field {
        FieldArg::Real => ric_in::<f64>(a),
        FieldArg::Complex => ric_in::<Complex64>(a),
    }
}

fn ric_in<T: Scalar>(a: &Ric) -> Result<Outcome, Error> {
    let params = a.geometry.params()?;
    let phi: SensingMatrix<T> = match (&a.matrix, a.m, a.seed) {
        (Some(path), _, _) => load_matrix(path)?,
        (None, Some(m), Some(seed)) => gaussian_matrix(m, params.n, VarianceMode::Unit, true, &mut seeded_rng(seed)),
        _ => return Err(Error::InvalidParameter("give --matrix, or --m with --seed".into())),
    };
    let est = pibric(&phi.entries, &params, params.k, params.r, RicOptions { jobs: a.jobs, cap: a.cap })?;
    println!("delta = {:.15}", est.delta);
    println!("supports_scanned = {}", est.supports_scanned);
    println!("argmax_support:");
    print!("{}", est.argmax_support.to_text());
    Ok(Outcome::Ok)
}

fn lemmas(a: &Lemmas) -> Result<Outcome, Error> {
    let params = PibsParams::with_window(a.n, a.b, a.p, a.window, 0, a.k, a.r)?;
    let shorter = if a.shorter.is_empty() { vec![0, params.lsep - 1] } else { a.shorter.clone() };
    let mut total: Option<LemmaReport> = None;
    for i in 0..a.matrices {
        let seed = a.seed.wrapping_add(i as u64);
        let phi: SensingMatrix<f64> = gaussian_matrix(a.m, a.n, VarianceMode::Unit, true, &mut seeded_rng(seed));
        let opts = LemmaOptions {
            shorter_lengths: shorter.clone(),
            seed,
            ric: RicOptions { jobs: a.jobs, cap: 50_000_000 },
            ..Default::default()
        };
        let report = verify_lemmas(&phi.entries, &params, &opts)?;
        match &mut total {
            None => total = Some(LemmaReport { checks: report.checks, constants: Vec::new() }),
            Some(t) => t.merge(&report),
        }
    }
    let Some(total) = total else {
        println!("no matrices");
        return Ok(Outcome::Ok);
    };
    print!("{}", total.to_text());
    if let Some(path) = &a.out {
        write_out(path, &total.to_csv())?;
    }
    Ok(if total.passed() { Outcome::Ok } else { Outcome::CheckFailed })
}

fn count(a: &Count) -> Result<Outcome, Error> {
    let params = a.geometry.params()?;
    let (k, r) = (params.k, params.r);
    if a.union {
        println!("{}", count_union(&params, k, r));
    } else {
        println!("{}", count_supports_exact(&params, k, r)[k][r]);
    }
    if a.compare {
        let f = count_supports_formula(&params, k, r)?;
        println!("formula = {}", f.value);
        if !f.violated.is_empty() {
            println!("formula assumptions violated: {}", f.violated.join("; "));
        }
        let c = compare_counts(&params, k, r, u64::MAX)?;
        println!("agrees = {}", c.agrees());
        println!("packed_interior = {}", c.packed_interior);
        println!("edge_only = {}", c.edge_only);
        println!("unpacked_interior = {}", c.unpacked_interior);
    }
    if a.bound {
        println!("bound = {:e}", count_supports_bound(&params, k, r)?);
    }
    Ok(Outcome::Ok)
}

fn thm1(a: &Thm1) -> Result<Outcome, Error> {
    let c = thm1_certificate(a.delta, a.k, a.b, a.p, a.epsilon, a.x_min, a.x_max, a.field.into());
    println!("{}", c.verdict());
    println!("delta_limit_margin = {:.12e}", c.delta_margin);
    println!("required_x_min = {:.12e}", c.required_x_min);
    println!("amplitude_margin = {:.12e}", c.amplitude_margin);
    Ok(if c.passed() { Outcome::Ok } else { Outcome::CheckFailed })
}

fn thm2(a: &Thm2) -> Result<Outcome, Error> {
    let res = thm2_bound(&Thm2Inputs {
        b: a.b,
        p: a.p,
        window: a.window,
        k: a.k,
        r: a.r,
        m: a.m,
        n: a.n,
        eps0: a.eps0,
        eps: a.eps,
        lambda: match a.lambda {
            LambdaArg::Separation => LambdaVariant::Separation,
            LambdaArg::Window => LambdaVariant::Window,
        },
    })?;
    print!("{}", res.to_text());
    if let Some(g) = a.g {
        println!("bound_with_g = {:.12e}", res.bound_with_g(g));
    }
    Ok(if a.check && !res.flags.all() { Outcome::CheckFailed } else { Outcome::Ok })
}

fn gbounds(a: &Gbounds) -> Result<Outcome, Error> {
    let (lo, hi) = g_bounds(a.a, a.k, a.b);
    println!("lower = {lo:.12}");
    println!("upper = {hi:.12}");
    if a.trials > 0 {
        let seed = a.seed.ok_or_else(|| Error::InvalidParameter("--trials needs --seed".into()))?;
        let (est, se) = g_empirical(a.a, a.k, a.b, a.trials, &mut seeded_rng(seed));
        println!("empirical = {est:.12}");
        println!("standard_error = {se:.12}");
    }
    Ok(Outcome::Ok)
}

fn curve(a: &Curve) -> Result<Outcome, Error> {
    let mut cfg = ExperimentConfig::parse(&std::fs::read_to_string(&a.config)?)?;
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
        cfg.validate()?;
    }
    let run = run_curve_partial(&cfg, a.jobs);
    let csv = curve_csv(&run.points);
    match &a.out {
        Some(path) => write_out(path, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(e) = run.error {
        return Err(e);
    }
    if a.check {
        let rate = |k: usize, alg: Algorithm| {
            run.points.iter().find(|p| p.k == k && p.algorithm == alg).map(|p| p.success_rate())
        };
        let dominated = cfg.k_grid.iter().any(|&k| match (rate(k, Algorithm::Tsgbomp), rate(k, Algorithm::Bomp)) {
            (Some(t), Some(b)) => t < b,
            _ => false,
        });
        if dominated {
            eprintln!("check failed: bomp beats tsgbomp somewhere on the grid");
            return Ok(Outcome::CheckFailed);
        }
    }
    Ok(Outcome::Ok)
}

fn theorem_suite(a: &TheoremSuite) -> Result<Outcome, Error> {
    let geometries: Vec<SuiteGeometry> = default_suite_geometries();
    let report = theorem_regime_suite(a.count, &geometries, a.max_attempts, &mut seeded_rng(a.seed))?;
    print!("{}", report.to_text());
    if let Some(path) = &a.out {
        write_out(path, &report.to_csv())?;
    }
    let ok = report.certified() == a.count && report.recovered() == report.certified();
    Ok(if a.check && !ok { Outcome::CheckFailed } else { Outcome::Ok })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenSignal(a) => gen_signal(a),
        Command::GenMatrix(a) => gen_matrix(a),
        Command::Recover(a) => recover(a),
        Command::Ric(a) => ric(a),
        Command::Lemmas(a) => lemmas(a),
        Command::Count(a) => count(a),
        Command::Thm1(a) => thm1(a),
        Command::Thm2(a) => thm2(a),
        Command::Gbounds(a) => gbounds(a),
        Command::Curve(a) => curve(a),
        Command::TheoremSuite(a) => theorem_suite(a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
