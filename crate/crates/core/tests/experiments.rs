use tsgbomp::experiments::*;
use tsgbomp::signal::ValueScheme;
use tsgbomp::{seeded_rng, Error};

fn small(sensing: SensingKind, m: usize) -> ExperimentConfig {
    ExperimentConfig {
        n: 64,
        m,
        b: 2,
        p: 2,
        window: 8,
        separation: Some(8),
        k_grid: vec![1, 2, 3],
        trials: 5,
        master_seed: 11,
        sensing,
        ..Default::default()
    }
}

#[test]
fn config_parse_round_trip() {
    let text = "n = 200\nm = 120 # fewer rows\nb=4\np=2\nL=8\nseparation=8\nK_grid=1-3,5\nvalue_scheme=pm:10\ntrials=7\nalgorithms=tsgbomp\nseed=5\n";
    let c = ExperimentConfig::parse(text).unwrap();
    assert_eq!(c.m, 120);
    assert_eq!(c.k_grid, vec![1, 2, 3, 5]);
    assert_eq!(c.value_scheme, ValueScheme::PlusMinus(10.0));
    assert_eq!(c.algorithms, vec![Algorithm::Tsgbomp]);
    assert_eq!(c.master_seed, 5);
    assert_eq!(c.separation(), 8);
    assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
}

#[test]
fn config_errors() {
    assert!(matches!(ExperimentConfig::parse("bogus = 1"), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(ExperimentConfig::parse("n = 10\n\nm = x"), Err(Error::Parse { line: 3, .. })));
    assert!(matches!(ExperimentConfig::parse("L = 7"), Err(Error::NotDivisible { n: 200, by: 7 })));
    assert!(ExperimentConfig::parse("trials = 0").is_err());
    assert!(ExperimentConfig::parse("algorithms = gomp").is_err());
    assert!(ExperimentConfig::parse("sensing = identity").is_err());
    // Too many clusters for the signal length.
    assert!(ExperimentConfig::parse("K_grid = 40").is_err());
    assert_eq!(ExperimentConfig::default().separation(), 20);
}

#[test]
fn identity_sensing_always_succeeds() {
    let cfg = small(SensingKind::Identity, 64);
    // Fixed blocks cut clusters, so only the windowed solver is exact here.
    for p in run_curve(&cfg, 1).unwrap().iter().filter(|p| p.algorithm == Algorithm::Tsgbomp) {
        assert_eq!(p.success_rate(), 1.0, "K={} {}", p.k, p.algorithm);
    }
}

#[test]
fn trials_are_reproducible() {
    let cfg = ExperimentConfig { separation: Some(8), ..Default::default() };
    let seed = trial_seed(3, 5, Algorithm::Tsgbomp, 17);
    let a = run_trial(&cfg, 5, Algorithm::Tsgbomp, seed).unwrap();
    let b = run_trial(&cfg, 5, Algorithm::Tsgbomp, seed).unwrap();
    assert_eq!((a.success, a.iterations, a.rel_error), (b.success, b.iterations, b.rel_error));
    assert_ne!(seed, trial_seed(3, 5, Algorithm::Bomp, 17));
    assert_ne!(seed, trial_seed(3, 5, Algorithm::Tsgbomp, 18));
    assert_ne!(seed, trial_seed(4, 5, Algorithm::Tsgbomp, 17));
}

#[test]
fn pinned_fixture() {
    let cfg = ExperimentConfig::default();
    let t = run_trial(&cfg, 2, Algorithm::Tsgbomp, 42).unwrap();
    let b = run_trial(&cfg, 2, Algorithm::Bomp, 42).unwrap();
    assert!(t.rel_error < 1e-12);
    assert_eq!((t.success, t.iterations), FIXTURE_TSGBOMP);
    assert_eq!((b.success, b.iterations), FIXTURE_BOMP);
}

const FIXTURE_TSGBOMP: (bool, usize) = (true, 2);
const FIXTURE_BOMP: (bool, usize) = (false, 2);

#[test]
fn curves_do_not_depend_on_thread_count() {
    let cfg = small(SensingKind::Gaussian, 32);
    let one = run_curve(&cfg, 1).unwrap();
    let three = run_curve(&cfg, 3).unwrap();
    assert_eq!(one, three);
    assert_eq!(one.len(), 6);
    let csv = curve_csv(&one);
    assert!(csv.starts_with("K,algorithm,success_rate,trials\n"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn empty_suite() {
    let rep = theorem_regime_suite(0, &default_suite_geometries(), 10, &mut seeded_rng(1)).unwrap();
    assert_eq!(rep.certified(), 0);
    assert_eq!(rep.success_rate(), None);
    assert!(rep.to_text().contains("certified = 0"));
    // A suite that tries and finds nothing says so.
    let g = SuiteGeometry { n: 40, m: 4, b: 1, p: 1, window: 1, k: 2, identity: false };
    let rep = theorem_regime_suite(3, &[g], 5, &mut seeded_rng(1)).unwrap();
    assert_eq!(rep.certified(), 0);
    assert!(rep.to_text().contains("no certified instances found"));
}

#[test]
fn identity_suite_is_certified_and_recovered() {
    let g = SuiteGeometry { n: 24, m: 24, b: 2, p: 2, window: 4, k: 2, identity: true };
    let rep = theorem_regime_suite(5, &[g], 5, &mut seeded_rng(2)).unwrap();
    assert_eq!(rep.certified(), 5);
    assert_eq!(rep.recovered(), 5);
    assert_eq!(rep.rejected, 0);
    assert!(rep.instances.iter().all(|i| i.delta < 1e-10));
}

#[test]
fn gaussian_suite_recovers_certified_instances() {
    let rep = theorem_regime_suite(6, &default_suite_geometries(), 200, &mut seeded_rng(3)).unwrap();
    assert_eq!(rep.certified(), 6);
    assert_eq!(rep.success_rate(), Some(1.0));
    for i in &rep.instances {
        assert!(i.x_min >= i.required_x_min);
    }
}
