use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use tsgbomp::experiments::{run_trial, Algorithm, ExperimentConfig};
use tsgbomp::linalg::{least_squares_on, IncrementalQr};
use tsgbomp::recovery::*;
use tsgbomp::sensing::*;
use tsgbomp::signal::*;
use tsgbomp::{seeded_rng, Scalar};

fn identity_case(n: usize, b: usize, p: usize, window: usize, k: usize, seed: u64) -> (DMatrix<f64>, SignalInstance<f64>) {
    let pr = PibsParams::with_window(n, b, p, window, 0, k, 0).unwrap();
    let mut rng = seeded_rng(seed);
    let s = sample_support(&pr, k, 0, &mut rng).unwrap();
    let inst = fill_values(&s, &pr, ValueScheme::Gaussian, &mut rng).unwrap();
    (DMatrix::identity(n, n), inst)
}

#[test]
fn identity_sensing_recovers_exactly() {
    for seed in 0..20 {
        let (phi, inst) = identity_case(64, 2, 2, 8, 4, seed);
        let y = &phi * &inst.x;
        let cfg = TsgbompConfig { k: 4, window: 8, b: 2, p: 2, epsilon: 0.0 };
        let res = tsgbomp(&phi, &y, &cfg).unwrap();
        assert!(success_check(&res, &inst, 1e-10));
        assert!((&res.x_hat - &inst.x).norm() <= 1e-10);
    }
}

#[test]
fn small_residual_stops_immediately() {
    let phi = DMatrix::<f64>::identity(16, 16);
    let y = DVector::from_element(16, 1e-3);
    let cfg = TsgbompConfig { k: 3, window: 4, b: 1, p: 2, epsilon: 1.0 };
    let res = tsgbomp(&phi, &y, &cfg).unwrap();
    assert_eq!(res.iterations, 0);
    assert!(res.estimated_columns.is_empty());
    assert!(res.x_hat.iter().all(|v| *v == 0.0));
    assert_eq!(res.stop_reason, StopReason::ResidualThreshold);
}

#[test]
fn gaussian_fixture_recovers() {
    // Seeded run on the full-scale geometry, checked by the independent
    // success criterion.
    let cfg = ExperimentConfig { m: 160, p: 2, ..Default::default() };
    let rec = run_trial(&cfg, 4, Algorithm::Tsgbomp, 1).unwrap();
    assert!(rec.success);
    assert_eq!(rec.iterations, 4);
}

#[test]
fn bomp_recovers_aligned_block_in_one_step() {
    let phi = DMatrix::<f64>::identity(24, 24);
    let mut x = DVector::zeros(24);
    for j in 8..12 {
        x[j] = 1.0 + j as f64;
    }
    let res = bomp(&phi, &x, &BompConfig { k: 3, block: 4, epsilon: 1e-9 }).unwrap();
    assert_eq!(res.iterations, 1);
    assert_eq!(res.estimated_columns, (8..12).collect::<Vec<_>>());
}

#[test]
fn bomp_needs_two_steps_for_straddling_cluster() {
    let phi = DMatrix::<f64>::identity(24, 24);
    let mut x = DVector::zeros(24);
    for j in 6..10 {
        x[j] = 2.0;
    }
    let res = bomp(&phi, &x, &BompConfig { k: 3, block: 4, epsilon: 1e-9 }).unwrap();
    assert_eq!(res.iterations, 2);
    assert_eq!(res.estimated_columns, (4..12).collect::<Vec<_>>());
    assert!((&res.x_hat - &x).norm() < 1e-12);
}

#[test]
fn parameter_errors() {
    let phi = DMatrix::<f64>::identity(10, 10);
    let y = DVector::from_element(10, 1.0);
    let r = tsgbomp(&phi, &y, &TsgbompConfig { k: 1, window: 3, b: 1, p: 1, epsilon: 0.0 });
    assert!(matches!(r, Err(tsgbomp::Error::NotDivisible { n: 10, by: 3 })));
    let r = tsgbomp(&phi, &y, &TsgbompConfig { k: 1, window: 2, b: 2, p: 2, epsilon: 0.0 });
    assert!(matches!(r, Err(tsgbomp::Error::InvalidParameter(_))));
    let short = DVector::from_element(9, 1.0);
    let r = bomp(&phi, &short, &BompConfig { k: 1, block: 2, epsilon: 0.0 });
    assert!(matches!(r, Err(tsgbomp::Error::DimensionMismatch(_))));
}

#[test]
fn candidate_ranges_clamp_at_edges() {
    assert_eq!(candidate_range(0, 8, 8, 200), 0..=7);
    assert_eq!(candidate_range(1, 8, 8, 200), 1..=15);
    assert_eq!(candidate_range(24, 8, 8, 200), 185..=192);
}

#[test]
fn least_squares_examples() {
    let phi = DMatrix::<f64>::identity(6, 6);
    let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let u = least_squares_on(&phi, &[1, 4], &y).unwrap();
    assert!((u[0] - 2.0).abs() < 1e-12 && (u[1] - 5.0).abs() < 1e-12);

    // The same column twice: the minimum-norm solution splits evenly.
    let col = DVector::from_vec(vec![0.6, 0.8, 0.0]);
    let a = DMatrix::from_columns(&[col.clone(), col.clone()]);
    let u = least_squares_on(&a, &[0, 1], &col).unwrap();
    assert!((u[0] - 0.5).abs() < 1e-12 && (u[1] - 0.5).abs() < 1e-12);

    assert!(matches!(least_squares_on(&phi, &[], &y), Err(tsgbomp::Error::EmptyColumns)));
}

#[test]
fn least_squares_residual_is_orthogonal() {
    let mut rng = seeded_rng(21);
    let phi: SensingMatrix<f64> = gaussian_matrix(30, 12, VarianceMode::Unit, false, &mut rng);
    let y = DVector::from_fn(30, |_, _| f64::gaussian(&mut rng, 1.0));
    let cols: Vec<usize> = (0..12).collect();
    let u = least_squares_on(&phi.entries, &cols, &y).unwrap();
    let r = &y - &phi.entries * &u;
    let c = phi.entries.ad_mul(&r);
    assert!(c.amax() <= 1e-8 * y.norm());
}

#[test]
fn incremental_qr_matches_batch_solve() {
    let mut rng = seeded_rng(8);
    let phi: SensingMatrix<Complex64> = gaussian_matrix(20, 10, VarianceMode::Unit, true, &mut rng);
    let y = DVector::from_fn(20, |_, _| Complex64::gaussian(&mut rng, 1.0));
    let order = [3usize, 7, 1, 9, 0];
    let mut qr = IncrementalQr::new(&y);
    for &j in &order {
        assert!(qr.push(&phi.entries, j));
    }
    assert!(!qr.push(&phi.entries, 3));
    assert_eq!(qr.skipped(), 1);
    let u = qr.coefficients();
    let batch = least_squares_on(&phi.entries, &order, &y).unwrap();
    assert!((&u - &batch).norm() < 1e-10);
}

#[test]
fn success_check_examples() {
    let (phi, inst) = identity_case(32, 2, 1, 4, 2, 3);
    let y = &phi * &inst.x;
    let mut res = tsgbomp(&phi, &y, &TsgbompConfig { k: 2, window: 4, b: 2, p: 1, epsilon: 0.0 }).unwrap();
    assert!(success_check(&res, &inst, 1e-6));
    let missing = inst.support.columns()[0];
    res.estimated_columns.retain(|&c| c != missing);
    assert!(!success_check(&res, &inst, 1e-6));
}

#[test]
fn superset_refit_is_a_success() {
    let mut rng = seeded_rng(12);
    let phi: SensingMatrix<f64> = gaussian_matrix(40, 30, VarianceMode::Unit, true, &mut rng);
    let mut x = DVector::zeros(30);
    x[4] = 3.0;
    x[5] = -1.0;
    let y = &phi.entries * &x;
    let cols = vec![2, 3, 4, 5, 6, 20];
    let u = least_squares_on(&phi.entries, &cols, &y).unwrap();
    let mut x_hat = DVector::zeros(30);
    for (&c, &v) in cols.iter().zip(u.iter()) {
        x_hat[c] = v;
    }
    let res = RecoveryResult {
        estimated_columns: cols,
        x_hat,
        trace: vec![],
        iterations: 1,
        stop_reason: StopReason::Budget,
    };
    assert!(success_against(&res, &x, 1e-6));
}

#[test]
fn trace_fixture() {
    let mut rng = seeded_rng(2024);
    let phi: SensingMatrix<f64> = gaussian_matrix(48, 64, VarianceMode::Unit, true, &mut rng);
    let pr = PibsParams::with_window(64, 2, 2, 8, 0, 3, 0).unwrap();
    let s = sample_support(&pr, 3, 0, &mut rng).unwrap();
    let inst = fill_values(&s, &pr, ValueScheme::PlusMinus(10.0), &mut rng).unwrap();
    let y = &phi.entries * &inst.x;
    let cfg = TsgbompConfig { k: 3, window: 8, b: 2, p: 2, epsilon: 1e-6 * y.norm() };
    let a = tsgbomp(&phi.entries, &y, &cfg).unwrap();
    let b = tsgbomp(&phi.entries, &y, &cfg).unwrap();
    assert_eq!(a, b);
    let csv = trace_csv(&a);
    let starts: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(s.to_text(), FIXTURE_SUPPORT);
    assert_eq!(starts, FIXTURE_BLOCK_STARTS);
    assert!(success_check(&a, &inst, 1e-6));
}

const FIXTURE_SUPPORT: &str = "cluster 26 1\ncluster 59 2\n";
const FIXTURE_BLOCK_STARTS: [&str; 2] = ["59;61", "25;27"];

fn check_invariants<T: Scalar>(phi: &DMatrix<T>, y: &DVector<T>, res: &RecoveryResult<T>) {
    let mut prev = y.norm();
    for step in &res.trace {
        assert!(step.residual_norm <= prev + 1e-12 * y.norm().max(1.0));
        prev = step.residual_norm;
        let r = step.residual.as_ref().expect("residuals recorded");
        assert!((r.norm() - step.residual_norm).abs() <= 1e-12 * y.norm().max(1.0));
    }
    // Final residual is orthogonal to every selected column.
    if let Some(last) = res.trace.last() {
        let r = last.residual.as_ref().unwrap();
        for &j in &res.estimated_columns {
            let c = phi.column(j).dotc(r).modulus();
            assert!(c <= 1e-9 * y.norm().max(1.0), "column {j}: {c}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn residuals_shrink_and_stay_orthogonal(seed in any::<u64>(), k in 1usize..5, complex in any::<bool>()) {
        let mut rng = seeded_rng(seed);
        let opts = RecoveryOptions { record_residuals: true };
        let cfg = TsgbompConfig { k, window: 8, b: 2, p: 2, epsilon: 0.0 };
        if complex {
            let phi: SensingMatrix<Complex64> = gaussian_matrix(30, 64, VarianceMode::Unit, true, &mut rng);
            let y = DVector::from_fn(30, |_, _| Complex64::gaussian(&mut rng, 1.0));
            let res = tsgbomp_with(&phi.entries, &y, &cfg, opts).unwrap();
            check_invariants(&phi.entries, &y, &res);
        } else {
            let phi: SensingMatrix<f64> = gaussian_matrix(30, 64, VarianceMode::Unit, true, &mut rng);
            let y = DVector::from_fn(30, |_, _| f64::gaussian(&mut rng, 1.0));
            let res = tsgbomp_with(&phi.entries, &y, &cfg, opts).unwrap();
            check_invariants(&phi.entries, &y, &res);
            let res = bomp_with(&phi.entries, &y, &BompConfig { k, block: 4, epsilon: 0.0 }, opts).unwrap();
            check_invariants(&phi.entries, &y, &res);
        }
    }
}
