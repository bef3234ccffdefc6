use nalgebra::DVector;
use num_complex::Complex64;
use tsgbomp::io::*;
use tsgbomp::sensing::*;
use tsgbomp::{seeded_rng, Scalar};

#[test]
fn normalized_columns_have_unit_norm() {
    let phi: SensingMatrix<f64> = gaussian_matrix(30, 50, VarianceMode::Unit, true, &mut seeded_rng(1));
    for c in phi.entries.column_iter() {
        assert!((c.norm() - 1.0).abs() <= 1e-12);
    }
    let mut again = phi.clone();
    again.normalize();
    assert_eq!(again, phi);
    let phi: SensingMatrix<Complex64> = gaussian_matrix(30, 50, VarianceMode::Unit, true, &mut seeded_rng(1));
    for c in phi.entries.column_iter() {
        assert!((c.norm() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn one_over_m_columns_have_unit_norm_on_average() {
    let mut total = 0.0;
    let mut count = 0usize;
    for seed in 0..1000 {
        let phi: SensingMatrix<f64> = gaussian_matrix(100, 50, VarianceMode::OneOverM, false, &mut seeded_rng(seed));
        for c in phi.entries.column_iter() {
            total += c.norm();
            count += 1;
        }
    }
    let mean = total / count as f64;
    assert!((mean - 1.0).abs() <= 0.05, "mean column norm {mean}");
}

#[test]
fn matrices_are_seeded() {
    let a: SensingMatrix<f64> = gaussian_matrix(10, 20, VarianceMode::Unit, true, &mut seeded_rng(5));
    let b: SensingMatrix<f64> = gaussian_matrix(10, 20, VarianceMode::Unit, true, &mut seeded_rng(5));
    assert_eq!(a, b);
    let c: SensingMatrix<f64> = gaussian_matrix(10, 20, VarianceMode::Unit, true, &mut seeded_rng(6));
    assert_ne!(a, c);
}

#[test]
fn measurement_examples() {
    let mut rng = seeded_rng(2);
    let phi: SensingMatrix<f64> = gaussian_matrix(8, 12, VarianceMode::Unit, true, &mut rng);
    let x = DVector::from_fn(12, |i, _| i as f64);
    let m = measure(&phi, &x, &Noise::None, &mut rng).unwrap();
    assert_eq!(m.y, &phi.entries * &x);
    assert_eq!(m.noise_bound, 0.0);

    let e = DVector::from_fn(8, |i, _| 0.1 * i as f64);
    let m = measure(&phi, &DVector::zeros(12), &Noise::Fixed(e.clone()), &mut rng).unwrap();
    assert_eq!(m.y, e);
    assert!((m.noise_bound - e.norm()).abs() < 1e-15);

    let id = SensingMatrix::<f64>::identity(12);
    assert_eq!(measure(&id, &x, &Noise::None, &mut rng).unwrap().y, x);

    assert!(measure(&phi, &DVector::zeros(3), &Noise::None, &mut rng).is_err());
}

#[test]
fn variance_mode_parsing() {
    assert_eq!("unit".parse::<VarianceMode>().unwrap(), VarianceMode::Unit);
    assert_eq!("one_over_m".parse::<VarianceMode>().unwrap(), VarianceMode::OneOverM);
    assert!("other".parse::<VarianceMode>().is_err());
}

#[test]
fn signal_csv_round_trip() {
    let x = DVector::from_vec(vec![0.0, 1.5, -2.25, 0.0]);
    let text = signal_to_csv(&x);
    assert!(text.starts_with("index,value\n2,1.5\n") || text.starts_with("index,value\n1,0\n"));
    assert_eq!(signal_from_csv::<f64>(&text, None).unwrap(), x);
    let z = DVector::from_vec(vec![Complex64::new(1.0, -1.0), Complex64::new(0.0, 0.5)]);
    assert_eq!(signal_from_csv::<Complex64>(&signal_to_csv(&z), Some(2)).unwrap(), z);
    assert!(signal_from_csv::<f64>("index,value\n0,1\n", None).is_err());
    assert!(signal_from_csv::<f64>("index,value\n5,1\n", Some(3)).is_err());
}

#[test]
fn matrix_round_trips() {
    let dir = std::env::temp_dir().join(format!("tsgbomp-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let phi: SensingMatrix<Complex64> = gaussian_matrix(5, 7, VarianceMode::Unit, true, &mut seeded_rng(3));
    for name in ["m.bin", "m.csv"] {
        let path = dir.join(name);
        save_matrix(&phi, &path).unwrap();
        let back: SensingMatrix<Complex64> = load_matrix(&path).unwrap();
        assert_eq!(back.entries, phi.entries, "{name}");
    }
    let back: SensingMatrix<Complex64> = load_matrix(&dir.join("m.bin")).unwrap();
    assert!(back.normalized);
    assert!(load_matrix::<f64>(&dir.join("m.bin")).is_err());
    let real: SensingMatrix<f64> = gaussian_matrix(4, 3, VarianceMode::Unit, false, &mut seeded_rng(4));
    save_matrix(&real, &dir.join("r.csv")).unwrap();
    let text = std::fs::read_to_string(dir.join("r.csv")).unwrap();
    assert!(text.starts_with("c1,c2,c3\n"));
    assert_eq!(load_matrix::<f64>(&dir.join("r.csv")).unwrap().entries, real.entries);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn complex_gaussian_splits_variance() {
    let mut rng = seeded_rng(9);
    let n = 200_000;
    let (mut re2, mut im2) = (0.0, 0.0);
    for _ in 0..n {
        let z = Complex64::gaussian(&mut rng, 2.0);
        re2 += z.re * z.re;
        im2 += z.im * z.im;
    }
    assert!((re2 / n as f64 - 1.0).abs() < 0.02);
    assert!((im2 / n as f64 - 1.0).abs() < 0.02);
}
