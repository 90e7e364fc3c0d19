//! Synthetic generators and CSV ingestion.

use std::io::Write;

use dshap_bench::datasets::{gen_gaussian_c, gen_gaussian_r, load_csv, write_csv, TargetColumn};
use dshap_bench::BenchError;
use dshap_core::classification::{irls_fit, IRLS_MAX_ITER, IRLS_TOL};
use dshap_core::RandomStream;
use nalgebra::DMatrix;

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn gaussian_r_signal_and_noise() {
    let d = gen_gaussian_r(100_000, 1, &mut RandomStream::new(1, 0));
    let beta = d.truth.as_ref().unwrap()[0];
    let fit: Vec<f64> = d.features.iter().map(|x| x[0] * beta).collect();
    let y = d.target.as_ref().unwrap();
    let expected = beta * beta / (beta * beta * (beta * beta + 1.0)).sqrt();
    assert!((correlation(&fit, y) - expected).abs() < 0.02);
    let resid_var = fit.iter().zip(y).map(|(f, y)| (y - f).powi(2)).sum::<f64>() / y.len() as f64;
    assert!((resid_var - 1.0).abs() < 0.03, "{resid_var}");
}

#[test]
fn generators_are_seed_stable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_csv(&gen_gaussian_r(50, 3, &mut RandomStream::new(4, 0)), &a).unwrap();
    write_csv(&gen_gaussian_r(50, 3, &mut RandomStream::new(4, 0)), &b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn gaussian_c_balance_and_boundary() {
    let d = gen_gaussian_c(100_000, &mut RandomStream::new(2, 0));
    let y = d.target.as_ref().unwrap();
    let balance = y.iter().sum::<f64>() / y.len() as f64;
    assert!((balance - 0.5).abs() < 0.01);
    let band: Vec<f64> = d
        .features
        .iter()
        .zip(y)
        .filter(|(x, _)| x[0].abs() < 0.05)
        .map(|(_, y)| *y)
        .collect();
    let mean = band.iter().sum::<f64>() / band.len() as f64;
    assert!((mean - 0.5).abs() < 0.03, "{mean} over {}", band.len());
}

#[test]
fn gaussian_c_fit_recovers_coefficients() {
    let d = gen_gaussian_c(10_000, &mut RandomStream::new(3, 0));
    let x = DMatrix::from_fn(d.len(), 3, |r, c| d.features[r][c]);
    let fit = irls_fit(&x, d.target.as_ref().unwrap(), IRLS_TOL, IRLS_MAX_ITER).unwrap();
    for (b, t) in fit.beta.iter().zip([2.0, 0.0, 0.0]) {
        assert!((b - t).abs() < 0.15, "{:?}", fit.beta);
    }
}

fn write_file(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

#[test]
fn small_file_round_trips() {
    let f = write_file("a,b,y\n1.5,-2,0.25\n3,4e-3,1\n-0.125,7,0\n");
    let d = load_csv(f.path(), &TargetColumn::Last, true).unwrap();
    assert_eq!(d.features, vec![vec![1.5, -2.0], vec![3.0, 0.004], vec![-0.125, 7.0]]);
    assert_eq!(d.target, Some(vec![0.25, 1.0, 0.0]));
    assert_eq!(d.feature_names, ["a", "b"]);
    let by_name = load_csv(f.path(), &TargetColumn::Name("a".into()), true).unwrap();
    assert_eq!(by_name.target, Some(vec![1.5, 3.0, -0.125]));
}

#[test]
fn non_finite_entry_is_located() {
    let f = write_file("a,b\n1,2\nNaN,3\n");
    match load_csv(f.path(), &TargetColumn::None, true) {
        Err(BenchError::NonFinite { row: 2, col: 1, .. }) => {}
        other => panic!("{other:?}"),
    }
    let g = write_file("a,b\n1,2\n3,x\n");
    match load_csv(g.path(), &TargetColumn::None, true) {
        Err(BenchError::Parse { row: 2, col: 2, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn feature_only_file() {
    let f = write_file("0.1,0.2\n0.3,0.4\n");
    let d = load_csv(f.path(), &TargetColumn::None, false).unwrap();
    assert_eq!(d.target, None);
    assert_eq!(d.dim(), 2);
    assert_eq!(d.len(), 2);
}

#[test]
fn missing_target_is_a_configuration_error() {
    let f = write_file("a,b\n1,2\n");
    assert!(matches!(
        load_csv(f.path(), &TargetColumn::Name("y".into()), true),
        Err(BenchError::Config(_))
    ));
    assert!(matches!(
        load_csv(f.path(), &TargetColumn::Index(5), true),
        Err(BenchError::Config(_))
    ));
}
