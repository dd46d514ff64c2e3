use dlab::montecarlo::*;

/// `|c . g|` for complex Gaussian `g` is Rayleigh with `P(X > l) = exp(-l^2 / |c|^2)`.
#[test]
fn gaussian_tail_anchor() {
    let c = [0.6, 0.8];
    let values = run_draws(20_000, linear_gaussian_statistic(&c, 5)).unwrap();
    let mut s = EnsembleStats::new("rayleigh", 5, values).unwrap();
    let lambdas: Vec<f64> = (0..8).map(|i| 0.4 + 0.2 * i as f64).collect();
    tail_fit(&mut s, &lambdas).unwrap();
    let slope = s.tail_fit.unwrap().slope;
    assert!((slope + 1.0).abs() < 0.1, "slope {slope}");
    assert!(s.invariants_hold());
}

/// Second moment of the same statistic is `|c|^2` exactly in expectation.
#[test]
fn rayleigh_second_moment() {
    let values = run_draws(20_000, linear_gaussian_statistic(&[2.0], 6)).unwrap();
    let m2 = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
    assert!((m2 - 4.0).abs() < 0.15, "{m2}");
}

#[test]
fn draws_resume_from_stored_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("draws.csv");
    let stat = linear_gaussian_statistic(&[1.0], 9);
    let first = extend_draws(&path, 50, &stat).unwrap();
    let more = extend_draws(&path, 80, &stat).unwrap();
    assert_eq!(&more[..50], &first[..]);
    assert_eq!(more, run_draws(80, &stat).unwrap());
}

#[test]
fn moments_need_enough_draws() {
    let values = run_draws(50, linear_gaussian_statistic(&[1.0], 1)).unwrap();
    let mut s = EnsembleStats::new("few", 1, values).unwrap();
    assert!(moment_growth(&mut s, &[2.0, 8.0]).is_err());
}

#[test]
fn regime_is_enforced_unless_exploratory() {
    let mut cfg = EnsembleConfig::new(EnsembleNorm::Y, 0.3);
    cfg.points = 8;
    cfg.length = 7.0;
    cfg.draws = 4;
    assert!(as_norm_ensemble(&cfg, None, None).is_err());
}
