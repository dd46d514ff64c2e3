use dlab::estimates::*;
use dlab::fit::linear_fit;
use dlab::grid::{Domain, Field, SpectralGrid, Trajectory};
use dlab::norms::{lateral_norm, strichartz_norm, EpsilonPolicy, FrameWindow};
use dlab::projections::{apply_band, FrequencyBandSpec};
use dlab::propagate::{FlowSpec, FreeFlow};
use num_complex::Complex64;
use std::f64::consts::PI;

fn radii() -> Vec<f64> {
    (0..6).map(|j| 2f64.powi(j - 4)).collect()
}

#[test]
fn lateral_four_four_is_the_strichartz_norm() {
    let g = SpectralGrid::cube(8, 2.0 * PI).unwrap();
    let f = random_field(&g, 4, 0, |r| (-r * r / 8.0).exp()).unwrap();
    let tr = FreeFlow::new(&f, FlowSpec::schrodinger(0.5, 9)).unwrap().trajectory().unwrap();
    let w = FrameWindow::all(&tr);
    let s = strichartz_norm(&tr, 4.0, 4.0, w).unwrap();
    for axis in 0..4 {
        let l = lateral_norm(&tr, 4.0, 4.0, axis, w).unwrap();
        assert!((l - s).abs() <= 1e-12 * s, "axis {axis}: {l} vs {s}");
    }
}

#[test]
fn lateral_exponents_off_the_line_are_rejected() {
    let cfg = LateralConfig::new(3.0, 3.0);
    assert!(verify_lateral_dyadic(&cfg).is_err());
}

/// A unit cell whose frequency is transverse to the outer axis only drifts
/// along directions the supremum absorbs, so the norm does not grow with `|k|`.
#[test]
fn transverse_unit_maximal_is_flat_in_k() {
    let cfg = UnitMaximalConfig { k_axis: 1, axis: 0, ..UnitMaximalConfig::default() };
    let ks = [10.0, 14.0, 20.0];
    let vals: Vec<f64> = ks.iter().map(|&k| unit_maximal_value(&cfg, k).unwrap()).collect();
    let fit = linear_fit(&ks.map(f64::ln), &vals.iter().map(|v| v.ln()).collect::<Vec<_>>()).unwrap();
    assert!(fit.slope.abs() < 0.15, "slope {} from {vals:?}", fit.slope);
}

#[test]
fn local_smoothing_of_concentrated_data_is_bounded() {
    let g = SpectralGrid::cube(16, 2.0 * PI).unwrap();
    let bump = Field::from_physical_fn(g, |x| Complex64::new((-x.iter().map(|v| v * v).sum::<f64>() / 0.18).exp(), 0.0));
    // Remove the zero mode, which the homogeneous norm on the right cannot see.
    let f = apply_band(&bump, &FrequencyBandSpec::DyadicGt { n: 1.0 }).unwrap();
    let (ratio, r) = local_smoothing_ratio(&f, &radii(), 1.0, 17).unwrap();
    assert!(ratio.is_finite() && ratio > 0.0 && ratio <= 20.0, "ratio {ratio} at R = {r}");
    assert!(local_smoothing_ratio(&bump, &radii(), 1.0, 17).is_err());
}

#[test]
fn local_energy_decay_of_rough_random_data_is_bounded() {
    let g = SpectralGrid::cube(16, 2.0 * PI).unwrap();
    for seed in 0..3 {
        let f = random_field(&g, seed, 0, |_| 1.0).unwrap();
        let (ratio, _) = local_energy_decay_ratio(&f, &radii(), 1.0, 17).unwrap();
        assert!(ratio.is_finite() && ratio <= 20.0, "seed {seed}: {ratio}");
    }
}

#[test]
fn ratios_are_invariant_under_scaling_the_data() {
    let g = SpectralGrid::cube(16, 2.0 * PI).unwrap();
    let f = shell_data(&g, 4.0).unwrap();
    let mut big = f.clone();
    big.scale(Complex64::new(-3.0, 4.0));
    let (a, _) = local_smoothing_ratio(&f, &radii(), 0.1, 9).unwrap();
    let (b, _) = local_smoothing_ratio(&big, &radii(), 0.1, 9).unwrap();
    assert!((a - b).abs() <= 1e-12 * a);
    let (a, _) = local_energy_decay_ratio(&f, &radii(), 0.25, 9).unwrap();
    let (b, _) = local_energy_decay_ratio(&big, &radii(), 0.25, 9).unwrap();
    assert!((a - b).abs() <= 1e-12 * a);
    let (sq, _) = square_function(&f, 1e-12).unwrap();
    let (sq_big, _) = square_function(&big, 1e-12).unwrap();
    for (x, y) in sq.iter().zip(&sq_big) {
        assert!((25.0 * x - y).abs() <= 1e-10 * y.max(1e-300));
    }
}

#[test]
fn zero_data_give_zero_everywhere() {
    let g = SpectralGrid::cube(16, 2.0 * PI).unwrap();
    let zero = Field::zeros(g, Domain::Physical);
    assert_eq!(local_smoothing_ratio(&zero, &radii(), 0.5, 9).unwrap().0, 0.0);
    assert_eq!(local_energy_decay_ratio(&zero, &radii(), 0.5, 9).unwrap().0, 0.0);
    let (sq, dropped) = square_function(&zero, 1e-12).unwrap();
    assert!(sq.iter().all(|&v| v == 0.0));
    assert_eq!(dropped, 0.0);
    assert_eq!(radial_symmetry_residual(&zero), 0.0);

    let h = Trajectory::new(0.0, 0.05, vec![zero.clone(); 9]).unwrap();
    let eps = EpsilonPolicy::new(0.05).unwrap();
    let (lhs, _) = main_linear_sample(&zero, &h, 2.0, &eps).unwrap();
    assert_eq!(lhs, 0.0);
    let r = verify_duhamel_retarded(&h, 2.0, &eps).unwrap();
    assert!(r.strichartz.iter().all(|c| c.2 == 0.0));
    assert_eq!(r.lateral, 0.0);
    assert_eq!(r.rhs, 0.0);
}

#[test]
fn trilinear_bands_must_be_ordered() {
    assert!(check_trilinear_ordering(4.0, 8.0, 4.0, 2.0).is_ok());
    assert!(check_trilinear_ordering(4.0, 2.0, 4.0, 8.0).is_err());
    let configs = trilinear_configurations(&[1.0, 2.0, 4.0, 8.0]);
    assert!(configs.len() >= 6);
    for (n, n1, n2, n3) in configs {
        assert!(check_trilinear_ordering(n, n1, n2, n3).is_ok());
    }
}
