use dlab::estimates::random_field;
use dlab::grid::{Field, FrameSource, SpectralGrid, Trajectory};
use dlab::norms::{divisibility_check, strichartz_norm, EpsilonPolicy, FrameWindow};
use dlab::projections::{apply_band, FrequencyBandSpec};
use dlab::propagate::{schrodinger_flow, FlowSpec, FreeFlow};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn grid2() -> SpectralGrid {
    SpectralGrid::new(2, 16, 2.0 * PI).unwrap()
}

fn smooth(seed: u64) -> Field {
    random_field(&grid2(), seed, 0, |r| (-r * r / 16.0).exp()).unwrap()
}

fn band() -> impl Strategy<Value = FrequencyBandSpec> {
    prop_oneof![
        (0u32..4).prop_map(|j| FrequencyBandSpec::Dyadic { n: 2f64.powi(j as i32) }),
        (0u32..4).prop_map(|j| FrequencyBandSpec::DyadicLeq { n: 2f64.powi(j as i32) }),
        (0u32..4, 0usize..2).prop_map(|(j, axis)| FrequencyBandSpec::Directional { n: 2f64.powi(j as i32), axis }),
        (-6i64..=6, -6i64..=6).prop_map(|(a, b)| FrequencyBandSpec::Unit { center: [a, b, 0, 0] }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn parseval_and_round_trip(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut f = random_field(&grid2(), seed, 1, |_| 1.0).unwrap();
        f.scale(Complex64::new(scale, 0.0));
        let hat = f.to_frequency().unwrap();
        prop_assert!((hat.l2_norm() - f.l2_norm()).abs() <= 1e-12 * f.l2_norm());
        let back = hat.to_physical().unwrap();
        prop_assert!(back.sub(&f).unwrap().max_modulus() <= 1e-12 * f.max_modulus());
    }

    #[test]
    fn projections_are_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, band in band()) {
        let (f, g) = (smooth(s1), smooth(s2));
        let mut combo = f.clone();
        combo.scale(Complex64::new(a, 0.0));
        combo.axpy(Complex64::new(0.0, b), &g).unwrap();
        let lhs = apply_band(&combo, &band).unwrap();
        let mut rhs = apply_band(&f, &band).unwrap();
        rhs.scale(Complex64::new(a, 0.0));
        rhs.axpy(Complex64::new(0.0, b), &apply_band(&g, &band).unwrap()).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().l2_norm() <= 1e-12 * (1.0 + combo.l2_norm()));
    }

    #[test]
    fn schrodinger_flow_is_unitary(seed in any::<u64>(), t in -5.0f64..5.0) {
        let f = smooth(seed);
        let u = schrodinger_flow(&f, t).unwrap();
        prop_assert!((u.l2_norm() - f.l2_norm()).abs() <= 1e-12 * f.l2_norm());
    }

    #[test]
    fn space_time_norms_are_homogeneous(seed in any::<u64>(), c in 0.01f64..50.0, q in 1.0f64..8.0, r in 1.0f64..8.0) {
        let tr = FreeFlow::new(&smooth(seed), FlowSpec::schrodinger(0.5, 5)).unwrap().trajectory().unwrap();
        let scaled = Trajectory::new(0.0, tr.dt(), tr.frames().iter().map(|f| {
            let mut g = f.clone();
            g.scale(Complex64::new(0.0, c));
            g
        }).collect()).unwrap();
        let a = strichartz_norm(&tr, q, r, FrameWindow::all(&tr)).unwrap();
        let b = strichartz_norm(&scaled, q, r, FrameWindow::all(&scaled)).unwrap();
        prop_assert!((b - c * a).abs() <= 1e-10 * b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn divisibility_never_fails(seed in any::<u64>(), pieces in 2usize..5, eps in 0.01f64..0.1) {
        let tr = FreeFlow::new(&smooth(seed), FlowSpec::schrodinger(1.0, 17)).unwrap().trajectory().unwrap();
        let eps = EpsilonPolicy::new(eps).unwrap();
        let r = divisibility_check(&tr, &eps, pieces, FrameWindow::all(&tr)).unwrap();
        prop_assert!(r.holds, "{:?}", r);
    }
}
