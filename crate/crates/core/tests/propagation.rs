use dlab::grid::{FrameSource, SpectralGrid};
use dlab::propagate::{duhamel, duhamel_all, schrodinger_flow, FlowSpec, FreeFlow};
use dlab::snapshot::{load_trajectory, save_trajectory};
use num_complex::Complex64;

/// With the free wave `h(t) = e^{itDelta} g` as forcing, the Duhamel integral
/// `int_0^t e^{i(t-s)Delta} h(s) ds` is `t e^{itDelta} g` exactly.
#[test]
fn duhamel_of_free_forcing_has_closed_form() {
    let grid = SpectralGrid::cube(8, 8.0).unwrap();
    let g = dlab::estimates::random_field(&grid, 2, 0, |r| (-r * r / 4.0).exp()).unwrap();
    let src = FreeFlow::new(&g, FlowSpec::schrodinger(2.0, 21)).unwrap();
    let all = duhamel_all(&src).unwrap();
    for n in [0usize, 1, 7, 20] {
        let t = src.time(n);
        let mut want = schrodinger_flow(&g, t).unwrap();
        want.scale(Complex64::new(t, 0.0));
        let err = all.frames()[n].sub(&want).unwrap().l2_norm();
        assert!(err <= 1e-12 * g.l2_norm().max(want.l2_norm()), "n = {n}: {err}");
        assert!(duhamel(&src, n).unwrap().sub(&all.frames()[n]).unwrap().l2_norm() <= 1e-12 * g.l2_norm());
    }
}

#[test]
fn stored_trajectories_round_trip() {
    let grid = SpectralGrid::cube(8, 6.0).unwrap();
    let g = dlab::estimates::random_field(&grid, 5, 0, |_| 1.0).unwrap();
    let tr = FreeFlow::new(&g, FlowSpec::schrodinger(0.3, 4)).unwrap().trajectory().unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_trajectory(&tr, dir.path(), serde_json::json!({ "note": "test" })).unwrap();
    let (back, manifest) = load_trajectory(dir.path()).unwrap();
    assert_eq!(manifest.meta["note"], "test");
    assert_eq!(back.frames().len(), 4);
    for (a, b) in back.frames().iter().zip(tr.frames()) {
        assert_eq!(a.data(), b.data());
    }
}
