//! Exact free flows as Fourier multipliers, and the Duhamel integral.
//!
//! * Schrodinger: `e^{itDelta}` is `e^{-it|xi|^2}`.
//! * Half-wave: `e^{+-it|nabla|}` is `e^{+-it|xi|}`.
//! * Wave: `cos(t|xi|) f0 + sin(t|xi|)/|xi| f1`, with `sin(t|xi|)/|xi| = t` at `xi = 0`.
//!
//! Because the flows are multipliers, they are exact for any `t` and compose
//! exactly: `e^{isDelta} e^{itDelta} = e^{i(s+t)Delta}` to rounding.

use crate::error::{DlabError, Result};
use crate::grid::{Domain, Field, FrameSource, SpectralGrid, Trajectory};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::borrow::Cow;

/// Which linear group to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    Schrodinger,
    /// `e^{+it|nabla|}`
    HalfWavePlus,
    /// `e^{-it|nabla|}`
    HalfWaveMinus,
}

impl FlowKind {
    /// Phase `theta` with multiplier `e^{i theta}` at `|xi|^2 = r2`.
    fn phase(&self, r2: f64, t: f64) -> f64 {
        match self {
            FlowKind::Schrodinger => -t * r2,
            FlowKind::HalfWavePlus => t * r2.sqrt(),
            FlowKind::HalfWaveMinus => -t * r2.sqrt(),
        }
    }
}

/// A free evolution sampled at `t0 + i dt`, `i = 0..frames`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub kind: FlowKind,
    pub t0: f64,
    pub dt: f64,
    pub frames: usize,
}

impl FlowSpec {
    pub fn schrodinger(t_end: f64, frames: usize) -> Self {
        let dt = if frames > 1 { t_end / (frames - 1) as f64 } else { 0.0 };
        Self { kind: FlowKind::Schrodinger, t0: 0.0, dt, frames }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(DlabError::InvalidParameter("a flow needs at least one frame".into()));
        }
        if !self.t0.is_finite() || (self.frames > 1 && !(self.dt.is_finite() && self.dt > 0.0)) {
            return Err(DlabError::InvalidParameter(format!("bad time sampling {self:?}")));
        }
        Ok(())
    }
}

/// Multiply a spectrum by the flow symbol in place.
pub(crate) fn apply_flow_symbol(hat: &mut Field, r2: &[f64], kind: FlowKind, t: f64) {
    for (v, &q) in hat.data_mut().iter_mut().zip(r2) {
        *v *= Complex64::from_polar(1.0, kind.phase(q, t));
    }
}

fn flow(field: &Field, kind: FlowKind, t: f64) -> Result<Field> {
    if !t.is_finite() {
        return Err(DlabError::InvalidParameter(format!("time {t}")));
    }
    let domain = field.domain();
    let mut hat = field.to_frequency()?;
    let r2 = field.grid().frequency_norm_sq();
    apply_flow_symbol(&mut hat, &r2, kind, t);
    match domain {
        Domain::Frequency => Ok(hat),
        Domain::Physical => hat.into_physical(),
    }
}

/// `e^{itDelta} f`, same domain as `f`.
pub fn schrodinger_flow(field: &Field, t: f64) -> Result<Field> {
    flow(field, FlowKind::Schrodinger, t)
}

/// `e^{+-it|nabla|} f`; `sign` must be `1` or `-1`.
pub fn half_wave_flow(field: &Field, t: f64, sign: i32) -> Result<Field> {
    let kind = match sign {
        1 => FlowKind::HalfWavePlus,
        -1 => FlowKind::HalfWaveMinus,
        _ => return Err(DlabError::InvalidParameter(format!("half-wave sign {sign}"))),
    };
    flow(field, kind, t)
}

/// Linear wave solution and its time derivative at time `t`, both physical.
pub fn wave_flow(f0: &Field, f1: &Field, t: f64) -> Result<(Field, Field)> {
    f0.grid().ensure_same(f1.grid())?;
    let a = f0.to_frequency()?;
    let b = f1.to_frequency()?;
    let r2 = f0.grid().frequency_norm_sq();
    let mut u = Field::zeros(*f0.grid(), Domain::Frequency);
    let mut ut = Field::zeros(*f0.grid(), Domain::Frequency);
    for (i, &q) in r2.iter().enumerate() {
        let w = q.sqrt();
        let (s, c) = (t * w).sin_cos();
        let sinc = if w == 0.0 { t } else { s / w };
        u.data_mut()[i] = a.data()[i] * c + b.data()[i] * sinc;
        ut.data_mut()[i] = -a.data()[i] * (w * s) + b.data()[i] * c;
    }
    Ok((u.into_physical()?, ut.into_physical()?))
}

/// `||nabla u||_2^2 + ||u_t||_2^2`.
pub fn wave_energy(u: &Field, ut: &Field) -> Result<f64> {
    Ok(gradient_l2_sq(u)? + ut.l2_norm().powi(2))
}

/// `||nabla f||_2^2`, computed spectrally.
pub fn gradient_l2_sq(f: &Field) -> Result<f64> {
    let hat = f.to_frequency()?;
    let r2 = f.grid().frequency_norm_sq();
    let s: f64 = hat.data().iter().zip(&r2).map(|(z, q)| z.norm_sqr() * q).sum();
    Ok(s * f.grid().length().powi(-(f.grid().dim() as i32)))
}

/// A free evolution that computes its frames on demand.
pub struct FreeFlow {
    spectrum: Field,
    r2: Vec<f64>,
    spec: FlowSpec,
}

impl FreeFlow {
    pub fn new(data: &Field, spec: FlowSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spectrum: data.to_frequency()?, r2: data.grid().frequency_norm_sq(), spec })
    }

    pub fn spec(&self) -> &FlowSpec {
        &self.spec
    }

    /// Materialize all frames.
    pub fn trajectory(&self) -> Result<Trajectory> {
        let frames = (0..self.spec.frames)
            .map(|i| self.physical(i).map(Cow::into_owned))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(self.spec.t0, self.spec.dt, frames)
    }
}

impl FrameSource for FreeFlow {
    fn grid(&self) -> &SpectralGrid {
        self.spectrum.grid()
    }
    fn t0(&self) -> f64 {
        self.spec.t0
    }
    fn dt(&self) -> f64 {
        self.spec.dt
    }
    fn len(&self) -> usize {
        self.spec.frames
    }
    fn physical(&self, i: usize) -> Result<Cow<'_, Field>> {
        Ok(Cow::Owned(self.spectrum(i)?.into_owned().into_physical()?))
    }
    fn spectrum(&self, i: usize) -> Result<Cow<'_, Field>> {
        let mut hat = self.spectrum.clone();
        apply_flow_symbol(&mut hat, &self.r2, self.spec.kind, self.time(i));
        Ok(Cow::Owned(hat))
    }
}

/// `e^{itDelta} f` sampled per `spec` (Schrodinger kind forced by the caller).
pub fn free_trajectory(data: &Field, spec: FlowSpec) -> Result<Trajectory> {
    FreeFlow::new(data, spec)?.trajectory()
}

/// Quadrature weights (in units of `dt`) for `intervals` equal steps:
/// composite Simpson, with a 3/8 panel at the end for odd counts and the
/// trapezoid rule for a single interval.
pub fn duhamel_weights(intervals: usize) -> Vec<f64> {
    let mut w = vec![0.0; intervals + 1];
    match intervals {
        0 => {}
        1 => {
            w[0] = 0.5;
            w[1] = 0.5;
        }
        _ => {
            let simpson_end = if intervals % 2 == 0 { intervals } else { intervals - 3 };
            for p in (0..simpson_end).step_by(2) {
                w[p] += 1.0 / 3.0;
                w[p + 1] += 4.0 / 3.0;
                w[p + 2] += 1.0 / 3.0;
            }
            if simpson_end != intervals {
                let p = simpson_end;
                for (o, c) in [3.0 / 8.0, 9.0 / 8.0, 9.0 / 8.0, 3.0 / 8.0].iter().enumerate() {
                    w[p + o] += c;
                }
            }
        }
    }
    w
}

/// `int_{t0}^{t_n} e^{i(t_n - s)Delta} h(s) ds` for every frame index `n`.
///
/// Works on the profiles `e^{-is Delta} h(s)`, so each frame costs one
/// forward and one inverse transform whatever the time horizon.
pub fn duhamel_all(h: &dyn FrameSource) -> Result<Trajectory> {
    let grid = *h.grid();
    let r2 = grid.frequency_norm_sq();
    let dt = h.dt();
    let profile = |j: usize| -> Result<Field> {
        let mut g = h.spectrum(j)?.into_owned();
        apply_flow_symbol(&mut g, &r2, FlowKind::Schrodinger, -h.time(j));
        Ok(g)
    };
    let mut window: Vec<Field> = Vec::with_capacity(h.len());
    let mut even_sums: Vec<Field> = Vec::new();
    let mut out = Vec::with_capacity(h.len());
    let zero = Field::zeros(grid, Domain::Frequency);
    for n in 0..h.len() {
        window.push(profile(n)?);
        if window.len() > 4 {
            window.remove(0);
        }
        let g = |j: usize| &window[window.len() - 1 - (n - j)];
        let sum = match n {
            0 => zero.clone(),
            1 => combine(&zero, &[(0.5 * dt, g(0)), (0.5 * dt, g(1))])?,
            _ if n % 2 == 0 => {
                let prev = even_sums.last().unwrap_or(&zero);
                let c = dt / 3.0;
                combine(prev, &[(c, g(n - 2)), (4.0 * c, g(n - 1)), (c, g(n))])?
            }
            _ => {
                let base = &even_sums[even_sums.len() - 2];
                let c = 3.0 * dt / 8.0;
                combine(base, &[(c, g(n - 3)), (3.0 * c, g(n - 2)), (3.0 * c, g(n - 1)), (c, g(n))])?
            }
        };
        let mut frame = sum.clone();
        if n % 2 == 0 {
            even_sums.push(sum);
            if even_sums.len() > 2 {
                even_sums.remove(0);
            }
        }
        apply_flow_symbol(&mut frame, &r2, FlowKind::Schrodinger, h.time(n));
        out.push(frame.into_physical()?);
    }
    Trajectory::new(h.t0(), dt, out)
}

fn combine(base: &Field, terms: &[(f64, &Field)]) -> Result<Field> {
    let mut acc = base.clone();
    for (c, f) in terms {
        acc.axpy(Complex64::new(*c, 0.0), f)?;
    }
    Ok(acc)
}

/// Duhamel integral at a single frame index, using [`duhamel_weights`].
pub fn duhamel(h: &dyn FrameSource, index: usize) -> Result<Field> {
    if index >= h.len() {
        return Err(DlabError::InvalidParameter(format!("frame {index} of {}", h.len())));
    }
    let grid = *h.grid();
    let r2 = grid.frequency_norm_sq();
    let weights = duhamel_weights(index);
    let t = h.time(index);
    let mut acc = Field::zeros(grid, Domain::Frequency);
    for (j, w) in weights.iter().enumerate() {
        let mut g = h.spectrum(j)?.into_owned();
        apply_flow_symbol(&mut g, &r2, FlowKind::Schrodinger, t - h.time(j));
        acc.axpy(Complex64::new(w * h.dt(), 0.0), &g)?;
    }
    acc.into_physical()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn bump(grid: SpectralGrid) -> Field {
        Field::from_physical_fn(grid, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new((-r2).exp(), 0.3 * (-r2 / 2.0).exp() * x[0])
        })
    }

    #[test]
    fn weights_integrate_polynomials_exactly() {
        for n in 1..12usize {
            let w = duhamel_weights(n);
            let deg = if n == 1 { 1 } else { 3 };
            for p in 0..=deg {
                let q: f64 = w.iter().enumerate().map(|(j, wj)| wj * (j as f64).powi(p)).sum();
                let exact = (n as f64).powi(p + 1) / (p + 1) as f64;
                assert!((q - exact).abs() < 1e-10 * exact.max(1.0), "n={n} p={p}");
            }
        }
    }

    #[test]
    fn group_property() {
        let g = SpectralGrid::cube(8, 6.0).unwrap();
        let f = bump(g);
        let a = schrodinger_flow(&schrodinger_flow(&f, 0.3).unwrap(), 0.45).unwrap();
        let b = schrodinger_flow(&f, 0.75).unwrap();
        assert!(a.sub(&b).unwrap().l2_norm() < 1e-13);
        let back = schrodinger_flow(&b, -0.75).unwrap();
        assert!(back.sub(&f).unwrap().l2_norm() < 1e-13);
    }

    #[test]
    fn plane_wave_picks_up_exact_phase() {
        let g = SpectralGrid::cube(8, 2.0 * PI).unwrap();
        let k = [1.0, -2.0, 0.0, 3.0];
        let f = Field::from_physical_fn(g, |x| Complex64::from_polar(1.0, x.iter().zip(&k).map(|(a, b)| a * b).sum()));
        let t = 0.7;
        let u = schrodinger_flow(&f, t).unwrap();
        let want = Complex64::from_polar(1.0, -t * 14.0);
        for (a, b) in u.data().iter().zip(f.data()) {
            assert!((a - b * want).norm() < 1e-12);
        }
    }

    #[test]
    fn wave_energy_is_conserved() {
        let g = SpectralGrid::cube(8, 8.0).unwrap();
        let f0 = Field::from_physical_fn(g, |x| Complex64::new((-x[0] * x[0] - x[1] * x[1]).exp(), 0.0));
        let f1 = Field::from_physical_fn(g, |x| Complex64::new(x[2] * (-x.iter().map(|v| v * v).sum::<f64>()).exp(), 0.0));
        let e0 = wave_energy(&f0, &f1).unwrap();
        for t in [0.5, 1.7, 4.0] {
            let (u, ut) = wave_flow(&f0, &f1, t).unwrap();
            assert!((wave_energy(&u, &ut).unwrap() - e0).abs() < 1e-12 * e0);
        }
    }

    #[test]
    fn duhamel_of_free_wave_is_t_times_free_wave() {
        let g = SpectralGrid::cube(8, 6.0).unwrap();
        let f = bump(g);
        let src = FreeFlow::new(&f, FlowSpec::schrodinger(1.0, 11)).unwrap();
        let all = duhamel_all(&src).unwrap();
        for n in [1usize, 2, 5, 10] {
            let t = src.time(n);
            let want = {
                let mut w = schrodinger_flow(&f, t).unwrap();
                w.scale(Complex64::new(t, 0.0));
                w
            };
            let err = all.frames()[n].sub(&want).unwrap().l2_norm();
            assert!(err < 1e-12 * want.l2_norm(), "n={n}: {err}");
            let single = duhamel(&src, n).unwrap();
            assert!(single.sub(&all.frames()[n]).unwrap().l2_norm() < 1e-12 * want.l2_norm());
        }
    }
}
