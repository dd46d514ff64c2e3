//! Space-time norms of trajectories, streamed frame by frame.
//!
//! Time integrals use the trapezoid rule on the frames of a window, so the
//! integral over a union of adjacent windows is exactly the sum of the parts.
//! Space integrals are Riemann sums with weight `dx^d`.
//!
//! The lateral norm `L^{p,q}_{e_l}` takes the `L^q` norm over `(t, x')` for each
//! value of `x_l`, then the `L^p` norm over `x_l`. Exponents up to `4/eps`
//! (80 or 200) are routine here, so every power sum is evaluated relative to a
//! running maximum and rescaled when the maximum grows.

use crate::error::{DlabError, Result};
use crate::grid::{power_norm, Field, FrameSource, SpectralGrid, Weight};
use crate::projections::FrequencyBandSpec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// The small parameter of the function spaces, with the admissibility check
/// `0 < eps <= (s - 1/3) / 3` when a regularity `s > 1/3` is supplied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonPolicy {
    pub eps: f64,
    #[serde(default)]
    pub s: Option<f64>,
}

/// Default `eps`; admissible for every `s >= 0.5`.
pub const DEFAULT_EPS: f64 = 0.05;

impl Default for EpsilonPolicy {
    fn default() -> Self {
        Self { eps: DEFAULT_EPS, s: None }
    }
}

impl EpsilonPolicy {
    pub fn new(eps: f64) -> Result<Self> {
        let p = Self { eps, s: None };
        p.validate()?;
        Ok(p)
    }

    pub fn for_regularity(eps: f64, s: f64) -> Result<Self> {
        let p = Self { eps, s: Some(s) };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(DlabError::ConstraintViolation(format!("eps = {} not in (0, 1)", self.eps)));
        }
        if let Some(s) = self.s {
            if s <= 1.0 / 3.0 {
                return Err(DlabError::ConstraintViolation(format!("s = {s} must exceed 1/3")));
            }
            let cap = (s - 1.0 / 3.0) / 3.0;
            if self.eps > cap * (1.0 + 1e-12) {
                return Err(DlabError::ConstraintViolation(format!(
                    "eps = {} exceeds (s - 1/3)/3 = {cap:.5}",
                    self.eps
                )));
            }
        }
        Ok(())
    }

    /// `4 / (2 - eps)`, the near-`L^2` lateral exponent.
    pub fn p_low(&self) -> f64 {
        4.0 / (2.0 - self.eps)
    }
    /// `4 / eps`, the near-`L^inf` lateral exponent.
    pub fn p_high(&self) -> f64 {
        4.0 / self.eps
    }
}

/// Inclusive range of frame indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameWindow {
    pub first: usize,
    pub last: usize,
}

impl FrameWindow {
    pub fn all(src: &dyn FrameSource) -> Self {
        Self { first: 0, last: src.len().saturating_sub(1) }
    }

    pub fn len(&self) -> usize {
        self.last + 1 - self.first
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Window spanning `[ta, tb]`; both ends must land on frames.
    pub fn from_times(src: &dyn FrameSource, ta: f64, tb: f64) -> Result<Self> {
        let snap = |t: f64| -> Result<usize> {
            let x = (t - src.t0()) / src.dt();
            let i = x.round();
            if (x - i).abs() > 1e-9 || i < 0.0 || i as usize >= src.len() {
                return Err(DlabError::InvalidParameter(format!("time {t} is not a frame time")));
            }
            Ok(i as usize)
        };
        let w = Self { first: snap(ta)?, last: snap(tb)? };
        w.check(src)?;
        Ok(w)
    }

    pub fn check(&self, src: &dyn FrameSource) -> Result<()> {
        if self.first > self.last || self.last >= src.len() {
            return Err(DlabError::EmptyInterval(format!(
                "window {}..={} of {} frames",
                self.first,
                self.last,
                src.len()
            )));
        }
        Ok(())
    }

    /// Trapezoid weight of frame `i`.
    pub fn weight(&self, i: usize, dt: f64) -> f64 {
        if self.first == self.last {
            0.0
        } else if i == self.first || i == self.last {
            0.5 * dt
        } else {
            dt
        }
    }

    fn require_duration(&self, q: f64) -> Result<()> {
        if q.is_finite() && self.first == self.last {
            Err(DlabError::EmptyInterval("a finite time exponent needs two frames".into()))
        } else {
            Ok(())
        }
    }

    /// Split into consecutive windows sharing endpoints, `pieces` of them.
    pub fn split(&self, pieces: usize) -> Result<Vec<FrameWindow>> {
        let intervals = self.last - self.first;
        if pieces == 0 || pieces > intervals {
            return Err(DlabError::InvalidParameter(format!("cannot split {intervals} steps into {pieces}")));
        }
        let mut out = Vec::with_capacity(pieces);
        let mut start = self.first;
        for j in 0..pieces {
            let end = self.first + intervals * (j + 1) / pieces;
            out.push(FrameWindow { first: start, last: end });
            start = end;
        }
        Ok(out)
    }
}

/// `|z|^q` from `|z|^2`, using integer powers where possible.
#[inline]
fn pow_from_sq(sq: f64, q: f64) -> f64 {
    let half = q / 2.0;
    if half.fract() == 0.0 && half <= 64.0 {
        sq.powi(half as i32)
    } else {
        sq.powf(half)
    }
}

/// `(sum_i w_i a_i^q)^{1/q}` with a running scale.
#[derive(Clone, Debug)]
pub struct TimeIntegral {
    q: f64,
    scale: f64,
    acc: f64,
}

impl TimeIntegral {
    pub fn new(q: f64) -> Self {
        Self { q, scale: 0.0, acc: 0.0 }
    }

    pub fn push(&mut self, value: f64, weight: f64) {
        if self.q.is_infinite() {
            self.scale = self.scale.max(value);
            return;
        }
        if weight == 0.0 || value == 0.0 {
            return;
        }
        if value > self.scale {
            if self.scale > 0.0 {
                self.acc *= (self.scale / value).powf(self.q);
            }
            self.scale = value;
        }
        self.acc += weight * (value / self.scale).powf(self.q);
    }

    pub fn value(&self) -> f64 {
        if self.q.is_infinite() {
            self.scale
        } else if self.acc == 0.0 {
            0.0
        } else {
            self.scale * self.acc.powf(1.0 / self.q)
        }
    }
}

/// Per-slice accumulators for the lateral norms with a common inner exponent
/// `q`, for any subset of axes.
#[derive(Clone, Debug)]
pub struct LateralBank {
    q: f64,
    dim: usize,
    m: usize,
    dx: f64,
    axes: Vec<usize>,
    scale: f64,
    slices: Vec<Vec<f64>>,
}

impl LateralBank {
    pub fn new(grid: &SpectralGrid, q: f64, axes: Vec<usize>) -> Self {
        let m = grid.points();
        Self {
            q,
            dim: grid.dim(),
            m,
            dx: grid.dx(),
            slices: vec![vec![0.0; m]; axes.len()],
            axes,
            scale: 0.0,
        }
    }

    /// Add one frame given as squared moduli.
    pub fn push(&mut self, sq: &[f64], weight: f64) {
        let top = sq.iter().cloned().fold(0.0, f64::max).sqrt();
        let m = self.m;
        if self.q.is_infinite() {
            for (slot, &axis) in self.axes.iter().enumerate() {
                let stride = m.pow((self.dim - 1 - axis) as u32);
                let slices = &mut self.slices[slot];
                for (i, v) in sq.iter().enumerate() {
                    let c = (i / stride) % m;
                    if *v > slices[c] {
                        slices[c] = *v;
                    }
                }
            }
            return;
        }
        if weight == 0.0 || top == 0.0 {
            return;
        }
        if top > self.scale {
            if self.scale > 0.0 {
                let f = (self.scale / top).powf(self.q);
                self.slices.iter_mut().flatten().for_each(|v| *v *= f);
            }
            self.scale = top;
        }
        let inv = 1.0 / (self.scale * self.scale);
        let powered: Vec<f64> = sq.iter().map(|&v| pow_from_sq(v * inv, self.q)).collect();
        let w = weight * self.dx.powi(self.dim as i32 - 1);
        for (slot, &axis) in self.axes.iter().enumerate() {
            let stride = m.pow((self.dim - 1 - axis) as u32);
            let slices = &mut self.slices[slot];
            for (outer, block) in powered.chunks(m * stride).enumerate() {
                let _ = outer;
                for (c, run) in block.chunks(stride).enumerate() {
                    slices[c] += w * run.iter().sum::<f64>();
                }
            }
        }
    }

    /// Inner norms per slice for the `slot`-th axis.
    fn inner(&self, slot: usize) -> Vec<f64> {
        if self.q.is_infinite() {
            self.slices[slot].iter().map(|v| v.sqrt()).collect()
        } else {
            self.slices[slot]
                .iter()
                .map(|v| if *v == 0.0 { 0.0 } else { self.scale * v.powf(1.0 / self.q) })
                .collect()
        }
    }

    /// `||.||_{L^{p,q}_{e_l}}` for the `slot`-th axis.
    pub fn value(&self, slot: usize, p: f64) -> f64 {
        let inner = self.inner(slot);
        power_norm(inner.iter().cloned(), p, self.dx)
    }
}

/// Squared moduli of a physical field.
fn squared(field: &Field) -> Vec<f64> {
    field.data().iter().map(|z| z.norm_sqr()).collect()
}

fn spatial_norm(sq: &[f64], r: f64, vol: f64) -> f64 {
    if r.is_infinite() {
        return sq.iter().cloned().fold(0.0, f64::max).sqrt();
    }
    let top = sq.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    let inv = 1.0 / top;
    let s: f64 = sq.iter().map(|&v| pow_from_sq(v * inv, r)).sum();
    top.sqrt() * (s * vol).powf(1.0 / r)
}

fn check_exponents(xs: &[f64]) -> Result<()> {
    for &x in xs {
        crate::grid::check_exponent(x)?;
    }
    Ok(())
}

/// What to measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceTimeNormSpec {
    /// `L^q_t L^r_x`
    Strichartz { q: f64, r: f64 },
    /// `L^{p,q}_{e_axis}`
    Lateral { p: f64, q: f64, axis: usize },
    /// `L^q_t L^r_x` of `w(x) |u|`, or of `w(x) |grad u|` when `gradient`.
    Weighted { q: f64, r: f64, weight: Weight, gradient: bool },
    /// `sup_t ||grad u||_2`
    EnergySup,
    X,
    Y,
    GUpper,
    Z,
}

/// Output of every norm evaluator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub spec: SpaceTimeNormSpec,
    pub value: f64,
    /// Named pieces, for composite norms.
    pub components: Vec<(String, f64)>,
    /// `(N, value)` per dyadic band, for the banded norms.
    pub bands: Vec<(f64, f64)>,
    /// True when `value` bounds the norm from above (the infimum in `G`).
    pub upper_bound: bool,
    pub frames: usize,
    pub dt: f64,
    pub eps: Option<f64>,
}

impl NormReport {
    fn simple(spec: SpaceTimeNormSpec, value: f64, window: &FrameWindow, dt: f64) -> Self {
        Self {
            spec,
            value,
            components: Vec::new(),
            bands: Vec::new(),
            upper_bound: false,
            frames: window.len(),
            dt,
            eps: None,
        }
    }
}

/// `||u||_{L^q_t L^r_x}` over a window.
pub fn strichartz_norm(src: &dyn FrameSource, q: f64, r: f64, window: FrameWindow) -> Result<f64> {
    check_exponents(&[q, r])?;
    window.check(src)?;
    window.require_duration(q)?;
    let vol = src.grid().cell_volume();
    let mut acc = TimeIntegral::new(q);
    for i in window.first..=window.last {
        let frame = src.physical(i)?;
        frame.ensure_finite("strichartz_norm frame")?;
        acc.push(spatial_norm(&squared(&frame), r, vol), window.weight(i, src.dt()));
    }
    Ok(acc.value())
}

/// `||u||_{L^{p,q}_{e_axis}}` over a window.
pub fn lateral_norm(src: &dyn FrameSource, p: f64, q: f64, axis: usize, window: FrameWindow) -> Result<f64> {
    check_exponents(&[p, q])?;
    if axis >= src.grid().dim() {
        return Err(DlabError::InvalidParameter(format!("axis {axis}")));
    }
    window.check(src)?;
    window.require_duration(q)?;
    let mut bank = LateralBank::new(src.grid(), q, vec![axis]);
    for i in window.first..=window.last {
        let frame = src.physical(i)?;
        frame.ensure_finite("lateral_norm frame")?;
        bank.push(&squared(&frame), window.weight(i, src.dt()));
    }
    Ok(bank.value(0, p))
}

/// `|grad u|^2` of a spectrum, via one inverse transform per axis.
pub fn gradient_sq(hat: &Field) -> Result<Vec<f64>> {
    let grid = *hat.grid();
    let mut out = vec![0.0; grid.len()];
    for axis in 0..grid.dim() {
        let mut d = hat.clone();
        let ks = grid.axis_frequencies(axis);
        let stride = grid.points().pow((grid.dim() - 1 - axis) as u32);
        for (i, v) in d.data_mut().iter_mut().enumerate() {
            *v *= Complex64::new(0.0, ks[(i / stride) % grid.points()]);
        }
        let phys = d.into_physical()?;
        for (o, z) in out.iter_mut().zip(phys.data()) {
            *o += z.norm_sqr();
        }
    }
    Ok(out)
}

/// Weighted mixed norm, optionally of the gradient.
pub fn weighted_norm(
    src: &dyn FrameSource,
    q: f64,
    r: f64,
    weight: Weight,
    gradient: bool,
    window: FrameWindow,
) -> Result<f64> {
    check_exponents(&[q, r])?;
    window.check(src)?;
    window.require_duration(q)?;
    let w2: Vec<f64> = weight.table(src.grid()).into_iter().map(|w| w * w).collect();
    let vol = src.grid().cell_volume();
    let mut acc = TimeIntegral::new(q);
    for i in window.first..=window.last {
        let mut sq = if gradient {
            gradient_sq(src.spectrum(i)?.as_ref())?
        } else {
            squared(src.physical(i)?.as_ref())
        };
        for (v, w) in sq.iter_mut().zip(&w2) {
            *v *= w;
        }
        acc.push(spatial_norm(&sq, r, vol), window.weight(i, src.dt()));
    }
    Ok(acc.value())
}

/// `sup_t ||grad u(t)||_2` over the window.
pub fn energy_sup(src: &dyn FrameSource, window: FrameWindow) -> Result<f64> {
    window.check(src)?;
    let mut best: f64 = 0.0;
    for i in window.first..=window.last {
        best = best.max(crate::propagate::gradient_l2_sq(src.spectrum(i)?.as_ref())?.sqrt());
    }
    Ok(best)
}

/// Dyadic `N` with `2 dxi <= N <= m dxi / 4`.
pub fn resolved_bands(grid: &SpectralGrid) -> Vec<f64> {
    let lo = 2.0 * grid.dxi();
    let hi = grid.points() as f64 * grid.dxi() / 4.0;
    let mut n = 2f64.powi(lo.log2().ceil() as i32);
    let mut out = Vec::new();
    while n <= hi * (1.0 + 1e-12) {
        out.push(n);
        n *= 2.0;
    }
    out
}

/// `<N>`
fn jp(n: f64) -> f64 {
    (1.0 + n * n).sqrt()
}

/// Band-level pieces of `X_N`, `Y_N` and the `G_N` bound, from one frame loop.
struct BandedPass {
    symbols: Vec<Vec<f64>>,
    directional: Vec<Vec<Vec<f64>>>,
}

impl BandedPass {
    fn new(grid: &SpectralGrid, bands: &[f64], with_directional: bool) -> Result<Self> {
        grid.ensure_no_carrier("banded norms")?;
        let mut symbols = Vec::new();
        let mut directional = Vec::new();
        for &n in bands {
            symbols.push(FrequencyBandSpec::Dyadic { n }.symbol(grid)?);
            if with_directional {
                directional.push(
                    (0..grid.dim())
                        .map(|axis| FrequencyBandSpec::DirectionalDyadic { n, axis }.symbol(grid))
                        .collect::<Result<Vec<_>>>()?,
                );
            }
        }
        Ok(Self { symbols, directional })
    }
}

fn project_sq(hat: &Field, symbol: &[f64]) -> Result<Vec<f64>> {
    let mut h = hat.clone();
    h.multiply_real(symbol);
    Ok(squared(&h.into_physical()?))
}

/// Which banded norm to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Banded {
    X,
    Y,
    G,
}

fn banded_norm(
    src: &dyn FrameSource,
    kind: Banded,
    eps: &EpsilonPolicy,
    bands: Option<&[f64]>,
    window: FrameWindow,
) -> Result<NormReport> {
    eps.validate()?;
    window.check(src)?;
    window.require_duration(1.0)?;
    let grid = *src.grid();
    let owned;
    let bands = match bands {
        Some(b) => b,
        None => {
            owned = resolved_bands(&grid);
            &owned
        }
    };
    if bands.is_empty() {
        return Err(DlabError::BandUnresolved("no dyadic band fits this grid".into()));
    }
    let pass = BandedPass::new(&grid, bands, kind == Banded::Y)?;
    let d = grid.dim();
    let all_axes: Vec<usize> = (0..d).collect();
    let (pl, ph) = (eps.p_low(), eps.p_high());
    let e = eps.eps;
    let vol = grid.cell_volume();
    let time_exps: &[(f64, f64)] = match kind {
        Banded::X => &[(2.0, 4.0), (3.0, 3.0), (6.0, 2.4)],
        Banded::Y => &[(3.0, 6.0), (6.0, 6.0)],
        Banded::G => &[(1.0, 2.0)],
    };
    let lateral_q = match kind {
        Banded::X | Banded::Y => ph,
        Banded::G => 4.0 / (2.0 + e),
    };
    let mut times: Vec<Vec<TimeIntegral>> =
        bands.iter().map(|_| time_exps.iter().map(|&(q, _)| TimeIntegral::new(q)).collect()).collect();
    let mut laterals: Vec<LateralBank> =
        bands.iter().map(|_| LateralBank::new(&grid, lateral_q, all_axes.clone())).collect();
    let mut dir_laterals: Vec<Vec<LateralBank>> = if kind == Banded::Y {
        bands.iter().map(|_| (0..d).map(|a| LateralBank::new(&grid, pl, vec![a])).collect()).collect()
    } else {
        Vec::new()
    };
    for i in window.first..=window.last {
        let hat = src.spectrum(i)?;
        hat.ensure_finite("banded norm frame")?;
        let w = window.weight(i, src.dt());
        for b in 0..bands.len() {
            let sq = project_sq(&hat, &pass.symbols[b])?;
            for (acc, &(_, r)) in times[b].iter_mut().zip(time_exps) {
                acc.push(spatial_norm(&sq, r, vol), w);
            }
            laterals[b].push(&sq, w);
            if kind == Banded::Y {
                for a in 0..d {
                    let sqd = project_sq(&hat, &pass.directional[b][a])?;
                    dir_laterals[b][a].push(&sqd, w);
                }
            }
        }
    }
    let mut band_values = Vec::with_capacity(bands.len());
    let mut comp_totals = vec![0.0; 4];
    for (b, &n) in bands.iter().enumerate() {
        let t: Vec<f64> = times[b].iter().map(|a| a.value()).collect();
        let lat: f64 = (0..d).map(|slot| match kind {
            Banded::X | Banded::Y => laterals[b].value(slot, pl),
            Banded::G => laterals[b].value(slot, 4.0 / (4.0 - e)),
        }).sum();
        let pieces = match kind {
            Banded::X => vec![n * (t[0] + t[1] + t[2]), n.powf(-0.5 + e) * lat, 0.0, 0.0],
            Banded::Y => {
                let k = jp(n).powf(1.0 / 3.0 + 3.0 * e);
                let dir: f64 = (0..d).map(|a| dir_laterals[b][a].value(0, ph)).sum();
                vec![k * (t[0] + t[1]), k * n.powf(0.5 - e) * dir, n.powf(-1.0 / 6.0) * lat, 0.0]
            }
            Banded::G => vec![n * t[0], n.powf(0.5 + e) * lat, 0.0, 0.0],
        };
        let value = match kind {
            Banded::G => pieces[0].min(pieces[1]),
            _ => pieces.iter().sum(),
        };
        for (c, p) in comp_totals.iter_mut().zip(&pieces) {
            *c += p * p;
        }
        band_values.push((n, value));
    }
    let total = band_values.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    let names: &[&str] = match kind {
        Banded::X => &["strichartz", "lateral"],
        Banded::Y => &["strichartz", "directional_lateral", "lateral"],
        Banded::G => &["l1l2", "lateral"],
    };
    let spec = match kind {
        Banded::X => SpaceTimeNormSpec::X,
        Banded::Y => SpaceTimeNormSpec::Y,
        Banded::G => SpaceTimeNormSpec::GUpper,
    };
    Ok(NormReport {
        spec,
        value: total,
        components: names.iter().zip(&comp_totals).map(|(n, v)| (n.to_string(), v.sqrt())).collect(),
        bands: band_values,
        upper_bound: kind == Banded::G,
        frames: window.len(),
        dt: src.dt(),
        eps: Some(e),
    })
}

/// `X_N` for one band.
pub fn xn_norm(src: &dyn FrameSource, n: f64, eps: &EpsilonPolicy, window: FrameWindow) -> Result<f64> {
    Ok(banded_norm(src, Banded::X, eps, Some(&[n]), window)?.value)
}

/// `X = (sum_N X_N^2)^{1/2}` over the resolved bands (or the given ones).
pub fn x_norm(src: &dyn FrameSource, eps: &EpsilonPolicy, bands: Option<&[f64]>, window: FrameWindow) -> Result<NormReport> {
    banded_norm(src, Banded::X, eps, bands, window)
}

/// `Y_N` for one band.
pub fn yn_norm(src: &dyn FrameSource, n: f64, eps: &EpsilonPolicy, window: FrameWindow) -> Result<f64> {
    Ok(banded_norm(src, Banded::Y, eps, Some(&[n]), window)?.value)
}

pub fn y_norm(src: &dyn FrameSource, eps: &EpsilonPolicy, bands: Option<&[f64]>, window: FrameWindow) -> Result<NormReport> {
    banded_norm(src, Banded::Y, eps, bands, window)
}

/// Upper bound for `G_N`: the smaller of the two pure splittings.
pub fn gn_norm_upper(src: &dyn FrameSource, n: f64, eps: &EpsilonPolicy, window: FrameWindow) -> Result<f64> {
    Ok(banded_norm(src, Banded::G, eps, Some(&[n]), window)?.value)
}

pub fn g_norm_upper(src: &dyn FrameSource, eps: &EpsilonPolicy, bands: Option<&[f64]>, window: FrameWindow) -> Result<NormReport> {
    banded_norm(src, Banded::G, eps, bands, window)
}

/// `||F||_{L^3 L^6} + ||<x>^{1/2} F||_{L^2 L^inf} + ||grad F||_{L^2 L^4}`.
pub fn z_norm(src: &dyn FrameSource, window: FrameWindow) -> Result<NormReport> {
    window.check(src)?;
    window.require_duration(2.0)?;
    let grid = *src.grid();
    let vol = grid.cell_volume();
    let w2: Vec<f64> = Weight::Japanese(0.5).table(&grid).into_iter().map(|w| w * w).collect();
    let (mut a, mut b, mut c) = (TimeIntegral::new(3.0), TimeIntegral::new(2.0), TimeIntegral::new(2.0));
    for i in window.first..=window.last {
        let hat = src.spectrum(i)?;
        let w = window.weight(i, src.dt());
        let sq = squared(&hat.to_physical()?);
        a.push(spatial_norm(&sq, 6.0, vol), w);
        let weighted: Vec<f64> = sq.iter().zip(&w2).map(|(v, w)| v * w).collect();
        b.push(spatial_norm(&weighted, f64::INFINITY, vol), w);
        c.push(spatial_norm(&gradient_sq(&hat)?, 4.0, vol), w);
    }
    let comps = vec![
        ("l3l6".to_string(), a.value()),
        ("weighted_l2linf".to_string(), b.value()),
        ("grad_l2l4".to_string(), c.value()),
    ];
    let mut r = NormReport::simple(SpaceTimeNormSpec::Z, comps.iter().map(|c| c.1).sum(), &window, src.dt());
    r.components = comps;
    Ok(r)
}

/// Dispatch on a [`SpaceTimeNormSpec`].
pub fn space_time_norm(
    src: &dyn FrameSource,
    spec: &SpaceTimeNormSpec,
    eps: &EpsilonPolicy,
    window: FrameWindow,
) -> Result<NormReport> {
    let simple = |v: f64| Ok(NormReport::simple(spec.clone(), v, &window, src.dt()));
    match *spec {
        SpaceTimeNormSpec::Strichartz { q, r } => simple(strichartz_norm(src, q, r, window)?),
        SpaceTimeNormSpec::Lateral { p, q, axis } => simple(lateral_norm(src, p, q, axis, window)?),
        SpaceTimeNormSpec::Weighted { q, r, weight, gradient } => {
            simple(weighted_norm(src, q, r, weight, gradient, window)?)
        }
        SpaceTimeNormSpec::EnergySup => simple(energy_sup(src, window)?),
        SpaceTimeNormSpec::X => x_norm(src, eps, None, window),
        SpaceTimeNormSpec::Y => y_norm(src, eps, None, window),
        SpaceTimeNormSpec::GUpper => g_norm_upper(src, eps, None, window),
        SpaceTimeNormSpec::Z => z_norm(src, window),
    }
}

/// Result of splitting a window and comparing `l^{4/eps}` of the pieces with
/// the whole.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivisibilityReport {
    pub pieces: Vec<f64>,
    pub combined: f64,
    pub whole: f64,
    pub holds: bool,
}

/// `|| { ||v||_{X(I_j)} }_j ||_{l^{4/eps}} <= ||v||_{X(I)}`.
pub fn divisibility_check(
    src: &dyn FrameSource,
    eps: &EpsilonPolicy,
    pieces: usize,
    window: FrameWindow,
) -> Result<DivisibilityReport> {
    let whole = x_norm(src, eps, None, window)?.value;
    let parts = window
        .split(pieces)?
        .into_iter()
        .map(|w| x_norm(src, eps, None, w).map(|r| r.value))
        .collect::<Result<Vec<_>>>()?;
    let combined = power_norm(parts.iter().cloned(), eps.p_high(), 1.0);
    Ok(DivisibilityReport { holds: combined <= whole * (1.0 + 1e-10), pieces: parts, combined, whole })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Trajectory;
    use crate::propagate::{FlowSpec, FreeFlow};
    use std::f64::consts::PI;

    fn constant_trajectory(c: f64, frames: usize, dt: f64) -> Trajectory {
        let g = SpectralGrid::new(2, 8, 2.0).unwrap();
        let f = Field::from_physical_fn(g, |_| Complex64::new(c, 0.0));
        Trajectory::new(0.0, dt, vec![f; frames]).unwrap()
    }

    /// For a constant `c` on `[0, T] x [0, L]^2`, every mixed norm is `c` times
    /// the appropriate powers of `T` and `L`.
    #[test]
    fn constant_field_norms_are_explicit() {
        let tr = constant_trajectory(3.0, 5, 0.25);
        let w = FrameWindow::all(&tr);
        let (t, l) = (1.0f64, 2.0f64);
        let s = strichartz_norm(&tr, 2.0, 4.0, w).unwrap();
        assert!((s - 3.0 * t.sqrt() * (l * l).powf(0.25)).abs() < 1e-12);
        let lat = lateral_norm(&tr, 3.0, 7.0, 0, w).unwrap();
        let want = 3.0 * l.powf(1.0 / 3.0) * (t * l).powf(1.0 / 7.0);
        assert!((lat - want).abs() < 1e-12 * want);
        let sup = lateral_norm(&tr, f64::INFINITY, f64::INFINITY, 1, w).unwrap();
        assert!((sup - 3.0).abs() < 1e-14);
    }

    #[test]
    fn lateral_equals_strichartz_when_exponents_match() {
        let g = SpectralGrid::cube(8, 6.0).unwrap();
        let f = Field::from_physical_fn(g, |x| {
            Complex64::new((-x.iter().map(|v| v * v).sum::<f64>()).exp() * (1.0 + x[1]), x[0])
        });
        let src = FreeFlow::new(&f, FlowSpec::schrodinger(0.5, 6)).unwrap();
        let w = FrameWindow::all(&src);
        for q in [2.0, 3.5, 10.0] {
            let a = strichartz_norm(&src, q, q, w).unwrap();
            for axis in 0..4 {
                let b = lateral_norm(&src, q, q, axis, w).unwrap();
                assert!((a - b).abs() < 1e-12 * a, "q = {q}, axis {axis}");
            }
        }
    }

    #[test]
    fn single_frame_window_rejects_time_integrals() {
        let tr = constant_trajectory(1.0, 3, 0.1);
        let w = FrameWindow { first: 1, last: 1 };
        assert!(matches!(strichartz_norm(&tr, 2.0, 2.0, w), Err(DlabError::EmptyInterval(_))));
        assert_eq!(strichartz_norm(&tr, f64::INFINITY, 2.0, w).unwrap(), 2.0);
        assert!(strichartz_norm(&tr, 2.0, 2.0, FrameWindow { first: 2, last: 5 }).is_err());
    }

    #[test]
    fn epsilon_policy_constraints() {
        assert!(EpsilonPolicy::for_regularity(0.02, 0.4).is_ok());
        assert!(EpsilonPolicy::for_regularity(0.05, 0.4).is_err());
        assert!(EpsilonPolicy::for_regularity(0.01, 0.3).is_err());
        assert!(EpsilonPolicy::new(0.0).is_err());
    }

    #[test]
    fn resolved_bands_respect_the_range() {
        let g = SpectralGrid::cube(16, 4.0 * PI).unwrap();
        assert_eq!(resolved_bands(&g), vec![1.0, 2.0]);
        let g = SpectralGrid::cube(32, 8.0 * PI).unwrap();
        assert_eq!(resolved_bands(&g), vec![0.5, 1.0, 2.0]);
    }

    #[test]
    fn windows_split_on_shared_endpoints() {
        let w = FrameWindow { first: 0, last: 10 };
        let parts = w.split(3).unwrap();
        assert_eq!(parts.first().unwrap().first, 0);
        assert_eq!(parts.last().unwrap().last, 10);
        for pair in parts.windows(2) {
            assert_eq!(pair[0].last, pair[1].first);
        }
    }
}
