//! Periodic spectral grids, fields and time-sampled trajectories.
//!
//! Physical nodes sit at `x_j = dx (j - m/2)` on each axis, so the origin is a
//! node. The frequency lattice is `xi_n = carrier + dxi n` with
//! `dxi = 2 pi / L`. Frequency data is stored in FFT order: index `n` along an
//! axis is the mode `n` for `n < m/2` and `n - m` otherwise.
//!
//! With this placement the continuum transform `f^(xi) = int f(x) e^{-i x.xi} dx`
//! becomes `dx^d (-1)^n DFT(f)_n`, and Parseval reads
//! `||f||_2^2 = L^{-d} sum |f^_n|^2`.
//!
//! A nonzero carrier shifts the whole frequency lattice. Physical values are
//! still the true field values; only the transforms demodulate. This lets a
//! coarse grid hold unit-scale packets centred at a large frequency exactly.

use crate::error::{DlabError, Result};
use crate::fft::fft_nd;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::borrow::Cow;
use std::f64::consts::PI;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    dim: usize,
    points: usize,
    length: f64,
    carrier: [f64; MAX_DIM],
}

impl SpectralGrid {
    /// `points` must be a power of two, at least 8.
    pub fn new(dim: usize, points: usize, length: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(DlabError::InvalidGrid(format!("dimension {dim} not in 1..=4")));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(DlabError::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {points}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(DlabError::InvalidGrid(format!("box length {length} must be positive")));
        }
        Ok(Self { dim, points, length, carrier: [0.0; MAX_DIM] })
    }

    /// The standard 4D grid.
    pub fn cube(points: usize, length: f64) -> Result<Self> {
        Self::new(4, points, length)
    }

    /// Shift the frequency lattice by `carrier`.
    pub fn with_carrier(mut self, carrier: [f64; MAX_DIM]) -> Result<Self> {
        if carrier.iter().any(|c| !c.is_finite()) {
            return Err(DlabError::InvalidGrid("carrier must be finite".into()));
        }
        if carrier[self.dim..].iter().any(|&c| c != 0.0) {
            return Err(DlabError::InvalidGrid("carrier has components beyond the grid dimension".into()));
        }
        self.carrier = carrier;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn points(&self) -> usize {
        self.points
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn carrier(&self) -> [f64; MAX_DIM] {
        self.carrier
    }
    pub fn has_carrier(&self) -> bool {
        self.carrier.iter().any(|&c| c != 0.0)
    }
    pub fn dx(&self) -> f64 {
        self.length / self.points as f64
    }
    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.length
    }
    /// Number of nodes, `m^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Volume element `dx^d`.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }
    /// Largest lattice offset from the carrier along one axis, `m dxi / 2`.
    pub fn nyquist(&self) -> f64 {
        self.points as f64 * self.dxi() / 2.0
    }

    /// Signed mode number for FFT-order index `n`.
    pub fn signed_mode(&self, n: usize) -> i64 {
        if n < self.points / 2 {
            n as i64
        } else {
            n as i64 - self.points as i64
        }
    }

    pub fn axis_nodes(&self) -> Vec<f64> {
        let half = (self.points / 2) as f64;
        (0..self.points).map(|j| self.dx() * (j as f64 - half)).collect()
    }

    /// Frequencies along `axis`, in FFT order, carrier included.
    pub fn axis_frequencies(&self, axis: usize) -> Vec<f64> {
        let c = self.carrier[axis];
        (0..self.points)
            .map(|n| c + self.dxi() * self.signed_mode(n) as f64)
            .collect()
    }

    /// Index of the physical node closest to coordinate `x` along an axis.
    pub fn nearest_node(&self, x: f64) -> Option<usize> {
        let j = (x / self.dx() + (self.points / 2) as f64).round();
        (j >= 0.0 && j < self.points as f64).then_some(j as usize)
    }

    /// Evaluate `f` at every physical node, row-major.
    pub fn map_positions<T: Send, F: Fn(&[f64; MAX_DIM]) -> T + Sync>(&self, f: F) -> Vec<T> {
        let axes: Vec<Vec<f64>> = (0..self.dim).map(|_| self.axis_nodes()).collect();
        map_lattice(self.dim, self.points, &axes, f)
    }

    /// Evaluate `f` at every lattice frequency, FFT order.
    pub fn map_frequencies<T: Send, F: Fn(&[f64; MAX_DIM]) -> T + Sync>(&self, f: F) -> Vec<T> {
        let axes: Vec<Vec<f64>> = (0..self.dim).map(|a| self.axis_frequencies(a)).collect();
        map_lattice(self.dim, self.points, &axes, f)
    }

    /// `|xi|^2` at every lattice frequency.
    pub fn frequency_norm_sq(&self) -> Vec<f64> {
        self.map_frequencies(|xi| xi.iter().map(|v| v * v).sum())
    }

    /// Errors unless `other` describes the same lattice.
    pub fn ensure_same(&self, other: &SpectralGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(DlabError::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    pub(crate) fn ensure_no_carrier(&self, what: &str) -> Result<()> {
        if self.has_carrier() {
            Err(DlabError::InvalidGrid(format!("{what} needs a grid without carrier")))
        } else {
            Ok(())
        }
    }
}

/// Row-major evaluation over a tensor lattice with per-axis coordinates.
fn map_lattice<T: Send, F: Fn(&[f64; MAX_DIM]) -> T + Sync>(
    dim: usize,
    m: usize,
    axes: &[Vec<f64>],
    f: F,
) -> Vec<T> {
    use rayon::prelude::*;
    let slab = m.pow(dim as u32 - 1);
    (0..m)
        .into_par_iter()
        .flat_map_iter(|i0| {
            let mut out = Vec::with_capacity(slab);
            let mut idx = [0usize; MAX_DIM];
            idx[0] = i0;
            for _ in 0..slab {
                let mut p = [0.0; MAX_DIM];
                for a in 0..dim {
                    p[a] = axes[a][idx[a]];
                }
                out.push(f(&p));
                for a in (1..dim).rev() {
                    idx[a] += 1;
                    if idx[a] < m {
                        break;
                    }
                    idx[a] = 0;
                }
            }
            out
        })
        .collect()
}

/// Multiply `data` by the tensor product of per-axis factors.
pub(crate) fn apply_separable(data: &mut [Complex64], m: usize, factors: &[Vec<Complex64>]) {
    fn rec(data: &mut [Complex64], m: usize, factors: &[Vec<Complex64>], scale: Complex64) {
        if factors.len() == 1 {
            for (v, f) in data.iter_mut().zip(&factors[0]) {
                *v *= scale * f;
            }
            return;
        }
        let chunk = data.len() / m;
        for (i, sub) in data.chunks_mut(chunk).enumerate() {
            rec(sub, m, &factors[1..], scale * factors[0][i]);
        }
    }
    rec(data, m, factors, Complex64::new(1.0, 0.0));
}

/// Which representation a field's samples are in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Physical,
    Frequency,
}

/// Complex samples on a grid, in one of the two domains.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: SpectralGrid,
    domain: Domain,
    data: Vec<Complex64>,
}

impl Field {
    pub fn zeros(grid: SpectralGrid, domain: Domain) -> Self {
        Self { grid, domain, data: vec![Complex64::default(); grid.len()] }
    }

    pub fn from_vec(grid: SpectralGrid, domain: Domain, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(DlabError::GridMismatch(format!(
                "{} samples for a grid of {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, domain, data })
    }

    /// Sample `f(x)` at the physical nodes.
    pub fn from_physical_fn<F: Fn(&[f64; MAX_DIM]) -> Complex64 + Sync>(grid: SpectralGrid, f: F) -> Self {
        Self { grid, domain: Domain::Physical, data: grid.map_positions(f) }
    }

    /// Sample a continuum Fourier transform `f^(xi)` on the lattice.
    pub fn from_frequency_fn<F: Fn(&[f64; MAX_DIM]) -> Complex64 + Sync>(grid: SpectralGrid, f: F) -> Self {
        Self { grid, domain: Domain::Frequency, data: grid.map_frequencies(f) }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }
    pub fn domain(&self) -> Domain {
        self.domain
    }
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(DlabError::NonFinite(what.to_string()))
        }
    }

    /// Physical samples to continuum Fourier transform samples.
    pub fn to_frequency(&self) -> Result<Field> {
        self.clone().into_frequency()
    }

    pub fn into_frequency(mut self) -> Result<Field> {
        if self.domain == Domain::Frequency {
            return Ok(self);
        }
        self.ensure_finite("to_frequency input")?;
        let g = self.grid;
        if g.has_carrier() {
            let nodes = g.axis_nodes();
            let phases: Vec<Vec<Complex64>> = (0..g.dim())
                .map(|a| nodes.iter().map(|&x| Complex64::from_polar(1.0, -g.carrier[a] * x)).collect())
                .collect();
            apply_separable(&mut self.data, g.points(), &phases);
        }
        fft_nd(&mut self.data, g.dim(), g.points(), false);
        let vol = g.cell_volume();
        let signs = sign_factors(&g, vol);
        apply_separable(&mut self.data, g.points(), &signs);
        self.domain = Domain::Frequency;
        Ok(self)
    }

    /// Continuum Fourier samples back to physical values.
    pub fn to_physical(&self) -> Result<Field> {
        self.clone().into_physical()
    }

    pub fn into_physical(mut self) -> Result<Field> {
        if self.domain == Domain::Physical {
            return Ok(self);
        }
        self.ensure_finite("to_physical input")?;
        let g = self.grid;
        let signs = sign_factors(&g, g.length().powi(-(g.dim() as i32)));
        apply_separable(&mut self.data, g.points(), &signs);
        fft_nd(&mut self.data, g.dim(), g.points(), true);
        if g.has_carrier() {
            let nodes = g.axis_nodes();
            let phases: Vec<Vec<Complex64>> = (0..g.dim())
                .map(|a| nodes.iter().map(|&x| Complex64::from_polar(1.0, g.carrier[a] * x)).collect())
                .collect();
            apply_separable(&mut self.data, g.points(), &phases);
        }
        self.domain = Domain::Physical;
        Ok(self)
    }

    /// Pointwise multiplication by a real symbol (frequency domain in, out).
    pub fn multiply_real(&mut self, symbol: &[f64]) {
        for (v, s) in self.data.iter_mut().zip(symbol) {
            *v *= *s;
        }
    }

    pub fn scale(&mut self, c: Complex64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: Complex64, other: &Field) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        if self.domain != other.domain {
            return Err(DlabError::GridMismatch("axpy across domains".into()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    /// `self - other`, same grid and domain.
    pub fn sub(&self, other: &Field) -> Result<Field> {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other)?;
        Ok(out)
    }

    /// L^2 norm, from either domain.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.data.iter().map(|z| z.norm_sqr()).sum();
        match self.domain {
            Domain::Physical => (s * self.grid.cell_volume()).sqrt(),
            Domain::Frequency => (s * self.grid.length().powi(-(self.grid.dim() as i32))).sqrt(),
        }
    }

    pub fn max_modulus(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Per-axis `scale^{1/d} (-1)^n` factors.
fn sign_factors(g: &SpectralGrid, scale: f64) -> Vec<Vec<Complex64>> {
    let per_axis = scale.powf(1.0 / g.dim() as f64);
    (0..g.dim())
        .map(|_| {
            (0..g.points())
                .map(|n| Complex64::new(if n % 2 == 0 { per_axis } else { -per_axis }, 0.0))
                .collect()
        })
        .collect()
}

/// `||f||_{L^r}` of a physical field; `r = f64::INFINITY` gives the max.
pub fn lp_norm(field: &Field, r: f64) -> Result<f64> {
    check_exponent(r)?;
    let phys: Cow<Field> = match field.domain {
        Domain::Physical => Cow::Borrowed(field),
        Domain::Frequency => {
            if r == 2.0 {
                return Ok(field.l2_norm());
            }
            Cow::Owned(field.to_physical()?)
        }
    };
    phys.ensure_finite("lp_norm input")?;
    Ok(power_norm(phys.data.iter().map(|z| z.norm()), r, phys.grid.cell_volume()))
}

/// Spatial weight multiplying a field inside a norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "alpha", rename_all = "snake_case")]
pub enum Weight {
    /// `|x|^alpha`
    PowerLaw(f64),
    /// `<x>^alpha = (1 + |x|^2)^{alpha/2}`
    Japanese(f64),
}

impl Weight {
    pub fn eval(&self, x: &[f64; MAX_DIM]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match *self {
            Weight::PowerLaw(a) => r2.powf(a / 2.0),
            Weight::Japanese(a) => (1.0 + r2).powf(a / 2.0),
        }
    }

    pub fn table(&self, grid: &SpectralGrid) -> Vec<f64> {
        grid.map_positions(|x| self.eval(x))
    }
}

/// `||w f||_{L^r}`.
pub fn weighted_lp_norm(field: &Field, r: f64, weight: Weight) -> Result<f64> {
    check_exponent(r)?;
    let phys = match field.domain {
        Domain::Physical => Cow::Borrowed(field),
        Domain::Frequency => Cow::Owned(field.to_physical()?),
    };
    phys.ensure_finite("weighted_lp_norm input")?;
    let w = weight.table(&phys.grid);
    Ok(power_norm(
        phys.data.iter().zip(&w).map(|(z, w)| z.norm() * w),
        r,
        phys.grid.cell_volume(),
    ))
}

pub(crate) fn check_exponent(r: f64) -> Result<()> {
    if r.is_nan() || r < 1.0 {
        Err(DlabError::InvalidExponent(r))
    } else {
        Ok(())
    }
}

/// `(vol * sum a_i^r)^{1/r}` without overflow for large `r`.
pub(crate) fn power_norm<I: Iterator<Item = f64> + Clone>(values: I, r: f64, vol: f64) -> f64 {
    let top = values.clone().fold(0.0, f64::max);
    if r.is_infinite() {
        return top;
    }
    if top == 0.0 {
        return 0.0;
    }
    let s: f64 = values.map(|a| (a / top).powf(r)).sum();
    top * (s * vol).powf(1.0 / r)
}

/// Fields sampled at `t0 + i dt`, `i = 0..len`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    grid: SpectralGrid,
    t0: f64,
    dt: f64,
    frames: Vec<Field>,
}

impl Trajectory {
    pub fn new(t0: f64, dt: f64, frames: Vec<Field>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| DlabError::InconsistentTrajectory("no frames".into()))?;
        let grid = first.grid;
        if frames.len() > 1 && !(dt.is_finite() && dt > 0.0) {
            return Err(DlabError::InconsistentTrajectory(format!("time step {dt}")));
        }
        for f in &frames {
            grid.ensure_same(&f.grid)?;
            if f.domain != Domain::Physical {
                return Err(DlabError::InconsistentTrajectory("frames must be physical".into()));
            }
        }
        Ok(Self { grid, t0, dt, frames })
    }

    pub fn frames(&self) -> &[Field] {
        &self.frames
    }
    pub fn into_frames(self) -> Vec<Field> {
        self.frames
    }
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.dt * i as f64
    }
    pub fn span(&self) -> f64 {
        self.dt * (self.frames.len().saturating_sub(1)) as f64
    }
}

/// Anything that yields fields at equally spaced times.
///
/// Norm evaluators stream over frames through this trait, so an analytic free
/// evolution never has to be materialized.
pub trait FrameSource: Sync {
    fn grid(&self) -> &SpectralGrid;
    fn t0(&self) -> f64;
    fn dt(&self) -> f64;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn physical(&self, i: usize) -> Result<Cow<'_, Field>>;
    fn spectrum(&self, i: usize) -> Result<Cow<'_, Field>>;
    fn time(&self, i: usize) -> f64 {
        self.t0() + self.dt() * i as f64
    }
}

impl FrameSource for Trajectory {
    fn grid(&self) -> &SpectralGrid {
        &self.grid
    }
    fn t0(&self) -> f64 {
        self.t0
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn len(&self) -> usize {
        self.frames.len()
    }
    fn physical(&self, i: usize) -> Result<Cow<'_, Field>> {
        Ok(Cow::Borrowed(&self.frames[i]))
    }
    fn spectrum(&self, i: usize) -> Result<Cow<'_, Field>> {
        Ok(Cow::Owned(self.frames[i].to_frequency()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_grid() -> SpectralGrid {
        SpectralGrid::cube(16, 16.0).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SpectralGrid::new(4, 12, 1.0).is_err());
        assert!(SpectralGrid::new(4, 4, 1.0).is_err());
        assert!(SpectralGrid::new(5, 8, 1.0).is_err());
        assert!(SpectralGrid::new(4, 8, 0.0).is_err());
    }

    #[test]
    fn origin_is_a_node_and_fft_order_wraps() {
        let g = gaussian_grid();
        assert_eq!(g.axis_nodes()[8], 0.0);
        assert_eq!(g.signed_mode(7), 7);
        assert_eq!(g.signed_mode(8), -8);
    }

    /// The Gaussian e^{-|x|^2/2} has transform 2 pi e^{-|xi|^2/2} in 2D.
    #[test]
    fn gaussian_transform_matches_closed_form() {
        let g = SpectralGrid::new(2, 64, 20.0).unwrap();
        let f = Field::from_physical_fn(g, |x| {
            Complex64::new((-x.iter().map(|v| v * v).sum::<f64>() / 2.0).exp(), 0.0)
        });
        let hat = f.to_frequency().unwrap();
        let want = Field::from_frequency_fn(g, |xi| {
            Complex64::new(2.0 * PI * (-xi.iter().map(|v| v * v).sum::<f64>() / 2.0).exp(), 0.0)
        });
        let err = hat.data().iter().zip(want.data()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "max error {err}");
    }

    #[test]
    fn carrier_grid_represents_modulated_packet() {
        let k = [10.0, -3.0, 0.0, 0.0];
        let g = SpectralGrid::new(2, 64, 20.0).unwrap().with_carrier(k).unwrap();
        let f = Field::from_physical_fn(g, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::from_polar((-r2 / 2.0).exp(), k[0] * x[0] + k[1] * x[1])
        });
        let hat = f.to_frequency().unwrap();
        let want = Field::from_frequency_fn(g, |xi| {
            let r2: f64 = xi.iter().zip(&k).map(|(a, b)| (a - b) * (a - b)).sum();
            Complex64::new(2.0 * PI * (-r2 / 2.0).exp(), 0.0)
        });
        let err = hat.data().iter().zip(want.data()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "max error {err}");
        let back = hat.to_physical().unwrap();
        let rt = back.sub(&f).unwrap().l2_norm();
        assert!(rt < 1e-12 * f.l2_norm());
    }

    #[test]
    fn lp_norm_of_constant_is_volume_power() {
        let g = SpectralGrid::new(2, 8, 2.0).unwrap();
        let f = Field::from_physical_fn(g, |_| Complex64::new(3.0, 0.0));
        for r in [1.0, 2.0, 4.0, 80.0] {
            let want = 3.0 * 4f64.powf(1.0 / r);
            assert!((lp_norm(&f, r).unwrap() - want).abs() < 1e-12 * want);
        }
        assert_eq!(lp_norm(&f, f64::INFINITY).unwrap(), 3.0);
        assert!(lp_norm(&f, 0.5).is_err());
        assert!(lp_norm(&f, f64::NAN).is_err());
    }

    #[test]
    fn huge_exponents_do_not_overflow() {
        let g = SpectralGrid::new(1, 8, 8.0).unwrap();
        let f = Field::from_physical_fn(g, |x| Complex64::new(1e5 * (1.0 + x[0].abs()), 0.0));
        let v = lp_norm(&f, 200.0).unwrap();
        assert!(v.is_finite() && v > 1e5);
    }

    #[test]
    fn weighted_norm_at_zero_exponent_is_plain() {
        let g = SpectralGrid::new(2, 8, 4.0).unwrap();
        let f = Field::from_physical_fn(g, |x| Complex64::new(x[0].cos(), x[1]));
        let plain = lp_norm(&f, 3.0).unwrap();
        for w in [Weight::PowerLaw(0.0), Weight::Japanese(0.0)] {
            assert!((weighted_lp_norm(&f, 3.0, w).unwrap() - plain).abs() < 1e-13);
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let g = SpectralGrid::new(1, 8, 1.0).unwrap();
        let mut f = Field::zeros(g, Domain::Physical);
        f.data_mut()[3] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(f.to_frequency(), Err(DlabError::NonFinite(_))));
    }
}
