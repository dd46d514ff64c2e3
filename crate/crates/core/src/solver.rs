//! Split-step integration of the cubic NLS, the forced equation, Picard
//! iteration for the forced problem, and conserved / monotone diagnostics.
//!
//! Sign convention: the equation is `(i d_t + Delta) u = mu |u|^2 u` with
//! `mu = +1` defocusing and `mu = -1` focusing.

use crate::error::{DlabError, Result};
use crate::fft::fft_nd;
use crate::grid::{Domain, Field, FrameSource, SpectralGrid, Trajectory, MAX_DIM};
use crate::norms::{x_norm, EpsilonPolicy, FrameWindow};
use crate::propagate::{duhamel_all, gradient_l2_sq, schrodinger_flow, FlowSpec, FreeFlow};
use crate::randomize::RadialProfileSpec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Defocusing,
    Focusing,
}

impl Nonlinearity {
    pub fn sign(&self) -> f64 {
        match self {
            Nonlinearity::Defocusing => 1.0,
            Nonlinearity::Focusing => -1.0,
        }
    }
}

/// Max-modulus growth factor that counts as blowup.
pub const BLOWUP_FACTOR: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NlsRunConfig {
    pub nonlinearity: Nonlinearity,
    pub dt: f64,
    pub t_end: f64,
    /// Two-thirds rule after every nonlinear substep.
    pub dealias: bool,
    /// Steps between stored frames.
    pub stride: usize,
}

impl Default for NlsRunConfig {
    fn default() -> Self {
        Self { nonlinearity: Nonlinearity::Defocusing, dt: 0.01, t_end: 1.0, dealias: true, stride: 10 }
    }
}

impl NlsRunConfig {
    /// Number of steps; `t_end` must be a whole number of strides.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(DlabError::InvalidParameter(format!("dt = {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(DlabError::InvalidParameter(format!("t_end = {}", self.t_end)));
        }
        if self.stride == 0 {
            return Err(DlabError::InvalidParameter("stride must be positive".into()));
        }
        let steps = (self.t_end / self.dt).round();
        if (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(1.0) {
            return Err(DlabError::InvalidParameter(format!(
                "t_end = {} is not a multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        let steps = steps as usize;
        if steps % self.stride != 0 {
            return Err(DlabError::InvalidParameter(format!("{steps} steps is not a multiple of stride {}", self.stride)));
        }
        Ok(steps)
    }

    /// Spacing of stored frames.
    pub fn frame_dt(&self) -> f64 {
        self.dt * self.stride as f64
    }

    /// Warning when `dt |xi|_max^2 > pi`, i.e. the kinetic phase is aliased in time.
    pub fn phase_warning(&self, grid: &SpectralGrid) -> Option<String> {
        let kmax2 = grid.dim() as f64 * grid.nyquist().powi(2);
        let phase = self.dt * kmax2;
        (phase > std::f64::consts::PI)
            .then(|| format!("dt * max|xi|^2 = {phase:.3} exceeds pi; high modes rotate by more than half a turn per step"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blowup {
    pub time: f64,
    pub reason: String,
}

/// Frames up to the last good one, and the blowup signal if one fired.
#[derive(Clone, Debug)]
pub struct NlsRun {
    pub trajectory: Trajectory,
    pub blowup: Option<Blowup>,
    pub warnings: Vec<String>,
}

impl NlsRun {
    pub fn completed(&self) -> Result<&Trajectory> {
        match &self.blowup {
            None => Ok(&self.trajectory),
            Some(b) => Err(DlabError::BlowupDetected { time: b.time, reason: b.reason.clone() }),
        }
    }
}

/// Raw-DFT split-step kernel; the state is the unnormalized DFT of the
/// physical samples, so the kinetic symbol is diagonal in storage order.
struct Stepper {
    grid: SpectralGrid,
    half_kinetic: Vec<Complex64>,
    keep: Option<Vec<bool>>,
    mu_dt: f64,
    inv_len: f64,
}

impl Stepper {
    fn new(grid: SpectralGrid, cfg: &NlsRunConfig) -> Result<Self> {
        grid.ensure_no_carrier("split-step solver")?;
        let half_kinetic = grid
            .frequency_norm_sq()
            .iter()
            .map(|&q| Complex64::from_polar(1.0, -0.5 * cfg.dt * q))
            .collect();
        let keep = cfg.dealias.then(|| dealias_mask(&grid));
        Ok(Self {
            grid,
            half_kinetic,
            keep,
            mu_dt: cfg.nonlinearity.sign() * cfg.dt,
            inv_len: 1.0 / grid.len() as f64,
        })
    }

    fn forward(&self, u: &mut [Complex64]) {
        fft_nd(u, self.grid.dim(), self.grid.points(), false);
    }

    fn inverse(&self, u: &mut [Complex64]) {
        fft_nd(u, self.grid.dim(), self.grid.points(), true);
        for z in u.iter_mut() {
            *z *= self.inv_len;
        }
    }

    /// One Strang step on the DFT state; returns `max |u|^2` seen at the
    /// nonlinear substep.
    fn step(&self, hat: &mut [Complex64]) -> f64 {
        for (z, k) in hat.iter_mut().zip(&self.half_kinetic) {
            *z *= k;
        }
        self.inverse(hat);
        let mut peak: f64 = 0.0;
        for z in hat.iter_mut() {
            let a = z.norm_sqr();
            peak = if a.is_nan() || peak.is_nan() { f64::NAN } else { peak.max(a) };
            *z *= Complex64::from_polar(1.0, -self.mu_dt * a);
        }
        self.forward(hat);
        if let Some(keep) = &self.keep {
            for (z, &k) in hat.iter_mut().zip(keep) {
                if !k {
                    *z = Complex64::default();
                }
            }
        }
        for (z, k) in hat.iter_mut().zip(&self.half_kinetic) {
            *z *= k;
        }
        peak
    }

    fn physical(&self, hat: &[Complex64]) -> Result<Field> {
        let mut u = hat.to_vec();
        self.inverse(&mut u);
        Field::from_vec(self.grid, Domain::Physical, u)
    }
}

/// `true` for modes kept by the two-thirds rule: `|n| <= m / 3` on every axis.
pub fn dealias_mask(grid: &SpectralGrid) -> Vec<bool> {
    let m = grid.points();
    let d = grid.dim();
    let cut = (m / 3) as i64;
    (0..grid.len())
        .map(|i| {
            let mut rest = i;
            for _ in 0..d {
                if grid.signed_mode(rest % m).abs() > cut {
                    return false;
                }
                rest /= m;
            }
            true
        })
        .collect()
}

/// Strang splitting: half kinetic, exact phase rotation, half kinetic.
pub fn splitstep_nls(u0: &Field, cfg: &NlsRunConfig) -> Result<NlsRun> {
    let steps = cfg.steps()?;
    let grid = *u0.grid();
    let stepper = Stepper::new(grid, cfg)?;
    let u0 = if u0.domain() == Domain::Physical { u0.clone() } else { u0.to_physical()? };
    u0.ensure_finite("initial datum")?;
    let limit = (BLOWUP_FACTOR * u0.max_modulus().max(f64::MIN_POSITIVE)).powi(2);
    let mut warnings = Vec::new();
    if let Some(w) = cfg.phase_warning(&grid) {
        warnings.push(w);
    }
    let mut frames = vec![u0.clone()];
    let mut hat = u0.into_data();
    stepper.forward(&mut hat);
    let mut blowup = None;
    for n in 1..=steps {
        let peak = stepper.step(&mut hat);
        let t = n as f64 * cfg.dt;
        if !peak.is_finite() || peak > limit || hat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            let reason = if peak.is_finite() { "max modulus exceeded the blowup threshold" } else { "non-finite values" };
            blowup = Some(Blowup { time: t, reason: reason.into() });
            break;
        }
        if n % cfg.stride == 0 {
            frames.push(stepper.physical(&hat)?);
        }
    }
    Ok(NlsRun { trajectory: Trajectory::new(0.0, cfg.frame_dt(), frames)?, blowup, warnings })
}

fn check_forcing_alignment(forcing: &dyn FrameSource, cfg: &NlsRunConfig, frames: usize) -> Result<()> {
    if forcing.t0() != 0.0 {
        return Err(DlabError::InconsistentTrajectory(format!("forcing starts at t = {}", forcing.t0())));
    }
    if forcing.len() < frames {
        return Err(DlabError::InconsistentTrajectory(format!(
            "forcing has {} frames, run needs {frames}",
            forcing.len()
        )));
    }
    if frames > 1 && (forcing.dt() - cfg.frame_dt()).abs() > 1e-12 * cfg.frame_dt() {
        return Err(DlabError::InconsistentTrajectory(format!(
            "forcing frame spacing {} differs from run spacing {}",
            forcing.dt(),
            cfg.frame_dt()
        )));
    }
    Ok(())
}

/// Forced NLS `(i d_t + Delta) v = mu |F + v|^2 (F + v)` for a free solution
/// `F`, run as the plain NLS for `F + v`.
pub fn splitstep_forced(v0: &Field, forcing: &dyn FrameSource, cfg: &NlsRunConfig) -> Result<NlsRun> {
    let frames = cfg.steps()? / cfg.stride + 1;
    check_forcing_alignment(forcing, cfg, frames)?;
    v0.grid().ensure_same(forcing.grid())?;
    let mut u0 = forcing.physical(0)?.into_owned();
    let v0p = if v0.domain() == Domain::Physical { v0.clone() } else { v0.to_physical()? };
    u0.axpy(Complex64::new(1.0, 0.0), &v0p)?;
    let run = splitstep_nls(&u0, cfg)?;
    let mut out = Vec::with_capacity(run.trajectory.frames().len());
    for (i, u) in run.trajectory.frames().iter().enumerate() {
        out.push(u.sub(forcing.physical(i)?.as_ref())?);
    }
    Ok(NlsRun { trajectory: Trajectory::new(0.0, cfg.frame_dt(), out)?, blowup: run.blowup, warnings: run.warnings })
}

/// `|w|^2 w`, pointwise.
fn cubic(w: &Field) -> Field {
    let mut out = w.clone();
    for z in out.data_mut() {
        *z *= z.norm_sqr();
    }
    out
}

fn to_physical(f: &Field) -> Result<Field> {
    if f.domain() == Domain::Physical {
        Ok(f.clone())
    } else {
        f.to_physical()
    }
}

/// `E(v) = int |grad v|^2 / 2 + |v|^4 / 4`.
pub fn energy(v: &Field) -> Result<f64> {
    let v = to_physical(v)?;
    Ok(0.5 * gradient_l2_sq(&v)? + 0.25 * quartic(&v))
}

/// Conserved energy of the run: the quartic term carries the sign `mu`.
pub fn hamiltonian(v: &Field, nonlinearity: Nonlinearity) -> Result<f64> {
    let v = to_physical(v)?;
    Ok(0.5 * gradient_l2_sq(&v)? + 0.25 * nonlinearity.sign() * quartic(&v))
}

fn quartic(v: &Field) -> f64 {
    v.data().iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() * v.grid().cell_volume()
}

/// `int |v|^2`.
pub fn mass(v: &Field) -> f64 {
    v.l2_norm().powi(2)
}

/// Physical components of the spectral gradient.
fn gradient_fields(v: &Field) -> Result<Vec<Field>> {
    let grid = *v.grid();
    let hat = v.to_frequency()?;
    let m = grid.points();
    (0..grid.dim())
        .map(|axis| {
            let ks = grid.axis_frequencies(axis);
            let stride = m.pow((grid.dim() - 1 - axis) as u32);
            let mut d = hat.clone();
            for (i, z) in d.data_mut().iter_mut().enumerate() {
                *z *= Complex64::new(0.0, ks[(i / stride) % m]);
            }
            d.into_physical()
        })
        .collect()
}

/// Regularized Lin-Strauss weight `a(x) = (|x|^2 + sigma^2)^{1/2}` and the
/// derivatives the Morawetz identity needs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorawetzWeight {
    pub sigma: f64,
}

impl MorawetzWeight {
    /// Half a grid cell.
    pub fn for_grid(grid: &SpectralGrid) -> Self {
        Self { sigma: 0.5 * grid.dx() }
    }

    pub fn value(&self, x: &[f64; MAX_DIM]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() + self.sigma * self.sigma).sqrt()
    }

    /// `Delta a = (d - 1)/a + sigma^2/a^3`.
    pub fn laplacian(&self, r2: f64, dim: usize) -> f64 {
        let a = (r2 + self.sigma * self.sigma).sqrt();
        (dim as f64 - 1.0) / a + self.sigma.powi(2) / a.powi(3)
    }

    /// `Delta Delta a`; equals `-3/|x|^3` for `sigma = 0`, `d = 4`.
    pub fn bilaplacian(&self, r2: f64, dim: usize) -> f64 {
        let s2 = self.sigma * self.sigma;
        let a = (r2 + s2).sqrt();
        let dm1 = dim as f64 - 1.0;
        dm1 * ((2.0 * r2 - s2) / a.powi(5) - dm1 / a.powi(3))
            + s2 * ((12.0 * r2 - 3.0 * s2) / a.powi(7) - 3.0 * dm1 / a.powi(5))
    }
}

/// `m(t) = 2 Im int d_k a d_k v conj(v)`.
pub fn morawetz_action(v: &Field, weight: MorawetzWeight) -> Result<f64> {
    let v = to_physical(v)?;
    let grid = *v.grid();
    grid.ensure_no_carrier("morawetz action")?;
    let grads = gradient_fields(&v)?;
    let pos = grid.map_positions(|x| *x);
    let mut acc = 0.0;
    for (i, x) in pos.iter().enumerate() {
        let a = weight.value(x);
        let vb = v.data()[i].conj();
        for (k, g) in grads.iter().enumerate() {
            acc += (x[k] / a) * (g.data()[i] * vb).im;
        }
    }
    Ok(2.0 * acc * grid.cell_volume())
}

/// Pointwise pieces of the Morawetz identity at one instant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MorawetzRates {
    /// `-int DeltaDelta a |v|^2`
    pub bilaplacian: f64,
    /// `4 Re int d_jk a conj(d_j v) d_k v`
    pub hessian: f64,
    /// `mu int Delta a |v|^4`
    pub quartic: f64,
    /// `int 4 d_k a Re(conj(H) d_k v) + 2 Delta a Re(conj(v) H)`
    pub forcing: f64,
    /// `int |v|^4 / a`
    pub bulk: f64,
}

impl MorawetzRates {
    pub fn total(&self) -> f64 {
        self.bilaplacian + self.hessian + self.quartic + self.forcing
    }
}

/// Right side of `d_t m` for `(i d_t + Delta) v = mu |v|^2 v + H`.
pub fn morawetz_rates(v: &Field, h: Option<&Field>, mu: f64, weight: MorawetzWeight) -> Result<MorawetzRates> {
    let v = to_physical(v)?;
    let grid = *v.grid();
    grid.ensure_no_carrier("morawetz identity")?;
    let d = grid.dim();
    let grads = gradient_fields(&v)?;
    let pos = grid.map_positions(|x| *x);
    let mut r = MorawetzRates::default();
    for (i, x) in pos.iter().enumerate() {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        let a = weight.value(x);
        let lap = weight.laplacian(r2, d);
        let vi = v.data()[i];
        let m2 = vi.norm_sqr();
        let mut grad2 = 0.0;
        let mut radial = Complex64::default();
        for (k, g) in grads.iter().enumerate() {
            grad2 += g.data()[i].norm_sqr();
            radial += g.data()[i] * x[k];
        }
        r.bilaplacian -= weight.bilaplacian(r2, d) * m2;
        r.hessian += 4.0 * (grad2 / a - radial.norm_sqr() / a.powi(3));
        r.quartic += mu * lap * m2 * m2;
        r.bulk += m2 * m2 / a;
        if let Some(h) = h {
            let hi = h.data()[i];
            let mut flux = 0.0;
            for (k, g) in grads.iter().enumerate() {
                flux += (x[k] / a) * (hi.conj() * g.data()[i]).re;
            }
            r.forcing += 4.0 * flux + 2.0 * lap * (vi.conj() * hi).re;
        }
    }
    let vol = grid.cell_volume();
    r.bilaplacian *= vol;
    r.hessian *= vol;
    r.quartic *= vol;
    r.forcing *= vol;
    r.bulk *= vol;
    Ok(r)
}

/// `H = mu (|F + v|^2 (F + v) - |v|^2 v)`.
fn forcing_remainder(v: &Field, f: &Field, mu: f64) -> Result<Field> {
    let mut w = v.clone();
    w.axpy(Complex64::new(1.0, 0.0), f)?;
    let mut h = cubic(&w).sub(&cubic(v))?;
    h.scale(Complex64::new(mu, 0.0));
    Ok(h)
}

/// Fourth-order centered differences at interior frames `2..n-2`.
fn centered_derivative(values: &[f64], h: f64) -> Vec<(usize, f64)> {
    (2..values.len().saturating_sub(2))
        .map(|i| (i, (values[i - 2] - 8.0 * values[i - 1] + 8.0 * values[i + 1] - values[i + 2]) / (12.0 * h)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorawetzAudit {
    pub sigma: f64,
    pub times: Vec<f64>,
    pub action: Vec<f64>,
    pub rates: Vec<MorawetzRates>,
    /// `(frame, finite-difference d_t m)` at interior frames.
    pub fd_rate: Vec<(usize, f64)>,
    /// `max |fd - analytic| / max |analytic|` over interior frames.
    pub identity_mismatch: f64,
    pub identity_tolerance: f64,
    pub identity_holds: bool,
    /// `int int |v|^4 / a`
    pub bulk: f64,
    pub sup_h1: f64,
    pub sup_l2: f64,
    /// `||H||_{L^1 L^2}`
    pub forcing_l1l2: f64,
    /// `bulk / (sup_h1 sup_l2 + sup_h1 forcing_l1l2)`
    pub constant: f64,
    pub constant_cap: f64,
    pub inequality_holds: bool,
}

/// Constant the regularized weight gives in the Morawetz inequality:
/// `3 B <= 4 A + 12 A'`, so `B <= 4 (A + A')`.
pub const MORAWETZ_CAP: f64 = 4.0;

/// Trapezoid weights for `n` frames spaced `h`.
fn trapezoid(n: usize, h: f64) -> Vec<f64> {
    (0..n).map(|i| if n == 1 { 0.0 } else if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect()
}

/// Checks the `d_t m` identity by finite differences and the Morawetz
/// inequality with a recorded constant. `v` is a forced run against `forcing`
/// (or a plain run when `forcing` is `None`); `solver_dt` sets the tolerance.
pub fn morawetz_audit(
    v: &Trajectory,
    forcing: Option<&dyn FrameSource>,
    nonlinearity: Nonlinearity,
    weight: MorawetzWeight,
    solver_dt: f64,
) -> Result<MorawetzAudit> {
    let n = v.frames().len();
    if n < 5 {
        return Err(DlabError::InsufficientSamples(format!("morawetz audit needs 5 frames, got {n}")));
    }
    if let Some(f) = forcing {
        if f.len() < n || (f.dt() - v.dt()).abs() > 1e-12 * v.dt() || f.t0() != v.t0() {
            return Err(DlabError::InconsistentTrajectory("forcing frames do not match the run".into()));
        }
    }
    let mu = nonlinearity.sign();
    let mut action = Vec::with_capacity(n);
    let mut rates = Vec::with_capacity(n);
    let mut h_l2 = Vec::with_capacity(n);
    let (mut sup_h1, mut sup_l2): (f64, f64) = (0.0, 0.0);
    for (i, vi) in v.frames().iter().enumerate() {
        let h = match forcing {
            Some(f) => Some(forcing_remainder(vi, f.physical(i)?.as_ref(), mu)?),
            None => None,
        };
        action.push(morawetz_action(vi, weight)?);
        rates.push(morawetz_rates(vi, h.as_ref(), mu, weight)?);
        h_l2.push(h.map(|h| h.l2_norm()).unwrap_or(0.0));
        sup_h1 = sup_h1.max(gradient_l2_sq(vi)?.sqrt());
        sup_l2 = sup_l2.max(vi.l2_norm());
    }
    let fd = centered_derivative(&action, v.dt());
    let scale = fd.iter().map(|&(i, _)| rates[i].total().abs()).fold(0.0, f64::max);
    let worst = fd.iter().map(|&(i, r)| (r - rates[i].total()).abs()).fold(0.0, f64::max);
    let identity_mismatch = if scale > 0.0 { worst / scale } else { worst };
    let identity_tolerance = (10.0 * solver_dt * solver_dt).max(1e-4);
    let w = trapezoid(n, v.dt());
    let bulk: f64 = rates.iter().zip(&w).map(|(r, w)| r.bulk * w).sum();
    let forcing_l1l2: f64 = h_l2.iter().zip(&w).map(|(h, w)| h * w).sum();
    let denom = sup_h1 * sup_l2 + sup_h1 * forcing_l1l2;
    let constant = if denom > 0.0 { bulk / denom } else { 0.0 };
    Ok(MorawetzAudit {
        sigma: weight.sigma,
        times: (0..n).map(|i| v.time(i)).collect(),
        action,
        rates,
        fd_rate: fd,
        identity_mismatch,
        identity_tolerance,
        identity_holds: identity_mismatch <= identity_tolerance,
        bulk,
        sup_h1,
        sup_l2,
        forcing_l1l2,
        constant,
        constant_cap: MORAWETZ_CAP,
        inequality_holds: bulk >= 0.0 && constant <= MORAWETZ_CAP,
    })
}

/// Weight width, in grid cells, at which the finite-difference identity check
/// is run; narrower weights are not resolved by the lattice quadrature.
pub const IDENTITY_SIGMA_CELLS: f64 = 3.0;

/// Audits at `sigma = dx/2` (reported), `dx/4` (sensitivity) and the resolved
/// width used for the identity check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorawetzReport {
    pub half_cell: MorawetzAudit,
    pub quarter_cell: MorawetzAudit,
    pub resolved: MorawetzAudit,
}

impl MorawetzReport {
    pub fn identity_holds(&self) -> bool {
        self.resolved.identity_holds
    }

    pub fn inequality_holds(&self) -> bool {
        self.half_cell.inequality_holds && self.quarter_cell.inequality_holds
    }
}

pub fn morawetz_report(
    v: &Trajectory,
    forcing: Option<&dyn FrameSource>,
    nonlinearity: Nonlinearity,
    solver_dt: f64,
) -> Result<MorawetzReport> {
    let dx = v.grid().dx();
    let at = |cells: f64| morawetz_audit(v, forcing, nonlinearity, MorawetzWeight { sigma: cells * dx }, solver_dt);
    Ok(MorawetzReport { half_cell: at(0.5)?, quarter_cell: at(0.25)?, resolved: at(IDENTITY_SIGMA_CELLS)? })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub eta: f64,
    /// `||F||_{L^3 L^6}` over the run.
    pub forcing_proxy: f64,
    /// `sup_t ||v_eta(t) - v(t)||_{H^1 dot}`
    pub difference: f64,
    /// `difference / (eta + forcing_proxy)`
    pub constant: f64,
}

/// Two forced runs from data differing by `eta` in `H^1 dot` along `direction`.
pub fn short_time_perturbation(
    v0: &Field,
    direction: &Field,
    eta: f64,
    forcing: &dyn FrameSource,
    cfg: &NlsRunConfig,
) -> Result<PerturbationReport> {
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(DlabError::InvalidParameter(format!("eta = {eta}")));
    }
    let dir = to_physical(direction)?;
    let norm = gradient_l2_sq(&dir)?.sqrt();
    if norm == 0.0 {
        return Err(DlabError::InvalidParameter("perturbation direction has zero H^1 norm".into()));
    }
    let mut w0 = to_physical(v0)?;
    w0.axpy(Complex64::new(eta / norm, 0.0), &dir)?;
    let a = splitstep_forced(v0, forcing, cfg)?;
    let b = splitstep_forced(&w0, forcing, cfg)?;
    let (a, b) = (a.completed()?, b.completed()?);
    let difference = a
        .frames()
        .iter()
        .zip(b.frames())
        .map(|(x, y)| x.sub(y).and_then(|d| gradient_l2_sq(&d)).map(f64::sqrt))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let frames = a.frames().len();
    let w = trapezoid(frames, a.dt());
    let mut l3 = 0.0;
    for (i, wi) in w.iter().enumerate() {
        let f = forcing.physical(i)?;
        let vol = f.grid().cell_volume();
        let l6 = (f.data().iter().map(|z| z.norm_sqr().powi(3)).sum::<f64>() * vol).powf(1.0 / 6.0);
        l3 += l6.powi(3) * wi;
    }
    let forcing_proxy = l3.cbrt();
    let den = eta + forcing_proxy;
    Ok(PerturbationReport { eta, forcing_proxy, difference, constant: if den > 0.0 { difference / den } else { 0.0 } })
}

/// Per-frame conserved and monotone quantities of a forced run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSeries {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub mass: Vec<f64>,
    pub total_mass: Vec<f64>,
    pub morawetz: Vec<f64>,
    /// The five schematic flux terms, pointwise in time (`L^1_x` of each).
    pub flux_terms: Vec<[f64; 5]>,
    /// `int |v|^4 / a` per frame.
    pub morawetz_bulk: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderCheck {
    pub name: String,
    pub term: f64,
    pub majorant: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrowthReport {
    pub series: DiagnosticsSeries,
    /// `sup_t |E(v(t)) - E(v0)|`
    pub energy_change: f64,
    /// Total variation of `E(v(t))` over the frames.
    pub energy_variation: f64,
    /// `|| |F+v|^4 - |F|^4 - |v|^4 ||_{L^inf L^1}`
    pub quartic_group: f64,
    /// `|| grad(|F+v|^2 (F+v) - |F|^2 F) . grad conj(F) ||_{L^1 L^1}`
    pub flux_group: f64,
    /// `energy_change / (quartic_group / 2 + flux_group)`; at most 1 up to
    /// quadrature error.
    pub group_constant: f64,
    /// `energy_variation / (quartic_group + flux_group)`, recorded only.
    pub variation_constant: f64,
    pub holder: Vec<HolderCheck>,
    /// The genuine expansion term `v^2 grad v grad F`, for reference.
    pub gradient_fifth_term: f64,
    pub mass_bound_lhs: f64,
    pub mass_bound_rhs: f64,
    pub mass_bound_holds: bool,
    pub sup_energy: f64,
    /// The exponential energy bound with constant 1 and measured norms.
    pub energy_bound: f64,
    pub energy_bound_holds: bool,
}

/// Space-time norms of `F` that the energy bound consumes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ForcingNorms {
    pub linf_l2: f64,
    pub linf_l4: f64,
    pub l3_l6: f64,
    pub l2_linf: f64,
    pub weighted_l2_linf: f64,
    pub grad_l2_l4: f64,
}

fn time_norm(values: &[f64], q: f64, w: &[f64]) -> f64 {
    if q.is_infinite() {
        values.iter().cloned().fold(0.0, f64::max)
    } else {
        values.iter().zip(w).map(|(v, w)| v.powf(q) * w).sum::<f64>().powf(1.0 / q)
    }
}

/// Energy-flux decomposition of a forced run, its Holder majorants, the mass
/// bound, and the exponential energy bound (constant 1).
pub fn energy_growth_audit(v: &Trajectory, forcing: &dyn FrameSource, weight: MorawetzWeight) -> Result<EnergyGrowthReport> {
    let n = v.frames().len();
    if forcing.len() < n || (n > 1 && (forcing.dt() - v.dt()).abs() > 1e-12 * v.dt()) || forcing.t0() != v.t0() {
        return Err(DlabError::InconsistentTrajectory("forcing frames do not match the run".into()));
    }
    let grid = *v.grid();
    grid.ensure_no_carrier("energy audit")?;
    let vol = grid.cell_volume();
    let w = trapezoid(n, v.dt());
    let pos = grid.map_positions(|x| *x);
    let a: Vec<f64> = pos.iter().map(|x| weight.value(x)).collect();
    let jp: Vec<f64> = pos.iter().map(|x| (1.0 + x.iter().map(|c| c * c).sum::<f64>()).sqrt()).collect();

    let mut series = DiagnosticsSeries::default();
    let mut quartic_group: f64 = 0.0;
    let mut flux_per_frame = Vec::with_capacity(n);
    let mut grad_fifth = Vec::with_capacity(n);
    // Per-frame spatial norms feeding the majorants.
    let (mut gv_l2, mut v_l4, mut f_l4, mut f_l2) = (vec![], vec![], vec![], vec![]);
    let (mut f_linf, mut f_l6, mut gf_l4, mut f_wlinf, mut f_alinf, mut vv_a_l2) = (vec![], vec![], vec![], vec![], vec![], vec![]);
    for (i, vi) in v.frames().iter().enumerate() {
        let fi = forcing.physical(i)?.into_owned();
        let mut ui = vi.clone();
        ui.axpy(Complex64::new(1.0, 0.0), &fi)?;
        series.times.push(v.time(i));
        series.energy.push(energy(vi)?);
        series.mass.push(mass(vi));
        series.total_mass.push(mass(&ui));
        series.morawetz.push(morawetz_action(vi, weight)?);
        let gv = gradient_fields(vi)?;
        let gf = gradient_fields(&fi)?;
        let diff = cubic(&ui).sub(&cubic(&fi))?;
        let gdiff = gradient_fields(&diff)?;
        let mut q = 0.0;
        let mut flux = 0.0;
        let mut terms = [0.0; 5];
        let mut fifth_grad = 0.0;
        let mut bulk = 0.0;
        let (mut s_gv, mut s_v4, mut s_f4, mut s_f2) = (0.0, 0.0, 0.0, 0.0);
        let (mut s_f6, mut s_gf4, mut s_vva) = (0.0, 0.0, 0.0);
        let (mut m_f, mut m_fw, mut m_fa): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for j in 0..grid.len() {
            let (vj, fj, uj) = (vi.data()[j], fi.data()[j], ui.data()[j]);
            let (av, af) = (vj.norm(), fj.norm());
            q += uj.norm_sqr().powi(2) - af.powi(4) - av.powi(4);
            let mut dot = Complex64::default();
            let (mut gv2, mut gf2) = (0.0, 0.0);
            for k in 0..grid.dim() {
                dot += gdiff[k].data()[j] * gf[k].data()[j].conj();
                gv2 += gv[k].data()[j].norm_sqr();
                gf2 += gf[k].data()[j].norm_sqr();
            }
            flux += dot.norm();
            let (agv, agf) = (gv2.sqrt(), gf2.sqrt());
            terms[0] += agv * af * af * agf;
            terms[1] += av * af * agf * agf;
            terms[2] += agv * av * af * agf;
            terms[3] += av * av * agf * agf;
            terms[4] += av * av * agv * af;
            fifth_grad += av * av * agv * agf;
            bulk += av.powi(4) / a[j];
            s_gv += gv2;
            s_v4 += av.powi(4);
            s_f4 += af.powi(4);
            s_f2 += af * af;
            s_f6 += af.powi(6);
            s_gf4 += gf2 * gf2;
            s_vva += av.powi(4) / a[j];
            m_f = m_f.max(af);
            m_fw = m_fw.max(jp[j].sqrt() * af);
            m_fa = m_fa.max(a[j].sqrt() * af);
        }
        quartic_group = quartic_group.max((q * vol).abs());
        flux_per_frame.push(flux * vol);
        grad_fifth.push(fifth_grad * vol);
        series.flux_terms.push(terms.map(|t| t * vol));
        series.morawetz_bulk.push(bulk * vol);
        gv_l2.push((s_gv * vol).sqrt());
        v_l4.push((s_v4 * vol).powf(0.25));
        f_l4.push((s_f4 * vol).powf(0.25));
        f_l2.push((s_f2 * vol).sqrt());
        f_l6.push((s_f6 * vol).powf(1.0 / 6.0));
        gf_l4.push((s_gf4 * vol).powf(0.25));
        vv_a_l2.push((s_vva * vol).sqrt());
        f_linf.push(m_f);
        f_wlinf.push(m_fw);
        f_alinf.push(m_fa);
    }
    let l1 = |xs: &[f64]| xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>();
    let flux_group = l1(&flux_per_frame);
    let e0 = series.energy[0];
    let energy_change = series.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max);
    let energy_variation: f64 = if n >= 2 {
        series.energy.windows(2).map(|p| (p[1] - p[0]).abs()).sum()
    } else {
        0.0
    };
    let group_den = 0.5 * quartic_group + flux_group;
    let group_constant = if group_den > 0.0 { energy_change / group_den } else { 0.0 };
    let var_den = quartic_group + flux_group;
    let variation_constant = if var_den > 0.0 { energy_variation / var_den } else { 0.0 };

    let sup = |xs: &[f64]| xs.iter().cloned().fold(0.0, f64::max);
    let tn = |xs: &[f64], q: f64| time_norm(xs, q, &w);
    let term_totals: Vec<f64> = (0..5).map(|k| l1(&series.flux_terms.iter().map(|t| t[k]).collect::<Vec<_>>())).collect();
    let majorants = [
        sup(&gv_l2) * sup(&f_l4) * tn(&f_linf, 2.0) * tn(&gf_l4, 2.0),
        sup(&v_l4) * sup(&f_l4) * tn(&gf_l4, 2.0).powi(2),
        sup(&gv_l2) * sup(&v_l4) * tn(&f_linf, 2.0) * tn(&gf_l4, 2.0),
        sup(&v_l4).powi(2) * tn(&gf_l4, 2.0).powi(2),
        tn(&vv_a_l2, 2.0) * sup(&gv_l2) * tn(&f_alinf, 2.0),
    ];
    let names = [
        "grad_v F F grad_F",
        "v F grad_F grad_F",
        "grad_v v F grad_F",
        "v v grad_F grad_F",
        "v v grad_v F",
    ];
    let holder = names
        .iter()
        .zip(term_totals.iter().zip(&majorants))
        .map(|(name, (&term, &majorant))| HolderCheck {
            name: name.to_string(),
            term,
            majorant,
            holds: term <= majorant * (1.0 + 1e-12) + 1e-300,
        })
        .collect();

    let v0 = &v.frames()[0];
    let f0 = forcing.physical(0)?;
    let mut u0 = v0.clone();
    u0.axpy(Complex64::new(1.0, 0.0), f0.as_ref())?;
    let norms = ForcingNorms {
        linf_l2: sup(&f_l2),
        linf_l4: sup(&f_l4),
        l3_l6: tn(&f_l6, 3.0),
        l2_linf: tn(&f_linf, 2.0),
        weighted_l2_linf: tn(&f_wlinf, 2.0),
        grad_l2_l4: tn(&gf_l4, 2.0),
    };
    let mass_bound_lhs = series.mass.iter().cloned().fold(0.0, f64::max).sqrt();
    let mass_bound_rhs = u0.l2_norm() + norms.linf_l2;
    let sup_energy = sup(&series.energy);
    let energy_bound = energy_growth_bound(e0, mass(v0), &norms);
    Ok(EnergyGrowthReport {
        energy_change,
        energy_variation,
        quartic_group,
        flux_group,
        group_constant,
        variation_constant,
        holder,
        gradient_fifth_term: l1(&grad_fifth),
        mass_bound_lhs,
        mass_bound_rhs,
        mass_bound_holds: mass_bound_lhs <= mass_bound_rhs * (1.0 + 1e-10),
        sup_energy,
        energy_bound,
        energy_bound_holds: sup_energy <= energy_bound,
        series,
    })
}

/// `exp(||F||_{L^3L^6}^3 + ||<x>^{1/2}F||_{L^2L^inf}^2 + ||grad F||_{L^2L^4}^2)
///  (E(v0) + 1 + ||v0||_2^2 + ||F||_{L^inf L^2}^2 + ||F||_{L^inf L^4}^4)`.
pub fn energy_growth_bound(energy0: f64, mass0: f64, f: &ForcingNorms) -> f64 {
    let growth = f.l3_l6.powi(3) + f.weighted_l2_linf.powi(2) + f.grad_l2_l4.powi(2);
    growth.exp() * (energy0 + 1.0 + mass0 + f.linf_l2.powi(2) + f.linf_l4.powi(4))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardConfig {
    /// Right end of `[0, tau]`; must be a frame time of the forcing.
    pub tau: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub nonlinearity: Nonlinearity,
    pub eps: EpsilonPolicy,
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(DlabError::InvalidParameter(format!("tau = {}", self.tau)));
        }
        if !(self.tolerance > 0.0) {
            return Err(DlabError::InvalidParameter(format!("tolerance = {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(DlabError::InvalidParameter("max_iterations must be positive".into()));
        }
        self.eps.validate()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContractionRecord {
    /// `d_n = ||v^{n+1} - v^n||_X` on the discrete window.
    pub distances: Vec<f64>,
    /// `d_n / d_{n-1}`
    pub ratios: Vec<f64>,
    /// `||v^{n+1} - v^n||_{L^inf L^2}`, for reference.
    pub linf_l2_distances: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `||v - Phi(v)||_X` after one extra iteration at the returned iterate.
    pub residual: f64,
    pub note: String,
}

/// Consecutive expanding steps that count as divergence.
pub const DIVERGENCE_RUN: usize = 3;

fn distance(a: &Trajectory, b: &Trajectory, eps: &EpsilonPolicy) -> Result<(f64, f64)> {
    let frames: Vec<Field> = a.frames().iter().zip(b.frames()).map(|(x, y)| x.sub(y)).collect::<Result<_>>()?;
    let linf = frames.iter().map(|f| f.l2_norm()).fold(0.0, f64::max);
    let diff = Trajectory::new(a.t0(), a.dt(), frames)?;
    let x = x_norm(&diff, eps, None, FrameWindow::all(&diff))?.value;
    Ok((x, linf))
}

/// The Duhamel map `Phi(v)(t) = e^{itDelta} v0 - i mu int_0^t e^{i(t-s)Delta} |F+v|^2(F+v)(s) ds`.
fn picard_map(linear: &Trajectory, v: &Trajectory, forcing: &dyn FrameSource, mu: f64) -> Result<Trajectory> {
    let mut nl = Vec::with_capacity(v.frames().len());
    for (i, vi) in v.frames().iter().enumerate() {
        let mut u = vi.clone();
        u.axpy(Complex64::new(1.0, 0.0), forcing.physical(i)?.as_ref())?;
        nl.push(cubic(&u));
    }
    let d = duhamel_all(&Trajectory::new(v.t0(), v.dt(), nl)?)?;
    let mut out = Vec::with_capacity(d.frames().len());
    for (l, di) in linear.frames().iter().zip(d.frames()) {
        let mut f = l.clone();
        f.axpy(Complex64::new(0.0, -mu), di)?;
        out.push(f);
    }
    Trajectory::new(v.t0(), v.dt(), out)
}

/// Picard iteration for the forced equation on `[0, tau]`, sampled on the
/// forcing's frames.
pub fn picard_iterate(v0: &Field, forcing: &dyn FrameSource, cfg: &PicardConfig) -> Result<(Trajectory, ContractionRecord)> {
    cfg.validate()?;
    v0.grid().ensure_same(forcing.grid())?;
    if forcing.t0() != 0.0 {
        return Err(DlabError::InconsistentTrajectory("forcing must start at t = 0".into()));
    }
    let intervals = (cfg.tau / forcing.dt()).round();
    if (intervals * forcing.dt() - cfg.tau).abs() > 1e-9 * cfg.tau || intervals < 1.0 {
        return Err(DlabError::InvalidParameter(format!("tau = {} is not on a frame boundary", cfg.tau)));
    }
    let frames = intervals as usize + 1;
    if forcing.len() < frames {
        return Err(DlabError::InconsistentTrajectory(format!("forcing has {} frames, need {frames}", forcing.len())));
    }
    let mu = cfg.nonlinearity.sign();
    let v0p = to_physical(v0)?;
    let linear = FreeFlow::new(&v0p, FlowSpec { t0: 0.0, dt: forcing.dt(), frames, ..FlowSpec::schrodinger(0.0, 1) })?
        .trajectory()?;
    let mut record = ContractionRecord {
        note: "distances use the discrete X norm on the resolved dyadic bands".into(),
        ..Default::default()
    };
    let mut current = linear.clone();
    let mut expanding = 0;
    for it in 1..=cfg.max_iterations {
        let next = picard_map(&linear, &current, forcing, mu)?;
        let (d, linf) = distance(&next, &current, &cfg.eps)?;
        if let Some(&prev) = record.distances.last() {
            let rho = if prev > 0.0 { d / prev } else if d > 0.0 { f64::INFINITY } else { 0.0 };
            record.ratios.push(rho);
            if !(rho <= 1.0) {
                expanding += 1;
            } else {
                expanding = 0;
            }
        }
        record.distances.push(d);
        record.linf_l2_distances.push(linf);
        record.iterations = it;
        current = next;
        if expanding >= DIVERGENCE_RUN || !d.is_finite() {
            return Err(DlabError::NoContraction(format!(
                "distances {:?} grew for {DIVERGENCE_RUN} consecutive steps",
                record.distances
            )));
        }
        if d < cfg.tolerance {
            record.converged = true;
            break;
        }
    }
    let check = picard_map(&linear, &current, forcing, mu)?;
    record.residual = distance(&check, &current, &cfg.eps)?.0;
    Ok((current, record))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyLadder {
    pub times: Vec<f64>,
    /// `||e^{-i t_{k+1} Delta} v(t_{k+1}) - e^{-i t_k Delta} v(t_k)||_{H^1 dot}`
    pub deltas: Vec<f64>,
    pub decreasing: bool,
    /// Last delta over `||v(T)||_{H^1 dot}`.
    pub relative_final: f64,
}

/// Scattering-state estimate `e^{-iT Delta} v(T)` and the Cauchy diagnostic
/// over `ladder` (frame times of the run).
pub fn scattering_state(run: &NlsRun, ladder: &[f64]) -> Result<(Field, CauchyLadder)> {
    let tr = run.completed()?;
    if ladder.len() < 2 {
        return Err(DlabError::InvalidParameter("ladder needs at least two times".into()));
    }
    let mut profiles = Vec::with_capacity(ladder.len());
    for &t in ladder {
        let i = ((t - tr.t0()) / tr.dt()).round();
        if i < 0.0 || i as usize >= tr.frames().len() || (tr.time(i as usize) - t).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(DlabError::InvalidParameter(format!("ladder time {t} is not a frame of the run")));
        }
        profiles.push(schrodinger_flow(&tr.frames()[i as usize], -t)?);
    }
    let deltas: Vec<f64> = profiles
        .windows(2)
        .map(|p| p[1].sub(&p[0]).and_then(|d| gradient_l2_sq(&d)).map(f64::sqrt))
        .collect::<Result<_>>()?;
    let last = tr.frames().last().expect("non-empty");
    let h1 = gradient_l2_sq(last)?.sqrt();
    let final_delta = *deltas.last().expect("two or more times");
    let state = schrodinger_flow(last, -tr.time(tr.frames().len() - 1))?;
    Ok((
        state,
        CauchyLadder {
            times: ladder.to_vec(),
            decreasing: deltas.windows(2).all(|w| w[1] < w[0]),
            relative_final: if h1 > 0.0 { final_delta / h1 } else { 0.0 },
            deltas,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheckReport {
    pub lambda: f64,
    pub h1_original: f64,
    pub h1_rescaled: f64,
    /// Original norm summed over the pulled-back lattice `xi / lambda`
    /// against the rescaled norm; a change of variables, so exact up to rounding.
    pub h1_relative_difference: f64,
    /// Both norms sampled on the same lattice; differs by quadrature.
    pub h1_grid_difference: f64,
    /// Final time of the rescaled run; the original runs to `lambda^2` times it.
    pub t_compared: f64,
    /// Relative `L^2` discrepancy on the nodes where both are sampled.
    pub discrepancy: f64,
}

fn analytic_field(grid: SpectralGrid, profile: &RadialProfileSpec, lambda: f64, amplitude: f64) -> Field {
    let d = grid.dim();
    let c = amplitude * lambda.powi(1 - d as i32);
    Field::from_frequency_fn(grid, |xi| {
        let r = xi[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
        Complex64::new(c * profile.spectrum(r / lambda, d), 0.0)
    })
}

/// `H^1 dot` norm from a spectrum, as a lattice sum.
fn h1_from_spectrum(hat: &Field) -> f64 {
    let g = hat.grid();
    let r2 = g.frequency_norm_sq();
    let s: f64 = hat.data().iter().zip(&r2).map(|(z, q)| z.norm_sqr() * q).sum();
    (s * g.length().powi(-(g.dim() as i32))).sqrt()
}

/// Evolves `amplitude * profile` to `lambda^2 t_end` and its rescaling
/// `lambda u0(lambda x)` to `t_end` with step `dt / lambda^2`, and compares
/// on shared nodes.
pub fn scaling_check(
    grid: SpectralGrid,
    profile: &RadialProfileSpec,
    amplitude: f64,
    lambda: u32,
    cfg: &NlsRunConfig,
) -> Result<ScalingCheckReport> {
    profile.validate()?;
    if grid.dim() != 4 {
        return Err(DlabError::InvalidParameter("the cubic scaling is energy critical only in four dimensions".into()));
    }
    if lambda == 0 || !lambda.is_power_of_two() {
        return Err(DlabError::InvalidParameter(format!("lambda = {lambda} must be a power of two")));
    }
    let lam = lambda as f64;
    let original = analytic_field(grid, profile, 1.0, amplitude);
    let rescaled = analytic_field(grid, profile, lam, amplitude);
    let (h1_original, h1_rescaled) = (h1_from_spectrum(&original), h1_from_spectrum(&rescaled));
    let d = grid.dim();
    let pulled: f64 = grid
        .map_frequencies(|xi| {
            let r = xi[..d].iter().map(|v| v * v).sum::<f64>().sqrt() / lam;
            (r * amplitude * profile.spectrum(r, d)).powi(2)
        })
        .iter()
        .sum::<f64>()
        * (grid.dxi() / lam / (2.0 * std::f64::consts::PI)).powi(d as i32);
    let h1_pulled = pulled.sqrt();
    let long = NlsRunConfig { t_end: cfg.t_end * lam * lam, ..*cfg };
    let short = NlsRunConfig { dt: cfg.dt / (lam * lam), ..*cfg };
    let a = splitstep_nls(&original.into_physical()?, &long)?;
    let b = splitstep_nls(&rescaled.into_physical()?, &short)?;
    let ua = a.completed()?.frames().last().expect("frames").clone();
    let ub = b.completed()?.frames().last().expect("frames").clone();
    let m = grid.points();
    let half = (m / 2) as i64;
    let l = lambda as i64;
    let (mut num, mut den) = (0.0, 0.0);
    'nodes: for i in 0..grid.len() {
        let mut rest = i;
        let mut src = 0usize;
        let mut place = 1usize;
        let mut digits = [0usize; MAX_DIM];
        for axis in (0..d).rev() {
            digits[axis] = rest % m;
            rest /= m;
        }
        for axis in (0..d).rev() {
            let j = l * (digits[axis] as i64 - half) + half;
            if j < 0 || j >= m as i64 {
                continue 'nodes;
            }
            src += j as usize * place;
            place *= m;
        }
        let want = ua.data()[src] * lam;
        num += (ub.data()[i] - want).norm_sqr();
        den += ub.data()[i].norm_sqr();
    }
    Ok(ScalingCheckReport {
        lambda: lam,
        h1_original,
        h1_rescaled,
        h1_relative_difference: (h1_rescaled - h1_pulled).abs() / h1_pulled.max(f64::MIN_POSITIVE),
        h1_grid_difference: (h1_rescaled - h1_original).abs() / h1_original.max(f64::MIN_POSITIVE),
        t_compared: cfg.t_end,
        discrepancy: if den > 0.0 { (num / den).sqrt() } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(grid: SpectralGrid, amp: f64, width: f64) -> Field {
        Field::from_physical_fn(grid, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new(amp * (-r2 / (2.0 * width * width)).exp(), 0.0)
        })
    }

    #[test]
    fn zero_datum_stays_zero() {
        let g = SpectralGrid::cube(8, 8.0).unwrap();
        let cfg = NlsRunConfig { t_end: 0.1, dt: 0.01, stride: 5, ..Default::default() };
        let run = splitstep_nls(&Field::zeros(g, Domain::Physical), &cfg).unwrap();
        assert!(run.blowup.is_none());
        assert_eq!(run.trajectory.frames().len(), 3);
        assert!(run.trajectory.frames().iter().all(|f| f.max_modulus() == 0.0));
    }

    #[test]
    fn mass_is_conserved_without_dealiasing() {
        let g = SpectralGrid::new(2, 32, 16.0).unwrap();
        let u0 = bump(g, 1.5, 1.0);
        let cfg = NlsRunConfig { t_end: 0.5, dt: 0.005, stride: 20, dealias: false, ..Default::default() };
        let run = splitstep_nls(&u0, &cfg).unwrap();
        let m0 = mass(&u0);
        for f in run.trajectory.frames() {
            assert!((mass(f) - m0).abs() < 1e-10 * m0);
        }
    }

    #[test]
    fn energy_of_constant_density_fields() {
        let g = SpectralGrid::new(4, 8, 2.0 * std::f64::consts::PI).unwrap();
        let amp = 0.7;
        let pw = Field::from_physical_fn(g, |x| Complex64::from_polar(amp, x[0] + 2.0 * x[2]));
        let vol = g.length().powi(4);
        let want = (0.5 * 5.0 * amp * amp + 0.25 * amp.powi(4)) * vol;
        assert!((energy(&pw).unwrap() - want).abs() < 1e-10 * want);
        assert_eq!(energy(&Field::zeros(g, Domain::Physical)).unwrap(), 0.0);
    }

    #[test]
    fn forced_run_with_zero_forcing_equals_plain_run() {
        let g = SpectralGrid::new(2, 16, 10.0).unwrap();
        let v0 = bump(g, 1.0, 1.2);
        let cfg = NlsRunConfig { t_end: 0.2, dt: 0.01, stride: 5, ..Default::default() };
        let zero = Trajectory::new(0.0, cfg.frame_dt(), vec![Field::zeros(g, Domain::Physical); 5]).unwrap();
        let forced = splitstep_forced(&v0, &zero, &cfg).unwrap();
        let plain = splitstep_nls(&v0, &cfg).unwrap();
        assert_eq!(forced.trajectory.frames(), plain.trajectory.frames());
    }

    #[test]
    fn misaligned_forcing_is_rejected() {
        let g = SpectralGrid::new(2, 16, 10.0).unwrap();
        let cfg = NlsRunConfig { t_end: 0.2, dt: 0.01, stride: 5, ..Default::default() };
        let wrong = Trajectory::new(0.0, 0.03, vec![Field::zeros(g, Domain::Physical); 5]).unwrap();
        assert!(splitstep_forced(&Field::zeros(g, Domain::Physical), &wrong, &cfg).is_err());
    }

    #[test]
    fn focusing_overflow_signals_blowup() {
        let g = SpectralGrid::new(2, 16, 8.0).unwrap();
        let mut u0 = bump(g, 1.0, 1.0);
        u0.data_mut()[0] = Complex64::new(f64::NAN, 0.0);
        let cfg = NlsRunConfig { nonlinearity: Nonlinearity::Focusing, t_end: 0.1, dt: 0.01, stride: 1, ..Default::default() };
        assert!(splitstep_nls(&u0, &cfg).is_err());
        let huge = bump(g, 1e200, 1.0);
        let run = splitstep_nls(&huge, &cfg).unwrap();
        assert!(run.blowup.is_some());
        assert!(matches!(run.completed(), Err(DlabError::BlowupDetected { .. })));
    }

    #[test]
    fn bilaplacian_matches_finite_differences_and_limit() {
        let w = MorawetzWeight { sigma: 0.3 };
        // Radial Laplacian of Delta a by centered differences in r.
        let lap = |r: f64| w.laplacian(r * r, 4);
        for &r in &[0.2, 0.7, 2.0] {
            let h = 1e-4;
            let d2 = (lap(r + h) - 2.0 * lap(r) + lap(r - h)) / (h * h);
            let d1 = (lap(r + h) - lap(r - h)) / (2.0 * h);
            let fd = d2 + 3.0 / r * d1;
            assert!((w.bilaplacian(r * r, 4) - fd).abs() < 1e-5 * fd.abs().max(1.0), "r = {r}");
        }
        let sharp = MorawetzWeight { sigma: 0.0 };
        assert!((sharp.bilaplacian(4.0, 4) + 3.0 / 8.0).abs() < 1e-15);
        assert!((sharp.laplacian(4.0, 4) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn real_field_has_zero_morawetz_action() {
        let g = SpectralGrid::new(2, 32, 12.0).unwrap();
        let v = bump(g, 1.0, 1.0);
        let a = morawetz_action(&v, MorawetzWeight::for_grid(&g)).unwrap();
        assert!(a.abs() < 1e-10, "{a}");
    }

    #[test]
    fn outgoing_packet_has_positive_action() {
        let g = SpectralGrid::new(4, 16, 12.0).unwrap();
        let v = Field::from_physical_fn(g, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let shifted = (x[0] - 2.0).powi(2) + r2 - x[0] * x[0];
            Complex64::from_polar((-shifted).exp(), 1.5 * x[0])
        });
        assert!(morawetz_action(&v, MorawetzWeight::for_grid(&g)).unwrap() > 0.0);
        let w = Field::from_physical_fn(g, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let shifted = (x[0] - 2.0).powi(2) + r2 - x[0] * x[0];
            Complex64::from_polar((-shifted).exp(), -1.5 * x[0])
        });
        assert!(morawetz_action(&w, MorawetzWeight::for_grid(&g)).unwrap() < 0.0);
    }

    #[test]
    fn dealias_mask_keeps_two_thirds() {
        // m = 32 keeps |n| <= 10 on each axis.
        let g = SpectralGrid::new(2, 32, 1.0).unwrap();
        let kept = dealias_mask(&g).iter().filter(|&&k| k).count();
        assert_eq!(kept, 21 * 21);
    }

    #[test]
    fn picard_zero_data_converges_immediately() {
        let g = SpectralGrid::cube(16, 2.0 * std::f64::consts::PI).unwrap();
        let zero = Trajectory::new(0.0, 0.05, vec![Field::zeros(g, Domain::Physical); 5]).unwrap();
        let cfg = PicardConfig {
            tau: 0.2,
            max_iterations: 5,
            tolerance: 1e-12,
            nonlinearity: Nonlinearity::Defocusing,
            eps: EpsilonPolicy::new(0.05).unwrap(),
        };
        let (tr, rec) = picard_iterate(&Field::zeros(g, Domain::Physical), &zero, &cfg).unwrap();
        assert_eq!(rec.iterations, 1);
        assert!(rec.converged);
        assert!(tr.frames().iter().all(|f| f.max_modulus() == 0.0));
        let off = PicardConfig { tau: 0.13, ..cfg };
        assert!(picard_iterate(&Field::zeros(g, Domain::Physical), &zero, &off).is_err());
    }

    #[test]
    fn zero_run_audits_vanish() {
        let g = SpectralGrid::cube(8, 8.0).unwrap();
        let zeros = Trajectory::new(0.0, 0.1, vec![Field::zeros(g, Domain::Physical); 6]).unwrap();
        let a = morawetz_audit(&zeros, Some(&zeros), Nonlinearity::Defocusing, MorawetzWeight::for_grid(&g), 0.01).unwrap();
        assert_eq!(a.bulk, 0.0);
        assert!(a.action.iter().all(|&m| m == 0.0));
        assert!(a.inequality_holds);
        let r = energy_growth_audit(&zeros, &zeros, MorawetzWeight::for_grid(&g)).unwrap();
        assert_eq!(r.energy_change, 0.0);
        assert_eq!(r.flux_group, 0.0);
        assert!(r.series.flux_terms.iter().all(|t| t.iter().all(|&x| x == 0.0)));
        assert!(r.holder.iter().all(|h| h.holds));
    }

    #[test]
    fn scattering_of_zero_is_zero_and_blowup_is_refused() {
        let g = SpectralGrid::cube(8, 8.0).unwrap();
        let cfg = NlsRunConfig { t_end: 0.4, dt: 0.1, stride: 1, ..Default::default() };
        let run = splitstep_nls(&Field::zeros(g, Domain::Physical), &cfg).unwrap();
        let (state, ladder) = scattering_state(&run, &[0.1, 0.2, 0.4]).unwrap();
        assert_eq!(state.max_modulus(), 0.0);
        assert!(ladder.deltas.iter().all(|&d| d == 0.0));
        assert!(scattering_state(&run, &[0.1, 0.25]).is_err());
        let blown = NlsRun { blowup: Some(Blowup { time: 0.3, reason: "test".into() }), ..run };
        assert!(matches!(scattering_state(&blown, &[0.1, 0.2]), Err(DlabError::BlowupDetected { .. })));
    }

    #[test]
    fn unit_scaling_is_the_identity() {
        let g = SpectralGrid::cube(8, 12.0).unwrap();
        let cfg = NlsRunConfig { t_end: 0.1, dt: 0.05, stride: 1, dealias: false, ..Default::default() };
        let r = scaling_check(g, &RadialProfileSpec::GaussianBump { width: 2.0 }, 0.5, 1, &cfg).unwrap();
        assert_eq!(r.discrepancy, 0.0);
        assert_eq!(r.h1_grid_difference, 0.0);
        assert!(scaling_check(g, &RadialProfileSpec::GaussianBump { width: 2.0 }, 0.5, 3, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = NlsRunConfig { t_end: 1.0, dt: 0.1, stride: 5, ..Default::default() };
        assert_eq!(ok.steps().unwrap(), 10);
        assert!(NlsRunConfig { dt: 0.0, ..ok }.steps().is_err());
        assert!(NlsRunConfig { dt: 0.3, ..ok }.steps().is_err());
        assert!(NlsRunConfig { stride: 3, ..ok }.steps().is_err());
        let g = SpectralGrid::cube(32, 4.0).unwrap();
        assert!(ok.phase_warning(&g).is_some());
        assert!(NlsRunConfig { dt: 1e-4, ..ok }.phase_warning(&g).is_none());
    }
}
