//! Ensembles over randomization draws: empirical `L^p_omega` moments, tail
//! exceedances and the norm statistics behind the almost-sure bounds.
//!
//! Draw `i` depends only on `(seed, i)`, and values are collected in draw
//! order, so results are bit-identical for any thread count.

use crate::error::{DlabError, Result};
use crate::fit::{linear_fit, loglog_fit, LineFit};
use crate::grid::{Field, SpectralGrid, Weight};
use crate::norms::{strichartz_norm, weighted_norm, y_norm, EpsilonPolicy, FrameWindow};
use crate::propagate::{FlowKind, FlowSpec, FreeFlow};
use crate::randomize::{make_radial_data, randomize_schrodinger, RadialProfileSpec, RandomizationSpec};
use crate::rng::{CoefficientStream, Law};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Exceedances required in a tail bin before it enters the fit.
pub const MIN_EXCEEDANCES: usize = 30;

/// Draws per unit of the largest moment exponent.
pub const DRAWS_PER_MOMENT: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub name: String,
    pub seed: u64,
    pub draws: usize,
    pub values: Vec<f64>,
    /// `(p, ||X||_{L^p_omega})`
    pub moments: Vec<(f64, f64)>,
    /// `log ||X||_p` against `log p`.
    pub moment_fit: Option<LineFit>,
    pub lambdas: Vec<f64>,
    pub exceedances: Vec<usize>,
    /// `log P(X > lambda)` against `lambda^2`, over the populated bins.
    pub tail_fit: Option<LineFit>,
    pub tail_range: Option<(f64, f64)>,
    pub exploratory: bool,
    pub notes: Vec<String>,
}

impl EnsembleStats {
    pub fn new(name: &str, seed: u64, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(DlabError::NonFinite(format!("{name}: draw {i} gave {}", values[i])));
        }
        Ok(Self {
            name: name.to_string(),
            seed,
            draws: values.len(),
            values,
            moments: Vec::new(),
            moment_fit: None,
            lambdas: Vec::new(),
            exceedances: Vec::new(),
            tail_fit: None,
            tail_range: None,
            exploratory: false,
            notes: Vec::new(),
        })
    }

    pub fn median(&self) -> f64 {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        match v.len() {
            0 => 0.0,
            n if n % 2 == 1 => v[n / 2],
            n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
        }
    }

    /// Monotonicity of exceedances in `lambda` and of moments in `p`.
    pub fn invariants_hold(&self) -> bool {
        let tails = self.exceedances.windows(2).all(|w| w[1] <= w[0]);
        let moments = self.moments.windows(2).all(|w| w[1].1 >= w[0].1 * (1.0 - 1e-12));
        tails && moments
    }

    /// One row per draw.
    pub fn csv(&self) -> String {
        draws_csv(&self.values)
    }
}

fn draws_csv(values: &[f64]) -> String {
    let mut out = String::from("draw,value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{i},{v:e}");
    }
    out
}

/// Evaluate `stat` on draws `0..q` in parallel, in draw order.
pub fn run_draws<F>(q: usize, stat: F) -> Result<Vec<f64>>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    (0..q as u64).into_par_iter().map(&stat).collect()
}

/// Like [`run_draws`], reusing the rows already in `csv` and appending the rest.
pub fn extend_draws<F>(csv: &Path, q: usize, stat: F) -> Result<Vec<f64>>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    let mut values = Vec::new();
    if csv.exists() {
        let text = std::fs::read_to_string(csv)?;
        for (line_no, line) in text.lines().enumerate().skip(1) {
            let mut parts = line.split(',');
            let (Some(i), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(DlabError::InvalidParameter(format!("{}:{}: malformed row", csv.display(), line_no + 1)));
            };
            let bad = |_| DlabError::InvalidParameter(format!("{}:{}: malformed row", csv.display(), line_no + 1));
            let i: usize = i.parse().map_err(|_| bad(()))?;
            if i != values.len() {
                return Err(DlabError::InvalidParameter(format!("{}: draws out of order at {i}", csv.display())));
            }
            values.push(v.parse::<f64>().map_err(|_| bad(()))?);
        }
    }
    values.truncate(q);
    let start = values.len() as u64;
    let rest: Vec<f64> = (start..q as u64).into_par_iter().map(&stat).collect::<Result<_>>()?;
    values.extend(rest);
    std::fs::write(csv, draws_csv(&values))?;
    Ok(values)
}

/// Empirical `L^p_omega` norms and their log-log slope in `p`.
pub fn moment_growth(stats: &mut EnsembleStats, p_list: &[f64]) -> Result<()> {
    let p_max = p_list.iter().cloned().fold(0.0, f64::max);
    if p_list.is_empty() || p_list.iter().any(|&p| !(p >= 1.0)) {
        return Err(DlabError::InvalidParameter(format!("moment exponents must be >= 1: {p_list:?}")));
    }
    let needed = (DRAWS_PER_MOMENT as f64 * p_max).ceil() as usize;
    if stats.draws < needed {
        return Err(DlabError::InsufficientSamples(format!(
            "p = {p_max} needs at least {needed} draws, have {}",
            stats.draws
        )));
    }
    let q = stats.draws as f64;
    let scale = stats.values.iter().cloned().fold(0.0, f64::max);
    stats.moments = p_list
        .iter()
        .map(|&p| {
            // Normalize by the max so large p does not overflow.
            let m = if scale == 0.0 {
                0.0
            } else {
                scale * (stats.values.iter().map(|v| (v / scale).powf(p)).sum::<f64>() / q).powf(1.0 / p)
            };
            (p, m)
        })
        .collect();
    stats.moment_fit = if scale == 0.0 {
        stats.notes.push("statistic vanishes on every draw".into());
        None
    } else {
        let (ps, ms): (Vec<f64>, Vec<f64>) = stats.moments.iter().cloned().unzip();
        Some(loglog_fit(&ps, &ms)?)
    };
    Ok(())
}

/// `bins` thresholds from the median up to the largest value still exceeded
/// [`MIN_EXCEEDANCES`] times.
pub fn default_lambda_grid(values: &[f64], bins: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.len() <= MIN_EXCEEDANCES || bins < 2 {
        return Vec::new();
    }
    let lo = v[v.len() / 2];
    let hi = v[v.len() - MIN_EXCEEDANCES - 1];
    if !(hi > lo) {
        return Vec::new();
    }
    (0..bins).map(|i| lo + (hi - lo) * i as f64 / (bins - 1) as f64).collect()
}

/// Exceedance counts on `lambdas` and the fit of `log P(X > lambda)` against
/// `lambda^2` over the bins with at least [`MIN_EXCEEDANCES`] exceedances.
pub fn tail_fit(stats: &mut EnsembleStats, lambdas: &[f64]) -> Result<()> {
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DlabError::InvalidParameter("lambda grid must increase".into()));
    }
    stats.lambdas = lambdas.to_vec();
    stats.exceedances = lambdas.iter().map(|&l| stats.values.iter().filter(|&&v| v > l).count()).collect();
    let q = stats.draws as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = lambdas
        .iter()
        .zip(&stats.exceedances)
        .filter(|(_, &c)| c >= MIN_EXCEEDANCES)
        .map(|(&l, &c)| (l * l, (c as f64 / q).ln()))
        .unzip();
    if xs.len() < 2 {
        return Err(DlabError::FitRange(format!(
            "{}: only {} bins carry {MIN_EXCEEDANCES} exceedances",
            stats.name,
            xs.len()
        )));
    }
    stats.tail_range = Some((xs[0].sqrt(), xs[xs.len() - 1].sqrt()));
    stats.tail_fit = Some(linear_fit(&xs, &ys)?);
    Ok(())
}

/// `|sum_k c_k g_k|` with unit complex Gaussians: exactly Rayleigh with scale `|c|_2`.
pub fn linear_gaussian_statistic(coefficients: &[f64], seed: u64) -> impl Fn(u64) -> Result<f64> + Sync + '_ {
    move |draw| {
        let mut stream = CoefficientStream::new(seed, draw, 3);
        let s = coefficients
            .iter()
            .enumerate()
            .map(|(i, &c)| c * stream.coefficient(Law::ComplexGaussian, &[i as i64, 0, 0, 0]))
            .sum::<num_complex::Complex64>();
        Ok(s.norm())
    }
}

/// Which norm of the randomized free evolution an ensemble records.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleNorm {
    Y,
    /// `||<x>^alpha grad e^{itDelta} f||_{L^2 L^inf}`
    WeightedGradL2Linf { alpha: f64 },
    /// `||<x>^alpha e^{itDelta} f||_{L^2 L^inf}`
    WeightedL2Linf { alpha: f64 },
    L3L6,
    LinfL4,
    LinfL2,
    /// `||<x>^alpha e^{it|grad|} f||_{L^2 L^inf}`
    WaveL2Linf { alpha: f64 },
    WaveL3L6,
}

impl EnsembleNorm {
    pub fn name(&self) -> String {
        match self {
            EnsembleNorm::Y => "Y".into(),
            EnsembleNorm::WeightedGradL2Linf { alpha } => format!("weighted_grad_L2Linf(alpha={alpha})"),
            EnsembleNorm::WeightedL2Linf { alpha } => format!("weighted_L2Linf(alpha={alpha})"),
            EnsembleNorm::L3L6 => "L3L6".into(),
            EnsembleNorm::LinfL4 => "LinfL4".into(),
            EnsembleNorm::LinfL2 => "LinfL2".into(),
            EnsembleNorm::WaveL2Linf { alpha } => format!("wave_L2Linf(alpha={alpha})"),
            EnsembleNorm::WaveL3L6 => "wave_L3L6".into(),
        }
    }

    fn flow(&self) -> FlowKind {
        match self {
            EnsembleNorm::WaveL2Linf { .. } | EnsembleNorm::WaveL3L6 => FlowKind::HalfWavePlus,
            _ => FlowKind::Schrodinger,
        }
    }

    /// Violations of the regularity regime in which the bound is stated.
    pub fn regime_violations(&self, s: f64, eps: f64) -> Vec<String> {
        let mut v = Vec::new();
        match *self {
            EnsembleNorm::Y => {
                if s <= 1.0 / 3.0 {
                    v.push(format!("Y needs s > 1/3, got {s}"));
                } else if eps >= (s - 1.0 / 3.0) / 3.0 {
                    v.push(format!("Y needs eps < (s - 1/3)/3 = {:.4}, got {eps}", (s - 1.0 / 3.0) / 3.0));
                }
            }
            EnsembleNorm::WeightedGradL2Linf { alpha } => {
                if s <= 0.5 {
                    v.push(format!("weighted gradient needs s > 1/2, got {s}"));
                }
                if alpha >= 1.0 {
                    v.push(format!("weighted gradient needs alpha < 1, got {alpha}"));
                }
            }
            EnsembleNorm::WeightedL2Linf { alpha } | EnsembleNorm::WaveL2Linf { alpha } => {
                if s <= 0.0 {
                    v.push(format!("weighted L2Linf needs s > 0, got {s}"));
                }
                if alpha >= 0.75 {
                    v.push(format!("weighted L2Linf needs alpha < 3/4, got {alpha}"));
                }
            }
            _ => {}
        }
        v
    }

    pub fn needs_radial(&self) -> bool {
        matches!(
            self,
            EnsembleNorm::WeightedGradL2Linf { .. } | EnsembleNorm::WeightedL2Linf { .. } | EnsembleNorm::WaveL2Linf { .. }
        )
    }

    pub fn evaluate(&self, src: &FreeFlow, eps: &EpsilonPolicy) -> Result<f64> {
        let w = FrameWindow::all(src);
        match *self {
            EnsembleNorm::Y => Ok(y_norm(src, eps, None, w)?.value),
            EnsembleNorm::WeightedGradL2Linf { alpha } => {
                weighted_norm(src, 2.0, f64::INFINITY, Weight::Japanese(alpha), true, w)
            }
            EnsembleNorm::WeightedL2Linf { alpha } | EnsembleNorm::WaveL2Linf { alpha } => {
                weighted_norm(src, 2.0, f64::INFINITY, Weight::Japanese(alpha), false, w)
            }
            EnsembleNorm::L3L6 | EnsembleNorm::WaveL3L6 => strichartz_norm(src, 3.0, 6.0, w),
            EnsembleNorm::LinfL4 => strichartz_norm(src, f64::INFINITY, 4.0, w),
            EnsembleNorm::LinfL2 => strichartz_norm(src, f64::INFINITY, 2.0, w),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub norm: EnsembleNorm,
    pub points: usize,
    pub length: f64,
    /// Regularity of the radial power-law data.
    pub s: f64,
    pub eps: f64,
    pub t_end: f64,
    pub frames: usize,
    pub draws: usize,
    pub seed: u64,
    pub cutoff: f64,
    pub p_list: Vec<f64>,
    pub tail_bins: usize,
    /// Allow runs outside the stated regime; the result is flagged.
    pub exploratory: bool,
}

/// The default `eps`, shrunk inside `(s - 1/3)/3` when `s` is close to 1/3.
pub fn default_eps(s: f64) -> f64 {
    let cap = (s - 1.0 / 3.0) / 3.0;
    if cap > 0.0 {
        crate::norms::DEFAULT_EPS.min((0.9 * cap * 100.0).floor() / 100.0).max(0.001)
    } else {
        crate::norms::DEFAULT_EPS
    }
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self::new(EnsembleNorm::Y, 0.4)
    }
}

impl EnsembleConfig {
    pub fn new(norm: EnsembleNorm, s: f64) -> Self {
        Self {
            norm,
            points: 16,
            length: 4.0 * std::f64::consts::PI,
            s,
            eps: default_eps(s),
            t_end: 4.0,
            frames: 33,
            draws: 200,
            seed: 2024,
            cutoff: 3.0,
            p_list: vec![2.0, 4.0, 8.0, 16.0],
            tail_bins: 8,
            exploratory: false,
        }
    }

    pub fn data(&self) -> Result<Field> {
        let grid = SpectralGrid::cube(self.points, self.length)?;
        make_radial_data(&grid, &RadialProfileSpec::power_law_for(self.s, crate::randomize::POWER_LAW_MARGIN, self.cutoff))
    }

    /// Per-draw statistic for data `f`.
    pub fn statistic<'a>(&'a self, f: &'a Field, eps: &'a EpsilonPolicy) -> impl Fn(u64) -> Result<f64> + Sync + 'a {
        let spec = RandomizationSpec::gaussian(self.seed);
        move |draw| {
            let fw = randomize_schrodinger(f, &spec, draw)?;
            let src = FreeFlow::new(
                &fw,
                FlowSpec { kind: self.norm.flow(), ..FlowSpec::schrodinger(self.t_end, self.frames) },
            )?;
            self.norm.evaluate(&src, eps)
        }
    }
}

/// Ensemble of one norm of `e^{itDelta} f^omega` (or the half-wave flow),
/// with moments and tail fit. `data` defaults to the config's radial profile.
pub fn as_norm_ensemble(cfg: &EnsembleConfig, data: Option<&Field>, csv: Option<&Path>) -> Result<EnsembleStats> {
    let violations = cfg.norm.regime_violations(cfg.s, cfg.eps);
    if !violations.is_empty() && !cfg.exploratory {
        return Err(DlabError::ConstraintViolation(violations.join("; ")));
    }
    let owned;
    let f = match data {
        Some(f) => f,
        None => {
            owned = cfg.data()?;
            &owned
        }
    };
    if cfg.norm.needs_radial() {
        let res = crate::estimates::radial_symmetry_residual(&f.to_physical()?);
        if res > 1e-6 && !cfg.exploratory {
            return Err(DlabError::ConstraintViolation(format!("{} needs radial data, residual {res:.3e}", cfg.norm.name())));
        }
    }
    let eps = if cfg.norm == EnsembleNorm::Y && !cfg.exploratory {
        EpsilonPolicy::for_regularity(cfg.eps, cfg.s)?
    } else {
        EpsilonPolicy::new(cfg.eps)?
    };
    let stat = cfg.statistic(f, &eps);
    let values = match csv {
        Some(path) => extend_draws(path, cfg.draws, stat)?,
        None => run_draws(cfg.draws, stat)?,
    };
    let mut stats = EnsembleStats::new(&cfg.norm.name(), cfg.seed, values)?;
    stats.exploratory = !violations.is_empty();
    stats.notes.extend(violations);
    stats.notes.push(format!("time window [0, {}] with {} frames", cfg.t_end, cfg.frames));
    if stats.values.iter().all(|&v| v == 0.0) {
        stats.notes.push("all draws vanish".into());
        return Ok(stats);
    }
    let usable: Vec<f64> = cfg.p_list.iter().cloned().filter(|&p| p * DRAWS_PER_MOMENT as f64 <= cfg.draws as f64).collect();
    if usable.len() < cfg.p_list.len() {
        stats.notes.push(format!("moments restricted to p in {usable:?} by the draw count"));
    }
    if usable.len() >= 2 {
        moment_growth(&mut stats, &usable)?;
    }
    let grid = default_lambda_grid(&stats.values, cfg.tail_bins);
    // Too few draws for a tail fit is a property of the ensemble, not a failure to run it.
    match tail_fit(&mut stats, &grid) {
        Err(DlabError::FitRange(msg)) => stats.notes.push(format!("no tail fit: {msg}")),
        other => other?,
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_statistic_has_flat_moments() {
        let values = run_draws(100, |_| Ok(1.0)).unwrap();
        let mut s = EnsembleStats::new("one", 0, values).unwrap();
        moment_growth(&mut s, &[2.0, 4.0, 8.0]).unwrap();
        assert!(s.moment_fit.unwrap().slope.abs() < 1e-14);
        assert!(s.invariants_hold());
    }

    #[test]
    fn too_few_draws_flagged() {
        let mut s = EnsembleStats::new("x", 0, vec![1.0; 50]).unwrap();
        assert!(matches!(moment_growth(&mut s, &[2.0, 8.0]), Err(DlabError::InsufficientSamples(_))));
    }

    #[test]
    fn bounded_statistic_has_empty_tail() {
        let mut s = EnsembleStats::new("b", 0, run_draws(500, |d| Ok((d % 7) as f64 / 7.0)).unwrap()).unwrap();
        assert!(tail_fit(&mut s, &[1.0, 2.0, 5.0]).is_err());
        assert_eq!(s.exceedances, vec![0, 0, 0]);
    }

    #[test]
    fn unpopulated_tail_is_a_range_error() {
        let mut s = EnsembleStats::new("g", 0, run_draws(100, linear_gaussian_statistic(&[1.0], 1)).unwrap()).unwrap();
        assert!(matches!(tail_fit(&mut s, &[3.0, 4.0]), Err(DlabError::FitRange(_))));
    }

    #[test]
    fn default_eps_sits_inside_the_y_regime() {
        assert_eq!(EnsembleConfig::new(EnsembleNorm::Y, 0.4).eps, 0.02);
        assert_eq!(EnsembleConfig::new(EnsembleNorm::Y, 0.6).eps, crate::norms::DEFAULT_EPS);
        for s in [0.34, 0.4, 0.5, 0.6, 1.0] {
            assert!(EnsembleNorm::Y.regime_violations(s, default_eps(s)).is_empty(), "s = {s}");
        }
    }

    #[test]
    fn regime_violation_needs_the_flag() {
        let mut cfg = EnsembleConfig::new(EnsembleNorm::Y, 0.3);
        cfg.draws = 2;
        assert!(as_norm_ensemble(&cfg, None, None).is_err());
        assert_eq!(EnsembleNorm::WeightedGradL2Linf { alpha: 0.75 }.regime_violations(0.6, 0.05).len(), 0);
        assert_eq!(EnsembleNorm::WeightedL2Linf { alpha: 0.8 }.regime_violations(0.4, 0.05).len(), 1);
    }

    #[test]
    fn csv_extension_reuses_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("draws.csv");
        let stat = linear_gaussian_statistic(&[0.6, 0.8], 9);
        let first = extend_draws(&path, 10, &stat).unwrap();
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let more = extend_draws(&path, 15, |d| {
            calls.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            stat(d)
        })
        .unwrap();
        assert_eq!(calls.into_inner(), 5);
        assert_eq!(&more[..10], &first[..]);
        assert_eq!(more, run_draws(15, &stat).unwrap());
    }
}
