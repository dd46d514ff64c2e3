//! Fourier multipliers and spatial cutoffs.
//!
//! Three smooth profiles carry everything:
//!
//! * the unit-cell bump `psi(xi) = prod_l phi1(xi_l)`, where `phi1` is a
//!   normalized `e^{-1/t}` bump on `(-1, 1)` whose integer translates sum to one;
//! * the radial step `Phi(r)`, equal to 1 for `r <= 1` and 0 for `r >= 2`,
//!   which gives `P_N = Phi(|xi|/N) - Phi(2|xi|/N)`;
//! * the directional bump, 1 on `[1/8, 4]` and supported in `[1/16, 8]`,
//!   applied to `|xi_l| / N`.
//!
//! All multipliers are real and even, so every projection is self-adjoint.

use crate::error::{DlabError, Result};
use crate::grid::{Domain, Field, SpectralGrid, MAX_DIM};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// `e^{-1/t}` for `t > 0`, zero otherwise.
pub fn sigma(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth monotone step: 0 for `u <= 0`, 1 for `u >= 1`.
pub fn rising_step(u: f64) -> f64 {
    let a = sigma(u);
    let b = sigma(1.0 - u);
    a / (a + b)
}

fn raw_bump(x: f64) -> f64 {
    sigma(1.0 + x) * sigma(1.0 - x)
}

/// One-dimensional unit bump with `sum_n phi1(x - n) = 1`.
pub fn unit_bump_1d(x: f64) -> f64 {
    let num = raw_bump(x);
    if num == 0.0 {
        return 0.0;
    }
    let base = x.floor() as i64;
    let den: f64 = (base - 1..=base + 2).map(|n| raw_bump(x - n as f64)).sum();
    num / den
}

/// `psi(xi) = prod_l phi1(xi_l)` over the first `dim` components.
pub fn unit_bump(xi: &[f64; MAX_DIM], dim: usize) -> f64 {
    xi[..dim].iter().map(|&v| unit_bump_1d(v)).product()
}

/// Radial step, 1 on `[0, 1]`, 0 on `[2, inf)`.
pub fn radial_step(r: f64) -> f64 {
    1.0 - rising_step(r - 1.0)
}

/// Directional bump in `s = |xi_l| / N`.
pub fn directional_bump(s: f64) -> f64 {
    let s = s.abs();
    rising_step(16.0 * (s - 1.0 / 16.0)) * (1.0 - rising_step((s - 4.0) / 4.0))
}

/// Named smooth profiles, for reports and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpProfile {
    UnitCell,
    Radial,
    Directional,
}

impl BumpProfile {
    /// One-dimensional slice of the profile.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            BumpProfile::UnitCell => unit_bump_1d(x),
            BumpProfile::Radial => radial_step(x.abs()),
            BumpProfile::Directional => directional_bump(x),
        }
    }
}

/// A frequency-space projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrequencyBandSpec {
    /// `P_k`, unit cell around the integer point `k`.
    Unit { center: [i64; MAX_DIM] },
    /// `P_N`, `|xi| ~ N`.
    Dyadic { n: f64 },
    /// `P_{<=N}`.
    DyadicLeq { n: f64 },
    /// `P_{>N}`.
    DyadicGt { n: f64 },
    /// `P_{<=8N} - P_{<=N/8}`, equal to 1 on the support of `P_N`.
    Fattened { n: f64 },
    /// `P_{N,e_l}`, the directional bump on `|xi_l| / N`.
    Directional { n: f64, axis: usize },
    /// `P_{N,e_l} P_N`.
    DirectionalDyadic { n: f64, axis: usize },
}

/// True when `n` is an integral power of two (negative exponents allowed).
pub fn is_dyadic(n: f64) -> bool {
    n > 0.0 && n.is_finite() && n.log2().fract() == 0.0
}

fn check_dyadic(grid: &SpectralGrid, n: f64) -> Result<()> {
    if !is_dyadic(n) {
        return Err(DlabError::InvalidParameter(format!("band {n} is not a power of two")));
    }
    let lo = grid.dxi();
    let hi = grid.nyquist();
    if n < lo * (1.0 - 1e-12) || n > hi * (1.0 + 1e-12) {
        return Err(DlabError::BandUnresolved(format!(
            "N = {n} outside [{lo:.4}, {hi:.4}]"
        )));
    }
    Ok(())
}

impl FrequencyBandSpec {
    pub fn validate(&self, grid: &SpectralGrid) -> Result<()> {
        match *self {
            FrequencyBandSpec::Unit { center } => {
                if grid.dxi() > 1.0 {
                    return Err(DlabError::BandUnresolved(format!(
                        "unit cells need dxi <= 1, grid has {:.3}",
                        grid.dxi()
                    )));
                }
                let c = grid.carrier();
                for a in 0..grid.dim() {
                    let off = (center[a] as f64 - c[a]).abs() + 1.0;
                    if off > grid.nyquist() {
                        return Err(DlabError::BandUnresolved(format!(
                            "unit cell {center:?} exceeds the lattice"
                        )));
                    }
                }
                Ok(())
            }
            FrequencyBandSpec::Dyadic { n }
            | FrequencyBandSpec::DyadicLeq { n }
            | FrequencyBandSpec::DyadicGt { n }
            | FrequencyBandSpec::Fattened { n } => check_dyadic(grid, n),
            FrequencyBandSpec::Directional { n, axis } | FrequencyBandSpec::DirectionalDyadic { n, axis } => {
                if axis >= grid.dim() {
                    return Err(DlabError::InvalidParameter(format!("axis {axis} out of range")));
                }
                check_dyadic(grid, n)
            }
        }
    }

    /// Multiplier value at one frequency.
    pub fn eval(&self, xi: &[f64; MAX_DIM], dim: usize) -> f64 {
        let norm = || xi[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
        match *self {
            FrequencyBandSpec::Unit { center } => {
                let mut shifted = [0.0; MAX_DIM];
                for a in 0..dim {
                    shifted[a] = xi[a] - center[a] as f64;
                }
                unit_bump(&shifted, dim)
            }
            FrequencyBandSpec::Dyadic { n } => {
                let r = norm();
                radial_step(r / n) - radial_step(2.0 * r / n)
            }
            FrequencyBandSpec::DyadicLeq { n } => radial_step(norm() / n),
            FrequencyBandSpec::DyadicGt { n } => 1.0 - radial_step(norm() / n),
            FrequencyBandSpec::Fattened { n } => {
                let r = norm();
                radial_step(r / (8.0 * n)) - radial_step(8.0 * r / n)
            }
            FrequencyBandSpec::Directional { n, axis } => directional_bump(xi[axis] / n),
            FrequencyBandSpec::DirectionalDyadic { n, axis } => {
                let r = norm();
                directional_bump(xi[axis] / n) * (radial_step(r / n) - radial_step(2.0 * r / n))
            }
        }
    }

    /// Multiplier table on the lattice, FFT order.
    pub fn symbol(&self, grid: &SpectralGrid) -> Result<Vec<f64>> {
        self.validate(grid)?;
        let dim = grid.dim();
        Ok(grid.map_frequencies(|xi| self.eval(xi, dim)))
    }
}

/// Apply a band to a field in either domain; the result keeps the domain.
pub fn apply_band(field: &Field, band: &FrequencyBandSpec) -> Result<Field> {
    let symbol = band.symbol(field.grid())?;
    apply_symbol(field, &symbol)
}

/// Apply a precomputed real symbol; the result keeps the input's domain.
pub fn apply_symbol(field: &Field, symbol: &[f64]) -> Result<Field> {
    let domain = field.domain();
    let mut hat = field.to_frequency()?;
    hat.multiply_real(symbol);
    match domain {
        Domain::Frequency => Ok(hat),
        Domain::Physical => hat.into_physical(),
    }
}

/// `P_k f`.
pub fn unit_projection(field: &Field, k: [i64; MAX_DIM]) -> Result<Field> {
    apply_band(field, &FrequencyBandSpec::Unit { center: k })
}

/// `P_N f`.
pub fn dyadic_projection(field: &Field, n: f64) -> Result<Field> {
    apply_band(field, &FrequencyBandSpec::Dyadic { n })
}

/// `P_{N,e_l} f`.
pub fn directional_projection(field: &Field, n: f64, axis: usize) -> Result<Field> {
    apply_band(field, &FrequencyBandSpec::Directional { n, axis })
}

/// `||prod_l (1 - P_{N,e_l}) P_N f||_2`, applied as operators; zero when the
/// directional plateau covers the annulus.
pub fn directional_annihilation_residual(field: &Field, n: f64) -> Result<f64> {
    let grid = *field.grid();
    let mut out = dyadic_projection(field, n)?.to_frequency()?;
    for axis in 0..grid.dim() {
        let complement: Vec<f64> =
            FrequencyBandSpec::Directional { n, axis }.symbol(&grid)?.into_iter().map(|s| 1.0 - s).collect();
        out.multiply_real(&complement);
    }
    Ok(out.l2_norm())
}

/// Dyadic spatial cutoffs. `scale` stretches every cutoff by a constant,
/// `chi(x / scale)`, which keeps the dyadic ratios while fitting a grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CutoffSpec {
    /// `chi_j`: `chi_0 = Phi(|x|)`, `chi_j = Phi(2^-j |x|) - Phi(2^{1-j} |x|)`.
    Shell { j: u32, scale: f64 },
    /// `chi_{<=j} = Phi(2^-j |x|)`.
    Inner { j: u32, scale: f64 },
    /// `chi_{>j} = 1 - Phi(2^-j |x|)`.
    Outer { j: u32, scale: f64 },
    /// A fattened shell, equal to 1 on the support of `chi_j`.
    Fattened { j: u32, scale: f64 },
}

impl CutoffSpec {
    pub fn shell(j: u32) -> Self {
        CutoffSpec::Shell { j, scale: 1.0 }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let p = |j: i32, s: f64| radial_step(r / (s * 2f64.powi(j)));
        match *self {
            CutoffSpec::Shell { j, scale } => {
                if j == 0 {
                    p(0, scale)
                } else {
                    p(j as i32, scale) - p(j as i32 - 1, scale)
                }
            }
            CutoffSpec::Inner { j, scale } => p(j as i32, scale),
            CutoffSpec::Outer { j, scale } => 1.0 - p(j as i32, scale),
            CutoffSpec::Fattened { j, scale } => {
                if j == 0 {
                    p(1, scale)
                } else {
                    p(j as i32 + 1, scale) - p(j as i32 - 2, scale)
                }
            }
        }
    }

    fn scale(&self) -> f64 {
        match *self {
            CutoffSpec::Shell { scale, .. }
            | CutoffSpec::Inner { scale, .. }
            | CutoffSpec::Outer { scale, .. }
            | CutoffSpec::Fattened { scale, .. } => scale,
        }
    }

    pub fn table(&self, grid: &SpectralGrid) -> Result<Vec<f64>> {
        if !(self.scale() > 0.0 && self.scale().is_finite()) {
            return Err(DlabError::InvalidParameter("cutoff scale must be positive".into()));
        }
        Ok(grid.map_positions(|x| self.eval(x.iter().map(|v| v * v).sum::<f64>().sqrt())))
    }
}

/// Multiply a field by a spatial cutoff; the result is physical.
pub fn spatial_cutoff(field: &Field, cutoff: &CutoffSpec) -> Result<Field> {
    let table = cutoff.table(field.grid())?;
    let mut phys = field.to_physical()?;
    for (v, c) in phys.data_mut().iter_mut().zip(&table) {
        *v *= Complex64::new(*c, 0.0);
    }
    Ok(phys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_bump_partitions_unity_on_a_line() {
        for i in 0..2000 {
            let x = -5.0 + i as f64 * 0.00537;
            let s: f64 = (-8..=8).map(|n| unit_bump_1d(x - n as f64)).sum();
            assert!((s - 1.0).abs() < 1e-14, "x = {x}: {s}");
        }
    }

    #[test]
    fn unit_bump_is_even_and_normalized_at_zero() {
        assert_eq!(unit_bump_1d(0.0), 1.0);
        for x in [0.1, 0.37, 0.8, 0.99] {
            assert!((unit_bump_1d(x) - unit_bump_1d(-x)).abs() < 1e-15);
        }
        assert_eq!(unit_bump_1d(1.0), 0.0);
        assert_eq!(unit_bump_1d(-1.3), 0.0);
    }

    #[test]
    fn radial_step_plateaus() {
        assert_eq!(radial_step(0.3), 1.0);
        assert_eq!(radial_step(1.0), 1.0);
        assert_eq!(radial_step(2.0), 0.0);
        assert!(radial_step(1.5) > 0.0 && radial_step(1.5) < 1.0);
    }

    #[test]
    fn directional_bump_plateau_and_support() {
        for s in [0.125, 0.5, 1.0, 4.0] {
            assert_eq!(directional_bump(s), 1.0);
        }
        for s in [0.0, 0.0625, 8.0, 9.0] {
            assert_eq!(directional_bump(s), 0.0);
        }
    }

    #[test]
    fn dyadic_symbol_is_one_only_on_its_sphere() {
        let b = FrequencyBandSpec::Dyadic { n: 4.0 };
        let at = |r: f64| b.eval(&[r, 0.0, 0.0, 0.0], 4);
        assert_eq!(at(4.0), 1.0);
        assert!(at(3.0) < 1.0 && at(5.0) < 1.0);
        assert_eq!(at(1.99), 0.0);
        assert_eq!(at(8.01), 0.0);
    }

    #[test]
    fn fattened_band_is_one_on_the_dyadic_support() {
        let n = 2.0;
        let f = FrequencyBandSpec::Fattened { n };
        for i in 0..100 {
            let r = n / 2.0 + i as f64 * (1.5 * n) / 99.0;
            assert_eq!(f.eval(&[0.0, r, 0.0, 0.0], 4), 1.0);
        }
    }

    #[test]
    fn fattened_cutoff_is_one_on_shell_support() {
        for j in 0..5u32 {
            let shell = CutoffSpec::shell(j);
            let fat = CutoffSpec::Fattened { j, scale: 1.0 };
            for i in 0..400 {
                let r = i as f64 * 0.1;
                if shell.eval(r) != 0.0 {
                    assert_eq!(fat.eval(r), 1.0, "j = {j}, r = {r}");
                }
            }
        }
    }

    #[test]
    fn shells_telescope() {
        for i in 0..300 {
            let r = i as f64 * 0.11;
            let s: f64 = (0..=5).map(|j| CutoffSpec::shell(j).eval(r)).sum();
            assert!((s - CutoffSpec::Inner { j: 5, scale: 1.0 }.eval(r)).abs() < 1e-14);
        }
    }

    #[test]
    fn band_validation() {
        let g = SpectralGrid::cube(16, 16.0).unwrap();
        assert!(FrequencyBandSpec::Dyadic { n: 3.0 }.validate(&g).is_err());
        assert!(FrequencyBandSpec::Dyadic { n: 64.0 }.validate(&g).is_err());
        assert!(FrequencyBandSpec::Dyadic { n: 1.0 }.validate(&g).is_ok());
        assert!(FrequencyBandSpec::Directional { n: 1.0, axis: 4 }.validate(&g).is_err());
        let coarse = SpectralGrid::cube(16, 4.0).unwrap();
        assert!(FrequencyBandSpec::Unit { center: [0; 4] }.validate(&coarse).is_err());
    }
}
