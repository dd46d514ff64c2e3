//! Experiment configuration: one TOML file, versioned, unknown keys rejected.

use anyhow::{Context, Result};
use dlab::estimates::{
    BernsteinConfig, LateralConfig, LocalSmoothingConfig, MainLinearConfig,
    OperatorDecayConfig, RadialishConfig, RetardedConfig, TrilinearConfig, UnitMaximalConfig,
};
use dlab::grid::SpectralGrid;
use dlab::montecarlo::EnsembleConfig;
use dlab::norms::{EpsilonPolicy, SpaceTimeNormSpec};
use dlab::projections::FrequencyBandSpec;
use dlab::propagate::FlowKind;
use dlab::randomize::RadialProfileSpec;
use dlab::solver::{NlsRunConfig, Nonlinearity};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub epsilon: EpsilonPolicy,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub experiments: Vec<Experiment>,
}

fn default_output() -> PathBuf {
    PathBuf::from("dlab-out")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub points: usize,
    pub length: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { dim: 4, points: 16, length: 4.0 * std::f64::consts::PI }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub t_end: f64,
    pub dt: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self { t_end: 0.5, dt: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Profile {
        profile: RadialProfileSpec,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// A snapshot file; relative paths resolve against the config's directory.
    Snapshot { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec::Profile { profile: RadialProfileSpec::GaussianBump { width: 1.0 }, amplitude: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// Free evolution of the data, stored as a trajectory directory.
    Evolve {
        id: String,
        #[serde(default = "schrodinger")]
        flow: FlowKind,
        #[serde(default = "default_frames")]
        frames: usize,
    },
    Project { id: String, band: FrequencyBandSpec },
    Randomize {
        id: String,
        #[serde(default)]
        draw: u64,
    },
    /// Norms of the free evolution of the data, or of a stored trajectory.
    Norms {
        id: String,
        norms: Vec<SpaceTimeNormSpec>,
        #[serde(default = "default_frames")]
        frames: usize,
        #[serde(default)]
        trajectory: Option<PathBuf>,
    },
    Verify { id: String, estimate: Estimate },
    Ensemble { id: String, ensemble: EnsembleConfig },
    Solve {
        id: String,
        mode: SolveMode,
        #[serde(default)]
        params: SolveParams,
    },
}

fn schrodinger() -> FlowKind {
    FlowKind::Schrodinger
}

fn default_frames() -> usize {
    17
}

impl Experiment {
    pub fn id(&self) -> &str {
        match self {
            Experiment::Evolve { id, .. }
            | Experiment::Project { id, .. }
            | Experiment::Randomize { id, .. }
            | Experiment::Norms { id, .. }
            | Experiment::Verify { id, .. }
            | Experiment::Ensemble { id, .. }
            | Experiment::Solve { id, .. } => id,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Evolve { .. } => "evolve",
            Experiment::Project { .. } => "project",
            Experiment::Randomize { .. } => "randomize",
            Experiment::Norms { .. } => "norms",
            Experiment::Verify { .. } => "verify",
            Experiment::Ensemble { .. } => "ensemble",
            Experiment::Solve { .. } => "solve",
        }
    }

    /// Seed the experiment's randomness derives from.
    pub fn seed(&self, global: u64) -> u64 {
        match self {
            Experiment::Ensemble { ensemble, .. } => ensemble.seed,
            _ => global,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Estimate {
    Lateral(LateralConfig),
    UnitMaximal(UnitMaximalConfig),
    Bernstein(BernsteinConfig),
    LocalSmoothing(LocalSmoothingConfig),
    LocalEnergyDecay(LocalSmoothingConfig),
    RadialishSobolev(RadialishConfig),
    OperatorDecay(OperatorDecayConfig),
    Trilinear(TrilinearConfig),
    DuhamelRetarded(RetardedConfig),
    MainLinear(MainLinearConfig),
}

impl Estimate {
    pub const NAMES: [&'static str; 10] = [
        "lateral",
        "unit_maximal",
        "bernstein",
        "local_smoothing",
        "local_energy_decay",
        "radialish_sobolev",
        "operator_decay",
        "trilinear",
        "duhamel_retarded",
        "main_linear",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Estimate::Lateral(_) => "lateral",
            Estimate::UnitMaximal(_) => "unit_maximal",
            Estimate::Bernstein(_) => "bernstein",
            Estimate::LocalSmoothing(_) => "local_smoothing",
            Estimate::LocalEnergyDecay(_) => "local_energy_decay",
            Estimate::RadialishSobolev(_) => "radialish_sobolev",
            Estimate::OperatorDecay(_) => "operator_decay",
            Estimate::Trilinear(_) => "trilinear",
            Estimate::DuhamelRetarded(_) => "duhamel_retarded",
            Estimate::MainLinear(_) => "main_linear",
        }
    }

    /// The estimate with its default parameters.
    pub fn default_for(name: &str) -> Option<Self> {
        Some(match name {
            "lateral" => Estimate::Lateral(Default::default()),
            "unit_maximal" => Estimate::UnitMaximal(Default::default()),
            "bernstein" => Estimate::Bernstein(Default::default()),
            "local_smoothing" => Estimate::LocalSmoothing(Default::default()),
            "local_energy_decay" => Estimate::LocalEnergyDecay(Default::default()),
            "radialish_sobolev" => Estimate::RadialishSobolev(Default::default()),
            "operator_decay" => Estimate::OperatorDecay(Default::default()),
            "trilinear" => Estimate::Trilinear(Default::default()),
            "duhamel_retarded" => Estimate::DuhamelRetarded(Default::default()),
            "main_linear" => Estimate::MainLinear(Default::default()),
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Nls,
    Forced,
    Picard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveParams {
    pub nonlinearity: Nonlinearity,
    pub dealias: bool,
    /// Solver steps between stored frames.
    pub stride: usize,
    /// Profile of the free forcing `F`, randomized with the run seed (forced and picard modes).
    pub forcing: RadialProfileSpec,
    /// `||F(0)||_2` after randomization.
    pub forcing_l2: f64,
    /// Picard interval `[0, tau]`.
    pub tau: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Times of the Cauchy ladder for the scattering diagnostic (nls mode); empty skips it.
    pub ladder: Vec<f64>,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            nonlinearity: Nonlinearity::Defocusing,
            dealias: true,
            stride: 5,
            forcing: RadialProfileSpec::power_law_for(0.6, dlab::randomize::POWER_LAW_MARGIN, 3.0),
            forcing_l2: 1.0,
            tau: 0.5,
            max_iterations: 30,
            tolerance: 1e-10,
            ladder: Vec::new(),
        }
    }
}

impl SolveParams {
    pub fn run_config(&self, time: &TimeSection) -> NlsRunConfig {
        NlsRunConfig {
            nonlinearity: self.nonlinearity,
            dt: time.dt,
            t_end: time.t_end,
            dealias: self.dealias,
            stride: self.stride,
        }
    }
}

impl ExperimentConfig {
    pub fn empty() -> Self {
        Self {
            version: SCHEMA_VERSION,
            output: default_output(),
            seed: 0,
            grid: GridSection::default(),
            time: TimeSection::default(),
            epsilon: EpsilonPolicy::default(),
            data: DataSpec::default(),
            experiments: Vec::new(),
        }
    }

    /// Parse and validate; every violated constraint is listed in the error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        if let DataSpec::Snapshot { path: p } = &mut cfg.data {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        let violations = cfg.violations();
        if !violations.is_empty() {
            anyhow::bail!(
                "{} constraint violation(s):\n  - {}",
                violations.len(),
                violations.join("\n  - ")
            );
        }
        Ok(cfg)
    }

    /// Canonical TOML form; parsing it yields an equal config.
    pub fn canonical(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn spectral_grid(&self) -> dlab::error::Result<SpectralGrid> {
        SpectralGrid::new(self.grid.dim, self.grid.points, self.grid.length)
    }

    /// Every cross-field constraint, checked without short-circuiting.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.version != SCHEMA_VERSION {
            v.push(format!("version = {} but this build reads version {SCHEMA_VERSION}", self.version));
        }
        let grid = match self.spectral_grid() {
            Ok(g) => Some(g),
            Err(e) => {
                v.push(format!("grid: {e}"));
                None
            }
        };
        if !(self.time.dt.is_finite() && self.time.dt > 0.0) {
            v.push(format!("time.dt = {} must be positive", self.time.dt));
        }
        if !(self.time.t_end.is_finite() && self.time.t_end >= 0.0) {
            v.push(format!("time.t_end = {} must be nonnegative", self.time.t_end));
        }
        if let Err(e) = self.epsilon.validate() {
            v.push(format!("epsilon: {e}"));
        }
        match &self.data {
            DataSpec::Profile { profile, amplitude } => {
                if let Err(e) = profile.validate() {
                    v.push(format!("data.profile: {e}"));
                }
                if !amplitude.is_finite() {
                    v.push(format!("data.amplitude = {amplitude}"));
                }
            }
            DataSpec::Snapshot { path } => {
                if path.as_os_str().is_empty() {
                    v.push("data.path is empty".into());
                }
            }
        }
        let mut seen = BTreeSet::new();
        for (i, e) in self.experiments.iter().enumerate() {
            let at = format!("experiments[{i}] ({})", e.id());
            let id = e.id();
            if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                v.push(format!("{at}: id must be non-empty and use [A-Za-z0-9_-]"));
            }
            if !seen.insert(id.to_string()) {
                v.push(format!("{at}: duplicate id"));
            }
            self.experiment_violations(e, grid.as_ref(), &at, &mut v);
        }
        v
    }

    fn experiment_violations(&self, e: &Experiment, grid: Option<&SpectralGrid>, at: &str, v: &mut Vec<String>) {
        match e {
            Experiment::Evolve { frames, .. } | Experiment::Norms { frames, .. } => {
                if *frames < 2 {
                    v.push(format!("{at}: frames must be at least 2"));
                }
            }
            Experiment::Project { band, .. } => {
                if let Some(g) = grid {
                    if let Err(err) = band.validate(g) {
                        v.push(format!("{at}: band: {err}"));
                    }
                }
            }
            Experiment::Randomize { .. } => {}
            Experiment::Verify { estimate, .. } => estimate_violations(estimate, at, v),
            Experiment::Ensemble { ensemble, .. } => {
                if ensemble.draws == 0 {
                    v.push(format!("{at}: draws must be positive"));
                }
                let regime = ensemble.norm.regime_violations(ensemble.s, ensemble.eps);
                if !regime.is_empty() && !ensemble.exploratory {
                    v.push(format!("{at}: {} (set exploratory = true to run anyway)", regime.join("; ")));
                }
                if let Err(err) = SpectralGrid::cube(ensemble.points, ensemble.length) {
                    v.push(format!("{at}: {err}"));
                }
                // The randomization splits frequency space into unit cells.
                if ensemble.length < 2.0 * std::f64::consts::PI {
                    v.push(format!("{at}: ensemble length must be at least 2*pi so unit cells are resolved"));
                }
            }
            Experiment::Solve { mode, params, .. } => {
                let run = params.run_config(&self.time);
                if let Err(err) = run.steps() {
                    v.push(format!("{at}: {err}"));
                }
                if let Err(err) = params.forcing.validate() {
                    v.push(format!("{at}: forcing: {err}"));
                }
                if *mode == SolveMode::Picard {
                    if !(params.tau > 0.0 && params.tau <= self.time.t_end.max(params.tau)) {
                        v.push(format!("{at}: tau = {} must be positive", params.tau));
                    }
                    let k = params.tau / self.time.dt;
                    if (k - k.round()).abs() > 1e-9 * k.max(1.0) {
                        v.push(format!("{at}: tau = {} is not a multiple of dt = {}", params.tau, self.time.dt));
                    }
                    if !(params.tolerance > 0.0) {
                        v.push(format!("{at}: tolerance must be positive"));
                    }
                }
                if params.ladder.windows(2).any(|w| w[1] <= w[0]) {
                    v.push(format!("{at}: ladder times must increase"));
                }
            }
        }
    }
}

fn estimate_violations(e: &Estimate, at: &str, v: &mut Vec<String>) {
    let inv = |p: f64| if p.is_infinite() { 0.0 } else { 1.0 / p };
    match e {
        Estimate::Lateral(c) => {
            if c.p < 2.0 || c.q < 2.0 || (inv(c.p) + inv(c.q) - 0.5).abs() > 1e-12 {
                v.push(format!("{at}: (p, q) = ({}, {}) is off the line 1/p + 1/q = 1/2", c.p, c.q));
            }
            if c.bands.len() < 2 {
                v.push(format!("{at}: a slope fit needs two bands"));
            }
        }
        Estimate::UnitMaximal(c) => {
            if c.ks.iter().filter(|&&k| k >= c.min_k).count() < 2 {
                v.push(format!("{at}: need two |k| >= {} to fit", c.min_k));
            }
        }
        Estimate::Bernstein(c) => {
            if !(c.r1 >= 1.0 && c.r2 >= c.r1) {
                v.push(format!("{at}: need 1 <= r1 <= r2"));
            }
        }
        Estimate::LocalSmoothing(c) | Estimate::LocalEnergyDecay(c) => {
            if c.radii.is_empty() || c.radii.iter().any(|&r| !(r > 0.0)) {
                v.push(format!("{at}: radii must be positive and non-empty"));
            }
        }
        Estimate::RadialishSobolev(c) => {
            if c.profiles.is_empty() {
                v.push(format!("{at}: no profiles"));
            }
        }
        Estimate::OperatorDecay(c) => {
            if c.ells.iter().all(|&l| l <= c.j + 5) {
                v.push(format!("{at}: every l is <= j + 5, outside the bound's range"));
            }
        }
        Estimate::Trilinear(c) => {
            if c.cases.is_empty() {
                v.push(format!("{at}: no trilinear cases"));
            }
            if c.caps.values().any(|&cap| !(cap > 0.0)) {
                v.push(format!("{at}: caps must be positive"));
            }
        }
        Estimate::DuhamelRetarded(c) => {
            if c.frames < 2 {
                v.push(format!("{at}: frames must be at least 2"));
            }
        }
        Estimate::MainLinear(c) => {
            if c.frames < 2 || c.samples == 0 {
                v.push(format!("{at}: need at least 2 frames and 1 sample"));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
version = 1
output = "out"
seed = 3

[grid]
points = 16
length = 12.0

[time]
t_end = 0.1
dt = 0.01

[data]
source = "profile"
amplitude = 0.5
profile = { kind = "gaussian_bump", width = 1.0 }

[[experiments]]
kind = "verify"
id = "lat"
estimate = { name = "lateral", p = inf, q = 2.0 }

[[experiments]]
kind = "solve"
id = "run"
mode = "nls"
params = { stride = 2 }

[[experiments]]
kind = "ensemble"
id = "y"
ensemble = { norm = { kind = "y" }, s = 0.6, draws = 10 }
"#;

    #[test]
    fn canonical_form_round_trips() {
        let cfg = ExperimentConfig::parse(FULL).unwrap();
        let text = cfg.canonical().unwrap();
        let again = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.canonical().unwrap(), text);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = FULL.replace("seed = 3", "seed = 3\nsede = 4");
        assert!(ExperimentConfig::parse(&bad).is_err());
        let bad = FULL.replace("p = inf", "p = inf, pp = 1.0");
        assert!(ExperimentConfig::parse(&bad).is_err());
    }

    #[test]
    fn every_violation_is_listed() {
        let bad = FULL
            .replace("version = 1", "version = 9")
            .replace("points = 16", "points = 12")
            .replace("dt = 0.01", "dt = -1.0")
            .replace("q = 2.0", "q = 3.0")
            .replace("id = \"run\"", "id = \"lat\"");
        let err = format!("{:#}", ExperimentConfig::parse(&bad).unwrap_err());
        for needle in ["version", "grid", "time.dt", "off the line", "duplicate id"] {
            assert!(err.contains(needle), "missing {needle} in {err}");
        }
    }

    #[test]
    fn every_estimate_name_has_defaults() {
        for name in Estimate::NAMES {
            assert_eq!(Estimate::default_for(name).unwrap().name(), name);
        }
    }
}
