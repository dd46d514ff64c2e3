//! Executes experiments and writes their artifacts.

use crate::config::{DataSpec, Estimate, Experiment, ExperimentConfig, SolveMode, SolveParams, SCHEMA_VERSION};
use crate::report::{Entry, Report};
use anyhow::{anyhow, Context, Result};
use dlab::error::DlabError;
use dlab::estimates as est;
use dlab::grid::{Field, FrameSource, Trajectory};
use dlab::montecarlo::{as_norm_ensemble, EnsembleConfig};
use dlab::norms::{space_time_norm, FrameWindow};
use dlab::projections::apply_band;
use dlab::propagate::{FlowSpec, FreeFlow};
use dlab::randomize::{make_radial_data, randomize_schrodinger, sobolev_norm, RandomizationSpec};
use dlab::snapshot::{load_field, load_trajectory, save_field, save_trajectory};
use dlab::solver::{
    energy, energy_growth_audit, mass, morawetz_report, picard_iterate, scattering_state, splitstep_forced,
    splitstep_nls, MorawetzWeight, PicardConfig,
};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

/// What one experiment produced.
pub struct Outcome {
    pub pass: bool,
    pub result: Value,
    pub csv: Option<String>,
}

impl Outcome {
    fn new(pass: bool, result: impl Serialize) -> Result<Self> {
        Ok(Self { pass, result: serde_json::to_value(result)?, csv: None })
    }

    fn with_csv(mut self, csv: String) -> Self {
        self.csv = Some(csv);
        self
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// The config restricted to one experiment, in canonical form.
fn resolved(cfg: &ExperimentConfig, e: &Experiment) -> Result<String> {
    let mut one = cfg.clone();
    one.experiments = vec![e.clone()];
    one.canonical()
}

/// Runs every experiment, writing `<id>.json` (and `<id>.csv`) plus
/// `report.json` under the output directory.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Report> {
    std::fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    let mut report = Report::new();
    for e in &cfg.experiments {
        let text = resolved(cfg, e)?;
        let hash = sha256_hex(&text);
        let seed = e.seed(cfg.seed);
        let (pass, result, error) = match run_one(cfg, e, &hash) {
            Ok(o) => {
                if let Some(csv) = &o.csv {
                    std::fs::write(cfg.output.join(format!("{}.csv", e.id())), csv)?;
                }
                (o.pass, o.result, None)
            }
            Err(err) => {
                let msg = format!("{err:#}");
                // A non-contracting Picard map is a verification outcome, not a failure to run.
                let verification = err.downcast_ref::<DlabError>().is_some_and(|d| matches!(d, DlabError::NoContraction(_)));
                (false, json!({ "error": msg }), (!verification).then_some(msg))
            }
        };
        let artifact = format!("{}.json", e.id());
        let body = json!({
            "schema_version": SCHEMA_VERSION,
            "id": e.id(),
            "kind": e.kind(),
            "seed": seed,
            "pass": pass,
            "config_hash": hash,
            "config": text,
            "result": result,
        });
        std::fs::write(cfg.output.join(&artifact), serde_json::to_string_pretty(&body)? + "\n")?;
        report.push(Entry { id: e.id().to_string(), kind: e.kind().to_string(), seed, pass, error, config_hash: hash, artifact });
    }
    report.write(&cfg.output.join("report.json"))?;
    Ok(report)
}

fn load_data(cfg: &ExperimentConfig) -> Result<Field> {
    let grid = cfg.spectral_grid()?;
    match &cfg.data {
        DataSpec::Profile { profile, amplitude } => {
            let mut f = make_radial_data(&grid, profile)?;
            f.scale(Complex64::new(*amplitude, 0.0));
            Ok(f)
        }
        DataSpec::Snapshot { path } => {
            let f = load_field(path).with_context(|| format!("loading {}", path.display()))?;
            grid.ensure_same(f.grid()).context("snapshot grid differs from [grid]")?;
            Ok(f.to_physical()?)
        }
    }
}

fn run_one(cfg: &ExperimentConfig, e: &Experiment, hash: &str) -> Result<Outcome> {
    let out = &cfg.output;
    match e {
        Experiment::Evolve { id, flow, frames } => {
            let data = load_data(cfg)?;
            let spec = FlowSpec { kind: *flow, ..FlowSpec::schrodinger(cfg.time.t_end, *frames) };
            let tr = FreeFlow::new(&data, spec)?.trajectory()?;
            let masses: Vec<f64> = tr.frames().iter().map(mass).collect();
            let drift = masses.iter().map(|m| (m - masses[0]).abs()).fold(0.0, f64::max) / masses[0].max(f64::MIN_POSITIVE);
            save_trajectory(&tr, &out.join(id), json!({ "flow": flow, "config_hash": hash }))?;
            Outcome::new(drift <= 1e-10, json!({ "frames": frames, "masses": masses, "relative_mass_drift": drift }))
        }
        Experiment::Project { id, band } => {
            let data = load_data(cfg)?;
            let p = apply_band(&data, band)?;
            save_field(&p, &out.join(format!("{id}.dlab")))?;
            Outcome::new(true, json!({ "l2_before": data.l2_norm(), "l2_after": p.l2_norm() }))
        }
        Experiment::Randomize { id, draw } => {
            let data = load_data(cfg)?;
            let r = randomize_schrodinger(&data, &RandomizationSpec::gaussian(cfg.seed), *draw)?;
            save_field(&r, &out.join(format!("{id}.dlab")))?;
            let s = cfg.epsilon.s.unwrap_or(0.0);
            Outcome::new(
                true,
                json!({ "draw": draw, "s": s, "sobolev_before": sobolev_norm(&data, s)?, "sobolev_after": sobolev_norm(&r, s)? }),
            )
        }
        Experiment::Norms { norms, frames, trajectory, .. } => {
            let tr = match trajectory {
                Some(dir) => load_trajectory(dir).with_context(|| format!("loading {}", dir.display()))?.0,
                None => FreeFlow::new(&load_data(cfg)?, FlowSpec::schrodinger(cfg.time.t_end, *frames))?.trajectory()?,
            };
            let reports = norms
                .iter()
                .map(|n| space_time_norm(&tr, n, &cfg.epsilon, FrameWindow::all(&tr)))
                .collect::<dlab::error::Result<Vec<_>>>()?;
            let pass = reports.iter().all(|r| r.value.is_finite());
            Outcome::new(pass, reports)
        }
        Experiment::Verify { estimate, .. } => verify(estimate),
        Experiment::Ensemble { id, ensemble } => {
            let csv = out.join(format!("{id}-{}.draws.csv", &draws_key(ensemble)?[..12]));
            let stats = as_norm_ensemble(ensemble, None, Some(&csv))?;
            let tail_negative = stats.tail_fit.is_some_and(|f| f.slope < 0.0);
            let pass = stats.invariants_hold() && (tail_negative || stats.values.iter().all(|&v| v == 0.0));
            let rows = stats.csv();
            Ok(Outcome::new(pass, &stats)?.with_csv(rows))
        }
        Experiment::Solve { mode, params, .. } => solve(cfg, *mode, params, &out.join(e.id())),
    }
}

/// Hash of an ensemble config with the draw count removed, so extending `Q`
/// reuses the stored draws while any other change starts afresh.
fn draws_key(cfg: &EnsembleConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.draws = 0;
    Ok(sha256_hex(&toml::to_string(&c)?))
}

fn fit_outcome(r: est::ScalingFitReport) -> Result<Outcome> {
    let pass = r.pass && r.separated();
    let csv = r.csv();
    Ok(Outcome::new(pass, &r)?.with_csv(csv))
}

pub fn verify(estimate: &Estimate) -> Result<Outcome> {
    match estimate {
        Estimate::Lateral(c) => fit_outcome(est::verify_lateral_dyadic(c)?),
        Estimate::UnitMaximal(c) => fit_outcome(est::verify_unit_maximal(c)?),
        Estimate::Bernstein(c) => fit_outcome(est::verify_bernstein(c)?),
        Estimate::LocalSmoothing(c) => fit_outcome(est::verify_local_smoothing(c)?),
        Estimate::LocalEnergyDecay(c) => fit_outcome(est::verify_local_energy_decay(c)?),
        Estimate::RadialishSobolev(c) => {
            let r = est::verify_radialish_sobolev(&est::radialish_profiles(c)?, c)?;
            let mut csv = String::from("profile,r,lhs,rhs,ratio\n");
            for row in &r.rows {
                let _ = writeln!(csv, "\"{}\",{},{},{},{}", row.label.replace('"', "\"\""), row.r, row.lhs, row.rhs, row.ratio);
            }
            Ok(Outcome::new(r.pass, &r)?.with_csv(csv))
        }
        Estimate::OperatorDecay(c) => {
            let r = est::verify_operator_decay(c)?;
            let mut csv = String::from("family,parameter,norm\n");
            for (l, n) in &r.ell_norms {
                let _ = writeln!(csv, "ell,{l},{n}");
            }
            for (g, n) in &r.gap_norms {
                let _ = writeln!(csv, "gap,{g},{n}");
            }
            Ok(Outcome::new(r.ell_pass && r.gap_pass, &r)?.with_csv(csv))
        }
        Estimate::Trilinear(c) => {
            let r = est::verify_trilinear(c)?;
            let mut csv = String::from("case,n,n1,n2,n3,lhs,gain,rhs,ratio\n");
            for x in &r.rows {
                let _ = writeln!(csv, "{},{},{},{},{},{},{},{},{}", x.case.label(), x.n, x.n1, x.n2, x.n3, x.lhs, x.gain, x.rhs, x.ratio);
            }
            let pass = r.cases.iter().all(|c| c.3);
            Ok(Outcome::new(pass, &r)?.with_csv(csv))
        }
        Estimate::DuhamelRetarded(c) => {
            let r = est::verify_duhamel_family(c)?;
            Outcome::new(r.pass, &r)
        }
        Estimate::MainLinear(c) => {
            let r = est::verify_main_linear(c)?;
            let mut csv = String::from("draw,n,lhs,rhs,constant\n");
            for s in &r.samples {
                let _ = writeln!(csv, "{},{},{},{},{}", s.draw, s.n, s.lhs, s.rhs, s.constant);
            }
            Ok(Outcome::new(r.pass, &r)?.with_csv(csv))
        }
    }
}

/// Free evolution of the randomized forcing profile, scaled to `forcing_l2`.
fn forcing_flow(cfg: &ExperimentConfig, params: &SolveParams, dt: f64, frames: usize) -> Result<FreeFlow> {
    let grid = cfg.spectral_grid()?;
    let base = make_radial_data(&grid, &params.forcing)?;
    let mut f = randomize_schrodinger(&base, &RandomizationSpec::gaussian(cfg.seed), 0)?;
    let n = f.l2_norm();
    if n > 0.0 {
        f.scale(Complex64::new(params.forcing_l2 / n, 0.0));
    }
    Ok(FreeFlow::new(&f, FlowSpec { dt, frames, ..FlowSpec::schrodinger(0.0, 1) })?)
}

fn series(tr: &Trajectory) -> Result<Value> {
    let mut e = Vec::new();
    let mut m = Vec::new();
    for f in tr.frames() {
        e.push(energy(f)?);
        m.push(mass(f));
    }
    let times: Vec<f64> = (0..tr.frames().len()).map(|i| tr.time(i)).collect();
    Ok(json!({ "times": times, "kinetic_energy": e, "mass": m }))
}

fn solve(cfg: &ExperimentConfig, mode: SolveMode, params: &SolveParams, dir: &Path) -> Result<Outcome> {
    let v0 = load_data(cfg)?;
    let run_cfg = params.run_config(&cfg.time);
    match mode {
        SolveMode::Nls => {
            let run = splitstep_nls(&v0, &run_cfg)?;
            let mut result = json!({ "blowup": run.blowup, "warnings": run.warnings, "series": series(&run.trajectory)? });
            let mut pass = run.blowup.is_none();
            if pass && run.trajectory.frames().len() >= 5 {
                let m = morawetz_report(&run.trajectory, None, params.nonlinearity, run_cfg.dt)?;
                pass &= m.identity_holds() && m.inequality_holds();
                result["morawetz"] = serde_json::to_value(&m)?;
            }
            if pass && !params.ladder.is_empty() {
                let (_, ladder) = scattering_state(&run, &params.ladder)?;
                pass &= ladder.decreasing;
                result["scattering"] = serde_json::to_value(&ladder)?;
            }
            save_trajectory(&run.trajectory, dir, json!({ "mode": "nls", "run": run_cfg }))?;
            Outcome::new(pass, result)
        }
        SolveMode::Forced => {
            let frames = run_cfg.steps()? / run_cfg.stride + 1;
            let forcing = forcing_flow(cfg, params, run_cfg.frame_dt(), frames)?;
            let run = splitstep_forced(&v0, &forcing, &run_cfg)?;
            let mut result = json!({ "blowup": run.blowup, "warnings": run.warnings, "series": series(&run.trajectory)? });
            let mut pass = run.blowup.is_none();
            if pass && run.trajectory.frames().len() >= 5 {
                let grid = *run.trajectory.grid();
                let growth = energy_growth_audit(&run.trajectory, &forcing, MorawetzWeight::for_grid(&grid))?;
                let m = morawetz_report(&run.trajectory, Some(&forcing as &dyn FrameSource), params.nonlinearity, run_cfg.dt)?;
                pass &= growth.energy_bound_holds && growth.holder.iter().all(|h| h.holds) && m.inequality_holds();
                result["energy_growth"] = serde_json::to_value(&growth)?;
                result["morawetz"] = serde_json::to_value(&m)?;
            }
            save_trajectory(&run.trajectory, dir, json!({ "mode": "forced", "run": run_cfg }))?;
            Outcome::new(pass, result)
        }
        SolveMode::Picard => {
            let frames = (params.tau / run_cfg.dt).round() as usize + 1;
            let forcing = forcing_flow(cfg, params, run_cfg.dt, frames)?;
            let pcfg = PicardConfig {
                tau: params.tau,
                max_iterations: params.max_iterations,
                tolerance: params.tolerance,
                nonlinearity: params.nonlinearity,
                eps: cfg.epsilon,
            };
            let (tr, record) = picard_iterate(&v0, &forcing, &pcfg).map_err(|e| anyhow!(e))?;
            save_trajectory(&tr, dir, json!({ "mode": "picard", "picard": pcfg }))?;
            Outcome::new(record.converged, record)
        }
    }
}
