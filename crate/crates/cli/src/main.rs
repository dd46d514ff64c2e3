//! `dlab`: run experiments from a TOML config and write reproducible artifacts.

mod config;
mod report;
mod run;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use config::{Estimate, Experiment, ExperimentConfig, SolveMode, SolveParams};
use dlab::montecarlo::{EnsembleConfig, EnsembleNorm};
use report::Report;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dlab", version, about = "Numerical laboratory for randomized NLS data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML). Without one the built-in defaults are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Free evolution of the configured data.
    Evolve(Common),
    /// Frequency projections listed in the config.
    Project(Common),
    /// Randomize the configured data.
    Randomize(Common),
    /// Space-time norms listed in the config.
    Norms(Common),
    /// Nonlinear solves; `--mode` overrides the mode of every solve in the config.
    Solve {
        #[arg(long, value_enum)]
        mode: SolveMode,
        #[command(flatten)]
        common: Common,
    },
    /// Numerical check of one estimate.
    Verify {
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(Estimate::NAMES))]
        estimate: String,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo ensemble of a norm of randomized data.
    Ensemble {
        /// Norm kind, e.g. `y`, `weighted_grad_l2_linf`, `wave_l3_l6`.
        #[arg(long)]
        stat: String,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Regularity of the randomized data.
        #[arg(long)]
        s: Option<f64>,
        /// Weight exponent for the weighted norms.
        #[arg(long)]
        alpha: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Operations on report.json files.
    Report {
        #[command(subcommand)]
        action: ReportAction,
    },
}

#[derive(Subcommand)]
enum ReportAction {
    /// Union of several reports; the first occurrence of an id is kept.
    Merge {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::empty(),
    };
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

/// Keeps the experiments of one kind, or falls back to `default` if there are none.
fn select(mut cfg: ExperimentConfig, kind: &str, default: Option<Experiment>) -> Result<ExperimentConfig> {
    cfg.experiments.retain(|e| e.kind() == kind);
    if cfg.experiments.is_empty() {
        match default {
            Some(e) => cfg.experiments.push(e),
            None => bail!("no `{kind}` experiments in the config"),
        }
    }
    Ok(cfg)
}

fn ensemble_norm(stat: &str, alpha: Option<f64>) -> Result<EnsembleNorm> {
    let mut v = serde_json::json!({ "kind": stat });
    if let Some(a) = alpha {
        v["alpha"] = a.into();
    }
    serde_json::from_value(v).with_context(|| format!("unknown statistic `{stat}` (or missing --alpha)"))
}

fn prepare(command: Command) -> Result<ExperimentConfig> {
    Ok(match command {
        Command::Run { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(o) = out {
                cfg.output = o;
            }
            cfg
        }
        Command::Evolve(c) => select(
            load(&c)?,
            "evolve",
            Some(Experiment::Evolve { id: "evolve".into(), flow: dlab::propagate::FlowKind::Schrodinger, frames: 17 }),
        )?,
        Command::Project(c) => select(load(&c)?, "project", None)?,
        Command::Randomize(c) => select(load(&c)?, "randomize", Some(Experiment::Randomize { id: "randomize".into(), draw: 0 }))?,
        Command::Norms(c) => select(load(&c)?, "norms", None)?,
        Command::Solve { mode, common } => {
            let mut cfg = select(
                load(&common)?,
                "solve",
                Some(Experiment::Solve { id: "solve".into(), mode, params: SolveParams::default() }),
            )?;
            for e in &mut cfg.experiments {
                if let Experiment::Solve { mode: m, .. } = e {
                    *m = mode;
                }
            }
            cfg
        }
        Command::Verify { estimate, common } => {
            let mut cfg = load(&common)?;
            cfg.experiments.retain(|e| matches!(e, Experiment::Verify { estimate: est, .. } if est.name() == estimate));
            if cfg.experiments.is_empty() {
                let est = Estimate::default_for(&estimate).context("unknown estimate")?;
                cfg.experiments.push(Experiment::Verify { id: estimate.clone(), estimate: est });
            }
            cfg
        }
        Command::Ensemble { stat, draws, seed, s, alpha, common } => {
            let mut cfg = load(&common)?;
            // The first ensemble in the config, if any, supplies everything the flags do not.
            let base = cfg.experiments.iter().find_map(|e| match e {
                Experiment::Ensemble { ensemble, .. } => Some(ensemble.clone()),
                _ => None,
            });
            let from_config = base.is_some();
            let mut ens = EnsembleConfig { norm: ensemble_norm(&stat, alpha)?, ..base.unwrap_or_default() };
            if let Some(s) = s {
                ens.s = s;
                ens.eps = dlab::montecarlo::default_eps(s);
            }
            if let Some(q) = draws {
                ens.draws = q;
            }
            match seed {
                Some(seed) => ens.seed = seed,
                None if !from_config => ens.seed = cfg.seed,
                None => {}
            }
            cfg.experiments = vec![Experiment::Ensemble { id: stat, ensemble: ens }];
            let v = cfg.violations();
            if !v.is_empty() {
                bail!("{} constraint violation(s):\n  - {}", v.len(), v.join("\n  - "));
            }
            cfg
        }
        Command::Report { .. } => unreachable!("handled before"),
    })
}

fn init_threads() -> Result<()> {
    if let Ok(n) = std::env::var("DLAB_THREADS") {
        let n: usize = n.parse().context("DLAB_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = (|| -> Result<i32> {
        init_threads()?;
        if let Command::Report { action: ReportAction::Merge { inputs, output } } = cli.command {
            let reports = inputs.iter().map(|p| Report::read(p)).collect::<Result<Vec<_>>>()?;
            let merged = Report::merge(&reports);
            for w in &merged.warnings {
                eprintln!("warning: {w}");
            }
            merged.write(&output)?;
            return Ok(0);
        }
        let cfg = prepare(cli.command)?;
        let report = run::run_all(&cfg)?;
        for e in &report.entries {
            let status = match (&e.error, e.pass) {
                (Some(_), _) => "ERROR",
                (None, true) => "PASS",
                (None, false) => "FAIL",
            };
            println!("{status:5} {} ({})", e.id, e.kind);
            if let Some(err) = &e.error {
                eprintln!("  {err}");
            }
        }
        Ok(report.exit_code())
    })();
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
