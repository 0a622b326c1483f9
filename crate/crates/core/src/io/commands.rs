//! The work behind each command-line subcommand, driven by a [`RunConfig`].

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::{
    convergence_study, entropy_floor_study, evaluate_paths, residual_study, run_ensemble, ConvergenceRow,
    ConvergenceVerdict, EnsembleOutcome, ResidualSummary, REPORT_SCHEMA,
};
use crate::error::{Error, Result};
use crate::io::config::RunConfig;
use crate::io::ingest::{ingest_caps_file, ingest_files, write_caps_csv, write_covariance_csv};
use crate::io::plot::{emit_plot_data, write_floor_curve};
use crate::io::report::{render, to_json, ReportFormat};
use crate::sim::{path_seed, simulate_path, SeedStream};
use crate::strategy::FloorCurve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema: u32,
    pub c: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub verdict: Option<ConvergenceVerdict>,
    pub rows: Vec<ConvergenceRow>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `text` to the configured report path, or to `stdout` when none
/// is set.
fn write_report(cfg: &RunConfig, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match &cfg.output.report {
        Some(p) => {
            let mut f = create(p)?;
            f.write_all(text.as_bytes())?;
            f.flush()?;
        }
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn write_outcome(cfg: &RunConfig, outcome: &EnsembleOutcome, stdout: &mut dyn Write) -> Result<()> {
    write_report(cfg, &render(&outcome.report, cfg.output.format)?, stdout)?;
    if let Some(p) = &cfg.output.plot {
        emit_plot_data(outcome, cfg.output.plot_kind, create(p)?)?;
    }
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<EnsembleOutcome> {
    run_ensemble(&cfg.model, &cfg.ensemble_config())
}

/// Exports scored path 0 of the simulated ensemble (caps and, when
/// configured, per-step covariances).
pub fn export_first_path(cfg: &RunConfig) -> Result<()> {
    if cfg.output.export_caps.is_none() && cfg.output.export_covariance.is_none() {
        return Ok(());
    }
    let seed = path_seed(cfg.master_seed, SeedStream::Scored, 0);
    let path = simulate_path(&cfg.model, cfg.horizon, cfg.dt, seed)?;
    if let Some(p) = &cfg.output.export_caps {
        write_caps_csv(create(p)?, &path)?;
    }
    if let Some(p) = &cfg.output.export_covariance {
        write_covariance_csv(create(p)?, &path)?;
    }
    Ok(())
}

/// Calibrates and scores the strategy on the ingested path; the path is
/// its own pilot.
pub fn backtest(cfg: &RunConfig) -> Result<EnsembleOutcome> {
    let input = cfg
        .backtest
        .input
        .as_ref()
        .ok_or_else(|| Error::config("backtest.input", "backtest needs a caps CSV"))?;
    let path = match &cfg.backtest.covariance {
        Some(cov) => ingest_files(input, cov)?,
        None => ingest_caps_file(input, cfg.backtest.window)?,
    };
    let one = std::slice::from_ref(&path);
    evaluate_paths(one, one, &cfg.strategy, None)
}

pub fn residual(cfg: &RunConfig) -> Result<ResidualSummary> {
    residual_study(
        &cfg.model,
        cfg.study.c,
        cfg.horizon,
        cfg.dt,
        cfg.study.paths,
        cfg.master_seed,
        cfg.strategy.tolerance_master,
    )
}

pub fn convergence(cfg: &RunConfig) -> Result<ConvergenceReport> {
    let table = convergence_study(
        &cfg.model,
        cfg.study.c,
        cfg.horizon,
        &cfg.study.dts,
        cfg.study.paths,
        cfg.master_seed,
    )?;
    Ok(ConvergenceReport {
        schema: REPORT_SCHEMA,
        c: cfg.study.c,
        horizon: cfg.horizon,
        n_paths: cfg.study.paths,
        seed: cfg.master_seed,
        verdict: table.verdict,
        rows: table.rows,
    })
}

pub fn floor(cfg: &RunConfig) -> Result<FloorCurve> {
    entropy_floor_study(&cfg.model, cfg.horizon, cfg.dt, cfg.n_paths, cfg.master_seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    Backtest,
    Residual,
    Convergence,
    Floor,
}

/// Runs a subcommand and writes its primary output to the configured path
/// or `stdout`.
pub fn execute(cmd: Subcommand, cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    match cmd {
        Subcommand::Simulate => {
            let out = simulate(cfg)?;
            export_first_path(cfg)?;
            write_outcome(cfg, &out, stdout)
        }
        Subcommand::Backtest => write_outcome(cfg, &backtest(cfg)?, stdout),
        Subcommand::Residual => write_report(cfg, &render(&residual(cfg)?, cfg.output.format)?, stdout),
        Subcommand::Convergence => {
            let report = convergence(cfg)?;
            let text = match cfg.output.format {
                ReportFormat::Json => to_json(&report)?,
                ReportFormat::CsvSummary => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    for row in &report.rows {
                        w.serialize(row)?;
                    }
                    String::from_utf8(w.into_inner().map_err(|e| Error::Csv(e.to_string()))?)
                        .expect("csv output is utf-8")
                }
            };
            write_report(cfg, &text, stdout)
        }
        Subcommand::Floor => {
            let curve = floor(cfg)?;
            match cfg.output.plot.as_ref().or(cfg.output.report.as_ref()) {
                Some(p) => write_floor_curve(&curve, create(p)?),
                None => write_floor_curve(&curve, stdout),
            }
        }
    }
}
