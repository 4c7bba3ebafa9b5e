//! CSV and JSON report files. Every writer is a pure function of the report,
//! so identical reports produce byte-identical files.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::realdata::{RealDataConfig, RealDataReport};
use super::synthetic::{AggregateRow, CurvePoint, ExperimentReport, ReplicateRecord};
use crate::error::{Result, SdlError};

pub const HISTOGRAM_LO: f64 = -6.0;
pub const HISTOGRAM_HI: f64 = 6.0;
pub const HISTOGRAM_WIDTH: f64 = 0.25;

fn csv_err(e: csv::Error) -> SdlError {
    SdlError::Io(std::io::Error::other(e))
}

/// Serializes `rows` as CSV with a header derived from the row type.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| SdlError::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| SdlError::Io(std::io::Error::other(e)))
}

#[derive(Debug, Serialize)]
struct ReplicateRow<'a> {
    replicate: usize,
    seed: u64,
    status: &'a str,
    error: &'a str,
    alpha: Option<f64>,
    lambda: Option<f64>,
    kappa: Option<f64>,
    tau: Option<f64>,
    d: Option<f64>,
    support_size: Option<usize>,
    kkt_gap: Option<f64>,
    ridge: Option<f64>,
    type_i: Option<f64>,
    power: Option<f64>,
    theory: Option<f64>,
}

/// One row per (replicate, α); failed replicates get a single row.
pub fn replicates_csv(records: &[ReplicateRecord]) -> Result<String> {
    let mut rows = Vec::new();
    for rec in records {
        match &rec.outcome {
            Ok(o) => {
                for a in &o.per_alpha {
                    rows.push(ReplicateRow {
                        replicate: rec.replicate,
                        seed: rec.seed,
                        status: "ok",
                        error: "",
                        alpha: Some(a.alpha),
                        lambda: Some(o.lambda),
                        kappa: o.kappa,
                        tau: Some(o.tau),
                        d: Some(o.d),
                        support_size: Some(o.support_size),
                        kkt_gap: Some(o.kkt_gap),
                        ridge: o.ridge,
                        type_i: a.type_i,
                        power: a.power,
                        theory: a.theory,
                    });
                }
            }
            Err(msg) => rows.push(ReplicateRow {
                replicate: rec.replicate,
                seed: rec.seed,
                status: "failed",
                error: msg,
                alpha: None,
                lambda: None,
                kappa: None,
                tau: None,
                d: None,
                support_size: None,
                kkt_gap: None,
                ridge: None,
                type_i: None,
                power: None,
                theory: None,
            }),
        }
    }
    to_csv(&rows)
}

pub fn report_csv(aggregates: &[AggregateRow]) -> Result<String> {
    to_csv(aggregates)
}

#[derive(Debug, Serialize)]
struct ZRow {
    replicate: usize,
    index: usize,
    active: bool,
    z_score: f64,
}

pub fn zscores_csv(records: &[ReplicateRecord]) -> Result<String> {
    let mut rows = Vec::new();
    for rec in records {
        if let Ok(o) = &rec.outcome {
            for (index, (&z_score, &active)) in o.z_scores.iter().zip(&o.active).enumerate() {
                rows.push(ZRow {
                    replicate: rec.replicate,
                    index,
                    active,
                    z_score,
                });
            }
        }
    }
    to_csv(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub null_count: usize,
    pub active_count: usize,
}

/// Bins of width 0.25 over [−6, 6]; the first and last bins are open-ended
/// so that every statistic is counted.
pub fn histogram(z_scores: &[f64], active: &[bool]) -> Vec<HistogramBin> {
    let inner = ((HISTOGRAM_HI - HISTOGRAM_LO) / HISTOGRAM_WIDTH).round() as usize;
    let mut bins: Vec<HistogramBin> = Vec::with_capacity(inner + 2);
    bins.push(HistogramBin {
        lo: f64::NEG_INFINITY,
        hi: HISTOGRAM_LO,
        null_count: 0,
        active_count: 0,
    });
    for k in 0..inner {
        let lo = HISTOGRAM_LO + k as f64 * HISTOGRAM_WIDTH;
        bins.push(HistogramBin {
            lo,
            hi: lo + HISTOGRAM_WIDTH,
            null_count: 0,
            active_count: 0,
        });
    }
    bins.push(HistogramBin {
        lo: HISTOGRAM_HI,
        hi: f64::INFINITY,
        null_count: 0,
        active_count: 0,
    });
    for (&z, &is_active) in z_scores.iter().zip(active) {
        if z.is_nan() {
            continue;
        }
        let slot = if z < HISTOGRAM_LO {
            0
        } else if z >= HISTOGRAM_HI {
            inner + 1
        } else {
            (((z - HISTOGRAM_LO) / HISTOGRAM_WIDTH).floor() as usize).min(inner - 1) + 1
        };
        if is_active {
            bins[slot].active_count += 1;
        } else {
            bins[slot].null_count += 1;
        }
    }
    bins
}

pub fn histogram_csv(records: &[ReplicateRecord]) -> Result<String> {
    let (mut z, mut a) = (Vec::new(), Vec::new());
    for rec in records {
        if let Ok(o) = &rec.outcome {
            z.extend_from_slice(&o.z_scores);
            a.extend_from_slice(&o.active);
        }
    }
    to_csv(&histogram(&z, &a))
}

pub fn curve_csv(points: &[CurvePoint]) -> Result<String> {
    to_csv(points)
}

#[derive(Debug, Serialize)]
struct ConfigEcho<'a> {
    config: &'a ExperimentConfig,
    crate_version: &'static str,
    replicate_seeds: Vec<u64>,
}

pub fn config_json(config: &ExperimentConfig) -> Result<String> {
    let echo = ConfigEcho {
        config,
        crate_version: env!("CARGO_PKG_VERSION"),
        replicate_seeds: (0..config.replicates)
            .map(|r| config.seed.wrapping_add(r as u64))
            .collect(),
    };
    serde_json::to_string_pretty(&echo).map_err(|e| SdlError::Io(std::io::Error::other(e)))
}

fn write_tables(
    dir: &Path,
    records: &[ReplicateRecord],
    aggregates: &[AggregateRow],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.csv"), report_csv(aggregates)?)?;
    fs::write(dir.join("replicates.csv"), replicates_csv(records)?)?;
    fs::write(dir.join("zscores.csv"), zscores_csv(records)?)?;
    fs::write(dir.join("histogram.csv"), histogram_csv(records)?)?;
    Ok(())
}

/// Writes `report.csv`, `replicates.csv`, `zscores.csv`, `histogram.csv`
/// and `config.json` into `dir`, creating it if needed.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    write_tables(dir, &report.replicates, &report.aggregates)?;
    fs::write(dir.join("config.json"), config_json(&report.config)?)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct RealDataEcho<'a> {
    config: &'a RealDataConfig,
    crate_version: &'static str,
    n_total: usize,
    p: usize,
    n_active: usize,
    predictor_columns: &'a [usize],
    dropped_columns: &'a [usize],
}

pub fn realdata_json(report: &RealDataReport) -> Result<String> {
    let echo = RealDataEcho {
        config: &report.config,
        crate_version: env!("CARGO_PKG_VERSION"),
        n_total: report.n_total,
        p: report.p,
        n_active: report.n_active,
        predictor_columns: &report.predictor_columns,
        dropped_columns: &report.dropped_columns,
    };
    serde_json::to_string_pretty(&echo).map_err(|e| SdlError::Io(std::io::Error::other(e)))
}

/// Same files as [`write_report`]; `config.json` also lists the kept and
/// dropped data columns.
pub fn write_realdata_report(report: &RealDataReport, dir: &Path) -> Result<()> {
    write_tables(dir, &report.replicates, &report.aggregates)?;
    fs::write(dir.join("config.json"), realdata_json(report)?)?;
    Ok(())
}
