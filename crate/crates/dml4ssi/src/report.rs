//! CSV emission for experiment results.
//!
//! `replications.csv`: `replication,estimator,psi_hat,sigma2_hat,ci_low,ci_high,covered,psi_star,degenerate`
//!
//! `summary.csv`: `estimator,T,R,mean_bias,bias_sd,mc_se,coverage,coverage_se,mean_ci_width`
//!
//! Rows follow replication order, then the scenario's estimator order. A
//! `metadata.toml` alongside records the scenario, timing and failures.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use dml4ssi_core::Estimator;
use serde::Serialize;

use crate::harness::{replication_rows, EstimatorSummary, ExperimentReport, ReplicationRow};
use crate::number::format_g17;

pub const REPLICATION_HEADER: &str =
    "replication,estimator,psi_hat,sigma2_hat,ci_low,ci_high,covered,psi_star,degenerate";
pub const SUMMARY_HEADER: &str =
    "estimator,T,R,mean_bias,bias_sd,mc_se,coverage,coverage_se,mean_ci_width";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

pub fn replications_csv(rows: &[ReplicationRow]) -> String {
    let mut out = String::from(REPLICATION_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.replication,
            r.estimator,
            format_g17(r.psi_hat),
            format_g17(r.sigma2_hat),
            format_g17(r.ci_low),
            format_g17(r.ci_high),
            r.covered,
            format_g17(r.psi_star),
            r.degenerate
        );
    }
    out
}

pub fn summary_csv(summaries: &[EstimatorSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.estimator,
            s.t_len,
            s.replications,
            format_g17(s.mean_bias),
            format_g17(s.bias_sd),
            format_g17(s.mc_se),
            format_g17(s.coverage),
            format_g17(s.coverage_se),
            format_g17(s.mean_ci_width)
        );
    }
    out
}

#[derive(Serialize)]
struct Metadata<'a> {
    dgp: String,
    psi_star: f64,
    #[serde(rename = "T")]
    t_len: usize,
    #[serde(rename = "aux_T")]
    aux_t_len: usize,
    #[serde(rename = "R")]
    replications: usize,
    alpha: f64,
    base_seed: u64,
    stream_root: u64,
    jobs: usize,
    oracle_nuisances: bool,
    variance: Vec<(String, String)>,
    notes: Vec<&'a str>,
    failures: Vec<(String, String, usize)>,
    wall_clock_secs: f64,
}

fn metadata(report: &ExperimentReport) -> String {
    let s = &report.scenario;
    let mut notes = Vec::new();
    if s.estimators.contains(&Estimator::SbHt) {
        notes.push(
            "sb-ht intervals use the m-dependent plug-in variance of its score series in place \
             of a conservative switchback variance",
        );
    }
    let meta = Metadata {
        dgp: format!("{:?}", s.dgp),
        psi_star: report.psi_star,
        t_len: s.t_len,
        aux_t_len: s.aux_len(),
        replications: s.replications,
        alpha: s.alpha,
        base_seed: s.base_seed,
        stream_root: s.stream_root,
        jobs: s.jobs,
        oracle_nuisances: s.oracle_nuisances,
        variance: s.estimators.iter().map(|&e| (e.to_string(), s.variance_for(e).to_string())).collect(),
        notes,
        failures: report
            .failures()
            .into_iter()
            .flat_map(|(e, m)| m.into_iter().map(move |(msg, n)| (e.to_string(), msg, n)))
            .collect(),
        wall_clock_secs: report.wall_clock_secs,
    };
    toml::to_string(&meta).unwrap_or_default()
}

fn write(path: PathBuf, text: &str) -> Result<(), ReportError> {
    fs::write(&path, text).map_err(|source| ReportError::Io { path, source })
}

/// Writes `replications.csv`, `summary.csv` and `metadata.toml` into `dir`.
pub fn emit_csv(report: &ExperimentReport, dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_path_buf(), source })?;
    write(dir.join("replications.csv"), &replications_csv(&replication_rows(&report.replications)))?;
    write(dir.join("summary.csv"), &summary_csv(&report.summaries))?;
    write(dir.join("metadata.toml"), &metadata(report))
}

/// One subdirectory `T<T>` per grid point plus a combined `sweep_summary.csv`.
pub fn emit_sweep(reports: &[ExperimentReport], dir: &Path) -> Result<(), ReportError> {
    let mut all = Vec::new();
    for r in reports {
        emit_csv(r, &dir.join(format!("T{}", r.scenario.t_len)))?;
        all.extend(r.summaries.iter().cloned());
    }
    write(dir.join("sweep_summary.csv"), &summary_csv(&all))
}

/// Parses a `replications.csv` written by [`emit_csv`].
pub fn read_replications(path: &Path) -> Result<Vec<ReplicationRow>, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
    let err = |line: usize, message: String| ReportError::Parse { path: path.to_path_buf(), line, message };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == REPLICATION_HEADER => {}
        _ => return Err(err(1, "unexpected header".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let ln = i + 1;
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != 9 {
            return Err(err(ln, format!("expected 9 fields, found {}", c.len())));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| err(ln, format!("bad number `{s}`")));
        let b = |s: &str| s.parse::<bool>().map_err(|_| err(ln, format!("bad flag `{s}`")));
        rows.push(ReplicationRow {
            replication: c[0].parse().map_err(|_| err(ln, "bad replication index".into()))?,
            estimator: c[1].parse().map_err(|e| err(ln, format!("{e}")))?,
            psi_hat: f(c[2])?,
            sigma2_hat: f(c[3])?,
            ci_low: f(c[4])?,
            ci_high: f(c[5])?,
            covered: b(c[6])?,
            psi_star: f(c[7])?,
            degenerate: b(c[8])?,
        });
    }
    Ok(rows)
}

/// Parses a `summary.csv` written by [`emit_csv`].
pub fn read_summary(path: &Path) -> Result<Vec<EstimatorSummary>, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
    let err = |line: usize, message: String| ReportError::Parse { path: path.to_path_buf(), line, message };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let ln = i + 1;
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != 9 {
            return Err(err(ln, format!("expected 9 fields, found {}", c.len())));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| err(ln, format!("bad number `{s}`")));
        let u = |s: &str| s.parse::<usize>().map_err(|_| err(ln, format!("bad integer `{s}`")));
        out.push(EstimatorSummary {
            estimator: c[0].parse().map_err(|e| err(ln, format!("{e}")))?,
            t_len: u(c[1])?,
            replications: u(c[2])?,
            mean_bias: f(c[3])?,
            bias_sd: f(c[4])?,
            mc_se: f(c[5])?,
            coverage: f(c[6])?,
            coverage_se: f(c[7])?,
            mean_ci_width: f(c[8])?,
        });
    }
    Ok(out)
}
