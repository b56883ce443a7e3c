//! Trajectory CSV files.
//!
//! Header `t,x_1..x_pX,d,h_1..h_pH,y`. The first data row has `t = 0` and
//! carries the initial shared state with empty `x`, `d` and `y` cells; rows
//! `t = 1..T` follow in order. Numbers use 17 significant digits.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use dml4ssi_core::{
    validate_trajectory, Observation, Regime, SwitchbackDesign, Trajectory, Violation,
};

use crate::number::format_g17;

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: line {line}: {message}")]
    Row { path: PathBuf, line: u64, message: String },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{path}: invalid trajectory: {}", join(.violations))]
    Invalid { path: PathBuf, violations: Vec<Violation> },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub fn header(p_x: usize, p_h: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=p_x).map(|i| format!("x_{i}")));
    cols.push("d".into());
    cols.extend((1..=p_h).map(|i| format!("h_{i}")));
    cols.push("y".into());
    cols
}

pub fn write_trajectory<W: Write>(traj: &Trajectory, mut out: W) -> io::Result<()> {
    let p_x = traj.p_x();
    let p_h = traj.p_h();
    writeln!(out, "{}", header(p_x, p_h).join(","))?;
    let mut line = String::new();
    line.push('0');
    line.push_str(&",".repeat(p_x + 1));
    for v in &traj.h0 {
        line.push(',');
        line.push_str(&format_g17(*v));
    }
    line.push(',');
    writeln!(out, "{line}")?;
    for (i, o) in traj.obs.iter().enumerate() {
        line.clear();
        line.push_str(&(i + 1).to_string());
        for v in &o.x {
            line.push(',');
            line.push_str(&format_g17(*v));
        }
        line.push(',');
        line.push_str(&o.d.to_string());
        for v in &o.h {
            line.push(',');
            line.push_str(&format_g17(*v));
        }
        line.push(',');
        line.push_str(&format_g17(o.y));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_trajectory_file(traj: &Trajectory, path: &Path) -> Result<(), TrajectoryFileError> {
    let io_err = |source| TrajectoryFileError::Io { path: path.to_path_buf(), source };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = io::BufWriter::new(file);
    write_trajectory(traj, &mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

/// Column positions resolved from a header.
struct Layout {
    t: usize,
    x: Vec<usize>,
    d: usize,
    h: Vec<usize>,
    y: usize,
}

fn numbered(headers: &csv::StringRecord, prefix: &str) -> Vec<usize> {
    let mut cols = Vec::new();
    while let Some(pos) = headers.iter().position(|c| c == format!("{prefix}{}", cols.len() + 1)) {
        cols.push(pos);
    }
    cols
}

/// Reads and validates a trajectory. Regime and design are not stored in the
/// file and are supplied by the caller.
pub fn read_trajectory_file(
    path: &Path,
    regime: Regime,
    design: Option<SwitchbackDesign>,
) -> Result<Trajectory, TrajectoryFileError> {
    let p = || path.to_path_buf();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| TrajectoryFileError::MissingColumn { path: p(), column: name.into() })
    };
    let layout =
        Layout { t: find("t")?, x: numbered(&headers, "x_"), d: find("d")?, h: numbered(&headers, "h_"), y: find("y")? };
    let known = 3 + layout.x.len() + layout.h.len();
    if headers.len() != known {
        let extra = headers
            .iter()
            .find(|c| {
                !(*c == "t" || *c == "d" || *c == "y")
                    && !header(layout.x.len(), layout.h.len()).iter().any(|h| h == c)
            })
            .unwrap_or("?");
        return Err(TrajectoryFileError::Schema { path: p(), message: format!("unexpected column `{extra}`") });
    }
    if layout.x.is_empty() {
        return Err(TrajectoryFileError::MissingColumn { path: p(), column: "x_1".into() });
    }

    let mut h0 = None;
    let mut obs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |pos| pos.line());
        let row_err = |message: String| TrajectoryFileError::Row { path: p(), line, message };
        let num = |col: usize, name: &str| -> Result<f64, TrajectoryFileError> {
            let cell = record.get(col).unwrap_or("");
            cell.parse::<f64>().map_err(|_| row_err(format!("column `{name}`: cannot parse `{cell}`")))
        };
        let t: usize = record
            .get(layout.t)
            .unwrap_or("")
            .parse()
            .map_err(|_| row_err("column `t` must be a nonnegative integer".into()))?;
        let h = layout
            .h
            .iter()
            .enumerate()
            .map(|(i, &c)| num(c, &format!("h_{}", i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        if t == 0 {
            if h0.is_some() || !obs.is_empty() {
                return Err(row_err("row t=0 must appear once, first".into()));
            }
            h0 = Some(h);
            continue;
        }
        if h0.is_none() {
            return Err(row_err("row t=0 with the initial shared state must come first".into()));
        }
        if t != obs.len() + 1 {
            return Err(row_err(format!("expected t={}, found t={t}", obs.len() + 1)));
        }
        let x = layout
            .x
            .iter()
            .enumerate()
            .map(|(i, &c)| num(c, &format!("x_{}", i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        let d_raw = num(layout.d, "d")?;
        if d_raw.fract() != 0.0 || !(0.0..=255.0).contains(&d_raw) {
            return Err(row_err(format!("column `d`: treatment must be 0 or 1, found {d_raw}")));
        }
        obs.push(Observation { x, d: d_raw as u8, h, y: num(layout.y, "y")? });
    }
    let Some(h0) = h0 else {
        return Err(TrajectoryFileError::Schema { path: p(), message: "missing row t=0".into() });
    };
    let traj = Trajectory { h0, obs, regime, design };
    validate_trajectory(&traj).map_err(|violations| TrajectoryFileError::Invalid { path: p(), violations })?;
    Ok(traj)
}

fn csv_error(path: &Path, e: csv::Error) -> TrajectoryFileError {
    let line = e.position().map_or(0, |pos| pos.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => TrajectoryFileError::Io { path: path.to_path_buf(), source },
        other => TrajectoryFileError::Row { path: path.to_path_buf(), line, message: format!("{other:?}") },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trajectory {
        Trajectory {
            h0: vec![1.0],
            obs: vec![
                Observation { x: vec![0.1, -2.0], d: 1, h: vec![0.75], y: 3.0000000000000004 },
                Observation { x: vec![1e-9, 5.5], d: 0, h: vec![1.25], y: -0.2 },
            ],
            regime: Regime::GeometricErgodic,
            design: None,
        }
    }

    #[test]
    fn write_format() {
        let mut buf = Vec::new();
        write_trajectory(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x_1,x_2,d,h_1,y");
        assert_eq!(lines[1], "0,,,,1,");
        assert_eq!(lines[2], "1,0.10000000000000001,-2,1,0.75,3.0000000000000004");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        write_trajectory_file(&sample(), &path).unwrap();
        let back = read_trajectory_file(&path, Regime::GeometricErgodic, None).unwrap();
        assert_eq!(back, sample());
    }

    #[test]
    fn schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "t,x_1,d,h_1\n0,,,1\n1,0.5,1,1\n").unwrap();
        let err = read_trajectory_file(&path, Regime::GeometricErgodic, None).unwrap_err();
        assert!(matches!(&err, TrajectoryFileError::MissingColumn { column, .. } if column == "y"), "{err}");

        fs::write(&path, "t,x_1,d,h_1,y\n0,,,1,\n1,0.5,2,1,0\n").unwrap();
        let err = read_trajectory_file(&path, Regime::GeometricErgodic, None).unwrap_err();
        assert!(err.to_string().contains("treatment not binary at t=1"), "{err}");

        fs::write(&path, "t,x_1,d,h_1,y\n0,,,1,\n1,abc,1,1,0\n").unwrap();
        let err = read_trajectory_file(&path, Regime::GeometricErgodic, None).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
