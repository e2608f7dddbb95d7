//! Artifact files. Every write goes to a temporary file in the target
//! directory that is renamed into place once complete.

use std::fs;
use std::io::Write;
use std::path::Path;

use polyspec::density::{CurvePoint, DensityCurve};
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::config::{sidecar_path, RunConfig};
use crate::error::{CliError, CliResult};

pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let ctx = || format!("writing {}", path.display());
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(ctx(), e))?;
    fill(tmp.as_file_mut()).map_err(|e| CliError::io(ctx(), e))?;
    tmp.as_file_mut().sync_all().map_err(|e| CliError::io(ctx(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(ctx(), e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

#[derive(Serialize)]
struct Sidecar<'a, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    result: &'a R,
}

/// Writes `<artifact>.json` holding the resolved configuration and a result
/// summary.
pub fn write_sidecar<R: Serialize>(artifact: &Path, config: &RunConfig, result: &R) -> CliResult<()> {
    let sidecar = Sidecar {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config,
        result,
    };
    write_json(&sidecar_path(artifact), &sidecar)
}

/// The `config` entry of a sidecar file.
pub fn read_sidecar_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::parse(path.display(), e))?;
    let config = value.get("config").cloned().unwrap_or(value);
    serde_json::from_value(config)
        .map_err(|e| CliError::parse(format!("configuration in {}", path.display()), e))
}

pub fn write_curve(path: &Path, curve: &DensityCurve) -> CliResult<()> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "rho", "raw_rho", "iterations", "residual"])?;
        for p in &curve.points {
            out.write_record([
                format!("{:?}", p.t),
                format!("{:?}", p.rho),
                format!("{:?}", p.raw_rho),
                p.iterations.to_string(),
                format!("{:?}", p.residual),
            ])?;
        }
        out.flush()
    })
}

fn open_csv(path: &Path) -> CliResult<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CliError::io(format!("reading {}", path.display()), e),
            _ => CliError::parse(path.display(), e),
        })
}

fn cell(record: &csv::StringRecord, idx: usize, path: &Path) -> CliResult<f64> {
    let line = record.position().map_or(0, |p| p.line());
    record
        .get(idx)
        .and_then(|s| s.parse::<f64>().ok())
        .ok_or_else(|| CliError::Parse(format!("{} line {line}: expected a number in column {}", path.display(), idx + 1)))
}

/// Reads a curve written by [`write_curve`]. Rows whose raw density is not
/// finite are the gaps of the original run.
pub fn read_curve(path: &Path) -> CliResult<DensityCurve> {
    let mut reader = open_csv(path)?;
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::parse(path.display(), e))?;
        let raw_rho = cell(&record, 2, path)?;
        points.push(CurvePoint {
            t: cell(&record, 0, path)?,
            rho: cell(&record, 1, path)?,
            raw_rho,
            iterations: cell(&record, 3, path)? as usize,
            residual: cell(&record, 4, path)?,
            ok: raw_rho.is_finite(),
        });
    }
    if points.len() < 2 {
        return Err(CliError::Parse(format!("{} holds fewer than two points", path.display())));
    }
    if points.windows(2).any(|w| !(w[0].t < w[1].t)) {
        return Err(CliError::Parse(format!("{}: t must be strictly increasing", path.display())));
    }
    let ts: Vec<f64> = points.iter().map(|p| p.t).collect();
    let rhos: Vec<f64> = points.iter().map(|p| p.rho).collect();
    Ok(DensityCurve {
        mass: polyspec::density::trapezoid(&ts, &rhos),
        epsilon: f64::NAN,
        richardson: false,
        failures: Vec::new(),
        points,
    })
}

pub fn write_eigenvalues(path: &Path, eigs: &[f64]) -> CliResult<()> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["eigenvalue"])?;
        for e in eigs {
            out.write_record([format!("{e:?}")])?;
        }
        out.flush()
    })
}

/// Eigenvalues from the first column, sorted.
pub fn read_eigenvalues(path: &Path) -> CliResult<Vec<f64>> {
    let mut reader = open_csv(path)?;
    let mut eigs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::parse(path.display(), e))?;
        eigs.push(cell(&record, 0, path)?);
    }
    if eigs.is_empty() {
        return Err(CliError::Parse(format!("{} holds no eigenvalues", path.display())));
    }
    if eigs.iter().any(|e| !e.is_finite()) {
        return Err(CliError::Parse(format!("{} holds non-finite eigenvalues", path.display())));
    }
    eigs.sort_by(f64::total_cmp);
    Ok(eigs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eigs.csv");
        write_eigenvalues(&path, &[0.5, -1.0, 2.25]).unwrap();
        assert_eq!(read_eigenvalues(&path).unwrap(), vec![-1.0, 0.5, 2.25]);
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1, "temporary files left behind: {names:?}");
    }

    #[test]
    fn curve_round_trip_keeps_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let point = |t: f64, raw: f64| CurvePoint {
            t,
            rho: raw.max(0.0),
            raw_rho: raw,
            iterations: 3,
            residual: 1e-13,
            ok: raw.is_finite(),
        };
        let curve = DensityCurve {
            points: vec![point(0.0, 0.5), point(1.0, f64::NAN), point(2.0, 0.5)],
            epsilon: 1e-6,
            richardson: false,
            mass: 1.0,
            failures: Vec::new(),
        };
        write_curve(&path, &curve).unwrap();
        let back = read_curve(&path).unwrap();
        assert_eq!(back.points.len(), 3);
        assert!(!back.points[1].ok);
        assert_eq!(back.points[2].rho, 0.5);
    }

    #[test]
    fn malformed_files_are_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eigs.csv");
        fs::write(&path, "eigenvalue\n1.0\nabc\n").unwrap();
        assert!(matches!(read_eigenvalues(&path), Err(CliError::Parse(_))));
        assert!(matches!(read_eigenvalues(&dir.path().join("missing.csv")), Err(CliError::Io(_))));
    }
}
