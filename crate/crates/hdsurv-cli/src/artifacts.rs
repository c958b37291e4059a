//! On-disk artifacts: the tagged model JSON every fitting command writes,
//! the provenance manifest placed next to each primary output, and the
//! numeric CSV formats. Floats are written with the shortest round-trip
//! representation, so reading an artifact back reproduces it bit for bit.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hdsurv::aftdantzig::DantzigFit;
use hdsurv::coxcore::CoxFit;
use hdsurv::coxnet::PathFit;
use hdsurv::cqr::CqrFit;
use hdsurv::error::{Error, Result};
use hdsurv::mlp::NetworkFit;
use hdsurv::screening::ScreenResult;
use hdsurv::scr::ScrFit;
use hdsurv::simulate::CompetingDraw;
use hdsurv::spares::{FusedCqrInference, ResampleInference};
use hdsurv::svm::SvmModel;
use hdsurv::trees::{BoostFit, Forest};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Result of a fitting command: the model self-describes its kind so
/// `predict` needs no extra flags, and the training column names travel
/// with it for prediction-time validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact {
    pub command: String,
    pub feature_names: Vec<String>,
    pub model: Model,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Cox { fit: CoxFit },
    Path { fit: PathFit },
    CoxNetwork { fit: NetworkFit },
    Svm { model: SvmModel },
    Forest { forest: Forest, oob_error: Option<f64> },
    Boost { fit: BoostFit },
    Scr { fit: ScrFit },
    Dantzig { fit: DantzigFit },
    Screen { result: ScreenResult },
    Spares { inference: ResampleInference },
    FusedCqr { inference: FusedCqrInference },
    Cqr { fit: CqrFit },
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_artifact(path: &Path) -> Result<Artifact> {
    let file = fs::File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Provenance record written next to every primary output. The wall time
/// is the only field allowed to differ between identical runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: FileDigest,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub versions: Versions,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub hdsurv: String,
    pub cli: String,
}

impl Versions {
    pub fn current() -> Self {
        Versions {
            hdsurv: hdsurv::VERSION.to_string(),
            cli: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex,
    })
}

/// `out.json` -> `out.manifest.json`, next to the primary output.
pub fn manifest_path(primary_output: &Path) -> PathBuf {
    let stem = primary_output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string());
    primary_output.with_file_name(format!("{stem}.manifest.json"))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn parse_field(raw: &str, path: &Path, line: usize) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        Error::validation(format!(
            "{}: line {} holds non-numeric field {raw:?}",
            path.display(),
            line + 2
        ))
    })
}

/// Reads any CSV this crate writes: a header row and all-numeric records.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv_reader(path)?;
    let header = reader
        .first()
        .ok_or_else(|| Error::validation(format!("{}: empty CSV", path.display())))?
        .clone();
    let mut rows = Vec::with_capacity(reader.len().saturating_sub(1));
    for (i, record) in reader.drain(1..).enumerate() {
        if record.len() != header.len() {
            return Err(Error::validation(format!(
                "{}: line {} has {} fields, expected {}",
                path.display(),
                i + 2,
                record.len(),
                header.len()
            )));
        }
        let mut row = Vec::with_capacity(record.len());
        for field in &record {
            row.push(parse_field(field, path, i)?);
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Minimal RFC-4180 reader: the formats this crate writes never quote, so
/// splitting on commas per line is exact.
fn csv_reader(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

/// Covariate matrix CSV: header names plus numeric rows, with outcome
/// columns removed by name first.
pub fn read_matrix_csv(path: &Path, drop_columns: &[String]) -> Result<(Vec<String>, Array2<f64>)> {
    let (header, rows) = read_numeric_csv(path)?;
    let keep: Vec<usize> = (0..header.len())
        .filter(|&j| !drop_columns.contains(&header[j]))
        .collect();
    if keep.is_empty() {
        return Err(Error::validation(format!(
            "{}: no covariate columns remain after dropping {drop_columns:?}",
            path.display()
        )));
    }
    let names: Vec<String> = keep.iter().map(|&j| header[j].clone()).collect();
    let mut flat = Vec::with_capacity(rows.len() * keep.len());
    for row in &rows {
        for &j in &keep {
            flat.push(row[j]);
        }
    }
    let x = Array2::from_shape_vec((rows.len(), keep.len()), flat)
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
    Ok((names, x))
}

pub fn write_competing_csv(path: &Path, draws: &[CompetingDraw], names: &[String]) -> Result<()> {
    let mut out = create(path)?;
    write!(out, "time,cause")?;
    for name in names {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for draw in draws {
        write!(out, "{},{}", draw.time, draw.cause)?;
        for value in &draw.covariates {
            write!(out, ",{value}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_competing_csv(path: &Path) -> Result<Vec<CompetingDraw>> {
    let (header, rows) = read_numeric_csv(path)?;
    if header.len() < 2 || header[0] != "time" || header[1] != "cause" {
        return Err(Error::validation(format!(
            "{}: expected a time,cause,... header",
            path.display()
        )));
    }
    rows.into_iter()
        .map(|row| {
            let cause = row[1];
            if cause < 0.0 || cause.fract() != 0.0 {
                return Err(Error::validation(format!(
                    "{}: cause {cause} is not a non-negative integer",
                    path.display()
                )));
            }
            Ok(CompetingDraw {
                time: row[0],
                cause: cause as usize,
                covariates: row[2..].to_vec(),
            })
        })
        .collect()
}

/// One value per input row under the given column name.
pub fn write_score_csv(path: &Path, column: &str, values: &[f64]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "row,{column}")?;
    for (i, value) in values.iter().enumerate() {
        writeln!(out, "{i},{value}")?;
    }
    out.flush()?;
    Ok(())
}

/// Tidy per-row curves: one record per (row, time) pair under the given
/// value column names.
pub fn write_curves_csv(
    path: &Path,
    columns: &[&str],
    times: &[f64],
    rows: &[Vec<Vec<f64>>],
) -> Result<()> {
    let mut out = create(path)?;
    write!(out, "row,time")?;
    for column in columns {
        write!(out, ",{column}")?;
    }
    writeln!(out)?;
    for (i, curves) in rows.iter().enumerate() {
        for (k, time) in times.iter().enumerate() {
            write!(out, "{i},{time}")?;
            for curve in curves {
                write!(out, ",{}", curve[k])?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Quantile predictions: one record per (row, tau) with the estimability
/// flag of that level.
pub fn write_quantile_csv(
    path: &Path,
    taus: &[f64],
    estimable: &[bool],
    values: &Array2<f64>,
) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "row,tau,quantile,estimable")?;
    for i in 0..values.nrows() {
        for (k, tau) in taus.iter().enumerate() {
            writeln!(
                out,
                "{i},{tau},{},{}",
                values[(i, k)],
                if estimable[k] { 1 } else { 0 }
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Per-transition log-risk sweep: value, then h for transitions 1->2
/// (progression), 1->3 (death), and 2->3 (death after progression).
pub fn write_sweep_csv(path: &Path, values: &[f64], risks: &[[f64; 3]]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "value,h12,h13,h23")?;
    for (value, h) in values.iter().zip(risks) {
        writeln!(out, "{value},{},{},{}", h[0], h[1], h[2])?;
    }
    out.flush()?;
    Ok(())
}
