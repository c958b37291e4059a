//! Dataset containers and CSV ingestion for right-censored survival data and
//! illness-death (progression/death) records.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One right-censored observation: follow-up time, event indicator (true =
/// event observed, false = censored), covariate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoredRecord {
    pub time: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
}

/// Column-major survival dataset. `column_means`/`column_sds` are populated
/// by `standardize` so fitted coefficients can be mapped back to the input
/// scale; the SD convention is the sample SD with the n-1 denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    times: Vec<f64>,
    events: Vec<bool>,
    x: Array2<f64>,
    feature_names: Vec<String>,
    standardized: bool,
    column_means: Option<Vec<f64>>,
    column_sds: Option<Vec<f64>>,
}

impl SurvivalDataset {
    pub fn new(
        times: Vec<f64>,
        events: Vec<bool>,
        x: Array2<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(Error::validation("dataset must contain at least one row"));
        }
        if events.len() != n || x.nrows() != n {
            return Err(Error::validation(format!(
                "row count mismatch: {} times, {} events, {} covariate rows",
                n,
                events.len(),
                x.nrows()
            )));
        }
        if feature_names.len() != x.ncols() {
            return Err(Error::validation(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                x.ncols()
            )));
        }
        for (i, t) in times.iter().enumerate() {
            if !t.is_finite() || *t < 0.0 {
                return Err(Error::validation(format!(
                    "time must be finite and non-negative, got {t} at row {i}"
                )));
            }
        }
        if let Some(bad) = x.iter().position(|v| !v.is_finite()) {
            let (r, c) = (bad / x.ncols(), bad % x.ncols());
            return Err(Error::validation(format!(
                "non-finite covariate at row {r}, column {c}"
            )));
        }
        Ok(SurvivalDataset {
            times,
            events,
            x,
            feature_names,
            standardized: false,
            column_means: None,
            column_sds: None,
        })
    }

    pub fn from_records(records: &[CensoredRecord], feature_names: Vec<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::validation("dataset must contain at least one row"));
        }
        let p = records[0].covariates.len();
        for (i, r) in records.iter().enumerate() {
            if r.covariates.len() != p {
                return Err(Error::validation(format!(
                    "record {i} has {} covariates, expected {p}",
                    r.covariates.len()
                )));
            }
        }
        let mut x = Array2::zeros((records.len(), p));
        for (i, r) in records.iter().enumerate() {
            for j in 0..p {
                x[(i, j)] = r.covariates[j];
            }
        }
        SurvivalDataset::new(
            records.iter().map(|r| r.time).collect(),
            records.iter().map(|r| r.event).collect(),
            x,
            feature_names,
        )
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn event_count(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn covariate_row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn column_means(&self) -> Option<&[f64]> {
        self.column_means.as_deref()
    }

    pub fn column_sds(&self) -> Option<&[f64]> {
        self.column_sds.as_deref()
    }

    pub fn records(&self) -> Vec<CensoredRecord> {
        (0..self.n())
            .map(|i| CensoredRecord {
                time: self.times[i],
                event: self.events[i],
                covariates: self.x.row(i).to_vec(),
            })
            .collect()
    }

    /// Center to mean 0 and scale to sample SD 1 (n-1 denominator). The
    /// applied means and SDs are recorded on the returned dataset.
    pub fn standardize(&self) -> Result<Self> {
        let n = self.n();
        if n < 2 {
            return Err(Error::validation("standardization needs at least two rows"));
        }
        let p = self.p();
        let mut means = vec![0.0; p];
        let mut sds = vec![0.0; p];
        let mut x = self.x.clone();
        for j in 0..p {
            let col = self.x.column(j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            if var <= 0.0 {
                return Err(Error::validation(format!(
                    "column '{}' is constant; cannot standardize",
                    self.feature_names[j]
                )));
            }
            let sd = var.sqrt();
            means[j] = mean;
            sds[j] = sd;
            for i in 0..n {
                x[(i, j)] = (self.x[(i, j)] - mean) / sd;
            }
        }
        Ok(SurvivalDataset {
            times: self.times.clone(),
            events: self.events.clone(),
            x,
            feature_names: self.feature_names.clone(),
            standardized: true,
            column_means: Some(means),
            column_sds: Some(sds),
        })
    }

    /// Map coefficients fitted on this standardized dataset back to the
    /// original covariate scale. The linear predictor changes only by the
    /// constant sum(beta_j * mean_j / sd_j), which likelihoods based on risk
    /// sets absorb.
    pub fn back_transform_coefficients(&self, beta: &[f64]) -> Result<Vec<f64>> {
        let sds = self
            .column_sds
            .as_ref()
            .ok_or_else(|| Error::validation("dataset was not standardized"))?;
        if beta.len() != sds.len() {
            return Err(Error::validation("coefficient length mismatch"));
        }
        Ok(beta.iter().zip(sds).map(|(b, sd)| b / sd).collect())
    }

    /// Row subset in the given order. Standardization metadata is dropped
    /// because subset moments differ.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let p = self.p();
        let mut x = Array2::zeros((rows.len(), p));
        let mut times = Vec::with_capacity(rows.len());
        let mut events = Vec::with_capacity(rows.len());
        for (out, &i) in rows.iter().enumerate() {
            if i >= self.n() {
                return Err(Error::validation(format!("row index {i} out of range")));
            }
            times.push(self.times[i]);
            events.push(self.events[i]);
            for j in 0..p {
                x[(out, j)] = self.x[(i, j)];
            }
        }
        SurvivalDataset::new(times, events, x, self.feature_names.clone())
    }

    /// Column subset in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let mut x = Array2::zeros((self.n(), cols.len()));
        let mut names = Vec::with_capacity(cols.len());
        for (out, &j) in cols.iter().enumerate() {
            if j >= self.p() {
                return Err(Error::validation(format!("column index {j} out of range")));
            }
            names.push(self.feature_names[j].clone());
            for i in 0..self.n() {
                x[(i, out)] = self.x[(i, j)];
            }
        }
        SurvivalDataset::new(self.times.clone(), self.events.clone(), x, names)
    }
}

/// Column roles for survival CSV files. With `covariates: None`, every column
/// other than time and event is used, in file order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurvivalSchema {
    pub time: String,
    pub event: String,
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
}

impl Default for SurvivalSchema {
    fn default() -> Self {
        SurvivalSchema {
            time: "time".to_string(),
            event: "event".to_string(),
            covariates: None,
        }
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        Error::validation(format!(
            "non-numeric value '{raw}' at row {row}, column '{column}'"
        ))
    })
}

fn parse_indicator(raw: &str, row: usize, column: &str) -> Result<bool> {
    match raw.trim() {
        "0" | "false" | "FALSE" => Ok(false),
        "1" | "true" | "TRUE" => Ok(true),
        other => Err(Error::validation(format!(
            "indicator column '{column}' must be 0/1, got '{other}' at row {row}"
        ))),
    }
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::validation(format!("missing column '{name}'")))
}

/// Load a survival CSV. Row numbers in errors are 1-based data rows (the
/// header is row 0). Files with zero events are rejected: every likelihood
/// fit downstream needs at least one event.
pub fn load_csv(path: impl AsRef<Path>, schema: &SurvivalSchema) -> Result<SurvivalDataset> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let time_idx = header_index(&headers, &schema.time)?;
    let event_idx = header_index(&headers, &schema.event)?;
    let cov_idx: Vec<(usize, String)> = match &schema.covariates {
        Some(names) => names
            .iter()
            .map(|n| header_index(&headers, n).map(|i| (i, n.clone())))
            .collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != time_idx && *i != event_idx)
            .map(|(i, h)| (i, h.to_string()))
            .collect(),
    };

    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        times.push(parse_cell(&record[time_idx], row, &schema.time)?);
        events.push(parse_indicator(&record[event_idx], row, &schema.event)?);
        let mut covs = Vec::with_capacity(cov_idx.len());
        for (i, name) in &cov_idx {
            covs.push(parse_cell(&record[*i], row, name)?);
        }
        rows.push(covs);
    }
    if times.is_empty() {
        return Err(Error::validation("csv contains no data rows"));
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::validation(
            "csv contains zero event rows; at least one event is required",
        ));
    }
    let p = cov_idx.len();
    let mut x = Array2::zeros((times.len(), p));
    for (i, covs) in rows.iter().enumerate() {
        for j in 0..p {
            x[(i, j)] = covs[j];
        }
    }
    SurvivalDataset::new(
        times,
        events,
        x,
        cov_idx.into_iter().map(|(_, n)| n).collect(),
    )
}

/// Write a survival dataset in the schema `load_csv` reads back.
pub fn write_csv(path: impl AsRef<Path>, ds: &SurvivalDataset) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec!["time".to_string(), "event".to_string()];
    header.extend(ds.feature_names().iter().cloned());
    writer.write_record(&header)?;
    for i in 0..ds.n() {
        let mut row = vec![
            format!("{}", ds.times()[i]),
            if ds.events()[i] { "1" } else { "0" }.to_string(),
        ];
        for j in 0..ds.p() {
            row.push(format!("{}", ds.x()[(i, j)]));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// One illness-death observation. `y1` is the first-event time (progression
/// or censoring/death without progression), `d1` the progression indicator,
/// `y2` the terminal time, `d2` the death indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllnessDeathRecord {
    pub y1: f64,
    pub d1: bool,
    pub y2: f64,
    pub d2: bool,
    pub covariates: Vec<f64>,
}

impl IllnessDeathRecord {
    pub fn validate(&self, row: usize) -> Result<()> {
        if !self.y1.is_finite() || !self.y2.is_finite() || self.y1 < 0.0 {
            return Err(Error::validation(format!(
                "non-finite or negative time at row {row}"
            )));
        }
        if self.y1 > self.y2 {
            return Err(Error::validation(format!("y1 > y2 at row {row}")));
        }
        if !self.d1 && self.y1 != self.y2 {
            return Err(Error::validation(format!(
                "d1 = 0 requires y1 = y2 at row {row}"
            )));
        }
        // Zero sojourn after progression makes the third-transition Weibull
        // density degenerate for shape < 1; rejected at ingestion.
        if self.d1 && self.y1 == self.y2 {
            return Err(Error::validation(format!(
                "progression requires y1 < y2, got y1 = y2 at row {row}"
            )));
        }
        if self.covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite covariate at row {row}"
            )));
        }
        Ok(())
    }
}

/// Validated collection of illness-death records with shared feature names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllnessDeathDataset {
    records: Vec<IllnessDeathRecord>,
    feature_names: Vec<String>,
}

impl IllnessDeathDataset {
    pub fn new(records: Vec<IllnessDeathRecord>, feature_names: Vec<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::validation("dataset must contain at least one row"));
        }
        let p = feature_names.len();
        for (i, r) in records.iter().enumerate() {
            r.validate(i + 1)?;
            if r.covariates.len() != p {
                return Err(Error::validation(format!(
                    "record {} has {} covariates, expected {p}",
                    i + 1,
                    r.covariates.len()
                )));
            }
        }
        Ok(IllnessDeathDataset {
            records,
            feature_names,
        })
    }

    pub fn records(&self) -> &[IllnessDeathRecord] {
        &self.records
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn p(&self) -> usize {
        self.feature_names.len()
    }

    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let records = rows
            .iter()
            .map(|&i| {
                self.records
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::validation(format!("row index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        IllnessDeathDataset::new(records, self.feature_names.clone())
    }
}

/// Column roles for illness-death CSV files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IllnessDeathSchema {
    pub y1: String,
    pub d1: String,
    pub y2: String,
    pub d2: String,
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
}

impl Default for IllnessDeathSchema {
    fn default() -> Self {
        IllnessDeathSchema {
            y1: "y1".to_string(),
            d1: "d1".to_string(),
            y2: "y2".to_string(),
            d2: "d2".to_string(),
            covariates: None,
        }
    }
}

pub fn load_illness_death_csv(
    path: impl AsRef<Path>,
    schema: &IllnessDeathSchema,
) -> Result<IllnessDeathDataset> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let y1_idx = header_index(&headers, &schema.y1)?;
    let d1_idx = header_index(&headers, &schema.d1)?;
    let y2_idx = header_index(&headers, &schema.y2)?;
    let d2_idx = header_index(&headers, &schema.d2)?;
    let fixed = [y1_idx, d1_idx, y2_idx, d2_idx];
    let cov_idx: Vec<(usize, String)> = match &schema.covariates {
        Some(names) => names
            .iter()
            .map(|n| header_index(&headers, n).map(|i| (i, n.clone())))
            .collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| !fixed.contains(i))
            .map(|(i, h)| (i, h.to_string()))
            .collect(),
    };

    let mut records = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let rec = IllnessDeathRecord {
            y1: parse_cell(&record[y1_idx], row, &schema.y1)?,
            d1: parse_indicator(&record[d1_idx], row, &schema.d1)?,
            y2: parse_cell(&record[y2_idx], row, &schema.y2)?,
            d2: parse_indicator(&record[d2_idx], row, &schema.d2)?,
            covariates: cov_idx
                .iter()
                .map(|(i, name)| parse_cell(&record[*i], row, name))
                .collect::<Result<_>>()?,
        };
        rec.validate(row)?;
        records.push(rec);
    }
    IllnessDeathDataset::new(records, cov_idx.into_iter().map(|(_, n)| n).collect())
}

pub fn write_illness_death_csv(
    path: impl AsRef<Path>,
    ds: &IllnessDeathDataset,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec![
        "y1".to_string(),
        "d1".to_string(),
        "y2".to_string(),
        "d2".to_string(),
    ];
    header.extend(ds.feature_names().iter().cloned());
    writer.write_record(&header)?;
    for r in ds.records() {
        let mut row = vec![
            format!("{}", r.y1),
            if r.d1 { "1" } else { "0" }.to_string(),
            format!("{}", r.y2),
            if r.d2 { "1" } else { "0" }.to_string(),
        ];
        for v in &r.covariates {
            row.push(format!("{v}"));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Convenience constructor for matrices used directly in tests and bindings.
pub fn dataset_from_rows(
    times: &[f64],
    events: &[bool],
    rows: &[Vec<f64>],
) -> Result<SurvivalDataset> {
    let p = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut x = Array2::zeros((rows.len(), p));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != p {
            return Err(Error::validation("ragged covariate rows"));
        }
        for j in 0..p {
            x[(i, j)] = row[j];
        }
    }
    let names = (0..p).map(|j| format!("x{}", j + 1)).collect();
    SurvivalDataset::new(times.to_vec(), events.to_vec(), x, names)
}

pub fn linear_predictor(x: &Array2<f64>, beta: &Array1<f64>) -> Array1<f64> {
    x.dot(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn toy() -> SurvivalDataset {
        dataset_from_rows(
            &[1.0, 2.0, 3.0],
            &[true, false, true],
            &[vec![1.0, 0.5], vec![2.0, -0.5], vec![3.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn standardize_uses_sample_sd() {
        let ds = toy();
        let std = ds.standardize().unwrap();
        // column 1 is (1,2,3): mean 2, sample SD 1.
        assert_eq!(std.column_means().unwrap()[0], 2.0);
        assert_eq!(std.column_sds().unwrap()[0], 1.0);
        assert!((std.x()[(0, 0)] + 1.0).abs() < 1e-15);
        assert!((std.x()[(1, 0)]).abs() < 1e-15);
        assert!((std.x()[(2, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn standardize_rejects_constant_column() {
        let ds = dataset_from_rows(
            &[1.0, 2.0],
            &[true, true],
            &[vec![3.0, 1.0], vec![3.0, 2.0]],
        )
        .unwrap();
        let err = ds.standardize().unwrap_err();
        assert!(err.to_string().contains("x1"));
    }

    #[test]
    fn back_transform_preserves_centered_linear_predictor() {
        let ds = toy();
        let std = ds.standardize().unwrap();
        let beta_std = Array1::from(vec![0.7, -1.3]);
        let beta_raw = Array1::from(std.back_transform_coefficients(beta_std.as_slice().unwrap()).unwrap());
        let lp_std = linear_predictor(std.x(), &beta_std);
        let lp_raw = linear_predictor(ds.x(), &beta_raw);
        let center = |v: &Array1<f64>| {
            let m = v.sum() / v.len() as f64;
            v.mapv(|e| e - m)
        };
        let d = &center(&lp_std) - &center(&lp_raw);
        assert!(d.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn negative_time_rejected() {
        let err = dataset_from_rows(&[-1.0], &[true], &[vec![0.0]]).unwrap_err();
        assert!(err.to_string().contains("non-negative"));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = toy();
        write_csv(&path, &ds).unwrap();
        let back = load_csv(&path, &SurvivalSchema::default()).unwrap();
        assert_eq!(back.n(), 3);
        assert_eq!(back.feature_names(), ds.feature_names());
        assert_eq!(back.times(), ds.times());
        assert_eq!(back.events(), ds.events());
        assert_eq!(back.x(), ds.x());
    }

    #[test]
    fn csv_reports_bad_cell_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "time,event,x1").unwrap();
        writeln!(f, "1.0,1,0.5").unwrap();
        writeln!(f, "2.0,1,oops").unwrap();
        drop(f);
        let err = load_csv(&path, &SurvivalSchema::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("x1"), "{msg}");
    }

    #[test]
    fn csv_rejects_zero_events() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("noev.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "time,event,x1").unwrap();
        writeln!(f, "1.0,0,0.5").unwrap();
        drop(f);
        let err = load_csv(&path, &SurvivalSchema::default()).unwrap_err();
        assert!(err.to_string().contains("zero event"));
    }

    #[test]
    fn illness_death_invariants_enforced() {
        let bad_order = IllnessDeathRecord {
            y1: 2.0,
            d1: true,
            y2: 1.0,
            d2: true,
            covariates: vec![],
        };
        assert!(bad_order.validate(7).unwrap_err().to_string().contains("row 7"));

        let zero_sojourn = IllnessDeathRecord {
            y1: 1.0,
            d1: true,
            y2: 1.0,
            d2: true,
            covariates: vec![],
        };
        assert!(zero_sojourn.validate(1).is_err());

        let censored_needs_equal_times = IllnessDeathRecord {
            y1: 1.0,
            d1: false,
            y2: 2.0,
            d2: false,
            covariates: vec![],
        };
        assert!(censored_needs_equal_times.validate(1).is_err());

        let ok = IllnessDeathRecord {
            y1: 1.0,
            d1: true,
            y2: 2.0,
            d2: false,
            covariates: vec![],
        };
        assert!(ok.validate(1).is_ok());
    }

    #[test]
    fn illness_death_csv_cites_row_on_violation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("id.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "y1,d1,y2,d2,age").unwrap();
        for _ in 0..6 {
            writeln!(f, "1.0,1,2.0,1,55").unwrap();
        }
        writeln!(f, "3.0,1,2.0,1,61").unwrap();
        drop(f);
        let err = load_illness_death_csv(&path, &IllnessDeathSchema::default()).unwrap_err();
        assert!(err.to_string().contains("row 7"), "{err}");
    }
}
