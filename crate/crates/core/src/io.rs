//! CSV and JSON readers and writers for samples, scores, models and
//! result summaries.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::applications::ChangeScoreSeries;
use crate::derivative::MisedModel;
use crate::error::{MisedError, Result};
use crate::matrix::SampleMatrix;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| MisedError::invalid(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| MisedError::invalid(format!("cannot create {}: {e}", path.display())))
}

/// Parses a headed CSV of numeric columns into a sample matrix.
pub fn read_samples<R: Read>(reader: R) -> Result<(Vec<String>, SampleMatrix)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(MisedError::invalid("CSV header row is missing"));
    }
    let d = header.len();
    let mut data = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != d {
            return Err(MisedError::invalid(format!(
                "row {} has {} fields, expected {d}",
                line + 1,
                record.len()
            )));
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| MisedError::invalid(format!("row {}: {field:?} is not a number", line + 1)))?;
            data.push(v);
        }
    }
    if data.is_empty() {
        return Err(MisedError::invalid("CSV has no data rows"));
    }
    let n = data.len() / d;
    let m = SampleMatrix::new(n, d, data)?;
    if !m.all_finite() {
        return Err(MisedError::invalid("CSV contains non-finite values"));
    }
    Ok((header, m))
}

pub fn read_samples_file(path: impl AsRef<Path>) -> Result<(Vec<String>, SampleMatrix)> {
    read_samples(open(path.as_ref())?)
}

/// Default column names `x1, ..., xd`.
pub fn default_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

/// Writes named columns of equal length as a headed CSV.
pub fn write_columns<W: Write>(writer: W, header: &[String], columns: &[Vec<f64>]) -> Result<()> {
    if header.len() != columns.len() {
        return Err(MisedError::invalid("header and column counts differ"));
    }
    let n = columns.first().map_or(0, Vec::len);
    if columns.iter().any(|c| c.len() != n) {
        return Err(MisedError::invalid("columns differ in length"));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for i in 0..n {
        w.write_record(columns.iter().map(|c| c[i].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_samples<W: Write>(writer: W, samples: &SampleMatrix) -> Result<()> {
    let columns: Vec<Vec<f64>> = (0..samples.ncols()).map(|c| samples.column(c)).collect();
    write_columns(writer, &default_header(samples.ncols()), &columns)
}

pub fn write_samples_file(path: impl AsRef<Path>, samples: &SampleMatrix) -> Result<()> {
    write_samples(create(path.as_ref())?, samples)
}

/// Writes `t, score, is_true_change`; missing scores are empty fields.
pub fn write_scores<W: Write>(writer: W, series: &ChangeScoreSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "score", "is_true_change"])?;
    for ((t, s), label) in series.times.iter().zip(&series.scores).zip(series.labels()) {
        let score = s.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([t.to_string(), score, label.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scores_file(path: impl AsRef<Path>, series: &ChangeScoreSeries) -> Result<()> {
    write_scores(create(path.as_ref())?, series)
}

/// Per-seed AUC values of one method with their summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub method: String,
    pub auc: Vec<f64>,
    pub seeds: Vec<u64>,
    pub mean: f64,
    pub std: f64,
}

impl AucReport {
    pub fn new(method: impl Into<String>, seeds: Vec<u64>, auc: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&auc);
        Self {
            method: method.into(),
            auc,
            seeds,
            mean,
            std,
        }
    }
}

/// Mean and population standard deviation; NaN for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn write_json_file<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = create(path.as_ref())?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json_file<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let mut s = String::new();
    open(path)?.read_to_string(&mut s)?;
    serde_json::from_str(&s).map_err(|e| MisedError::invalid(format!("{}: {e}", path.display())))
}

pub fn save_model(path: impl AsRef<Path>, model: &MisedModel) -> Result<()> {
    write_json_file(path, &model.to_document())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MisedModel> {
    MisedModel::from_document(read_json_file(path)?)
}
