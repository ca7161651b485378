//! Dataset and label ingestion.
//!
//! A dataset file is a CSV whose first column is a timestamp and whose
//! remaining columns are series. A config file is a CSV with one row per
//! series, `name,<key1>,<key2>,...`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of SAX symbols. Fixed.
pub const ALPHABET_SIZE: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("dataset is empty: {0}")]
    EmptyDataset(String),
    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("row {row}: timestamp does not increase")]
    NonMonotonicTime { row: usize },
    #[error("row {row}: timestamp step differs from the first step")]
    NonUniformStep { row: usize },
    #[error("row {row}: cannot parse timestamp {value:?}")]
    BadTimestamp { row: usize, value: String },
    #[error("row {row}, column {column:?}: non-numeric cell {value:?}")]
    NonNumericCell { row: usize, column: String, value: String },
    #[error("invalid series name {0:?}")]
    InvalidSeriesName(String),
    #[error("duplicate series column {0:?}")]
    DuplicateSeriesName(String),
    #[error("row {row}: duplicate label row for series {name:?}")]
    DuplicateSeriesRow { row: usize, name: String },
    #[error("config header must start with a `name` column")]
    MissingNameColumn,
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

impl DataError {
    /// Stable identifier used in wire error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            DataError::EmptyDataset(_) => "EmptyDataset",
            DataError::RaggedRows { .. } => "RaggedRows",
            DataError::NonMonotonicTime { .. } => "NonMonotonicTime",
            DataError::NonUniformStep { .. } => "NonUniformStep",
            DataError::BadTimestamp { .. } => "BadTimestamp",
            DataError::NonNumericCell { .. } => "NonNumericCell",
            DataError::InvalidSeriesName(_) => "InvalidSeriesName",
            DataError::DuplicateSeriesName(_) => "DuplicateSeriesName",
            DataError::DuplicateSeriesRow { .. } => "DuplicateSeriesRow",
            DataError::MissingNameColumn => "MissingNameColumn",
            DataError::Csv(_) => "MalformedCsv",
            DataError::InvalidParams(_) => "InvalidParams",
        }
    }

    /// Offending data row (1-based, header excluded), when there is one.
    pub fn row(&self) -> Option<usize> {
        match self {
            DataError::RaggedRows { row, .. }
            | DataError::NonMonotonicTime { row }
            | DataError::NonUniformStep { row }
            | DataError::BadTimestamp { row, .. }
            | DataError::NonNumericCell { row, .. }
            | DataError::DuplicateSeriesRow { row, .. } => Some(*row),
            _ => None,
        }
    }
}

/// Uniformly sampled multiple time series, all of length `len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    timestamps: Vec<String>,
    times: Vec<f64>,
    names: Vec<String>,
    series: Vec<Vec<f64>>,
    lookup: HashMap<String, usize>,
    step_unit: String,
}

impl Dataset {
    /// Build from already-split columns; runs the same checks as [`parse_dataset`].
    pub fn from_columns(
        timestamps: Vec<String>,
        names: Vec<String>,
        series: Vec<Vec<f64>>,
    ) -> Result<Self, DataError> {
        if names.is_empty() {
            return Err(DataError::EmptyDataset("no series columns".into()));
        }
        if timestamps.len() < 2 {
            return Err(DataError::EmptyDataset(format!(
                "need at least 2 time points, found {}",
                timestamps.len()
            )));
        }
        let mut lookup = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            check_series_name(name)?;
            if lookup.insert(name.clone(), i).is_some() {
                return Err(DataError::DuplicateSeriesName(name.clone()));
            }
        }
        for (name, values) in names.iter().zip(&series) {
            if values.len() != timestamps.len() {
                return Err(DataError::RaggedRows {
                    row: values.len().min(timestamps.len()) + 1,
                    expected: timestamps.len(),
                    found: values.len(),
                });
            }
            if let Some(row) = values.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonNumericCell {
                    row: row + 1,
                    column: name.clone(),
                    value: values[row].to_string(),
                });
            }
        }
        let times = timestamps
            .iter()
            .enumerate()
            .map(|(i, t)| parse_time(t).ok_or_else(|| DataError::BadTimestamp { row: i + 1, value: t.clone() }))
            .collect::<Result<Vec<_>, _>>()?;
        check_time_grid(&times)?;
        Ok(Self {
            timestamps,
            times,
            names,
            series,
            lookup,
            step_unit: "step".to_string(),
        })
    }

    pub fn with_step_unit(mut self, unit: impl Into<String>) -> Self {
        self.step_unit = unit.into();
        self
    }

    /// Series length M.
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Series count N.
    pub fn series_count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps
    }

    pub fn step_unit(&self) -> &str {
        &self.step_unit
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.index_of(name).map(|i| self.series[i].as_slice())
    }

    pub fn series_at(&self, index: usize) -> &[f64] {
        &self.series[index]
    }

    /// Constant step between consecutive time points, in parsed time units.
    pub fn step(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// CSV text accepted back by [`parse_dataset`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp");
        for name in &self.names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (row, ts) in self.timestamps.iter().enumerate() {
            out.push_str(ts);
            for column in &self.series {
                out.push(',');
                out.push_str(&column[row].to_string());
            }
            out.push('\n');
        }
        out
    }
}

fn check_series_name(name: &str) -> Result<(), DataError> {
    if name.is_empty() || name.contains([',', '\n', '\r']) {
        return Err(DataError::InvalidSeriesName(name.to_string()));
    }
    Ok(())
}

/// Numbers are taken as-is; otherwise RFC 3339 and a few common date-time
/// layouts are converted to epoch seconds.
fn parse_time(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_millis()) / 1000.0);
    }
    for layout in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y/%m/%d %H:%M:%S", "%Y/%m/%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, layout) {
            return Some(dt.and_utc().timestamp() as f64);
        }
    }
    for layout in ["%Y-%m-%d", "%Y/%m/%d"] {
        if let Ok(d) = NaiveDate::parse_from_str(raw, layout) {
            return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp() as f64);
        }
    }
    None
}

fn check_time_grid(times: &[f64]) -> Result<(), DataError> {
    let step = times[1] - times[0];
    for (i, pair) in times.windows(2).enumerate() {
        let delta = pair[1] - pair[0];
        // rows are 1-based; pair[1] is data row i + 2
        if delta <= 0.0 {
            return Err(DataError::NonMonotonicTime { row: i + 2 });
        }
        if (delta - step).abs() > STEP_TOLERANCE * step.abs() {
            return Err(DataError::NonUniformStep { row: i + 2 });
        }
    }
    Ok(())
}

/// Relative step jitter tolerated, so timestamps printed with a few
/// decimals (0.0039, 0.0078, ...) still count as a uniform grid.
const STEP_TOLERANCE: f64 = 0.1;

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

/// Parse a dataset CSV: header `timestamp,<name1>,<name2>,...`.
pub fn parse_dataset(csv_text: &str) -> Result<Dataset, DataError> {
    let mut reader = csv_reader(csv_text);
    let header = reader.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
    if header.len() < 2 {
        return Err(DataError::EmptyDataset("header needs a timestamp and at least one series column".into()));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut timestamps = Vec::new();
    let mut series = vec![Vec::new(); names.len()];
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != header.len() {
            return Err(DataError::RaggedRows { row, expected: header.len(), found: record.len() });
        }
        timestamps.push(record[0].to_string());
        for (j, cell) in record.iter().skip(1).enumerate() {
            let value = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                DataError::NonNumericCell { row, column: names[j].clone(), value: cell.to_string() }
            })?;
            series[j].push(value);
        }
    }
    if timestamps.is_empty() {
        return Err(DataError::EmptyDataset("no data rows".into()));
    }
    Dataset::from_columns(timestamps, names, series)
}

/// Per-series semantic labels from the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetaLabels {
    keys: Vec<String>,
    labels: BTreeMap<String, BTreeMap<String, String>>,
}

impl MetaLabels {
    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn has_key(&self, key: &str) -> bool {
        self.keys.iter().any(|k| k == key)
    }

    pub fn get(&self, series: &str, key: &str) -> Option<&str> {
        self.labels.get(series)?.get(key).map(String::as_str)
    }

    pub fn series(&self) -> impl Iterator<Item = &str> {
        self.labels.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn insert(&mut self, series: &str, key: &str, value: &str) {
        if !self.has_key(key) {
            self.keys.push(key.to_string());
        }
        self.labels
            .entry(series.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }
}

/// Parse a config CSV with header `name,<key>,...`. Empty cells are absent labels.
pub fn parse_config(csv_text: &str) -> Result<MetaLabels, DataError> {
    if csv_text.trim().is_empty() {
        return Ok(MetaLabels::default());
    }
    let mut reader = csv_reader(csv_text);
    let header = reader.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
    if header.get(0) != Some("name") {
        return Err(DataError::MissingNameColumn);
    }
    let keys: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut labels: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        let name = record.get(0).unwrap_or_default();
        if name.is_empty() {
            continue;
        }
        if record.len() > header.len() {
            return Err(DataError::RaggedRows { row, expected: header.len(), found: record.len() });
        }
        if labels.contains_key(name) {
            return Err(DataError::DuplicateSeriesRow { row, name: name.to_string() });
        }
        let row_labels = keys
            .iter()
            .zip(record.iter().skip(1))
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| (k.clone(), v.to_string()))
            .collect();
        labels.insert(name.to_string(), row_labels);
    }
    Ok(MetaLabels { keys, labels })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "series")]
pub enum Diagnostic {
    /// Label row for a series the dataset does not contain.
    UnknownSeries(String),
    /// Dataset series without a label row.
    UnlabeledSeries(String),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::UnknownSeries(s) => write!(f, "label row for unknown series {s:?}"),
            Diagnostic::UnlabeledSeries(s) => write!(f, "series {s:?} has no label row"),
        }
    }
}

/// Cross-check labels against the dataset.
pub fn validate(dataset: &Dataset, labels: &MetaLabels) -> Vec<Diagnostic> {
    let mut out: Vec<Diagnostic> = labels
        .series()
        .filter(|s| dataset.index_of(s).is_none())
        .map(|s| Diagnostic::UnknownSeries(s.to_string()))
        .collect();
    if !labels.is_empty() {
        out.extend(
            dataset
                .names()
                .iter()
                .filter(|n| !labels.labels.contains_key(n.as_str()))
                .map(|n| Diagnostic::UnlabeledSeries(n.clone())),
        );
    }
    out
}

/// User-chosen compression and window lengths, in original samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreprocessParams {
    pub sampling_length: usize,
    pub box_length: usize,
}

impl PreprocessParams {
    pub fn new(sampling_length: usize, box_length: usize) -> Result<Self, DataError> {
        let params = Self { sampling_length, box_length };
        params.check()?;
        Ok(params)
    }

    pub fn check(&self) -> Result<(), DataError> {
        if self.sampling_length == 0 || self.box_length == 0 {
            return Err(DataError::InvalidParams("lengths must be positive".into()));
        }
        if self.box_length < self.sampling_length {
            return Err(DataError::InvalidParams(format!(
                "box length {} is shorter than sampling length {}",
                self.box_length, self.sampling_length
            )));
        }
        Ok(())
    }

    /// Window length in compressed samples: box / sampling, rounded.
    pub fn window_symbols(&self) -> usize {
        ((self.box_length as f64 / self.sampling_length as f64).round() as usize).max(1)
    }

    pub fn alphabet_size(&self) -> usize {
        ALPHABET_SIZE
    }

    /// Compressed length for a series of `len` original samples.
    pub fn compressed_len(&self, len: usize) -> usize {
        len.div_ceil(self.sampling_length)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let ds = parse_dataset("t,SF,LA\n1,1.0,2.0\n2,1.5,2.5\n3,2.0,3.0\n").unwrap();
        assert_eq!(ds.series_count(), 2);
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.series("LA").unwrap(), &[2.0, 2.5, 3.0]);
    }

    #[test]
    fn crlf_accepted() {
        let ds = parse_dataset("t,A\r\n0,1\r\n1,2\r\n").unwrap();
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn backwards_time_names_row() {
        let text = "t,A\n1,0\n2,0\n3,0\n4,0\n3,0\n";
        assert_eq!(parse_dataset(text), Err(DataError::NonMonotonicTime { row: 5 }));
    }

    #[test]
    fn non_uniform_rejected() {
        let text = "t,A\n1,0\n2,0\n4,0\n";
        assert_eq!(parse_dataset(text), Err(DataError::NonUniformStep { row: 3 }));
        assert_eq!(parse_dataset("t,A\n1,0\n2,0\n3.2,0\n"), Err(DataError::NonUniformStep { row: 3 }));
    }

    #[test]
    fn rounded_timestamps_are_uniform() {
        let text = "t,A\n0,0\n0.0039,1\n0.0078,2\n0.0117,3\n0.0156,4\n0.0195,5\n0.0234,6\n0.0273,7\n0.0313,8\n";
        assert_eq!(parse_dataset(text).unwrap().len(), 9);
    }

    #[test]
    fn ragged_and_non_numeric() {
        assert!(matches!(parse_dataset("t,A,B\n1,0,1\n2,0\n"), Err(DataError::RaggedRows { row: 2, .. })));
        assert!(matches!(parse_dataset("t,A\n1,0\n2,\n"), Err(DataError::NonNumericCell { row: 2, .. })));
        assert!(matches!(parse_dataset("t,A\n1,0\n2,x\n"), Err(DataError::NonNumericCell { row: 2, .. })));
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(parse_dataset("t,A\n"), Err(DataError::EmptyDataset(_))));
        assert!(matches!(parse_dataset("t\n1\n2\n"), Err(DataError::EmptyDataset(_))));
        assert!(matches!(parse_dataset("t,A\n1,2\n"), Err(DataError::EmptyDataset(_))));
    }

    #[test]
    fn datetime_timestamps() {
        let ds = parse_dataset("time,A\n2020-01-01 00:00:00,1\n2020-01-01 01:00:00,2\n2020-01-01 02:00:00,3\n").unwrap();
        assert_eq!(ds.step(), 3600.0);
        let err = parse_dataset("time,A\n2020-01-01,1\n2020-01-03,2\n2020-01-04,3\n").unwrap_err();
        assert_eq!(err, DataError::NonUniformStep { row: 3 });
    }

    #[test]
    fn round_trip_csv() {
        let ds = parse_dataset("t,SF,LA\n1,1.25,2\n2,-1e-3,2.5\n3,2,3\n").unwrap();
        assert_eq!(parse_dataset(&ds.to_csv()).unwrap(), ds);
    }

    #[test]
    fn config_parsing() {
        let labels = parse_config("name,State\nSF,CA\nLA,CA").unwrap();
        assert_eq!(labels.get("SF", "State"), Some("CA"));
        assert_eq!(labels.get("LA", "State"), Some("CA"));
        assert!(parse_config("").unwrap().is_empty());
        assert_eq!(parse_config("series,State\nSF,CA"), Err(DataError::MissingNameColumn));
        assert!(matches!(
            parse_config("name,State\nSF,CA\nSF,NV"),
            Err(DataError::DuplicateSeriesRow { row: 2, .. })
        ));
        let sparse = parse_config("name,State,Coast\nSF,CA,\nLA,,W").unwrap();
        assert_eq!(sparse.get("SF", "Coast"), None);
        assert_eq!(sparse.get("LA", "Coast"), Some("W"));
    }

    #[test]
    fn validate_cross_references() {
        let ds = parse_dataset("t,SF,LA\n1,1,2\n2,1,2\n").unwrap();
        assert!(validate(&ds, &parse_config("name,State\nSF,CA\nLA,CA").unwrap()).is_empty());
        let diags = validate(&ds, &parse_config("name,State\nSF,CA\nLA,CA\nSD,CA").unwrap());
        assert_eq!(diags, vec![Diagnostic::UnknownSeries("SD".into())]);
        let diags = validate(&ds, &parse_config("name,State\nLA,CA").unwrap());
        assert_eq!(diags, vec![Diagnostic::UnlabeledSeries("SF".into())]);
    }

    #[test]
    fn window_symbols_rounding() {
        assert_eq!(PreprocessParams::new(4, 8).unwrap().window_symbols(), 2);
        assert_eq!(PreprocessParams::new(5, 100).unwrap().window_symbols(), 20);
        assert_eq!(PreprocessParams::new(4, 10).unwrap().window_symbols(), 3);
        assert_eq!(PreprocessParams::new(4, 9).unwrap().window_symbols(), 2);
        assert!(PreprocessParams::new(4, 3).is_err());
        assert!(PreprocessParams::new(0, 3).is_err());
        assert_eq!(PreprocessParams::new(5, 100).unwrap().compressed_len(256), 52);
    }
}
