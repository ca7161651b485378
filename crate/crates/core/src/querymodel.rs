//! Query graphs: timeboxes joined by typed relalinks.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::PreprocessParams;
use crate::preprocess::Artifacts;
use crate::relations::{granger_min_len, ArithmeticSpec, RelationKind, DEFAULT_MAX_LAG};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Strict,
    Fuzzy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchPoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timebox {
    pub id: String,
    /// Absent for a default timebox.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Horizontal position in original samples; lag between boxes is the offset difference.
    #[serde(default)]
    pub offset: u64,
    /// Polyline in box coordinates: x in [0, box_length], y in [0, 1].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sketch: Option<Vec<SketchPoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_bounds: Option<[f64; 2]>,
}

impl Timebox {
    pub fn is_default(&self) -> bool {
        self.name.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relalink {
    pub id: String,
    pub kind: RelationKind,
    /// Cause for causality links.
    pub source: String,
    pub target: String,
    pub threshold: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arithmetic: Option<ArithmeticSpec>,
}

impl Relalink {
    pub fn accepts(&self, strength: f64) -> bool {
        strength >= self.threshold[0] && strength <= self.threshold[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryGraph {
    #[serde(default)]
    pub mode: Mode,
    pub sampling_length: usize,
    pub box_length: usize,
    /// Granger lag order for causality links.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_lag: Option<usize>,
    pub timeboxes: Vec<Timebox>,
    #[serde(default)]
    pub relalinks: Vec<Relalink>,
}

impl QueryGraph {
    pub fn params(&self) -> PreprocessParams {
        PreprocessParams { sampling_length: self.sampling_length, box_length: self.box_length }
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag.unwrap_or(DEFAULT_MAX_LAG)
    }

    pub fn timebox(&self, id: &str) -> Option<&Timebox> {
        self.timeboxes.iter().find(|b| b.id == id)
    }

    pub fn box_position(&self, id: &str) -> Option<usize> {
        self.timeboxes.iter().position(|b| b.id == id)
    }

    /// Required lag of a link in original samples: offset(target) - offset(source).
    pub fn required_lag(&self, link: &Relalink) -> Option<i64> {
        Some(self.timebox(&link.target)?.offset as i64 - self.timebox(&link.source)?.offset as i64)
    }
}

pub fn parse_query(json: &str) -> Result<QueryGraph, QueryError> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let query: QueryGraph = serde_path_to_error::deserialize(de).map_err(|e| QueryError::SchemaViolation {
        path: json_pointer(e.path()),
        message: e.inner().to_string(),
    })?;
    if let Some(i) = query.relalinks.iter().position(|l| l.kind == RelationKind::Lag) {
        return Err(QueryError::SchemaViolation {
            path: format!("/relalinks/{i}/kind"),
            message: "lag is expressed by timebox offsets, not as a relalink".into(),
        });
    }
    Ok(query)
}

pub fn serialize_query(query: &QueryGraph) -> String {
    serde_json::to_string_pretty(query).expect("query graphs always serialize")
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => {
                out.push('/');
                out.push_str(&key.replace('~', "~0").replace('/', "~1"));
            }
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => {}
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosticCode {
    NoTimeboxes,
    DuplicateId,
    DanglingEndpoint,
    SelfLink,
    LagRelalink,
    EmptyThreshold,
    ThresholdOutOfDomain,
    MissingMetaKey,
    UnexpectedMetaKey,
    UnknownMetaKey,
    MissingArithmetic,
    UnexpectedArithmetic,
    Disconnected,
    InvalidSketch,
    InvalidValueBounds,
    InvalidParams,
    ParamsMismatch,
    UnknownSeries,
    WindowTooLong,
    WindowTooShort,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryDiagnostic {
    pub code: DiagnosticCode,
    pub path: String,
    pub message: String,
}

impl fmt::Display for QueryDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: {}", self.code, self.path, self.message)
    }
}

fn diag(code: DiagnosticCode, path: impl Into<String>, message: impl Into<String>) -> QueryDiagnostic {
    QueryDiagnostic { code, path: path.into(), message: message.into() }
}

/// Checks that need no dataset: ids, endpoints, thresholds, sketches, connectivity.
pub fn validate_structure(q: &QueryGraph) -> Vec<QueryDiagnostic> {
    use DiagnosticCode::*;
    let mut out = Vec::new();
    if q.timeboxes.is_empty() {
        out.push(diag(NoTimeboxes, "/timeboxes", "a query needs at least one timebox"));
    }
    if let Err(e) = q.params().check() {
        out.push(diag(InvalidParams, "/box_length", e.to_string()));
    }
    let mut seen = HashSet::new();
    for (i, b) in q.timeboxes.iter().enumerate() {
        if !seen.insert(b.id.as_str()) {
            out.push(diag(DuplicateId, format!("/timeboxes/{i}/id"), format!("timebox id {:?} repeats", b.id)));
        }
        if let Some(sketch) = &b.sketch {
            if let Some(why) = sketch_problem(sketch, q.box_length as f64) {
                out.push(diag(InvalidSketch, format!("/timeboxes/{i}/sketch"), why));
            }
        }
        if let Some([lo, hi]) = b.value_bounds {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                out.push(diag(InvalidValueBounds, format!("/timeboxes/{i}/value_bounds"), "bounds must satisfy lo <= hi"));
            }
        }
    }
    let mut link_ids = HashSet::new();
    for (i, l) in q.relalinks.iter().enumerate() {
        let at = |field: &str| format!("/relalinks/{i}/{field}");
        if !link_ids.insert(l.id.as_str()) {
            out.push(diag(DuplicateId, at("id"), format!("relalink id {:?} repeats", l.id)));
        }
        for (field, end) in [("source", &l.source), ("target", &l.target)] {
            if q.timebox(end).is_none() {
                out.push(diag(DanglingEndpoint, at(field), format!("no timebox with id {end:?}")));
            }
        }
        if l.source == l.target {
            out.push(diag(SelfLink, at("target"), "a relalink needs two distinct timeboxes"));
        }
        if l.kind == RelationKind::Lag {
            out.push(diag(LagRelalink, at("kind"), "lag is set by timebox offsets"));
        }
        let [lo, hi] = l.threshold;
        let (dlo, dhi) = l.kind.domain();
        if !(lo <= hi) {
            out.push(diag(EmptyThreshold, at("threshold"), format!("empty interval [{lo}, {hi}]")));
        } else if lo < dlo || hi > dhi {
            out.push(diag(
                ThresholdOutOfDomain,
                at("threshold"),
                format!("[{lo}, {hi}] outside the {} domain [{dlo}, {dhi}]", l.kind),
            ));
        }
        match (l.kind == RelationKind::Meta, l.meta_key.is_some()) {
            (true, false) => out.push(diag(MissingMetaKey, at("meta_key"), "meta relalinks name a label key")),
            (false, true) => out.push(diag(UnexpectedMetaKey, at("meta_key"), "only meta relalinks take a label key")),
            _ => {}
        }
        match (l.kind == RelationKind::Arithmetic, l.arithmetic.is_some()) {
            (true, false) => out.push(diag(MissingArithmetic, at("arithmetic"), "arithmetic relalinks need op and cmp")),
            (false, true) => out.push(diag(UnexpectedArithmetic, at("arithmetic"), "only arithmetic relalinks take op and cmp")),
            _ => {}
        }
    }
    if !q.timeboxes.is_empty() && !is_connected(q) {
        out.push(diag(Disconnected, "/relalinks", "relalinks must connect every timebox"));
    }
    out
}

fn sketch_problem(sketch: &[SketchPoint], width: f64) -> Option<String> {
    if sketch.len() < 2 {
        return Some("a sketch needs at least two points".into());
    }
    if sketch.iter().any(|p| !(0.0..=1.0).contains(&p.y) || !(0.0..=width).contains(&p.x)) {
        return Some("points must lie inside the box".into());
    }
    if sketch.windows(2).any(|w| !(w[1].x > w[0].x)) {
        return Some("x must strictly increase".into());
    }
    None
}

fn is_connected(q: &QueryGraph) -> bool {
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    for l in &q.relalinks {
        adj.entry(l.source.as_str()).or_default().push(l.target.as_str());
        adj.entry(l.target.as_str()).or_default().push(l.source.as_str());
    }
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([q.timeboxes[0].id.as_str()]);
    while let Some(id) = queue.pop_front() {
        if seen.insert(id) {
            queue.extend(adj.get(id).into_iter().flatten().copied());
        }
    }
    q.timeboxes.iter().all(|b| seen.contains(b.id.as_str()))
}

/// Full validation against a dataset's artifacts. Empty iff the query can run.
pub fn validate_query(q: &QueryGraph, artifacts: &Artifacts) -> Vec<QueryDiagnostic> {
    use DiagnosticCode::*;
    let mut out = validate_structure(q);
    if q.params() != artifacts.params {
        out.push(diag(
            ParamsMismatch,
            "/sampling_length",
            format!(
                "query uses sampling {} / box {}, dataset was preprocessed with {} / {}",
                q.sampling_length, q.box_length, artifacts.params.sampling_length, artifacts.params.box_length
            ),
        ));
    }
    for (i, b) in q.timeboxes.iter().enumerate() {
        if let Some(name) = &b.name {
            if artifacts.series_index(name).is_none() {
                out.push(diag(UnknownSeries, format!("/timeboxes/{i}/name"), format!("no series named {name:?}")));
            }
        }
    }
    let window = artifacts.window_symbols();
    if window > artifacts.compressed_len() {
        out.push(diag(
            WindowTooLong,
            "/box_length",
            format!("window of {window} compressed samples exceeds series length {}", artifacts.compressed_len()),
        ));
    }
    for (i, l) in q.relalinks.iter().enumerate() {
        let needed = match l.kind {
            RelationKind::Correlation => 2,
            RelationKind::Causality => granger_min_len(1),
            _ => 1,
        };
        if window < needed {
            out.push(diag(
                WindowTooShort,
                format!("/relalinks/{i}/kind"),
                format!("{} needs fragments of at least {needed} compressed samples, window is {window}", l.kind),
            ));
        }
        if let Some(key) = &l.meta_key {
            if !artifacts.labels.has_key(key) {
                out.push(diag(UnknownMetaKey, format!("/relalinks/{i}/meta_key"), format!("no label key {key:?}")));
            }
        }
    }
    out
}

/// Timebox ids by ascending offset, ties by id.
pub fn temporal_order(q: &QueryGraph) -> Vec<&str> {
    let mut boxes: Vec<&Timebox> = q.timeboxes.iter().collect();
    boxes.sort_by(|a, b| a.offset.cmp(&b.offset).then_with(|| a.id.cmp(&b.id)));
    boxes.into_iter().map(|b| b.id.as_str()).collect()
}
