//! Request and response bodies shared by the HTTP service and its client.

use serde::{Deserialize, Serialize};

use crate::datamodel::{Diagnostic, PreprocessParams};
use crate::preprocess::BuildStatus;
use crate::querymodel::{QueryDiagnostic, QueryGraph};

/// The `params` part of a dataset upload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadParams {
    pub sampling_length: usize,
    pub box_length: usize,
    #[serde(default = "default_step_unit")]
    pub step_unit: String,
}

fn default_step_unit() -> String {
    "step".into()
}

impl UploadParams {
    pub fn preprocess(&self) -> PreprocessParams {
        PreprocessParams { sampling_length: self.sampling_length, box_length: self.box_length }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetHandle {
    pub id: String,
    pub params: PreprocessParams,
    pub step_unit: String,
    pub series: usize,
    pub length: usize,
    pub status: BuildStatus,
    #[serde(default)]
    pub warnings: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GuidanceRequest {
    pub query: QueryGraph,
    pub focus: String,
    /// Largest lag to try, in compressed steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_lag_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSuggestion {
    pub symbol: char,
    pub ratio: f64,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<QueryDiagnostic>,
}

impl ErrorBody {
    pub fn new(error: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { error: error.into(), detail: detail.into(), path: None, row: None, diagnostics: Vec::new() }
    }
}
