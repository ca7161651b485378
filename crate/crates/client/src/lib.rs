//! Thin async client for the relaq HTTP service.
//!
//! Query and guidance calls come in two flavours: `*_raw` returns the
//! response body exactly as the server sent it, the others decode it.

use relaq_core::matcher::QueryResponse;
use relaq_core::preprocess::BuildStatus;
use relaq_core::querymodel::QueryGraph;
use relaq_core::recommender::GuidanceMatrix;
use relaq_core::wire::{DatasetHandle, ErrorBody, GuidanceRequest, TrendSuggestion, UploadParams};
use reqwest::multipart::{Form, Part};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{status}: {} ({})", .body.error, .body.detail)]
    Api { status: StatusCode, body: ErrorBody },
    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("unexpected response body: {0}")]
    Decode(#[from] serde_json::Error),
}

impl ClientError {
    /// Server-side error code, e.g. `"UnknownSeries"`.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.error),
            _ => None,
        }
    }

    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self { base: base.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/v1{path}", self.base)
    }

    async fn text(&self, req: reqwest::RequestBuilder) -> Result<String, ClientError> {
        let resp = req.send().await?;
        let status = resp.status();
        let text = resp.text().await?;
        if status.is_success() {
            return Ok(text);
        }
        let body = serde_json::from_str(&text).unwrap_or_else(|_| ErrorBody::new(status.as_str(), text));
        Err(ClientError::Api { status, body })
    }

    async fn json<T: DeserializeOwned>(&self, req: reqwest::RequestBuilder) -> Result<T, ClientError> {
        Ok(serde_json::from_str(&self.text(req).await?)?)
    }

    pub async fn health(&self) -> Result<(), ClientError> {
        self.text(self.http.get(self.url("/health"))).await.map(drop)
    }

    pub async fn list(&self) -> Result<Vec<String>, ClientError> {
        self.json(self.http.get(self.url("/datasets"))).await
    }

    pub async fn upload(&self, data: Vec<u8>, config: Option<Vec<u8>>, params: &UploadParams) -> Result<DatasetHandle, ClientError> {
        let mut form = Form::new()
            .part("data", Part::bytes(data).file_name("data.csv"))
            .text("params", serde_json::to_string(params)?);
        if let Some(config) = config {
            form = form.part("config", Part::bytes(config).file_name("config.csv"));
        }
        self.json(self.http.post(self.url("/datasets")).multipart(form)).await
    }

    pub async fn status(&self, id: &str) -> Result<BuildStatus, ClientError> {
        self.json(self.http.get(self.url(&format!("/datasets/{id}/status")))).await
    }

    /// Run a query given as JSON text; returns the response body verbatim.
    pub async fn query_raw(&self, id: &str, query_json: &str) -> Result<String, ClientError> {
        let req = self
            .http
            .post(self.url(&format!("/datasets/{id}/queries")))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(query_json.to_string());
        self.text(req).await
    }

    pub async fn query(&self, id: &str, query: &QueryGraph) -> Result<QueryResponse, ClientError> {
        Ok(serde_json::from_str(&self.query_raw(id, &serde_json::to_string(query)?).await?)?)
    }

    pub async fn guidance_raw(&self, id: &str, request: &GuidanceRequest) -> Result<String, ClientError> {
        let req = self.http.post(self.url(&format!("/datasets/{id}/guidance"))).json(request);
        self.text(req).await
    }

    pub async fn guidance(&self, id: &str, request: &GuidanceRequest) -> Result<GuidanceMatrix, ClientError> {
        Ok(serde_json::from_str(&self.guidance_raw(id, request).await?)?)
    }

    /// Next-symbol ratios after `prefix` for one series, or across all series.
    pub async fn trend_suggestions(&self, id: &str, series: Option<&str>, prefix: &str) -> Result<Vec<TrendSuggestion>, ClientError> {
        let path = match series {
            Some(name) => format!("/datasets/{id}/series/{}/trend-suggestions", encode_segment(name)),
            None => format!("/datasets/{id}/trend-suggestions"),
        };
        let url = format!("{}?prefix={}", self.url(&path), encode_segment(prefix));
        self.json(self.http.get(url)).await
    }
}

/// Percent-encode a path segment; series names may hold spaces or slashes.
fn encode_segment(segment: &str) -> String {
    let mut out = String::with_capacity(segment.len());
    for b in segment.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}
