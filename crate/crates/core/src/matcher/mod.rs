//! Query execution: node sets, link sets, then a memoized depth-first search.

mod fragments;
mod links;
mod report;
mod search;
mod seed;

use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::preprocess::{Artifacts, PreprocessError};
use crate::querymodel::{validate_query, QueryDiagnostic, QueryGraph};

pub use fragments::{enumerate_fragments, filter_nodes, rasterize_sketch, trend_match_degree, Node, DEGREE_THRESHOLD};
pub use links::{build_links, lag_accepted, pair_strength, LinkSet};
pub use report::{
    AlternativeEntry, ColumnSummary, FragmentReport, LagCount, LinkReport, LinkStats, MatchResult, QueryResponse,
    Summary, HISTOGRAM_BINS,
};
pub use search::{rank_raw, score, search, unsatisfied_budget, DatasetGraph, RawResult, SearchOptions, SearchOutcome};
pub use seed::{seed_candidates, TOP_CANDIDATES};

pub(crate) use fragments::fragment_view;

/// Default cap on returned results.
pub const RESULT_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error("window of {window} compressed samples exceeds series length {len}")]
    WindowTooLong { window: usize, len: usize },
    #[error("sketch needs at least two points spanning a positive x-range")]
    DegenerateSketch,
    #[error("fragment has {fragment} samples but the sketch raster has {raster}")]
    LengthMismatch { fragment: usize, raster: usize },
    #[error("no series named {0:?}")]
    UnknownSeries(String),
    #[error(transparent)]
    Index(#[from] PreprocessError),
    #[error("invalid query: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<QueryDiagnostic>),
}

#[derive(Debug, Clone)]
pub struct MatchConfig {
    pub result_cap: usize,
    /// Disabling memoization changes speed only, never results.
    pub memoize: bool,
    pub degree_threshold: f64,
    pub top_candidates: usize,
    pub deadline: Option<Instant>,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            result_cap: RESULT_CAP,
            memoize: true,
            degree_threshold: DEGREE_THRESHOLD,
            top_candidates: TOP_CANDIDATES,
            deadline: None,
            cancel: None,
        }
    }
}

/// A finished search with the graph it ran over.
#[derive(Debug, Clone)]
pub struct QueryRun {
    pub graph: DatasetGraph,
    pub outcome: SearchOutcome,
}

/// Build the dataset graph for a validated query.
pub fn build_graph(q: &QueryGraph, artifacts: &Artifacts, config: &MatchConfig) -> Result<DatasetGraph, MatchError> {
    let mut nodes = Vec::with_capacity(q.timeboxes.len());
    for (i, tb) in q.timeboxes.iter().enumerate() {
        let candidates = seed_candidates(q, i, artifacts, config.top_candidates)?;
        nodes.push(filter_nodes(tb, &candidates, artifacts, q.mode, config.degree_threshold)?);
    }
    let max_lag = q.max_lag();
    let mut endpoints = Vec::with_capacity(q.relalinks.len());
    let mut link_sets = Vec::with_capacity(q.relalinks.len());
    for link in &q.relalinks {
        let s = q.box_position(&link.source).expect("validated endpoint");
        let t = q.box_position(&link.target).expect("validated endpoint");
        let lag = q.required_lag(link).expect("validated endpoint");
        link_sets.push(build_links(link, lag, &nodes[s], &nodes[t], artifacts, q.mode, max_lag));
        endpoints.push((s, t));
    }
    let order = crate::querymodel::temporal_order(q)
        .into_iter()
        .map(|id| q.box_position(id).expect("own id"))
        .collect();
    let mut by_name: Vec<usize> = (0..artifacts.series.len()).collect();
    by_name.sort_by(|&a, &b| artifacts.series[a].name.cmp(&artifacts.series[b].name));
    let mut name_rank = vec![0u32; by_name.len()];
    for (rank, &i) in by_name.iter().enumerate() {
        name_rank[i] = rank as u32;
    }
    Ok(DatasetGraph { nodes, links: link_sets, endpoints, order, name_rank })
}

/// Validate, build the dataset graph and search it.
pub fn run_query(q: &QueryGraph, artifacts: &Artifacts, config: &MatchConfig) -> Result<QueryRun, MatchError> {
    let diagnostics = validate_query(q, artifacts);
    if !diagnostics.is_empty() {
        return Err(MatchError::Invalid(diagnostics));
    }
    let graph = build_graph(q, artifacts, config)?;
    let opts = SearchOptions {
        mode: q.mode,
        cap: config.result_cap,
        memoize: config.memoize,
        deadline: config.deadline,
        cancel: config.cancel.as_deref(),
    };
    let outcome = search(&graph, &opts);
    Ok(QueryRun { graph, outcome })
}

/// Run a query and report ranked results with their summary.
pub fn execute_query(q: &QueryGraph, artifacts: &Artifacts, config: &MatchConfig) -> Result<QueryResponse, MatchError> {
    let run = run_query(q, artifacts, config)?;
    Ok(report::build_response(q, artifacts, &run))
}
