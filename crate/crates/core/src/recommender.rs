//! Guidance: which series, relation and lag could extend a query from a focus timebox.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcher::{fragment_view, run_query, MatchConfig, MatchError, TOP_CANDIDATES};
use crate::preprocess::{Artifacts, IndexKind};
use crate::querymodel::{QueryGraph, Relalink, Timebox};
use crate::relations::{self, RelationKind, StrengthContext};

/// Rows kept in the guidance matrix.
pub const MAX_ROWS: usize = 20;
/// Lowered from the mean strength when pre-setting a suggested link's threshold.
pub const THRESHOLD_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecommendError {
    #[error("no timebox {0:?} in the query")]
    UnknownFocus(String),
    #[error("default timebox {0:?} has no matched fragments to recommend from")]
    FocusUnresolved(String),
    #[error(transparent)]
    Match(#[from] MatchError),
}

/// Strengths that count as a passing evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassThresholds {
    /// Applied to |strength|.
    pub correlation: f64,
    pub similarity: f64,
    pub causality: f64,
}

impl Default for PassThresholds {
    fn default() -> Self {
        Self { correlation: 0.8, similarity: 0.8, causality: 0.95 }
    }
}

impl PassThresholds {
    pub fn passes(&self, kind: IndexKind, strength: f64) -> bool {
        match kind {
            IndexKind::Correlation => strength.abs() >= self.correlation,
            IndexKind::Similarity => strength >= self.similarity,
            IndexKind::Causality => strength >= self.causality,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RecommendConfig {
    pub thresholds: PassThresholds,
    /// Largest lag tried, in compressed steps; defaults to one window.
    pub max_lag_steps: Option<usize>,
    pub matching: MatchConfig,
}

/// A timebox and relalink that add one recommendation to the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDelta {
    pub timebox: Timebox,
    pub relalink: Relalink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Recommendation {
    pub series: String,
    pub kind: RelationKind,
    /// Lag from the focus fragment to the suggested one, in original samples.
    pub best_lag: i64,
    pub mean_strength: f64,
    pub confidence: f64,
    pub passes: usize,
    pub evaluations: usize,
    pub query_delta: QueryDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceRow {
    pub series: String,
    pub correlation: Option<Recommendation>,
    pub similarity: Option<Recommendation>,
    pub causality: Option<Recommendation>,
}

impl GuidanceRow {
    pub fn cell(&self, kind: IndexKind) -> Option<&Recommendation> {
        match kind {
            IndexKind::Correlation => self.correlation.as_ref(),
            IndexKind::Similarity => self.similarity.as_ref(),
            IndexKind::Causality => self.causality.as_ref(),
        }
    }

    fn cell_mut(&mut self, kind: IndexKind) -> &mut Option<Recommendation> {
        match kind {
            IndexKind::Correlation => &mut self.correlation,
            IndexKind::Similarity => &mut self.similarity,
            IndexKind::Causality => &mut self.causality,
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = &Recommendation> {
        IndexKind::ALL.into_iter().filter_map(|k| self.cell(k))
    }

    pub fn max_confidence(&self) -> f64 {
        self.cells().map(|c| c.confidence).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GuidanceMatrix {
    pub focus: String,
    /// Matched focus fragments the evaluations ran against.
    pub fragments: usize,
    pub rows: Vec<GuidanceRow>,
}

impl GuidanceMatrix {
    /// Rows ordered by one column's confidence, highest first. Stable, so
    /// equal confidences keep their current order; rows without the cell go last.
    pub fn sorted_by(&self, kind: IndexKind) -> Vec<&GuidanceRow> {
        let mut rows: Vec<&GuidanceRow> = self.rows.iter().collect();
        let conf = |r: &GuidanceRow| r.cell(kind).map_or(-1.0, |c| c.confidence);
        rows.sort_by(|a, b| conf(b).total_cmp(&conf(a)));
        rows
    }
}

/// Per (series, kind) tally before confidences are known.
struct Cell {
    best_lag: usize,
    mean_strength: f64,
    passes: usize,
    evaluations: usize,
}

/// Evaluate `kind` between every focus fragment and the same series'
/// fragment shifted by each lag. `None` if nothing could be evaluated.
fn evaluate(
    artifacts: &Artifacts,
    kind: IndexKind,
    focus: &[(usize, usize)],
    candidate: usize,
    max_lag_steps: usize,
    ctx: &StrengthContext,
    thresholds: &PassThresholds,
) -> Option<Cell> {
    let last_start = artifacts.compressed_len() - artifacts.window_symbols();
    let mut best: Option<(usize, f64, f64)> = None;
    let mut passes = 0;
    let mut evaluations = 0;
    for lag in 0..=max_lag_steps {
        let mut sum = 0.0;
        let mut sum_abs = 0.0;
        let mut n = 0usize;
        for &(series, start) in focus {
            let shifted = start + lag;
            if shifted > last_start {
                continue;
            }
            let a = fragment_view(artifacts, series, start);
            let b = fragment_view(artifacts, candidate, shifted);
            let Ok(s) = relations::strength(kind.relation(), &a, &b, ctx) else { continue };
            sum += s;
            sum_abs += s.abs();
            n += 1;
            if thresholds.passes(kind, s) {
                passes += 1;
            }
        }
        evaluations += n;
        if n == 0 {
            continue;
        }
        let mean_abs = sum_abs / n as f64;
        if best.is_none_or(|(_, m, _)| mean_abs > m) {
            best = Some((lag, mean_abs, sum / n as f64));
        }
    }
    best.map(|(best_lag, _, mean_strength)| Cell { best_lag, mean_strength, passes, evaluations })
}

fn unique_id(taken: &BTreeSet<String>, base: &str) -> String {
    if !taken.contains(base) {
        return base.to_string();
    }
    (2..).map(|i| format!("{base}_{i}")).find(|id| !taken.contains(id)).expect("unbounded")
}

fn query_delta(q: &QueryGraph, focus: &Timebox, series: &str, kind: RelationKind, lag: i64, mean: f64) -> QueryDelta {
    let box_ids: BTreeSet<String> = q.timeboxes.iter().map(|b| b.id.clone()).collect();
    let link_ids: BTreeSet<String> = q.relalinks.iter().map(|l| l.id.clone()).collect();
    let box_id = unique_id(&box_ids, &format!("rec_{series}"));
    let (lo, hi) = kind.domain();
    QueryDelta {
        timebox: Timebox {
            id: box_id.clone(),
            name: Some(series.to_string()),
            offset: focus.offset + lag as u64,
            sketch: None,
            value_bounds: None,
        },
        relalink: Relalink {
            id: unique_id(&link_ids, &format!("rec_{}_{series}", kind.as_str())),
            kind,
            source: focus.id.clone(),
            target: box_id,
            threshold: [(mean - THRESHOLD_MARGIN).clamp(lo, hi), hi],
            meta_key: None,
            arithmetic: None,
        },
    }
}

/// Recommend extensions from the timebox `focus_id` of `q`.
pub fn recommend(
    q: &QueryGraph,
    focus_id: &str,
    artifacts: &Artifacts,
    config: &RecommendConfig,
) -> Result<GuidanceMatrix, RecommendError> {
    let focus_pos = q.box_position(focus_id).ok_or_else(|| RecommendError::UnknownFocus(focus_id.to_string()))?;
    let focus_box = &q.timeboxes[focus_pos];
    let run = run_query(q, artifacts, &config.matching)?;

    let mut fragments: BTreeSet<(usize, usize)> = run
        .outcome
        .results
        .iter()
        .map(|r| {
            let node = run.graph.nodes[focus_pos][r.nodes[focus_pos] as usize];
            (node.series as usize, node.start as usize)
        })
        .collect();
    if fragments.is_empty() {
        if focus_box.is_default() {
            return Err(RecommendError::FocusUnresolved(focus_id.to_string()));
        }
        fragments = run.graph.nodes[focus_pos].iter().map(|n| (n.series as usize, n.start as usize)).collect();
    }
    let fragments: Vec<(usize, usize)> = fragments.into_iter().collect();
    let focus_series: BTreeSet<usize> = fragments.iter().map(|f| f.0).collect();

    let mut candidates = BTreeSet::new();
    for kind in IndexKind::ALL {
        let index = artifacts.indexes.require(kind).map_err(MatchError::from)?;
        for &s in &focus_series {
            let name = &artifacts.series[s].name;
            candidates.extend(index.top(name, TOP_CANDIDATES).into_iter().filter_map(|n| artifacts.series_index(n)));
        }
    }

    let max_lag_steps = config.max_lag_steps.unwrap_or(artifacts.window_symbols());
    let ctx = StrengthContext { max_lag: q.max_lag(), ..StrengthContext::default() };
    let sampling = artifacts.params.sampling_length as i64;
    let mut tallies: Vec<(usize, Vec<(IndexKind, Cell)>)> = Vec::new();
    for &c in &candidates {
        let cells: Vec<(IndexKind, Cell)> = IndexKind::ALL
            .into_iter()
            .filter_map(|k| evaluate(artifacts, k, &fragments, c, max_lag_steps, &ctx, &config.thresholds).map(|cell| (k, cell)))
            .collect();
        if !cells.is_empty() {
            tallies.push((c, cells));
        }
    }
    // Keep the series with the most passing evaluations in any one cell.
    let best_passes = |cells: &[(IndexKind, Cell)]| cells.iter().map(|(_, c)| c.passes).max().unwrap_or(0);
    tallies.sort_by(|a, b| {
        best_passes(&b.1)
            .cmp(&best_passes(&a.1))
            .then_with(|| artifacts.series[a.0].name.cmp(&artifacts.series[b.0].name))
    });
    tallies.truncate(MAX_ROWS);

    let total = confidence_denominator(tallies.iter().flat_map(|(_, cells)| cells.iter().map(|(_, c)| c.passes)));
    let mut rows: Vec<GuidanceRow> = tallies
        .into_iter()
        .map(|(c, cells)| {
            let series = artifacts.series[c].name.clone();
            let mut row = GuidanceRow { series: series.clone(), correlation: None, similarity: None, causality: None };
            for (kind, cell) in cells {
                let best_lag = cell.best_lag as i64 * sampling;
                *row.cell_mut(kind) = Some(Recommendation {
                    series: series.clone(),
                    kind: kind.relation(),
                    best_lag,
                    mean_strength: cell.mean_strength,
                    confidence: confidence(cell.passes, total),
                    passes: cell.passes,
                    evaluations: cell.evaluations,
                    query_delta: query_delta(q, focus_box, &series, kind.relation(), best_lag, cell.mean_strength),
                });
            }
            row
        })
        .collect();
    rows.sort_by(|a, b| b.max_confidence().total_cmp(&a.max_confidence()).then_with(|| a.series.cmp(&b.series)));

    Ok(GuidanceMatrix { focus: focus_id.to_string(), fragments: fragments.len(), rows })
}

/// Passing evaluations over every recommended cell.
fn confidence_denominator(passes: impl Iterator<Item = usize>) -> usize {
    passes.sum()
}

/// A cell's share of all passing evaluations in the matrix.
fn confidence(passes: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        passes as f64 / total as f64
    }
}

/// Cells keyed by series then kind, for callers that want lookups.
pub fn cells_by_series(matrix: &GuidanceMatrix) -> BTreeMap<&str, Vec<&Recommendation>> {
    matrix.rows.iter().map(|r| (r.series.as_str(), r.cells().collect())).collect()
}
