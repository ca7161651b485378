//! Wire form of query results and the summary that feeds the result views.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::preprocess::Artifacts;
use crate::querymodel::QueryGraph;
use crate::relations::RelationKind;

use super::fragments::original_span;
use super::links::pair_strength;
use super::QueryRun;

/// Bins per column histogram, spread evenly over the column's domain.
pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FragmentReport {
    pub series: String,
    /// First original sample.
    pub start: usize,
    /// Original samples covered.
    pub length: usize,
    pub start_time: String,
    pub end_time: String,
    pub degree: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LinkReport {
    pub id: String,
    pub kind: RelationKind,
    /// `None` only when the kernel cannot evaluate an unsatisfied pair.
    pub strength: Option<f64>,
    /// Realized lag in original samples, target start minus source start.
    pub lag: i64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub score: f64,
    pub fragments: BTreeMap<String, FragmentReport>,
    pub links: Vec<LinkReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ColumnSummary {
    pub id: String,
    /// `"fragment"` or a relation kind.
    pub kind: String,
    pub count: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    pub domain: [f64; 2],
    pub histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AlternativeEntry {
    pub series: String,
    pub count: usize,
    pub mean_score: f64,
    /// Mean score relative to the best alternative of the same box.
    pub opacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagCount {
    pub lag: i64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LinkStats {
    pub id: String,
    pub satisfied: usize,
    pub mean_strength: Option<f64>,
    pub lags: Vec<LagCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Summary {
    pub columns: Vec<ColumnSummary>,
    /// Fragments covering each compressed step, over all returned results.
    pub occurrence: Vec<usize>,
    /// Per default timebox, the series that complete results there.
    pub alternatives: BTreeMap<String, Vec<AlternativeEntry>>,
    pub link_stats: Vec<LinkStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub results: Vec<MatchResult>,
    pub summary: Summary,
    pub truncated: bool,
}

fn column(id: &str, kind: &str, domain: (f64, f64), values: &[f64]) -> ColumnSummary {
    let mut histogram = vec![0; HISTOGRAM_BINS];
    let width = (domain.1 - domain.0) / HISTOGRAM_BINS as f64;
    for v in values {
        let bin = ((v - domain.0) / width).floor().clamp(0.0, (HISTOGRAM_BINS - 1) as f64) as usize;
        histogram[bin] += 1;
    }
    let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    ColumnSummary {
        id: id.to_string(),
        kind: kind.to_string(),
        count: values.len(),
        min: values.iter().copied().reduce(f64::min),
        max: values.iter().copied().reduce(f64::max),
        mean,
        domain: [domain.0, domain.1],
        histogram,
    }
}

pub(crate) fn build_response(q: &QueryGraph, artifacts: &Artifacts, run: &QueryRun) -> QueryResponse {
    let graph = &run.graph;
    let s = artifacts.params.sampling_length;
    let window = artifacts.window_symbols();
    let timestamps = artifacts.dataset.timestamps();
    let max_lag = q.max_lag();

    let mut results = Vec::with_capacity(run.outcome.results.len());
    let mut occurrence = vec![0usize; artifacts.compressed_len()];
    for raw in &run.outcome.results {
        let mut fragments = BTreeMap::new();
        for (b, tb) in q.timeboxes.iter().enumerate() {
            let node = &graph.nodes[b][raw.nodes[b] as usize];
            let span = original_span(artifacts, node.start as usize);
            for slot in &mut occurrence[node.start as usize..node.start as usize + window] {
                *slot += 1;
            }
            fragments.insert(
                tb.id.clone(),
                FragmentReport {
                    series: artifacts.series[node.series as usize].name.clone(),
                    start: span.start,
                    length: span.len(),
                    start_time: timestamps[span.start].clone(),
                    end_time: timestamps[span.end - 1].clone(),
                    degree: node.degree,
                },
            );
        }
        let links = q
            .relalinks
            .iter()
            .enumerate()
            .map(|(k, link)| {
                let (sb, tb) = graph.endpoints[k];
                let (src, tgt) = (&graph.nodes[sb][raw.nodes[sb] as usize], &graph.nodes[tb][raw.nodes[tb] as usize]);
                let satisfied = raw.unsatisfied != Some(k);
                let strength = if satisfied {
                    graph.links[k].get(raw.nodes[sb], raw.nodes[tb])
                } else {
                    pair_strength(link, src, tgt, artifacts, max_lag)
                };
                LinkReport {
                    id: link.id.clone(),
                    kind: link.kind,
                    strength,
                    lag: (tgt.start as i64 - src.start as i64) * s as i64,
                    satisfied,
                }
            })
            .collect();
        results.push(MatchResult { score: raw.score, fragments, links });
    }

    let mut columns = Vec::new();
    for tb in &q.timeboxes {
        let degrees: Vec<f64> = results.iter().map(|r| r.fragments[&tb.id].degree).collect();
        columns.push(column(&tb.id, "fragment", (0.0, 1.0), &degrees));
    }
    let mut link_stats = Vec::new();
    for (k, link) in q.relalinks.iter().enumerate() {
        let satisfied: Vec<&LinkReport> = results.iter().map(|r| &r.links[k]).filter(|l| l.satisfied).collect();
        let strengths: Vec<f64> = satisfied.iter().filter_map(|l| l.strength).collect();
        columns.push(column(&link.id, link.kind.as_str(), link.kind.domain(), &strengths));
        let mut lags: BTreeMap<i64, usize> = BTreeMap::new();
        for l in &satisfied {
            *lags.entry(l.lag).or_default() += 1;
        }
        link_stats.push(LinkStats {
            id: link.id.clone(),
            satisfied: satisfied.len(),
            mean_strength: (!strengths.is_empty()).then(|| strengths.iter().sum::<f64>() / strengths.len() as f64),
            lags: lags.into_iter().map(|(lag, count)| LagCount { lag, count }).collect(),
        });
    }

    let mut alternatives = BTreeMap::new();
    for tb in q.timeboxes.iter().filter(|b| b.is_default()) {
        let mut by_series: HashMap<&str, (f64, usize)> = HashMap::new();
        for r in &results {
            let e = by_series.entry(r.fragments[&tb.id].series.as_str()).or_default();
            e.0 += r.score;
            e.1 += 1;
        }
        let means: Vec<(&str, f64, usize)> = by_series.into_iter().map(|(n, (sum, c))| (n, sum / c as f64, c)).collect();
        let best = means.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
        let mut entries: Vec<AlternativeEntry> = means
            .into_iter()
            .map(|(series, mean_score, count)| AlternativeEntry {
                series: series.to_string(),
                count,
                mean_score,
                opacity: if best > 0.0 { mean_score / best } else { 1.0 },
            })
            .collect();
        entries.sort_by(|a, b| b.opacity.total_cmp(&a.opacity).then_with(|| a.series.cmp(&b.series)));
        alternatives.insert(tb.id.clone(), entries);
    }

    QueryResponse {
        results,
        summary: Summary { columns, occurrence, alternatives, link_stats },
        truncated: run.outcome.truncated,
    }
}
