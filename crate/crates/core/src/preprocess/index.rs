//! Whole-series relation indexes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::relations::{self, RelationKind};

use super::SeriesArtifacts;

/// The three relation kinds that get a precomputed index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Correlation,
    Similarity,
    Causality,
}

impl IndexKind {
    pub const ALL: [IndexKind; 3] = [IndexKind::Correlation, IndexKind::Similarity, IndexKind::Causality];

    pub fn relation(self) -> RelationKind {
        match self {
            IndexKind::Correlation => RelationKind::Correlation,
            IndexKind::Similarity => RelationKind::Similarity,
            IndexKind::Causality => RelationKind::Causality,
        }
    }

    pub fn from_relation(kind: RelationKind) -> Option<IndexKind> {
        match kind {
            RelationKind::Correlation => Some(IndexKind::Correlation),
            RelationKind::Similarity => Some(IndexKind::Similarity),
            RelationKind::Causality => Some(IndexKind::Causality),
            _ => None,
        }
    }

    pub fn position(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        self.relation().as_str()
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Full pairwise strength matrix plus, per series, every other series in
/// descending strength order (ties by name). For causality the row series
/// is the cause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationIndex {
    pub kind: IndexKind,
    pub names: Vec<String>,
    /// `strengths[i][j]`: strength from series i to series j; diagonal unused (0).
    pub strengths: Vec<Vec<f64>>,
    /// `order[i]`: indices of the other series, strongest first.
    pub order: Vec<Vec<u32>>,
}

impl RelationIndex {
    /// Compute all pairwise strengths on whole compressed series.
    pub fn build(kind: IndexKind, series: &[SeriesArtifacts], max_lag: usize) -> RelationIndex {
        let n = series.len();
        let mut strengths = vec![vec![0.0; n]; n];
        for i in 0..n {
            let start = if kind.relation().is_directed() { 0 } else { i + 1 };
            for j in start..n {
                if i == j {
                    continue;
                }
                let s = whole_strength(kind, &series[i], &series[j], max_lag);
                strengths[i][j] = s;
                if !kind.relation().is_directed() {
                    strengths[j][i] = s;
                }
            }
        }
        let names: Vec<String> = series.iter().map(|s| s.name.clone()).collect();
        Self::from_matrix(kind, names, strengths)
    }

    pub fn from_matrix(kind: IndexKind, names: Vec<String>, strengths: Vec<Vec<f64>>) -> RelationIndex {
        let order = (0..names.len()).map(|i| rank_row(&names, &strengths[i], i)).collect();
        RelationIndex { kind, names, strengths, order }
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Other series ranked by strength from `name` (as cause, for causality).
    pub fn ranked(&self, name: &str) -> Vec<(&str, f64)> {
        let Some(i) = self.position(name) else {
            return Vec::new();
        };
        self.order[i]
            .iter()
            .map(|&j| (self.names[j as usize].as_str(), self.strengths[i][j as usize]))
            .collect()
    }

    /// Other series ranked by strength towards `name` (as effect, for causality).
    pub fn ranked_incoming(&self, name: &str) -> Vec<(&str, f64)> {
        let Some(j) = self.position(name) else {
            return Vec::new();
        };
        let column: Vec<f64> = self.strengths.iter().map(|row| row[j]).collect();
        rank_row(&self.names, &column, j)
            .into_iter()
            .map(|i| (self.names[i as usize].as_str(), column[i as usize]))
            .collect()
    }

    pub fn top(&self, name: &str, k: usize) -> Vec<&str> {
        self.ranked(name).into_iter().take(k).map(|(n, _)| n).collect()
    }

    pub fn strength(&self, from: &str, to: &str) -> Option<f64> {
        Some(self.strengths[self.position(from)?][self.position(to)?])
    }
}

fn rank_row(names: &[String], row: &[f64], skip: usize) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..names.len() as u32).filter(|&j| j as usize != skip).collect();
    idx.sort_by(|&a, &b| {
        row[b as usize]
            .total_cmp(&row[a as usize])
            .then_with(|| names[a as usize].cmp(&names[b as usize]))
    });
    idx
}

fn whole_strength(kind: IndexKind, a: &SeriesArtifacts, b: &SeriesArtifacts, max_lag: usize) -> f64 {
    let result = match kind {
        IndexKind::Correlation => relations::pearson_strength(&a.compressed, &b.compressed),
        IndexKind::Similarity => relations::similarity_strength(&a.normalized, &b.normalized),
        IndexKind::Causality => {
            let lag = relations::effective_max_lag(a.compressed.len(), max_lag);
            if lag == 0 {
                Ok(0.0)
            } else {
                relations::granger_strength(&a.compressed, &b.compressed, lag)
            }
        }
    };
    result.unwrap_or(0.0)
}
