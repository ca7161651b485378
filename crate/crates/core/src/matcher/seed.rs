//! Candidate series for default timeboxes.

use std::collections::{BTreeSet, VecDeque};

use crate::preprocess::{Artifacts, IndexKind};
use crate::querymodel::{QueryGraph, Relalink};

use super::MatchError;

/// How many index entries seed a default timebox.
pub const TOP_CANDIDATES: usize = 20;

/// Index used to seed from a named neighbour over `link`. Meta and
/// arithmetic have no index and fall back to correlation.
fn seed_index(link: &Relalink) -> IndexKind {
    IndexKind::from_relation(link.kind).unwrap_or(IndexKind::Correlation)
}

/// Top entries from `named`'s index for `link`, respecting causal direction.
fn top_from(artifacts: &Artifacts, link: &Relalink, named_is_source: bool, named: &str, k: usize) -> Result<Vec<usize>, MatchError> {
    let kind = seed_index(link);
    let index = artifacts.indexes.require(kind)?;
    let ranked = if kind.relation().is_directed() && !named_is_source {
        index.ranked_incoming(named)
    } else {
        index.ranked(named)
    };
    Ok(ranked
        .into_iter()
        .take(k)
        .filter_map(|(name, _)| artifacts.series_index(name))
        .collect())
}

/// Series indices a timebox's fragments are drawn from.
///
/// Named boxes use their own series. A default box takes the top entries of
/// the relation index of its nearest named box(es): with a direct link, the
/// smallest-id such link decides; otherwise every named box at the minimal
/// link distance contributes the index of its smallest-id link on a
/// shortest path, and the lists are unioned. Without any named box, the
/// first series in name order are used.
pub fn seed_candidates(q: &QueryGraph, box_index: usize, artifacts: &Artifacts, k: usize) -> Result<Vec<usize>, MatchError> {
    let tb = &q.timeboxes[box_index];
    if let Some(name) = &tb.name {
        return artifacts
            .series_index(name)
            .map(|i| vec![i])
            .ok_or_else(|| MatchError::UnknownSeries(name.clone()));
    }

    let n = q.timeboxes.len();
    let pos = |id: &str| q.box_position(id);
    let mut dist = vec![usize::MAX; n];
    dist[box_index] = 0;
    let mut queue = VecDeque::from([box_index]);
    while let Some(b) = queue.pop_front() {
        // stop expanding past named boxes; they are endpoints
        if b != box_index && !q.timeboxes[b].is_default() {
            continue;
        }
        for l in &q.relalinks {
            let (Some(s), Some(t)) = (pos(&l.source), pos(&l.target)) else { continue };
            let other = if s == b { t } else if t == b { s } else { continue };
            if dist[other] == usize::MAX {
                dist[other] = dist[b] + 1;
                queue.push_back(other);
            }
        }
    }
    let nearest = (0..n)
        .filter(|&b| !q.timeboxes[b].is_default() && dist[b] != usize::MAX)
        .map(|b| dist[b])
        .min();
    let Some(d) = nearest else {
        let mut by_name: Vec<usize> = (0..artifacts.series.len()).collect();
        by_name.sort_by(|&a, &b| artifacts.series[a].name.cmp(&artifacts.series[b].name));
        by_name.truncate(k);
        return Ok(by_name);
    };

    // For each named box at distance d, the smallest-id link to a box at distance d - 1.
    let mut chosen: Vec<(&Relalink, usize)> = Vec::new();
    for named in (0..n).filter(|&b| !q.timeboxes[b].is_default() && dist[b] == d) {
        let link = q
            .relalinks
            .iter()
            .filter(|l| {
                let (Some(s), Some(t)) = (pos(&l.source), pos(&l.target)) else { return false };
                (s == named && dist[t] == d - 1 && q.timeboxes[t].is_default())
                    || (t == named && dist[s] == d - 1 && q.timeboxes[s].is_default())
            })
            .min_by(|a, b| a.id.cmp(&b.id));
        if let Some(link) = link {
            chosen.push((link, named));
        }
    }
    chosen.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    if d == 1 {
        chosen.truncate(1);
    }
    let mut out = BTreeSet::new();
    for (link, named) in chosen {
        let name = q.timeboxes[named].name.as_deref().expect("named box");
        let named_is_source = pos(&link.source) == Some(named);
        out.extend(top_from(artifacts, link, named_is_source, name, k)?);
    }
    Ok(out.into_iter().collect())
}
