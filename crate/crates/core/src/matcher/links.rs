//! Step two: relation links between node sets.

use std::collections::{BTreeMap, HashMap};

use crate::preprocess::Artifacts;
use crate::querymodel::{Mode, Relalink};
use crate::relations::{self, StrengthContext};

use super::fragments::{fragment_view, Node};

/// Whether a realized lag (original samples) meets the required one. Fuzzy
/// mode tolerates one compressed step either way.
pub fn lag_accepted(realized: i64, required: i64, mode: Mode, sampling_length: usize) -> bool {
    match mode {
        Mode::Strict => realized == required,
        Mode::Fuzzy => (realized - required).abs() <= sampling_length as i64,
    }
}

/// Compressed-step offsets `start_target - start_source` that can satisfy the lag rule.
pub(crate) fn step_range(required: i64, mode: Mode, sampling_length: usize) -> Option<(i64, i64)> {
    let s = sampling_length as i64;
    match mode {
        Mode::Strict => (required.rem_euclid(s) == 0).then(|| (required / s, required / s)),
        Mode::Fuzzy => {
            let lo = -((s - required).div_euclid(s));
            let hi = (required + s).div_euclid(s);
            Some((lo, hi))
        }
    }
}

/// Satisfied pairs of one relalink, indexed both ways. Indices refer to
/// positions in the source and target node sets.
#[derive(Debug, Clone, Default)]
pub struct LinkSet {
    pub pairs: HashMap<(u32, u32), f64>,
    pub from_source: Vec<Vec<(u32, f64)>>,
    pub from_target: Vec<Vec<(u32, f64)>>,
}

impl LinkSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, source: u32, target: u32) -> Option<f64> {
        self.pairs.get(&(source, target)).copied()
    }
}

pub(crate) fn strength_context<'a>(link: &'a Relalink, artifacts: &'a Artifacts, max_lag: usize) -> StrengthContext<'a> {
    StrengthContext {
        labels: Some(&artifacts.labels),
        meta_key: link.meta_key.as_deref(),
        arithmetic: link.arithmetic,
        max_lag,
    }
}

/// Strength of `link` between two nodes, `None` when the kernel cannot
/// evaluate the pair.
pub fn pair_strength(link: &Relalink, source: &Node, target: &Node, artifacts: &Artifacts, max_lag: usize) -> Option<f64> {
    let a = fragment_view(artifacts, source.series as usize, source.start as usize);
    let b = fragment_view(artifacts, target.series as usize, target.start as usize);
    relations::strength(link.kind, &a, &b, &strength_context(link, artifacts, max_lag)).ok()
}

/// Build the link set for `link` over the source and target node sets:
/// pairs whose lag is accepted and whose strength lies in the threshold.
pub fn build_links(
    link: &Relalink,
    required_lag: i64,
    sources: &[Node],
    targets: &[Node],
    artifacts: &Artifacts,
    mode: Mode,
    max_lag: usize,
) -> LinkSet {
    let s = artifacts.params.sampling_length;
    let mut set = LinkSet {
        pairs: HashMap::new(),
        from_source: vec![Vec::new(); sources.len()],
        from_target: vec![Vec::new(); targets.len()],
    };
    let Some((lo, hi)) = step_range(required_lag, mode, s) else {
        return set;
    };
    let mut by_start: BTreeMap<i64, Vec<u32>> = BTreeMap::new();
    for (j, t) in targets.iter().enumerate() {
        by_start.entry(t.start as i64).or_default().push(j as u32);
    }
    for (i, src) in sources.iter().enumerate() {
        let from = src.start as i64 + lo;
        let to = src.start as i64 + hi;
        for (&start, idxs) in by_start.range(from..=to) {
            let realized = (start - src.start as i64) * s as i64;
            if !lag_accepted(realized, required_lag, mode, s) {
                continue;
            }
            for &j in idxs {
                let Some(strength) = pair_strength(link, src, &targets[j as usize], artifacts, max_lag) else {
                    continue;
                };
                if link.accepts(strength) {
                    set.pairs.insert((i as u32, j), strength);
                    set.from_source[i].push((j, strength));
                    set.from_target[j as usize].push((i as u32, strength));
                }
            }
        }
    }
    set
}
