//! Step three: depth-first assembly of results over the dataset graph.
//!
//! Timeboxes are visited in temporal order. A link is checked when its later
//! endpoint is assigned. Dead ends are memoized on the assignment of the
//! frontier (earlier boxes that still have links into the unassigned
//! suffix) together with how many links were already allowed to fail.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use crate::querymodel::Mode;

use super::fragments::Node;
use super::links::LinkSet;

/// Links a result may leave unsatisfied: none in strict mode, one in fuzzy mode.
pub fn unsatisfied_budget(mode: Mode) -> usize {
    match mode {
        Mode::Strict => 0,
        Mode::Fuzzy => 1,
    }
}

/// The dataset graph: a node set per timebox and a link set per relalink.
#[derive(Debug, Clone, Default)]
pub struct DatasetGraph {
    pub nodes: Vec<Vec<Node>>,
    pub links: Vec<LinkSet>,
    /// `(source box, target box)` per relalink, as timebox positions in the query.
    pub endpoints: Vec<(usize, usize)>,
    /// Timebox positions in temporal order.
    pub order: Vec<usize>,
    /// Rank of each series index in name order, for tie-breaking.
    pub name_rank: Vec<u32>,
}

/// One complete assignment, node indices per timebox in query order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawResult {
    pub nodes: Vec<u32>,
    /// Relalink left unsatisfied (fuzzy mode only).
    pub unsatisfied: Option<usize>,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOptions<'a> {
    pub mode: Mode,
    pub cap: usize,
    pub memoize: bool,
    pub deadline: Option<Instant>,
    pub cancel: Option<&'a AtomicBool>,
}

#[derive(Debug, Clone, Default)]
pub struct SearchOutcome {
    /// Best results first, at most `cap`.
    pub results: Vec<RawResult>,
    /// Complete assignments found in total.
    pub found: usize,
    pub truncated: bool,
    pub interrupted: bool,
}

/// Sum of degrees plus absolute strengths of satisfied links, both in query order.
pub fn score(graph: &DatasetGraph, nodes: &[u32], unsatisfied: Option<usize>) -> f64 {
    let mut total = 0.0;
    for (b, &n) in nodes.iter().enumerate() {
        total += graph.nodes[b][n as usize].degree;
    }
    for (k, &(s, t)) in graph.endpoints.iter().enumerate() {
        if unsatisfied == Some(k) {
            continue;
        }
        if let Some(strength) = graph.links[k].get(nodes[s], nodes[t]) {
            total += strength.abs();
        }
    }
    total
}

struct Plan {
    order: Vec<usize>,
    /// Links whose later endpoint sits at each position.
    closing: Vec<Vec<usize>>,
    /// Boxes assigned before each position that link into it or beyond.
    frontier: Vec<Vec<usize>>,
}

impl Plan {
    fn new(graph: &DatasetGraph, order: Vec<usize>) -> Self {
        let mut position = vec![0; order.len()];
        for (p, &b) in order.iter().enumerate() {
            position[b] = p;
        }
        let mut closing = vec![Vec::new(); order.len()];
        for (k, &(s, t)) in graph.endpoints.iter().enumerate() {
            closing[position[s].max(position[t])].push(k);
        }
        let frontier = (0..order.len())
            .map(|p| {
                let mut f: Vec<usize> = graph
                    .endpoints
                    .iter()
                    .flat_map(|&(s, t)| {
                        let (ps, pt) = (position[s], position[t]);
                        let (early, late) = if ps < pt { (s, pt) } else { (t, ps) };
                        (position[early] < p && late >= p).then_some(early)
                    })
                    .collect();
                f.sort_unstable();
                f.dedup();
                f
            })
            .collect();
        Self { order, closing, frontier }
    }
}

struct Search<'a> {
    graph: &'a DatasetGraph,
    plan: Plan,
    opts: &'a SearchOptions<'a>,
    budget: usize,
    assigned: Vec<Option<u32>>,
    memo: HashMap<(usize, Vec<u32>, usize), bool>,
    results: Vec<RawResult>,
    found: usize,
    truncated: bool,
    interrupted: bool,
    steps: u64,
}

impl Search<'_> {
    fn stop(&mut self) -> bool {
        if self.interrupted {
            return true;
        }
        self.steps += 1;
        if self.steps.is_multiple_of(1024) {
            let cancelled = self.opts.cancel.is_some_and(|c| c.load(Ordering::Relaxed));
            let late = self.opts.deadline.is_some_and(|d| Instant::now() >= d);
            if cancelled || late {
                self.interrupted = true;
            }
        }
        self.interrupted
    }

    /// Check the closing links at position `p` for candidate node `n`.
    /// Returns the link that fails (at most one tolerated), or `Err` if too many fail.
    fn check(&self, p: usize, box_idx: usize, n: u32, unsat: Option<usize>) -> Result<Option<usize>, ()> {
        let mut failed = unsat;
        for &k in &self.plan.closing[p] {
            let (s, t) = self.graph.endpoints[k];
            let (ns, nt) = if s == box_idx {
                (n, self.assigned[t].expect("earlier endpoint assigned"))
            } else {
                (self.assigned[s].expect("earlier endpoint assigned"), n)
            };
            if self.graph.links[k].get(ns, nt).is_none() {
                if failed.is_some() || self.budget == 0 {
                    return Err(());
                }
                failed = Some(k);
            }
        }
        Ok(failed)
    }

    fn candidates(&self, p: usize, box_idx: usize, unsat: Option<usize>) -> Vec<u32> {
        let may_fail = self.budget > 0 && unsat.is_none();
        if let (false, Some(&k)) = (may_fail, self.plan.closing[p].first()) {
            let (s, t) = self.graph.endpoints[k];
            return if s == box_idx {
                let other = self.assigned[t].expect("assigned");
                self.graph.links[k].from_target[other as usize].iter().map(|&(i, _)| i).collect()
            } else {
                let other = self.assigned[s].expect("assigned");
                self.graph.links[k].from_source[other as usize].iter().map(|&(j, _)| j).collect()
            };
        }
        (0..self.graph.nodes[box_idx].len() as u32).collect()
    }

    fn record(&mut self, unsat: Option<usize>) {
        let nodes: Vec<u32> = self.assigned.iter().map(|n| n.expect("complete")).collect();
        let score = score(self.graph, &nodes, unsat);
        self.found += 1;
        self.results.push(RawResult { nodes, unsatisfied: unsat, score });
        if self.results.len() >= 2 * self.opts.cap.max(1) {
            self.truncated = true;
            rank_raw(self.graph, &mut self.results);
            self.results.truncate(self.opts.cap);
        }
    }

    /// Explore from position `p`; true if at least one completion exists.
    fn dfs(&mut self, p: usize, unsat: Option<usize>) -> bool {
        if p == self.plan.order.len() {
            self.record(unsat);
            return true;
        }
        let key = self.opts.memoize.then(|| {
            let frontier: Vec<u32> = self.plan.frontier[p].iter().map(|&b| self.assigned[b].expect("assigned")).collect();
            (p, frontier, usize::from(unsat.is_some()))
        });
        if let Some(key) = &key {
            if self.memo.get(key) == Some(&false) {
                return false;
            }
        }
        let box_idx = self.plan.order[p];
        let mut any = false;
        for n in self.candidates(p, box_idx, unsat) {
            if self.stop() {
                return any;
            }
            let Ok(next_unsat) = self.check(p, box_idx, n, unsat) else { continue };
            self.assigned[box_idx] = Some(n);
            any |= self.dfs(p + 1, next_unsat);
            self.assigned[box_idx] = None;
        }
        if let Some(key) = key {
            if !self.interrupted {
                self.memo.insert(key, any);
            }
        }
        any
    }
}

/// Order results: score descending, then fragment starts in temporal box
/// order, then series names in the same order.
pub fn rank_raw(graph: &DatasetGraph, results: &mut [RawResult]) {
    let key = |r: &RawResult| -> (Vec<u32>, Vec<u32>) {
        graph
            .order
            .iter()
            .map(|&b| {
                let node = &graph.nodes[b][r.nodes[b] as usize];
                (node.start, graph.name_rank[node.series as usize])
            })
            .unzip()
    };
    results.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| key(a).cmp(&key(b))));
}

/// Enumerate all results, visiting timeboxes in temporal order.
pub fn search(graph: &DatasetGraph, opts: &SearchOptions) -> SearchOutcome {
    let n = graph.order.len();
    if graph.nodes.iter().any(Vec::is_empty) {
        return SearchOutcome::default();
    }
    let mut s = Search {
        graph,
        plan: Plan::new(graph, graph.order.clone()),
        opts,
        budget: unsatisfied_budget(opts.mode),
        assigned: vec![None; n],
        memo: HashMap::new(),
        results: Vec::new(),
        found: 0,
        truncated: false,
        interrupted: false,
        steps: 0,
    };
    s.dfs(0, None);
    let mut results = std::mem::take(&mut s.results);
    rank_raw(graph, &mut results);
    let truncated = s.truncated || results.len() > opts.cap || s.interrupted;
    results.truncate(opts.cap);
    SearchOutcome { results, found: s.found, truncated, interrupted: s.interrupted }
}
