//! Trend trie over sliding SAX windows.
//!
//! Every node counts how many windows pass through it, so the occurrence
//! ratio of a child is `child.count / parent.count`. Leaves (depth ==
//! window length) keep the `(series, start)` of each window, start in
//! compressed samples.

use serde::Serialize;
use thiserror::Error;

use super::sax::Symbol;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrieError {
    #[error("window of {window} symbols exceeds sequence {series:?} of length {len}")]
    WindowTooLong { series: String, window: usize, len: usize },
    #[error("window length must be at least 1")]
    EmptyWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Occurrence {
    pub series: u32,
    pub start: u32,
}

#[derive(Debug, Clone, Default)]
struct Node {
    count: usize,
    children: [Option<u32>; 4],
    occurrences: Vec<Occurrence>,
}

#[derive(Debug, Clone)]
pub struct TrendTrie {
    names: Vec<String>,
    nodes: Vec<Node>,
    depth: usize,
}

impl TrendTrie {
    /// Insert every window of `window` symbols (step one symbol) of every sequence.
    pub fn build<S: AsRef<[Symbol]>>(sequences: &[(String, S)], window: usize) -> Result<Self, TrieError> {
        if window == 0 {
            return Err(TrieError::EmptyWindow);
        }
        if let Some((name, seq)) = sequences.iter().find(|(_, s)| s.as_ref().len() < window) {
            return Err(TrieError::WindowTooLong { series: name.clone(), window, len: seq.as_ref().len() });
        }
        let mut trie = TrendTrie {
            names: sequences.iter().map(|(n, _)| n.clone()).collect(),
            nodes: vec![Node::default()],
            depth: window,
        };
        for (series, (_, seq)) in sequences.iter().enumerate() {
            let seq = seq.as_ref();
            for start in 0..=seq.len() - window {
                trie.insert(&seq[start..start + window], Occurrence { series: series as u32, start: start as u32 });
            }
        }
        Ok(trie)
    }

    fn insert(&mut self, word: &[Symbol], occurrence: Occurrence) {
        let mut at = 0usize;
        self.nodes[at].count += 1;
        for sym in word {
            let next = match self.nodes[at].children[sym.index()] {
                Some(child) => child as usize,
                None => {
                    self.nodes.push(Node::default());
                    let child = self.nodes.len() - 1;
                    self.nodes[at].children[sym.index()] = Some(child as u32);
                    child
                }
            };
            at = next;
            self.nodes[at].count += 1;
        }
        self.nodes[at].occurrences.push(occurrence);
    }

    fn find(&self, prefix: &[Symbol]) -> Option<&Node> {
        let mut at = 0usize;
        for sym in prefix {
            at = self.nodes[at].children[sym.index()]? as usize;
        }
        Some(&self.nodes[at])
    }

    fn child_ratios(&self, node: &Node) -> Vec<(Symbol, f64)> {
        Symbol::ALL
            .iter()
            .filter_map(|&s| {
                let child = &self.nodes[node.children[s.index()]? as usize];
                Some((s, child.count as f64 / node.count as f64))
            })
            .collect()
    }

    /// Next symbols after `prefix`, most frequent first. Unknown or full-length
    /// prefixes yield an empty list.
    pub fn suggest_next_symbols(&self, prefix: &[Symbol]) -> Vec<(Symbol, f64)> {
        if prefix.len() >= self.depth {
            return Vec::new();
        }
        let Some(node) = self.find(prefix) else {
            return Vec::new();
        };
        let mut out = self.child_ratios(node);
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }

    /// Occurrences recorded for a full-length window.
    pub fn lookup(&self, word: &[Symbol]) -> Option<&[Occurrence]> {
        if word.len() != self.depth {
            return None;
        }
        self.find(word).map(|n| n.occurrences.as_slice())
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn series_name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    /// Total windows indexed.
    pub fn window_count(&self) -> usize {
        self.nodes[0].count
    }

    /// Sum of child ratios for every node that has children.
    pub fn ratio_sums(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter(|n| n.children.iter().any(Option::is_some))
            .map(|n| self.child_ratios(n).iter().map(|(_, r)| r).sum())
            .collect()
    }

    /// All leaf occurrences, in node order.
    pub fn leaf_occurrences(&self) -> impl Iterator<Item = &Occurrence> {
        self.nodes.iter().flat_map(|n| n.occurrences.iter())
    }
}
