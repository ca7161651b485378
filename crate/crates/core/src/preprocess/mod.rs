//! Derived artifacts: compressed and symbolic series, trend tries, and the
//! relation indexes, which build on a background worker.

mod index;
mod normalize;
mod sax;
mod trie;

use std::collections::VecDeque;
use std::panic::{self, AssertUnwindSafe};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{Dataset, MetaLabels, PreprocessParams};
use crate::relations::DEFAULT_MAX_LAG;

pub use index::{IndexKind, RelationIndex};
pub use normalize::{minmax_normalize, minmax_with_bounds, paa_compress, z_normalize};
pub use sax::{parse_word, sax_symbolize, Symbol, BREAKPOINTS};
pub use trie::{Occurrence, TrendTrie, TrieError};

pub(crate) use normalize::min_max;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreprocessError {
    #[error(transparent)]
    Trie(#[from] TrieError),
    #[error("{0} index unavailable: {1}")]
    IndexUnavailable(IndexKind, String),
}

/// Per-series derived data.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesArtifacts {
    pub name: String,
    pub original: Vec<f64>,
    /// PAA of the original values.
    pub compressed: Vec<f64>,
    /// Min-max normalization of `compressed`.
    pub normalized: Vec<f64>,
    /// SAX of the PAA of the z-normalized original values.
    pub symbols: Vec<Symbol>,
    pub min: f64,
    pub max: f64,
}

impl SeriesArtifacts {
    pub fn build(name: &str, original: &[f64], sampling_length: usize) -> Self {
        let compressed = paa_compress(original, sampling_length);
        let normalized = minmax_normalize(&compressed);
        let symbols = sax_symbolize(&paa_compress(&z_normalize(original), sampling_length));
        let (min, max) = min_max(original);
        Self { name: name.to_string(), original: original.to_vec(), compressed, normalized, symbols, min, max }
    }
}

/// Tries over all series together and over each series alone.
#[derive(Debug, Clone)]
pub struct TrendIndex {
    pub global: TrendTrie,
    pub per_series: Vec<TrendTrie>,
}

impl TrendIndex {
    pub fn build(series: &[SeriesArtifacts], window: usize) -> Result<Self, TrieError> {
        let sequences: Vec<(String, &[Symbol])> = series.iter().map(|s| (s.name.clone(), s.symbols.as_slice())).collect();
        let global = TrendTrie::build(&sequences, window)?;
        let per_series = sequences
            .iter()
            .map(|one| TrendTrie::build(std::slice::from_ref(one), window))
            .collect::<Result<_, _>>()?;
        Ok(Self { global, per_series })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactState {
    Pending,
    Building,
    Ready,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusEvent {
    pub index: IndexKind,
    pub state: ArtifactState,
    pub at_ms: u64,
}

/// Snapshot of every artifact's build state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStatus {
    pub compressed: ArtifactState,
    pub symbols: ArtifactState,
    pub trie: ArtifactState,
    pub correlation: ArtifactState,
    pub similarity: ArtifactState,
    pub causality: ArtifactState,
    pub elapsed_ms: u64,
}

impl BuildStatus {
    pub fn index(&self, kind: IndexKind) -> ArtifactState {
        match kind {
            IndexKind::Correlation => self.correlation,
            IndexKind::Similarity => self.similarity,
            IndexKind::Causality => self.causality,
        }
    }

    pub fn all_ready(&self) -> bool {
        IndexKind::ALL.iter().all(|&k| self.index(k) == ArtifactState::Ready)
    }
}

#[derive(Debug, Clone)]
pub struct BuildConfig {
    /// How long `preprocess` waits for the indexes before returning with
    /// the rest still building in the background.
    pub budget: Duration,
    /// Extra latency added to each index build (test hook).
    pub index_delay: Duration,
    /// Lag order for whole-series Granger tests.
    pub max_lag: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self { budget: Duration::from_secs(120), index_delay: Duration::ZERO, max_lag: DEFAULT_MAX_LAG }
    }
}

#[derive(Debug)]
enum Slot {
    Pending,
    Building,
    Ready(Arc<RelationIndex>),
    Failed(String),
}

impl Slot {
    fn state(&self) -> ArtifactState {
        match self {
            Slot::Pending => ArtifactState::Pending,
            Slot::Building => ArtifactState::Building,
            Slot::Ready(_) => ArtifactState::Ready,
            Slot::Failed(_) => ArtifactState::Failed,
        }
    }
}

#[derive(Debug)]
struct StoreState {
    slots: [Slot; 3],
    queue: VecDeque<IndexKind>,
    events: Vec<StatusEvent>,
}

/// Relation indexes with a single serialized build worker. Queries call
/// [`IndexStore::require`], which moves a pending index to the front of the
/// queue and blocks only on that index.
#[derive(Debug)]
pub struct IndexStore {
    state: Mutex<StoreState>,
    changed: Condvar,
    started: Instant,
}

impl IndexStore {
    fn pending(order: &[IndexKind]) -> Self {
        let started = Instant::now();
        let events = order.iter().map(|&index| StatusEvent { index, state: ArtifactState::Pending, at_ms: 0 }).collect();
        Self {
            state: Mutex::new(StoreState {
                slots: [Slot::Pending, Slot::Pending, Slot::Pending],
                queue: order.iter().copied().collect(),
                events,
            }),
            changed: Condvar::new(),
            started,
        }
    }

    /// A store whose indexes are all available already.
    pub fn ready(indexes: Vec<RelationIndex>) -> Self {
        let store = Self::pending(&[]);
        {
            let mut state = store.lock();
            for idx in indexes {
                let kind = idx.kind;
                state.slots[kind.position()] = Slot::Ready(Arc::new(idx));
                let at_ms = store.elapsed_ms();
                state.events.push(StatusEvent { index: kind, state: ArtifactState::Ready, at_ms });
            }
        }
        store
    }

    fn lock(&self) -> MutexGuard<'_, StoreState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn elapsed_ms(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    fn set(&self, state: &mut StoreState, kind: IndexKind, slot: Slot) {
        let event = StatusEvent { index: kind, state: slot.state(), at_ms: self.elapsed_ms() };
        state.slots[kind.position()] = slot;
        state.events.push(event);
        self.changed.notify_all();
    }

    pub fn state(&self, kind: IndexKind) -> ArtifactState {
        self.lock().slots[kind.position()].state()
    }

    pub fn status(&self) -> BuildStatus {
        let state = self.lock();
        BuildStatus {
            compressed: ArtifactState::Ready,
            symbols: ArtifactState::Ready,
            trie: ArtifactState::Ready,
            correlation: state.slots[0].state(),
            similarity: state.slots[1].state(),
            causality: state.slots[2].state(),
            elapsed_ms: self.elapsed_ms(),
        }
    }

    /// Every state transition so far, oldest first.
    pub fn events(&self) -> Vec<StatusEvent> {
        self.lock().events.clone()
    }

    /// Order in which indexes became ready.
    pub fn completion_order(&self) -> Vec<IndexKind> {
        self.lock()
            .events
            .iter()
            .filter(|e| e.state == ArtifactState::Ready)
            .map(|e| e.index)
            .collect()
    }

    /// The index if ready, without waiting.
    pub fn get(&self, kind: IndexKind) -> Option<Arc<RelationIndex>> {
        match &self.lock().slots[kind.position()] {
            Slot::Ready(idx) => Some(Arc::clone(idx)),
            _ => None,
        }
    }

    /// Block until `kind` is ready, promoting it in the build queue first.
    pub fn require(&self, kind: IndexKind) -> Result<Arc<RelationIndex>, PreprocessError> {
        let mut state = self.lock();
        if let Some(pos) = state.queue.iter().position(|&k| k == kind) {
            state.queue.remove(pos);
            state.queue.push_front(kind);
        }
        loop {
            match &state.slots[kind.position()] {
                Slot::Ready(idx) => return Ok(Arc::clone(idx)),
                Slot::Failed(why) => return Err(PreprocessError::IndexUnavailable(kind, why.clone())),
                Slot::Pending | Slot::Building => {
                    state = self.changed.wait(state).unwrap_or_else(|e| e.into_inner());
                }
            }
        }
    }

    /// Wait up to `timeout` for every index; true when all are ready or failed.
    pub fn wait_all(&self, timeout: Duration) -> bool {
        let deadline = Instant::now().checked_add(timeout);
        let mut state = self.lock();
        loop {
            if state.slots.iter().all(|s| matches!(s, Slot::Ready(_) | Slot::Failed(_))) {
                return true;
            }
            state = match deadline {
                None => self.changed.wait(state).unwrap_or_else(|e| e.into_inner()),
                Some(deadline) => {
                    let now = Instant::now();
                    if now >= deadline {
                        return false;
                    }
                    self.changed.wait_timeout(state, deadline - now).unwrap_or_else(|e| e.into_inner()).0
                }
            };
        }
    }

    fn run_worker(self: Arc<Self>, series: Arc<Vec<SeriesArtifacts>>, config: BuildConfig) {
        loop {
            let kind = {
                let mut state = self.lock();
                let Some(kind) = state.queue.pop_front() else {
                    return;
                };
                self.set(&mut state, kind, Slot::Building);
                kind
            };
            if !config.index_delay.is_zero() {
                thread::sleep(config.index_delay);
            }
            let built = panic::catch_unwind(AssertUnwindSafe(|| RelationIndex::build(kind, &series, config.max_lag)));
            let slot = match built {
                Ok(idx) => Slot::Ready(Arc::new(idx)),
                Err(_) => Slot::Failed("index build panicked".to_string()),
            };
            let mut state = self.lock();
            self.set(&mut state, kind, slot);
        }
    }
}

/// Everything a query runs against. Immutable apart from the index store's
/// build progress.
#[derive(Debug)]
pub struct Artifacts {
    pub dataset: Dataset,
    pub labels: MetaLabels,
    pub params: PreprocessParams,
    pub series: Arc<Vec<SeriesArtifacts>>,
    pub trends: TrendIndex,
    pub indexes: Arc<IndexStore>,
    pub max_lag: usize,
}

impl Artifacts {
    pub fn series_index(&self, name: &str) -> Option<usize> {
        self.dataset.index_of(name)
    }

    pub fn window_symbols(&self) -> usize {
        self.params.window_symbols()
    }

    pub fn compressed_len(&self) -> usize {
        self.params.compressed_len(self.dataset.len())
    }

    pub fn status(&self) -> BuildStatus {
        self.indexes.status()
    }

    /// Trend suggestions from one series' trie, or from all series when `series` is `None`.
    pub fn suggest_next_symbols(&self, series: Option<&str>, prefix: &[Symbol]) -> Option<Vec<(Symbol, f64)>> {
        let trie = match series {
            Some(name) => &self.trends.per_series[self.series_index(name)?],
            None => &self.trends.global,
        };
        Some(trie.suggest_next_symbols(prefix))
    }

    /// Assemble artifacts around already-built indexes (e.g. loaded from disk).
    pub fn with_indexes(
        dataset: Dataset,
        labels: MetaLabels,
        params: PreprocessParams,
        indexes: Vec<RelationIndex>,
        max_lag: usize,
    ) -> Result<Self, PreprocessError> {
        let series = build_series(&dataset, params);
        let trends = TrendIndex::build(&series, params.window_symbols())?;
        Ok(Self {
            dataset,
            labels,
            params,
            series: Arc::new(series),
            trends,
            indexes: Arc::new(IndexStore::ready(indexes)),
            max_lag,
        })
    }
}

fn build_series(dataset: &Dataset, params: PreprocessParams) -> Vec<SeriesArtifacts> {
    dataset
        .names()
        .iter()
        .enumerate()
        .map(|(i, name)| SeriesArtifacts::build(name, dataset.series_at(i), params.sampling_length))
        .collect()
}

/// Build all artifacts. Compression, symbols and tries finish before
/// returning; relation indexes get up to `config.budget` and then continue
/// on the background worker.
pub fn preprocess(
    dataset: Dataset,
    labels: MetaLabels,
    params: PreprocessParams,
    config: &BuildConfig,
) -> Result<Arc<Artifacts>, PreprocessError> {
    let series = Arc::new(build_series(&dataset, params));
    let trends = TrendIndex::build(&series, params.window_symbols())?;
    let store = Arc::new(IndexStore::pending(&IndexKind::ALL));
    {
        let store = Arc::clone(&store);
        let series = Arc::clone(&series);
        let config = config.clone();
        thread::Builder::new()
            .name("relaq-index-build".into())
            .spawn(move || store.run_worker(series, config))
            .expect("spawn index build worker");
    }
    store.wait_all(config.budget);
    Ok(Arc::new(Artifacts { dataset, labels, params, series, trends, indexes: store, max_lag: config.max_lag }))
}
