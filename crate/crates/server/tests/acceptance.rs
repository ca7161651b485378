//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeSet, HashMap};
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use relaq_client::Client;
use relaq_core::datamodel::{Dataset, MetaLabels, PreprocessParams};
use relaq_core::matcher::{
    execute_query, rasterize_sketch, run_query, seed_candidates, trend_match_degree, MatchConfig, DEGREE_THRESHOLD,
    TOP_CANDIDATES,
};
use relaq_core::preprocess::{
    preprocess, sax_symbolize, ArtifactState, Artifacts, BuildConfig, IndexKind, Occurrence, Symbol, TrendTrie,
};
use relaq_core::querymodel::{
    parse_query, temporal_order, validate_query, Mode, QueryGraph, Relalink, SketchPoint, Timebox,
};
use relaq_core::recommender::{recommend, RecommendConfig};
use relaq_core::relations::{
    self, granger_strength, granger_test, pearson_strength, similarity_strength, ArithmeticSpec, Comparator,
    FragmentView, Operator, RelationKind, StrengthContext,
};
use relaq_core::synth::{correlated_walks, fig5_dataset, FIG5_QUERY};
use relaq_core::wire::UploadParams;
use relaq_server::{start, AppState, ServerConfig};

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, name: &str, ok: bool, detail: impl AsRef<str>) {
        println!("{} {name}: {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
        if !ok {
            self.failures += 1;
        }
    }
}

fn main() {
    let mut report = Report { failures: 0 };
    oracle_equivalence(&mut report);
    fig5(&mut report);
    kernels(&mut report);
    sax_equiprobability(&mut report);
    trie_completeness(&mut report);
    recommendations(&mut report);
    performance(&mut report);
    backgrounding(&mut report);
    println!(
        "NOTE case-study narratives and user-study scores: not reproducible (human studies, private data); \
         replaced by the property checks above"
    );
    if report.failures > 0 {
        std::process::exit(1);
    }
}

fn artifacts(dataset: Dataset, labels: MetaLabels, sampling: usize, box_length: usize) -> Arc<Artifacts> {
    let params = PreprocessParams::new(sampling, box_length).expect("valid params");
    preprocess(dataset, labels, params, &BuildConfig::default()).expect("preprocess")
}

// ---- oracle equivalence ----

const INSTANCES: usize = 200;
const MAX_PRODUCT: usize = 300_000;

/// `(series, start)` per timebox in query order, the unsatisfied link, score bits.
type Row = (Vec<(u32, u32)>, Option<usize>, u64);

fn random_instance(rng: &mut ChaCha8Rng) -> (Dataset, MetaLabels, QueryGraph) {
    let n = rng.random_range(2..=8usize);
    let s = rng.random_range(1..=4usize);
    let c = rng.random_range(6..=16usize);
    let m = c * s - rng.random_range(0..s);
    let w = rng.random_range(2..=c.min(6));
    let normal = Normal::new(0.0, 1.0).unwrap();

    let mut driver = 0.0;
    let driver: Vec<f64> = (0..m)
        .map(|_| {
            driver += normal.sample(rng);
            driver
        })
        .collect();
    let letters = ["k", "b", "x", "a", "q", "m", "d", "t"];
    let names: Vec<String> = (0..n).map(|i| format!("{}{i}", letters.choose(rng).unwrap())).collect();
    let series: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            if rng.random_bool(0.05) {
                return vec![rng.random_range(-3.0..3.0); m];
            }
            let mix: f64 = rng.random_range(0.0..1.0);
            let level = rng.random_range(-5.0..5.0);
            let mut own = 0.0;
            driver
                .iter()
                .map(|d| {
                    own += normal.sample(rng);
                    level + mix * d + (1.0 - mix) * own
                })
                .collect()
        })
        .collect();
    let mut labels = MetaLabels::default();
    for (i, name) in names.iter().enumerate() {
        if i == 0 || rng.random_bool(0.8) {
            labels.insert(name, "region", ["n", "s"].choose(rng).unwrap());
        }
    }
    let (lo_all, hi_all) = series.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));

    let mode = if rng.random_bool(0.5) { Mode::Strict } else { Mode::Fuzzy };
    let box_length = w * s;
    let k = rng.random_range(1..=4usize);
    let timeboxes: Vec<Timebox> = (0..k)
        .map(|i| {
            let name = rng.random_bool(0.5).then(|| names.choose(rng).unwrap().clone());
            let mut offset = rng.random_range(0..=2 * box_length) as u64;
            if rng.random_bool(0.7) {
                offset -= offset % s as u64;
            }
            let sketch = rng.random_bool(0.4).then(|| {
                let count = rng.random_range(2..=4usize.min(box_length + 1));
                let mut xs = BTreeSet::new();
                while xs.len() < count {
                    xs.insert(rng.random_range(0..=box_length));
                }
                xs.into_iter().map(|x| SketchPoint { x: x as f64, y: rng.random_range(0.0..=1.0) }).collect()
            });
            let value_bounds = rng.random_bool(0.2).then(|| {
                let (lo, hi) = match &name {
                    Some(nm) => {
                        let v = &series[names.iter().position(|x| x == nm).unwrap()];
                        v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
                    }
                    None => (lo_all, hi_all),
                };
                let r = hi - lo;
                [lo + rng.random_range(0.0..0.3) * r, hi - rng.random_range(0.0..0.3) * r]
            });
            Timebox { id: format!("b{i}"), name, offset, sketch, value_bounds }
        })
        .collect();

    let mut pairs = Vec::new();
    for i in 1..k {
        pairs.push((rng.random_range(0..i), i));
    }
    if k >= 2 {
        for _ in 0..rng.random_range(0..=4 - (k - 1)) {
            let a = rng.random_range(0..k);
            let b = (a + rng.random_range(1..k)) % k;
            pairs.push((a, b));
        }
    }
    let relalinks = pairs
        .into_iter()
        .enumerate()
        .map(|(j, (a, b))| {
            let (source, target) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
            let mut kinds = vec![RelationKind::Correlation, RelationKind::Similarity, RelationKind::Meta, RelationKind::Arithmetic];
            if w >= 5 {
                kinds.push(RelationKind::Causality);
            }
            let kind = *kinds.choose(rng).unwrap();
            let threshold = match kind {
                RelationKind::Correlation => *[[-1.0, 1.0], [0.0, 1.0], [0.3, 1.0], [0.6, 1.0], [-1.0, -0.2]].choose(rng).unwrap(),
                RelationKind::Similarity => *[[0.0, 1.0], [0.5, 1.0], [0.7, 1.0]].choose(rng).unwrap(),
                RelationKind::Causality => *[[0.0, 1.0], [0.5, 1.0], [0.9, 1.0]].choose(rng).unwrap(),
                _ => *[[1.0, 1.0], [0.0, 0.0], [0.0, 1.0]].choose(rng).unwrap(),
            };
            let arithmetic = (kind == RelationKind::Arithmetic).then(|| {
                let op = *[Operator::Sum, Operator::Avg, Operator::Var, Operator::Min, Operator::Max].choose(rng).unwrap();
                let cmp = *[Comparator::Ge, Comparator::Le, Comparator::Eq].choose(rng).unwrap();
                ArithmeticSpec::new(op, cmp)
            });
            Relalink {
                id: format!("l{j}"),
                kind,
                source: format!("b{source}"),
                target: format!("b{target}"),
                threshold,
                meta_key: (kind == RelationKind::Meta).then(|| "region".to_string()),
                arithmetic,
            }
        })
        .collect();
    let max_lag = rng.random_bool(0.5).then(|| rng.random_range(1..=3));
    let timestamps = (0..m).map(|t| t.to_string()).collect();
    let dataset = Dataset::from_columns(timestamps, names, series).expect("well-formed instance");
    let q = QueryGraph { mode, sampling_length: s, box_length, max_lag, timeboxes, relalinks };
    (dataset, labels, q)
}

/// Node sets per timebox: `(series, start, degree)`.
fn oracle_nodes(q: &QueryGraph, art: &Artifacts) -> Vec<Vec<(u32, u32, f64)>> {
    let w = art.window_symbols();
    let s = art.params.sampling_length;
    let m = art.dataset.len();
    let last = art.compressed_len() - w;
    q.timeboxes
        .iter()
        .enumerate()
        .map(|(i, tb)| {
            let raster = tb.sketch.as_ref().map(|sk| rasterize_sketch(sk, w, q.mode).unwrap());
            let mut out = Vec::new();
            for series in seed_candidates(q, i, art, TOP_CANDIDATES).unwrap() {
                let original = art.dataset.series_at(series);
                let lo = original.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = original.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let bounds = tb.value_bounds.map_or((lo, hi), |[a, b]| (a, b));
                for start in 0..=last {
                    let covered = &original[(start * s).min(m)..((start + w) * s).min(m)];
                    if let Some([a, b]) = tb.value_bounds {
                        if covered.iter().any(|&v| v < a || v > b) {
                            continue;
                        }
                    }
                    let degree = match &raster {
                        None => 1.0,
                        Some(r) => {
                            let d = trend_match_degree(&art.series[series].compressed[start..start + w], r, q.mode, bounds).unwrap();
                            if d < DEGREE_THRESHOLD {
                                continue;
                            }
                            d
                        }
                    };
                    out.push((series as u32, start as u32, degree));
                }
            }
            out
        })
        .collect()
}

fn view(art: &Artifacts, series: u32, start: u32) -> FragmentView<'_> {
    let w = art.window_symbols();
    let s = art.params.sampling_length;
    let m = art.dataset.len();
    let (series, start) = (series as usize, start as usize);
    let sa = &art.series[series];
    FragmentView {
        series: &sa.name,
        raw: &sa.compressed[start..start + w],
        normalized: &sa.normalized[start..start + w],
        original: &art.dataset.series_at(series)[(start * s).min(m)..((start + w) * s).min(m)],
    }
}

/// Every complete assignment, by enumerating the full cartesian product.
fn brute_force(q: &QueryGraph, art: &Artifacts, nodes: &[Vec<(u32, u32, f64)>]) -> Vec<Row> {
    let s = art.params.sampling_length as i64;
    let budget = match q.mode {
        Mode::Strict => 0,
        Mode::Fuzzy => 1,
    };
    let pos = |id: &str| q.timeboxes.iter().position(|b| b.id == id).unwrap();
    let ends: Vec<(usize, usize)> = q.relalinks.iter().map(|l| (pos(&l.source), pos(&l.target))).collect();
    let mut cache: Vec<HashMap<(usize, usize), Option<f64>>> = vec![HashMap::new(); q.relalinks.len()];
    let mut satisfied = |k: usize, a: usize, b: usize| -> Option<f64> {
        *cache[k].entry((a, b)).or_insert_with(|| {
            let link = &q.relalinks[k];
            let (bs, bt) = ends[k];
            let (src, tgt) = (nodes[bs][a], nodes[bt][b]);
            let required = q.timeboxes[bt].offset as i64 - q.timeboxes[bs].offset as i64;
            let realized = (tgt.1 as i64 - src.1 as i64) * s;
            let lag_ok = match q.mode {
                Mode::Strict => realized == required,
                Mode::Fuzzy => (realized - required).abs() <= s,
            };
            if !lag_ok {
                return None;
            }
            let ctx = StrengthContext {
                labels: Some(&art.labels),
                meta_key: link.meta_key.as_deref(),
                arithmetic: link.arithmetic,
                max_lag: q.max_lag(),
            };
            let st = relations::strength(link.kind, &view(art, src.0, src.1), &view(art, tgt.0, tgt.1), &ctx).ok()?;
            (st >= link.threshold[0] && st <= link.threshold[1]).then_some(st)
        })
    };

    let mut rows = Vec::new();
    if nodes.iter().any(Vec::is_empty) {
        return rows;
    }
    let mut idx = vec![0usize; nodes.len()];
    loop {
        let mut failed = Vec::new();
        let mut strengths = Vec::with_capacity(ends.len());
        for (k, &(a, b)) in ends.iter().enumerate() {
            match satisfied(k, idx[a], idx[b]) {
                Some(st) => strengths.push(st),
                None => {
                    failed.push(k);
                    strengths.push(0.0);
                }
            }
        }
        if failed.len() <= budget {
            let mut score = 0.0;
            for (b, &i) in idx.iter().enumerate() {
                score += nodes[b][i].2;
            }
            for (k, st) in strengths.iter().enumerate() {
                if !failed.contains(&k) {
                    score += st.abs();
                }
            }
            let assignment = idx.iter().enumerate().map(|(b, &i)| (nodes[b][i].0, nodes[b][i].1)).collect();
            rows.push((assignment, failed.first().copied(), score.to_bits()));
        }
        // odometer step
        let mut b = 0;
        loop {
            if b == idx.len() {
                return rows;
            }
            idx[b] += 1;
            if idx[b] < nodes[b].len() {
                break;
            }
            idx[b] = 0;
            b += 1;
        }
    }
}

/// The ranking rule, restated: score descending, then starts in temporal
/// box order, then series-name ranks in the same order.
fn oracle_rank(q: &QueryGraph, art: &Artifacts, rows: &mut [Row]) {
    let order: Vec<usize> = temporal_order(q).iter().map(|id| q.timeboxes.iter().position(|b| b.id == *id).unwrap()).collect();
    let mut names: Vec<&str> = art.dataset.names().iter().map(String::as_str).collect();
    names.sort();
    let rank = |series: u32| names.iter().position(|n| *n == art.dataset.names()[series as usize]).unwrap();
    let key = |r: &Row| -> (Vec<u32>, Vec<usize>) { order.iter().map(|&b| (r.0[b].1, rank(r.0[b].0))).unzip() };
    rows.sort_by(|a, b| f64::from_bits(b.2).total_cmp(&f64::from_bits(a.2)).then_with(|| key(a).cmp(&key(b))));
}

fn engine_rows(q: &QueryGraph, art: &Artifacts, memoize: bool) -> (Vec<Row>, bool) {
    let config = MatchConfig { result_cap: 1 << 40, memoize, ..MatchConfig::default() };
    let run = run_query(q, art, &config).expect("query runs");
    let rows = run
        .outcome
        .results
        .iter()
        .map(|r| {
            let assignment = r
                .nodes
                .iter()
                .enumerate()
                .map(|(b, &i)| {
                    let node = run.graph.nodes[b][i as usize];
                    (node.series, node.start)
                })
                .collect();
            (assignment, r.unsatisfied, r.score.to_bits())
        })
        .collect();
    (rows, run.outcome.truncated)
}

fn oracle_equivalence(report: &mut Report) {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_901);
    let (mut accepted, mut drawn, mut agree) = (0, 0, 0);
    let (mut total_results, mut nonempty, mut with_unsat) = (0usize, 0usize, 0usize);
    let mut kinds = BTreeSet::new();
    let mut modes = BTreeSet::new();
    let mut first_mismatch = None;
    while accepted < INSTANCES {
        drawn += 1;
        let (dataset, labels, q) = random_instance(&mut rng);
        let art = artifacts(dataset, labels, q.sampling_length, q.box_length);
        let diagnostics = validate_query(&q, &art);
        assert!(diagnostics.is_empty(), "generator produced an invalid query: {diagnostics:?}");
        let nodes = oracle_nodes(&q, &art);
        if nodes.iter().map(Vec::len).try_fold(1usize, |acc, n| acc.checked_mul(n.max(1))).is_none_or(|p| p > MAX_PRODUCT) {
            continue;
        }
        accepted += 1;
        let mut expected = brute_force(&q, &art, &nodes);
        oracle_rank(&q, &art, &mut expected);
        let (got, truncated) = engine_rows(&q, &art, true);
        let (unmemo, _) = engine_rows(&q, &art, false);
        let ok = got == expected && unmemo == expected && !truncated;
        if ok {
            agree += 1;
        } else if first_mismatch.is_none() {
            first_mismatch = Some(format!(
                "instance {accepted}: expected {} results, matcher gave {} ({}), query {}",
                expected.len(),
                got.len(),
                unmemo.len(),
                serde_json::to_string(&q).unwrap()
            ));
        }
        total_results += expected.len();
        nonempty += usize::from(!expected.is_empty());
        with_unsat += expected.iter().filter(|r| r.1.is_some()).count();
        kinds.extend(q.relalinks.iter().map(|l| l.kind.as_str()));
        if q.timeboxes.iter().map(|b| b.offset).collect::<BTreeSet<_>>().len() > 1 {
            kinds.insert("lag");
        }
        modes.insert(format!("{:?}", q.mode));
    }
    let elapsed = started.elapsed();
    let ok = agree == INSTANCES && elapsed < Duration::from_secs(120);
    let mut detail = format!(
        "{agree}/{INSTANCES} instances agree ({drawn} drawn), {total_results} results, {nonempty} non-empty, \
         {with_unsat} with an unsatisfied link, kinds {kinds:?}, modes {modes:?}, {:.1}s",
        elapsed.as_secs_f64()
    );
    if let Some(m) = first_mismatch {
        detail.push_str(&format!("; first mismatch {m}"));
    }
    report.check("oracle equivalence", ok, detail);
}

// ---- worked example ----

fn fig5(report: &mut Report) {
    let art = artifacts(fig5_dataset(), MetaLabels::default(), 1, 4);
    let q = parse_query(FIG5_QUERY).unwrap();
    let resp = execute_query(&q, &art, &MatchConfig::default()).unwrap();
    let scores: Vec<f64> = resp.results.iter().map(|r| r.score).collect();
    let ok = scores.len() == 2 && (scores[0] - 2.94).abs() <= 1e-9 && (scores[1] - 2.93).abs() <= 1e-9;
    report.check("worked example", ok, format!("scores {scores:?}"));
}

// ---- kernels ----

/// Reference values from statsmodels `grangercausalitytests` (ssr F-test)
/// on [`granger_fixture`], lags 1 to 4: (F, p) forward then backward.
const GRANGER_REFERENCE: [[(f64, f64); 4]; 2] = [
    [
        (47.20439306572596, 1.5381329823100344e-09),
        (305.17385873555975, 3.522577753323911e-36),
        (799.8032030515519, 4.5782721745722215e-54),
        (1461.3026810079418, 2.2537083174143142e-64),
    ],
    [
        (11.528331482632408, 0.0010924867104117376),
        (32.68981325768464, 7.280325036741617e-11),
        (161.42982235772993, 2.2299820858338036e-31),
        (5.097888286599161, 0.0012011218765090263),
    ],
];

fn granger_fixture() -> (Vec<f64>, Vec<f64>) {
    let n = 80;
    let x: Vec<f64> = (0..n)
        .map(|t| {
            let t_f = t as f64;
            (0.3 * t_f).sin() + 0.5 * (1.7 * t_f + 0.4).sin() + 0.1 * (((t * 7919) % 13) as f64 - 6.0) / 6.0
        })
        .collect();
    let mut y = vec![0.0, 0.0];
    for t in 2..n {
        let t_f = t as f64;
        y.push(0.9 * x[t - 2] + 0.3 * (2.3 * t_f).cos() + 0.05 * (((t * 104729) % 11) as f64 - 5.0) / 5.0);
    }
    (x, y)
}

fn closed_form_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let saa: f64 = a.iter().map(|x| x * x).sum();
    let sbb: f64 = b.iter().map(|x| x * x).sum();
    (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
}

fn kernels(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (mut worst, mut formula): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let len = rng.random_range(2..100);
        let a: Vec<f64> = (0..len).map(|_| normal.sample(&mut rng)).collect();
        let slope = rng.random_range(-5.0..5.0);
        let shift = rng.random_range(-10.0..10.0);
        let b: Vec<f64> = a.iter().map(|x| slope * x + shift).collect();
        let got = pearson_strength(&a, &b).unwrap();
        worst = worst.max((got - slope.signum()).abs());
        formula = formula.max((closed_form_pearson(&a, &b) - slope.signum()).abs());
    }
    report.check(
        "pearson closed form",
        worst <= 1e-12,
        format!("max |r - sign(slope)| {worst:.2e} on 200 linear pairs (textbook sum formula: {formula:.2e})"),
    );

    let a: Vec<f64> = (0..32).map(|_| rng.random_range(0.0..=1.0)).collect();
    let same = similarity_strength(&a, &a).unwrap();
    let apart = similarity_strength(&vec![0.0; 32], &vec![1.0; 32]).unwrap();
    report.check("similarity extremes", same == 1.0 && apart == 0.0, format!("identical {same}, separated {apart}"));

    let n = 400;
    let x: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let y: Vec<f64> = (0..n).map(|t| if t >= 2 { 0.9 * x[t - 2] } else { 0.0 } + normal.sample(&mut rng)).collect();
    let fwd = granger_strength(&x, &y, 4).unwrap();
    let bwd = granger_strength(&y, &x, 4).unwrap();
    report.check("granger direction", fwd > 0.99 && bwd < fwd, format!("forward {fwd:.6}, backward {bwd:.6}"));

    let (x, y) = granger_fixture();
    let mut max_p: f64 = 0.0;
    let mut max_f: f64 = 0.0;
    for (dir, (cause, effect)) in [(&x, &y), (&y, &x)].into_iter().enumerate() {
        for lag in 1..=4 {
            let t = granger_test(cause, effect, lag).unwrap();
            let (f, p) = GRANGER_REFERENCE[dir][lag - 1];
            max_p = max_p.max((t.p_value - p).abs());
            max_f = max_f.max(((t.f_statistic - f) / f).abs());
        }
    }
    report.check(
        "granger reference p-values",
        max_p <= 1e-6,
        format!("max |dp| {max_p:.2e}, max relative dF {max_f:.2e} over 8 tests"),
    );
}

fn sax_equiprobability(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let samples: Vec<f64> = (0..1_000_000).map(|_| normal.sample(&mut rng)).collect();
    let mut counts = [0usize; 4];
    for s in sax_symbolize(&samples) {
        counts[s.index()] += 1;
    }
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / samples.len() as f64).collect();
    let ok = freqs.iter().all(|f| (f - 0.25).abs() <= 0.02);
    report.check("sax equi-probability", ok, format!("frequencies {freqs:.4?}"));
}

fn trie_completeness(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut missing, mut count_errors, mut worst_ratio) = (0usize, 0usize, 0.0f64);
    let mut windows = 0usize;
    for _ in 0..50 {
        let count = rng.random_range(1..=5);
        let sequences: Vec<(String, Vec<Symbol>)> = (0..count)
            .map(|i| {
                let len = rng.random_range(5..200);
                (format!("s{i}"), (0..len).map(|_| Symbol::from_index(rng.random_range(0..4)).unwrap()).collect())
            })
            .collect();
        let shortest = sequences.iter().map(|(_, s)| s.len()).min().unwrap();
        let window = rng.random_range(1..=shortest.min(8));
        let trie = TrendTrie::build(&sequences, window).unwrap();
        let expected: usize = sequences.iter().map(|(_, s)| s.len() - window + 1).sum();
        windows += expected;
        for (i, (_, seq)) in sequences.iter().enumerate() {
            for start in 0..=seq.len() - window {
                let occ = Occurrence { series: i as u32, start: start as u32 };
                if !trie.lookup(&seq[start..start + window]).is_some_and(|o| o.contains(&occ)) {
                    missing += 1;
                }
            }
        }
        if trie.leaf_occurrences().count() != expected || trie.window_count() != expected {
            count_errors += 1;
        }
        for sum in trie.ratio_sums() {
            worst_ratio = worst_ratio.max((sum - 1.0).abs());
        }
    }
    let ok = missing == 0 && count_errors == 0 && worst_ratio <= 1e-9;
    report.check(
        "trie completeness",
        ok,
        format!("{windows} windows, {missing} missing, {count_errors} count mismatches, max ratio-sum error {worst_ratio:.1e}"),
    );
}

// ---- recommendations ----

fn recommendations(report: &mut Report) {
    let art = artifacts(correlated_walks(30, 400, 0.7, 5), MetaLabels::default(), 4, 40);
    let q = parse_query(
        r#"{"sampling_length": 4, "box_length": 40,
            "timeboxes": [{"id": "A", "name": "s000"}]}"#,
    )
    .unwrap();
    let matrix = recommend(&q, "A", &art, &RecommendConfig::default()).unwrap();
    let total: f64 = matrix.rows.iter().flat_map(|r| r.cells()).map(|c| c.confidence).sum();
    let ok = matrix.rows.len() <= 20 && (total - 1.0).abs() <= 1e-9;
    report.check(
        "recommendation confidences",
        ok,
        format!("{} rows, confidence sum {total:.12}", matrix.rows.len()),
    );

    // one series tracks the focus closely, the rest wander on their own
    let len = 600;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let walk = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut v = 0.0;
        (0..len)
            .map(|_| {
                v += normal.sample(rng);
                v
            })
            .collect()
    };
    let focus = walk(&mut rng);
    let dominant: Vec<f64> = focus.iter().map(|v| 0.8 * v + 3.0 + 0.05 * normal.sample(&mut rng)).collect();
    let names = ["alpha", "bravo", "charlie", "delta", "echo"];
    let series = vec![focus, walk(&mut rng), walk(&mut rng), dominant, walk(&mut rng)];
    let dataset = Dataset::from_columns(
        (0..len).map(|t| t.to_string()).collect(),
        names.iter().map(|s| s.to_string()).collect(),
        series,
    )
    .unwrap();
    let mut labels = MetaLabels::default();
    for name in names {
        labels.insert(name, "region", "coast");
    }
    let art = artifacts(dataset, labels, 5, 50);
    let q = parse_query(
        r#"{"sampling_length": 5, "box_length": 50,
            "timeboxes": [{"id": "A", "name": "alpha"}, {"id": "B"}],
            "relalinks": [{"id": "m", "kind": "meta", "meta_key": "region", "source": "A", "target": "B", "threshold": [1, 1]}]}"#,
    )
    .unwrap();
    let matrix = recommend(&q, "A", &art, &RecommendConfig::default()).unwrap();
    let top = matrix.rows.first().map(|r| r.series.as_str()).unwrap_or("-");
    report.check("dominant series first", top == "delta", format!("top row {top:?} of {}", matrix.rows.len()));

    let indexed = [RelationKind::Correlation, RelationKind::Similarity, RelationKind::Causality];
    let bad = matrix
        .rows
        .iter()
        .flat_map(|r| r.cells())
        .filter(|c| !indexed.contains(&c.kind) || !indexed.contains(&c.query_delta.relalink.kind))
        .count();
    report.check("no meta or arithmetic recommendations", bad == 0, format!("{bad} offending cells"));
}

// ---- service ----

fn performance(report: &mut Report) {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    runtime.block_on(async {
        let state = Arc::new(AppState::new(ServerConfig::default()));
        let server = start(SocketAddr::from(([127, 0, 0, 1], 0)), state).await.unwrap();
        let client = Client::new(server.url());
        let csv = correlated_walks(142, 5000, 0.6, 3).to_csv().into_bytes();
        let params = UploadParams { sampling_length: 10, box_length: 100, step_unit: "step".into() };
        let t0 = Instant::now();
        let handle = client.upload(csv, None, &params).await.unwrap();
        let upload = t0.elapsed();
        let query = r#"{"mode": "strict", "sampling_length": 10, "box_length": 100,
            "timeboxes": [
                {"id": "A", "name": "s000", "sketch": [{"x": 0, "y": 0}, {"x": 100, "y": 1}]},
                {"id": "B"}],
            "relalinks": [{"id": "c", "kind": "correlation", "source": "A", "target": "B", "threshold": [0.8, 1]}]}"#;
        let t1 = Instant::now();
        let body = client.query_raw(&handle.id, query).await.unwrap();
        let elapsed = t1.elapsed();
        let results = serde_json::from_str::<serde_json::Value>(&body).unwrap()["results"].as_array().map_or(0, Vec::len);
        report.check(
            "performance 142 x 5000",
            elapsed < Duration::from_secs(2) && results > 0,
            format!(
                "query {:.0} ms over HTTP, {results} results; upload and preprocessing {:.0} ms",
                elapsed.as_secs_f64() * 1e3,
                upload.as_secs_f64() * 1e3
            ),
        );
    });
}

fn backgrounding(report: &mut Report) {
    let budget = Duration::from_millis(100);
    let config = BuildConfig { budget, index_delay: Duration::from_millis(300), ..BuildConfig::default() };
    let params = PreprocessParams::new(10, 100).unwrap();
    let t0 = Instant::now();
    let art = preprocess(correlated_walks(40, 2000, 0.5, 9), MetaLabels::default(), params, &config).unwrap();
    let returned = t0.elapsed();
    let at_return = art.status();

    let poller = {
        let art = Arc::clone(&art);
        thread::spawn(move || {
            let mut seen: Vec<Vec<ArtifactState>> = vec![Vec::new(); 3];
            loop {
                let status = art.status();
                for kind in IndexKind::ALL {
                    let s = status.index(kind);
                    if seen[kind.position()].last() != Some(&s) {
                        seen[kind.position()].push(s);
                    }
                }
                if status.all_ready() {
                    return seen;
                }
                thread::sleep(Duration::from_millis(5));
            }
        })
    };
    let q = parse_query(
        r#"{"sampling_length": 10, "box_length": 100,
            "timeboxes": [{"id": "A", "name": "s000"}, {"id": "B"}],
            "relalinks": [{"id": "g", "kind": "causality", "source": "A", "target": "B", "threshold": [0.99, 1]}]}"#,
    )
    .unwrap();
    run_query(&q, &art, &MatchConfig::default()).unwrap();
    let observed = poller.join().unwrap();
    let order = art.indexes.completion_order();

    let within_budget = returned < budget + Duration::from_millis(150) && !at_return.all_ready();
    report.check(
        "build budget",
        within_budget,
        format!("preprocess returned after {} ms with {at_return:?}", returned.as_millis()),
    );
    let transitions = [ArtifactState::Pending, ArtifactState::Building, ArtifactState::Ready];
    let polled = IndexKind::ALL.iter().filter(|k| k.position() != 0).all(|k| observed[k.position()] == transitions);
    let logged = IndexKind::ALL.iter().all(|&k| {
        let states: Vec<ArtifactState> = art.indexes.events().iter().filter(|e| e.index == k).map(|e| e.state).collect();
        states == transitions
    });
    report.check(
        "status transitions",
        polled && logged,
        format!("polled {observed:?}"),
    );
    let promoted = order == [IndexKind::Correlation, IndexKind::Causality, IndexKind::Similarity];
    report.check("required index builds first", promoted, format!("completion order {order:?}"));
}
