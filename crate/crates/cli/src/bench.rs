//! Synthetic scaling report: preprocessing and query latency over (N, M, k).

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use relaq_core::datamodel::{MetaLabels, PreprocessParams};
use relaq_core::matcher::{execute_query, MatchConfig};
use relaq_core::preprocess::{preprocess, BuildConfig};
use relaq_core::querymodel::{parse_query, QueryGraph};
use relaq_core::synth::correlated_walks;

const REPEATS: usize = 3;

/// A chain of `k` boxes: a named first box, then default boxes one window
/// apart, each correlated with its predecessor.
pub fn chain_query(k: usize, params: PreprocessParams) -> QueryGraph {
    let boxes: Vec<String> = (0..k)
        .map(|i| {
            let name = if i == 0 { r#","name":"s000""# } else { "" };
            format!(r#"{{"id":"b{i}"{name},"offset":{}}}"#, i * params.box_length)
        })
        .collect();
    let links: Vec<String> = (1..k)
        .map(|i| format!(r#"{{"id":"l{i}","kind":"correlation","source":"b{}","target":"b{i}","threshold":[0.8,1]}}"#, i - 1))
        .collect();
    let json = format!(
        r#"{{"sampling_length":{},"box_length":{},"timeboxes":[{}],"relalinks":[{}]}}"#,
        params.sampling_length,
        params.box_length,
        boxes.join(","),
        links.join(",")
    );
    parse_query(&json).expect("generated query is well-formed")
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

pub fn run(dir: &Path, series: &[usize], lengths: &[usize], boxes: &[usize], params: PreprocessParams) -> Result<String, String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut out = String::new();
    writeln!(out, "| N | M | k | preprocess ms | query ms | results | query ns per k*N^2*M |").unwrap();
    writeln!(out, "|---|---|---|---|---|---|---|").unwrap();
    for &n in series {
        for &m in lengths {
            let ds = correlated_walks(n, m, 0.5, (n * 1_000_003 + m) as u64);
            let t = Instant::now();
            let artifacts = preprocess(ds, MetaLabels::default(), params, &BuildConfig::default()).map_err(|e| e.to_string())?;
            let pre_ms = t.elapsed().as_secs_f64() * 1e3;
            for &k in boxes {
                let q = chain_query(k.max(1), params);
                let mut times = Vec::with_capacity(REPEATS);
                let mut results = 0;
                for _ in 0..REPEATS {
                    let t = Instant::now();
                    let resp = execute_query(&q, &artifacts, &MatchConfig::default()).map_err(|e| e.to_string())?;
                    times.push(t.elapsed().as_secs_f64() * 1e3);
                    results = resp.results.len();
                }
                let q_ms = median(times);
                let unit = (k * n * n * m) as f64;
                writeln!(out, "| {n} | {m} | {k} | {pre_ms:.1} | {q_ms:.2} | {results} | {:.4} |", q_ms * 1e6 / unit).unwrap();
            }
        }
    }
    let path = dir.join("bench.md");
    std::fs::write(&path, &out).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(out)
}
