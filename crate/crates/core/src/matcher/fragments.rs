//! Step one: sliding-window fragments filtered by trend, name and value constraints.

use std::ops::Range;

use crate::preprocess::{minmax_with_bounds, z_normalize, Artifacts};
use crate::querymodel::{Mode, SketchPoint, Timebox};
use crate::relations::FragmentView;

use super::MatchError;

/// Admission threshold for the trend-match degree.
pub const DEGREE_THRESHOLD: f64 = 0.7;

/// A candidate fragment: `start` and the window length are in compressed samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub series: u32,
    pub start: u32,
    pub degree: f64,
}

/// Fragment starts for a compressed series of `compressed_len` samples.
pub fn enumerate_fragments(compressed_len: usize, window: usize) -> Result<Range<usize>, MatchError> {
    if window == 0 || window > compressed_len {
        return Err(MatchError::WindowTooLong { window, len: compressed_len });
    }
    Ok(0..compressed_len - window + 1)
}

/// Sample the polyline at `window` equally spaced x positions spanning its
/// x-range. Fuzzy mode z-normalizes the samples.
pub fn rasterize_sketch(sketch: &[SketchPoint], window: usize, mode: Mode) -> Result<Vec<f64>, MatchError> {
    let (Some(first), Some(last)) = (sketch.first(), sketch.last()) else {
        return Err(MatchError::DegenerateSketch);
    };
    let span = last.x - first.x;
    if !(span > 0.0) || window == 0 {
        return Err(MatchError::DegenerateSketch);
    }
    let mut samples = Vec::with_capacity(window);
    let mut seg = 0;
    for k in 0..window {
        let x = if window == 1 { first.x } else { first.x + span * k as f64 / (window - 1) as f64 };
        while seg + 2 < sketch.len() && x > sketch[seg + 1].x {
            seg += 1;
        }
        let (p, q) = (sketch[seg], sketch[seg + 1]);
        let t = ((x - p.x) / (q.x - p.x)).clamp(0.0, 1.0);
        samples.push(p.y + t * (q.y - p.y));
    }
    Ok(match mode {
        Mode::Strict => samples,
        Mode::Fuzzy => z_normalize(&samples),
    })
}

/// Trend-match degree of a fragment (compressed values, original units)
/// against a raster. Strict mode maps the fragment into the box's value
/// bounds and compares shapes at fixed aspect ratio; fuzzy mode compares
/// z-normalized shapes.
pub fn trend_match_degree(fragment: &[f64], raster: &[f64], mode: Mode, bounds: (f64, f64)) -> Result<f64, MatchError> {
    if fragment.len() != raster.len() || fragment.is_empty() {
        return Err(MatchError::LengthMismatch { fragment: fragment.len(), raster: raster.len() });
    }
    let root_len = (fragment.len() as f64).sqrt();
    let degree = match mode {
        Mode::Strict => {
            let scaled = minmax_with_bounds(fragment, bounds.0, bounds.1);
            1.0 - euclid(&scaled, raster) / root_len
        }
        Mode::Fuzzy => 1.0 - euclid(&z_normalize(fragment), &z_normalize(raster)) / (2.0 * root_len),
    };
    Ok(degree.max(0.0))
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Original-sample range covered by a fragment.
pub(crate) fn original_span(artifacts: &Artifacts, start: usize) -> Range<usize> {
    let s = artifacts.params.sampling_length;
    let len = artifacts.dataset.len();
    let lo = (start * s).min(len);
    let hi = ((start + artifacts.window_symbols()) * s).min(len);
    lo..hi
}

pub(crate) fn fragment_view(artifacts: &Artifacts, series: usize, start: usize) -> FragmentView<'_> {
    let sa = &artifacts.series[series];
    let w = artifacts.window_symbols();
    FragmentView {
        series: &sa.name,
        raw: &sa.compressed[start..start + w],
        normalized: &sa.normalized[start..start + w],
        original: &sa.original[original_span(artifacts, start)],
    }
}

/// Node set for one timebox over the given candidate series.
pub fn filter_nodes(
    timebox: &Timebox,
    candidates: &[usize],
    artifacts: &Artifacts,
    mode: Mode,
    threshold: f64,
) -> Result<Vec<Node>, MatchError> {
    let window = artifacts.window_symbols();
    let starts = enumerate_fragments(artifacts.compressed_len(), window)?;
    let raster = timebox.sketch.as_deref().map(|s| rasterize_sketch(s, window, mode)).transpose()?;
    let mut nodes = Vec::new();
    for &series in candidates {
        let sa = &artifacts.series[series];
        let bounds = timebox.value_bounds.map(|[lo, hi]| (lo, hi)).unwrap_or((sa.min, sa.max));
        for start in starts.clone() {
            if let Some([lo, hi]) = timebox.value_bounds {
                if !sa.original[original_span(artifacts, start)].iter().all(|v| (lo..=hi).contains(v)) {
                    continue;
                }
            }
            let degree = match &raster {
                Some(raster) => trend_match_degree(&sa.compressed[start..start + window], raster, mode, bounds)?,
                None => 1.0,
            };
            if raster.is_some() && degree < threshold {
                continue;
            }
            nodes.push(Node { series: series as u32, start: start as u32, degree });
        }
    }
    Ok(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(p: &[(f64, f64)]) -> Vec<SketchPoint> {
        p.iter().map(|&(x, y)| SketchPoint { x, y }).collect()
    }

    #[test]
    fn fragment_counts() {
        assert_eq!(enumerate_fragments(7, 2).unwrap(), 0..6);
        assert_eq!(enumerate_fragments(5, 5).unwrap(), 0..1);
        assert!(enumerate_fragments(4, 5).is_err());
        // 256 samples, sampling 5, box 100: 52 compressed, window 20
        assert_eq!(enumerate_fragments(52, 20).unwrap().len(), 33);
    }

    #[test]
    fn straight_rise() {
        let r = rasterize_sketch(&pts(&[(0.0, 0.0), (8.0, 1.0)]), 4, Mode::Strict).unwrap();
        let expect = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        assert!(r.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn flat_line() {
        let flat = pts(&[(0.0, 0.5), (3.0, 0.5)]);
        assert_eq!(rasterize_sketch(&flat, 5, Mode::Strict).unwrap(), vec![0.5; 5]);
        assert_eq!(rasterize_sketch(&flat, 5, Mode::Fuzzy).unwrap(), vec![0.0; 5]);
        assert!(matches!(rasterize_sketch(&pts(&[(1.0, 0.0)]), 3, Mode::Strict), Err(MatchError::DegenerateSketch)));
    }

    #[test]
    fn head_and_shoulders_matches_segment_interpolation() {
        let sketch = pts(&[(0.0, 0.2), (10.0, 0.6), (20.0, 0.4), (35.0, 0.9), (50.0, 0.4), (60.0, 0.6), (70.0, 0.1)]);
        let window = 23;
        let got = rasterize_sketch(&sketch, window, Mode::Strict).unwrap();
        for (k, g) in got.iter().enumerate() {
            let x = 70.0 * k as f64 / (window - 1) as f64;
            // locate the segment independently
            let i = (0..sketch.len() - 1).find(|&i| x <= sketch[i + 1].x).unwrap();
            let (p, q) = (sketch[i], sketch[i + 1]);
            let expect = p.y + (q.y - p.y) * (x - p.x) / (q.x - p.x);
            assert!((g - expect).abs() < 1e-12, "k={k}: {g} vs {expect}");
        }
    }

    #[test]
    fn degree_rules() {
        let raster = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        assert_eq!(trend_match_degree(&raster, &raster, Mode::Strict, (0.0, 1.0)).unwrap(), 1.0);
        // one point off by 0.1 over L = 4: 1 - 0.1 / 2
        let frag = [25.0, 25.0 + 10.0 * (1.0 / 3.0 + 0.1), 25.0 + 10.0 * 2.0 / 3.0, 35.0];
        let d = trend_match_degree(&frag, &raster, Mode::Strict, (25.0, 35.0)).unwrap();
        assert!((d - 0.95).abs() < 1e-12);
        // fuzzy against the negated shape: z vs -z, ED = 2 |z|
        let shape = [3.0, 1.0, 4.0, 1.0, 5.0];
        let neg: Vec<f64> = shape.iter().map(|v| -v).collect();
        let z = z_normalize(&shape);
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let expect = (1.0 - 2.0 * norm / (2.0 * 5f64.sqrt())).max(0.0);
        let got = trend_match_degree(&neg, &shape, Mode::Fuzzy, (0.0, 1.0)).unwrap();
        assert!((got - expect).abs() < 1e-12);
        assert!(trend_match_degree(&[1.0], &raster, Mode::Strict, (0.0, 1.0)).is_err());
    }
}
