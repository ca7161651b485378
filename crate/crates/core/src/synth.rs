//! Deterministic datasets for tests, examples and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::datamodel::Dataset;

/// Query over [`fig5_dataset`]: SF rising in a 4-sample box, correlated at
/// [0.8, 1] with a default box at the same offset.
pub const FIG5_QUERY: &str = r#"{
  "mode": "strict",
  "sampling_length": 1,
  "box_length": 4,
  "timeboxes": [
    {"id": "A", "name": "SF", "offset": 0, "sketch": [{"x": 0, "y": 0}, {"x": 4, "y": 1}]},
    {"id": "B", "offset": 0}
  ],
  "relalinks": [
    {"id": "l1", "kind": "correlation", "source": "A", "target": "B", "threshold": [0.8, 1.0]}
  ]
}"#;

/// `rho * x~ + sqrt(1 - rho^2) * u`, where `x~` is `x` centred to unit norm
/// and `u` is a unit vector orthogonal to both `x~` and the constant vector.
/// Its Pearson correlation with `x` is exactly `rho`.
pub fn with_correlation(x: &[f64], rho: f64, seed_direction: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let centre = |v: &[f64]| -> Vec<f64> {
        let m = v.iter().sum::<f64>() / n;
        v.iter().map(|a| a - m).collect()
    };
    let unit = |v: Vec<f64>| -> Vec<f64> {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.into_iter().map(|a| a / norm).collect()
    };
    let xt = unit(centre(x));
    let d = centre(seed_direction);
    let proj: f64 = d.iter().zip(&xt).map(|(a, b)| a * b).sum();
    let u = unit(d.iter().zip(&xt).map(|(a, b)| a - proj * b).collect());
    let c = (1.0 - rho * rho).sqrt();
    xt.iter().zip(&u).map(|(a, b)| rho * a + c * b).collect()
}

/// Three series of six samples. SF's first window rises with one point
/// off the straight line by 0.1 of its range (degree 0.95); its other
/// windows do not rise. LA's and SD's first windows correlate with SF's at
/// exactly 0.99 and 0.98.
pub fn fig5_dataset() -> Dataset {
    let norm = [0.0, 1.0 / 3.0 + 0.1, 2.0 / 3.0, 1.0, 0.2, 0.0];
    let sf: Vec<f64> = norm.iter().map(|v| 25.0 + 10.0 * v).collect();
    let direction = [1.0, -1.0, -1.0, 1.0];
    let tail = |head: Vec<f64>, rest: [f64; 2]| -> Vec<f64> {
        head.into_iter().map(|v| 20.0 + 5.0 * v).chain(rest).collect()
    };
    let la = tail(with_correlation(&sf[..4], 0.99, &direction), [19.0, 23.0]);
    let sd = tail(with_correlation(&sf[..4], 0.98, &direction), [22.0, 18.0]);
    let timestamps = (0..6).map(|h| format!("2021-01-01T{h:02}:00:00Z")).collect();
    Dataset::from_columns(timestamps, vec!["SF".into(), "LA".into(), "SD".into()], vec![sf, la, sd])
        .expect("well-formed fixture")
        .with_step_unit("hour")
}

/// `count` random walks of `len` samples named `s000`, `s001`, ...
pub fn random_walks(count: usize, len: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = Normal::new(0.0, 1.0).expect("unit normal");
    let names = (0..count).map(|i| format!("s{i:03}")).collect();
    let series = (0..count)
        .map(|_| {
            let mut level = rng.random_range(-10.0..10.0);
            (0..len)
                .map(|_| {
                    level += step.sample(&mut rng);
                    level
                })
                .collect()
        })
        .collect();
    let timestamps = (0..len).map(|t| t.to_string()).collect();
    Dataset::from_columns(timestamps, names, series).expect("well-formed walks")
}

/// Walks that share a common driver, so relation indexes and links have
/// strong pairs to find. `mix` in [0, 1] is the weight of the shared part.
pub fn correlated_walks(count: usize, len: usize, mix: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut shared = 0.0;
    let driver: Vec<f64> = (0..len)
        .map(|_| {
            shared += normal.sample(&mut rng);
            shared
        })
        .collect();
    let names = (0..count).map(|i| format!("s{i:03}")).collect();
    let series = (0..count)
        .map(|_| {
            let mut own = 0.0;
            let scale = rng.random_range(0.5..2.0);
            driver
                .iter()
                .map(|d| {
                    own += normal.sample(&mut rng);
                    scale * (mix * d + (1.0 - mix) * own)
                })
                .collect()
        })
        .collect();
    let timestamps = (0..len).map(|t| t.to_string()).collect();
    Dataset::from_columns(timestamps, names, series).expect("well-formed walks")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relations::pearson_strength;

    #[test]
    fn exact_correlation_construction() {
        let x = [1.0, 4.0, 2.0, 8.0, 5.0];
        for rho in [0.99, 0.5, -0.3] {
            let y = with_correlation(&x, rho, &[0.0, 1.0, 0.0, 0.0, -1.0]);
            assert!((pearson_strength(&x, &y).unwrap() - rho).abs() < 1e-12);
        }
    }

    #[test]
    fn walks_are_deterministic() {
        assert_eq!(random_walks(3, 50, 7).to_csv(), random_walks(3, 50, 7).to_csv());
        assert_ne!(random_walks(3, 50, 7).to_csv(), random_walks(3, 50, 8).to_csv());
    }
}
