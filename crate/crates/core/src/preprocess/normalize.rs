//! Normalization and piecewise aggregate approximation.

/// Min-max map onto [0, 1]. A constant input maps to 0.5 everywhere.
pub fn minmax_normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = min_max(values);
    minmax_with_bounds(values, lo, hi)
}

/// Min-max map using caller-supplied bounds; a zero-width range maps to 0.5.
pub fn minmax_with_bounds(values: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if span <= 0.0 || !span.is_finite() {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / span).collect()
}

/// Z-normalization with the population standard deviation. Constant input maps to zeros.
pub fn z_normalize(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= f64::EPSILON * mean.abs().max(1.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / sd).collect()
}

/// Average consecutive blocks of `sampling_length`; a partial tail block is
/// averaged over the samples it actually has.
pub fn paa_compress(values: &[f64], sampling_length: usize) -> Vec<f64> {
    assert!(sampling_length >= 1, "sampling length must be positive");
    values
        .chunks(sampling_length)
        .map(|block| block.iter().sum::<f64>() / block.len() as f64)
        .collect()
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax_normalize(&[2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&[5.0, 5.0, 5.0]), vec![0.5; 3]);
    }

    #[test]
    fn z_examples() {
        let z = z_normalize(&[1.0, 2.0, 3.0]);
        let expect = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((z[0] + expect).abs() < 1e-12 && z[1].abs() < 1e-12 && (z[2] - expect).abs() < 1e-12);
        assert!((z[2] - 1.2247).abs() < 1e-4);
        assert_eq!(z_normalize(&[7.0, 7.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn paa_examples() {
        assert_eq!(paa_compress(&[1.0, 3.0, 2.0, 4.0], 2), vec![2.0, 3.0]);
        assert_eq!(paa_compress(&[1.0, 2.0, 3.0, 4.0, 5.0], 2), vec![1.5, 3.5, 5.0]);
        assert_eq!(paa_compress(&[0.3, -1.0, 9.0], 1), vec![0.3, -1.0, 9.0]);
    }

    proptest! {
        #[test]
        fn minmax_hits_both_ends(values in prop::collection::vec(-1e3f64..1e3, 2..100)) {
            let (lo, hi) = min_max(&values);
            prop_assume!(hi > lo);
            let out = minmax_normalize(&values);
            let (olo, ohi) = min_max(&out);
            prop_assert_eq!(olo, 0.0);
            prop_assert!((ohi - 1.0).abs() < 1e-12);
        }

        #[test]
        fn z_has_zero_mean(values in prop::collection::vec(-1e3f64..1e3, 1..100)) {
            let z = z_normalize(&values);
            let mean = z.iter().sum::<f64>() / z.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
        }

        #[test]
        fn paa_preserves_mean(blocks in 1usize..20, s in 1usize..8, seed in prop::collection::vec(-50f64..50.0, 160)) {
            let values = &seed[..blocks * s];
            let out = paa_compress(values, s);
            prop_assert_eq!(out.len(), blocks);
            let mean_in = values.iter().sum::<f64>() / values.len() as f64;
            let mean_out = out.iter().sum::<f64>() / out.len() as f64;
            prop_assert!((mean_in - mean_out).abs() < 1e-9);
        }

        #[test]
        fn paa_of_constant_is_constant(c in -10f64..10.0, len in 1usize..50, s in 1usize..9) {
            let out = paa_compress(&vec![c; len], s);
            prop_assert_eq!(out.len(), len.div_ceil(s));
            prop_assert!(out.iter().all(|v| (v - c).abs() < 1e-12));
        }
    }
}
