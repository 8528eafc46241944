use serde::{Deserialize, Serialize};

use super::nn::softmax;

/// Raw sampled action: categorical split index and pre-softmax allocation
/// logits. Absent parts are fixed by the agent variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub split_index: usize,
    pub z_alpha: Option<Vec<f64>>,
    pub z_beta: Option<Vec<f64>>,
}

/// Lifts a simplex point onto `{x : sum x = 1, x >= min}`.
///
/// Points already inside are returned unchanged; otherwise the smallest entry
/// is mapped to `min` by an affine map that keeps the sum. When every entry
/// equals `1/K` and `min > 1/K` the map is undefined and the uniform point is
/// returned.
pub fn scale_to_bounds(tilde: &[f64], min: f64) -> Vec<f64> {
    let k = tilde.len() as f64;
    let low = tilde.iter().copied().fold(f64::INFINITY, f64::min);
    if low >= min {
        return tilde.to_vec();
    }
    let denom = 1.0 - k * low;
    if denom <= f64::EPSILON {
        return vec![1.0 / k; tilde.len()];
    }
    let a = (1.0 - k * min) / denom;
    tilde.iter().map(|x| a * (x - low) + min).collect()
}

/// Softmax of the logits followed by [`scale_to_bounds`].
pub fn interpret_allocation(logits: &[f64], min: f64) -> Vec<f64> {
    scale_to_bounds(&softmax(logits), min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn inside_points_are_untouched() {
        assert_eq!(scale_to_bounds(&[0.9, 0.1], 0.1), vec![0.9, 0.1]);
    }

    #[test]
    fn two_client_example() {
        let a = scale_to_bounds(&[0.98, 0.02], 0.1);
        let gain = 0.8 / 0.96;
        assert!((a[0] - (gain * 0.96 + 0.1)).abs() < 1e-15);
        assert!((a[0] - 0.9).abs() < 1e-12 && (a[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn degenerate_point_falls_back_to_uniform() {
        assert_eq!(scale_to_bounds(&[0.25; 4], 0.3), vec![0.25; 4]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100_000))]
        #[test]
        fn output_satisfies_constraints(
            logits in prop::collection::vec(-30.0f64..30.0, 1..12),
            min_frac in 0.0f64..=1.0,
        ) {
            let k = logits.len() as f64;
            let min = min_frac / k;
            let x = interpret_allocation(&logits, min);
            prop_assert!((x.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(x.iter().all(|&v| v >= min - 1e-15 && v <= 1.0 + 1e-15));
        }
    }
}
