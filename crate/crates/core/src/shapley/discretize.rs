//! Supervised discretization of numeric features into explanation buckets.
//!
//! A single-feature regression tree is grown greedily on squared error
//! against the KPI labels; the distinct split thresholds, sorted, become
//! the bucket boundaries. Buckets are left-closed/right-open, so a value
//! exactly on a boundary belongs to the bucket starting there.

use serde::{Deserialize, Serialize};

/// Bucket boundaries for one numeric feature. Empty boundaries mean a
/// single bucket covering all reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    boundaries: Vec<f64>,
}

impl Discretizer {
    pub fn new(mut boundaries: Vec<f64>) -> Self {
        boundaries.sort_unstable_by(|a, b| a.total_cmp(b));
        boundaries.dedup();
        Discretizer { boundaries }
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn n_buckets(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// Index of the bucket containing `x`: the number of boundaries <= x.
    pub fn bucket_index(&self, x: f64) -> usize {
        self.boundaries.partition_point(|w| *w <= x)
    }

    /// Human-readable bucket label for the bucket containing `x`, e.g.
    /// `cost<1.83`, `1.83<=cost<3.33`, `cost>=3.33`. `fmt` renders the
    /// boundary values.
    pub fn bucket_label(&self, display: &str, x: f64, fmt: &dyn Fn(f64) -> String) -> String {
        if self.boundaries.is_empty() {
            return format!("{display}=any");
        }
        let idx = self.bucket_index(x);
        if idx == 0 {
            format!("{display}<{}", fmt(self.boundaries[0]))
        } else if idx == self.boundaries.len() {
            format!("{display}>={}", fmt(self.boundaries[idx - 1]))
        } else {
            format!(
                "{}<={display}<{}",
                fmt(self.boundaries[idx - 1]),
                fmt(self.boundaries[idx])
            )
        }
    }
}

/// Best SSE-reducing threshold over sorted (value, label) pairs, with the
/// threshold placed midway between the straddling observed values.
fn best_threshold(pairs: &[(f64, f64)]) -> Option<(f64, usize)> {
    let total_n = pairs.len() as f64;
    let total_sum: f64 = pairs.iter().map(|p| p.1).sum();
    let mut left_n = 0.0;
    let mut left_sum = 0.0;
    let mut best: Option<(f64, f64, usize)> = None; // (gain, threshold, cut index)

    let mut idx = 0;
    while idx < pairs.len() {
        let value = pairs[idx].0;
        while idx < pairs.len() && pairs[idx].0 == value {
            left_sum += pairs[idx].1;
            left_n += 1.0;
            idx += 1;
        }
        if idx == pairs.len() {
            break;
        }
        let right_n = total_n - left_n;
        let right_sum = total_sum - left_sum;
        let gain = left_sum * left_sum / left_n + right_sum * right_sum / right_n
            - total_sum * total_sum / total_n;
        let improves = match best {
            None => gain > 0.0,
            Some((g, _, _)) => gain > g,
        };
        if improves {
            let next = pairs[idx].0;
            let mut threshold = (value + next) / 2.0;
            if threshold <= value {
                threshold = next;
            }
            best = Some((gain, threshold, idx));
        }
    }
    best.map(|(_, threshold, cut)| (threshold, cut))
}

fn split_rec(pairs: &[(f64, f64)], depth: usize, out: &mut Vec<f64>) {
    if depth == 0 || pairs.len() < 2 {
        return;
    }
    let Some((threshold, cut)) = best_threshold(pairs) else {
        return;
    };
    out.push(threshold);
    split_rec(&pairs[..cut], depth - 1, out);
    split_rec(&pairs[cut..], depth - 1, out);
}

/// Fit bucket boundaries for one feature against the KPI labels.
/// `max_buckets` bounds the tree depth at ceil(log2(max_buckets)); rows
/// with a missing (NaN) feature value are ignored.
pub fn fit_discretizer(values: &[f64], labels: &[f64], max_buckets: usize) -> Discretizer {
    assert_eq!(values.len(), labels.len());
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(labels)
        .filter(|(v, _)| !v.is_nan())
        .map(|(v, y)| (*v, *y))
        .collect();
    if pairs.is_empty() || max_buckets <= 1 {
        return Discretizer::new(Vec::new());
    }
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let depth = (max_buckets as f64).log2().ceil() as usize;
    let mut boundaries = Vec::new();
    split_rec(&pairs, depth, &mut boundaries);
    Discretizer::new(boundaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: exhaustive SSE scan over all midpoints.
    fn brute_single_boundary(values: &[f64], labels: &[f64]) -> f64 {
        let mut xs: Vec<f64> = values.to_vec();
        xs.sort_unstable_by(|a, b| a.total_cmp(b));
        xs.dedup();
        let sse = |side: &[f64]| {
            if side.is_empty() {
                return 0.0;
            }
            let mean = side.iter().sum::<f64>() / side.len() as f64;
            side.iter().map(|y| (y - mean).powi(2)).sum::<f64>()
        };
        let mut best = (f64::INFINITY, f64::NAN);
        for w in xs.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<f64> = values
                .iter()
                .zip(labels)
                .filter(|(v, _)| **v < t)
                .map(|(_, y)| *y)
                .collect();
            let right: Vec<f64> = values
                .iter()
                .zip(labels)
                .filter(|(v, _)| **v >= t)
                .map(|(_, y)| *y)
                .collect();
            let s = sse(&left) + sse(&right);
            if s < best.0 {
                best = (s, t);
            }
        }
        best.1
    }

    #[test]
    fn constant_feature_yields_single_bucket() {
        let d = fit_discretizer(&[2.0; 10], &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0], 8);
        assert!(d.boundaries().is_empty());
        assert_eq!(d.bucket_index(-1e18), 0);
        assert_eq!(d.bucket_index(1e18), 0);
        assert_eq!(d.bucket_label("f", 0.0, &|v| format!("{v}")), "f=any");
    }

    #[test]
    fn step_function_recovers_boundary() {
        // y = 0 for x < 5, y = 10 for x >= 5.
        let values: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let labels: Vec<f64> = values.iter().map(|x| if *x >= 5.0 { 10.0 } else { 0.0 }).collect();
        let oracle_boundary = brute_single_boundary(&values, &labels);
        let d = fit_discretizer(&values, &labels, 8);
        // The strongest split is the step; further depth finds no gain.
        assert_eq!(d.boundaries(), &[oracle_boundary]);
        assert_eq!(oracle_boundary, 4.75);
    }

    #[test]
    fn boundary_value_goes_to_upper_bucket() {
        let d = Discretizer::new(vec![1.0, 3.0]);
        let fmt = |v: f64| format!("{v}");
        assert_eq!(d.bucket_label("f", 0.5, &fmt), "f<1");
        assert_eq!(d.bucket_label("f", 1.0, &fmt), "1<=f<3");
        assert_eq!(d.bucket_label("f", 2.0, &fmt), "1<=f<3");
        assert_eq!(d.bucket_label("f", 3.0, &fmt), "f>=3");
    }

    #[test]
    fn boundaries_strictly_increasing_and_partitioning() {
        let values: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 * 0.13).collect();
        let labels: Vec<f64> = values.iter().map(|x| (x * 0.7).sin() * 5.0 + x).collect();
        let d = fit_discretizer(&values, &labels, 8);
        assert!(d.boundaries().len() <= 7);
        for w in d.boundaries().windows(2) {
            assert!(w[0] < w[1]);
        }
        // Every observed value lands in exactly one bucket.
        for v in &values {
            let idx = d.bucket_index(*v);
            assert!(idx < d.n_buckets());
        }
    }

    #[test]
    fn nan_values_are_ignored() {
        let values = [f64::NAN, 1.0, 2.0, 3.0, 4.0, f64::NAN];
        let labels = [9.0, 0.0, 0.0, 8.0, 8.0, 9.0];
        let d = fit_discretizer(&values, &labels, 4);
        assert_eq!(d.boundaries(), &[2.5]);
    }
}
