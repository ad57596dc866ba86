//! Regression-tree base learner: exact greedy split search over numeric
//! thresholds and category subsets.
//!
//! Determinism contract: the grown tree is a function of the (multi)set of
//! training rows only, never of their order. Every sum of residuals is
//! taken in a sorted order, equal-gain splits resolve to the lowest
//! feature index and then the lowest threshold (fewest categories), and
//! category order ties resolve to the lowest code.

use serde::{Deserialize, Serialize};

use crate::encoding::FeatureKind;

/// Split predicate of an internal node. Numeric: `x < threshold` goes
/// left, NaN goes left. Categorical: codes in `left` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTest {
    Numeric { threshold: f64 },
    Categories { left: Vec<u32> },
}

/// A tree node: either a split or a leaf carrying a response value.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        test: SplitTest,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
    },
}

impl TreeNode {
    /// Response of this subtree for one feature row.
    pub fn response(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    test,
                    left,
                    right,
                } => {
                    let cell = row[*feature];
                    let go_left = match test {
                        SplitTest::Numeric { threshold } => {
                            cell.is_nan() || cell < *threshold
                        }
                        SplitTest::Categories { left } => {
                            left.binary_search(&(cell as u32)).is_ok()
                        }
                    };
                    node = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Feature indices used by splits anywhere in this subtree.
    pub fn collect_features(&self, out: &mut std::collections::BTreeSet<usize>) {
        if let TreeNode::Split {
            feature,
            left,
            right,
            ..
        } = self
        {
            out.insert(*feature);
            left.collect_features(out);
            right.collect_features(out);
        }
    }
}

/// Order-independent sum: sorts a scratch copy before accumulating, so the
/// result depends only on the multiset of addends.
pub(crate) fn stable_sum(values: &mut Vec<f64>) -> f64 {
    values.sort_unstable_by(|a, b| a.total_cmp(b));
    values.iter().sum()
}

pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

/// Per-column training view: column-major feature matrix and kinds.
pub(crate) struct TrainView<'a> {
    pub columns: &'a [Vec<f64>],
    pub kinds: &'a [FeatureKind],
    /// Negative gradients (residuals) per row.
    pub grad: &'a [f64],
    /// Second-order terms per row; `None` means unit weights.
    pub hess: Option<&'a [f64]>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    test: SplitTest,
}

/// Grow one tree. Writes each training row's leaf response into
/// `out_response` so the boosting loop never re-walks the tree.
pub(crate) fn grow(
    view: &TrainView,
    rows: Vec<u32>,
    params: &GrowParams,
    out_response: &mut [f64],
) -> TreeNode {
    grow_rec(view, rows, params, 0, out_response)
}

fn leaf_value(view: &TrainView, rows: &[u32], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(rows.iter().map(|&r| view.grad[r as usize]));
    let grad_sum = stable_sum(scratch);
    match view.hess {
        None => grad_sum / rows.len() as f64,
        Some(hess) => {
            scratch.clear();
            scratch.extend(rows.iter().map(|&r| hess[r as usize]));
            let hess_sum = stable_sum(scratch);
            if hess_sum <= 1e-12 {
                0.0
            } else {
                grad_sum / hess_sum
            }
        }
    }
}

fn make_leaf(
    view: &TrainView,
    rows: &[u32],
    out_response: &mut [f64],
    scratch: &mut Vec<f64>,
) -> TreeNode {
    let value = leaf_value(view, rows, scratch);
    for &r in rows {
        out_response[r as usize] = value;
    }
    TreeNode::Leaf { value }
}

fn grow_rec(
    view: &TrainView,
    rows: Vec<u32>,
    params: &GrowParams,
    depth: usize,
    out_response: &mut [f64],
) -> TreeNode {
    let mut scratch = Vec::new();
    if depth >= params.max_depth || rows.len() < 2 * params.min_samples_leaf {
        return make_leaf(view, &rows, out_response, &mut scratch);
    }
    let best = find_best_split(view, &rows, params.min_samples_leaf);
    let Some(best) = best else {
        return make_leaf(view, &rows, out_response, &mut scratch);
    };

    let column = &view.columns[best.feature];
    let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
        rows.into_iter().partition(|&r| {
            let cell = column[r as usize];
            match &best.test {
                SplitTest::Numeric { threshold } => cell.is_nan() || cell < *threshold,
                SplitTest::Categories { left } => left.binary_search(&(cell as u32)).is_ok(),
            }
        });

    let left = grow_rec(view, left_rows, params, depth + 1, out_response);
    let right = grow_rec(view, right_rows, params, depth + 1, out_response);
    TreeNode::Split {
        feature: best.feature,
        test: best.test,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Gain of a binary split under squared loss on the gradients: the SSE
/// reduction relative to keeping the node whole.
fn split_gain(left_sum: f64, left_n: f64, right_sum: f64, right_n: f64) -> f64 {
    let total_sum = left_sum + right_sum;
    let total_n = left_n + right_n;
    left_sum * left_sum / left_n + right_sum * right_sum / right_n
        - total_sum * total_sum / total_n
}

fn find_best_split(view: &TrainView, rows: &[u32], min_leaf: usize) -> Option<BestSplit> {
    let mut best: Option<BestSplit> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
    let mut nan_grads: Vec<f64> = Vec::new();

    for (feature, column) in view.columns.iter().enumerate() {
        let candidate = match view.kinds[feature] {
            FeatureKind::Numeric => {
                numeric_split(column, view.grad, rows, min_leaf, &mut pairs, &mut nan_grads)
            }
            FeatureKind::Categorical => categorical_split(column, view.grad, rows, min_leaf),
        };
        if let Some((gain, test)) = candidate {
            // Strict improvement only: scan order (ascending feature,
            // ascending threshold) already realizes the tie-break rule.
            let better = match &best {
                None => gain > 0.0,
                Some(b) => gain > b.gain,
            };
            if better {
                best = Some(BestSplit {
                    gain,
                    feature,
                    test,
                });
            }
        }
    }
    best
}

fn numeric_split(
    column: &[f64],
    grad: &[f64],
    rows: &[u32],
    min_leaf: usize,
    pairs: &mut Vec<(f64, f64)>,
    nan_grads: &mut Vec<f64>,
) -> Option<(f64, SplitTest)> {
    pairs.clear();
    nan_grads.clear();
    for &r in rows {
        let v = column[r as usize];
        if v.is_nan() {
            nan_grads.push(grad[r as usize]);
        } else {
            pairs.push((v, grad[r as usize]));
        }
    }
    if pairs.len() < 2 {
        return None;
    }
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let nan_n = nan_grads.len() as f64;
    let nan_sum = stable_sum(nan_grads);
    let total_n = rows.len() as f64;
    let total_sum = nan_sum + pairs.iter().map(|p| p.1).sum::<f64>();

    // Missing values always travel left, so they sit on the left side of
    // every candidate threshold.
    let mut left_n = nan_n;
    let mut left_sum = nan_sum;
    let mut best: Option<(f64, f64)> = None; // (gain, threshold)

    let mut idx = 0;
    while idx < pairs.len() {
        let value = pairs[idx].0;
        // Consume the whole run of equal values; their grads are already
        // in sorted order, so this sum is order-independent.
        let mut run_sum = 0.0;
        let mut run_n = 0.0;
        while idx < pairs.len() && pairs[idx].0 == value {
            run_sum += pairs[idx].1;
            run_n += 1.0;
            idx += 1;
        }
        left_n += run_n;
        left_sum += run_sum;
        if idx == pairs.len() {
            break;
        }
        let right_n = total_n - left_n;
        if (left_n as usize) < min_leaf || (right_n as usize) < min_leaf {
            continue;
        }
        let gain = split_gain(left_sum, left_n, total_sum - left_sum, right_n);
        let improves = match best {
            None => true,
            Some((g, _)) => gain > g,
        };
        if improves {
            let next = pairs[idx].0;
            let mut threshold = (value + next) / 2.0;
            if threshold <= value {
                threshold = next;
            }
            best = Some((gain, threshold));
        }
    }
    best.map(|(gain, threshold)| (gain, SplitTest::Numeric { threshold }))
}

fn categorical_split(
    column: &[f64],
    grad: &[f64],
    rows: &[u32],
    min_leaf: usize,
) -> Option<(f64, SplitTest)> {
    let mut pairs: Vec<(u32, f64)> = rows
        .iter()
        .map(|&r| (column[r as usize] as u32, grad[r as usize]))
        .collect();
    pairs.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

    // Per-category count and gradient sum, codes ascending.
    struct Cat {
        code: u32,
        n: f64,
        sum: f64,
    }
    let mut cats: Vec<Cat> = Vec::new();
    for (code, g) in pairs {
        match cats.last_mut() {
            Some(last) if last.code == code => {
                last.n += 1.0;
                last.sum += g;
            }
            _ => cats.push(Cat {
                code,
                n: 1.0,
                sum: g,
            }),
        }
    }
    if cats.len() < 2 {
        return None;
    }
    // Optimal-partition trick: order categories by mean gradient, then
    // scan prefixes as if the feature were numeric.
    cats.sort_by(|a, b| (a.sum / a.n).total_cmp(&(b.sum / b.n)).then(a.code.cmp(&b.code)));

    let total_n = rows.len() as f64;
    let total_sum: f64 = cats.iter().map(|c| c.sum).sum();
    let mut left_n = 0.0;
    let mut left_sum = 0.0;
    let mut best: Option<(f64, usize)> = None; // (gain, prefix length)
    for j in 0..cats.len() - 1 {
        left_n += cats[j].n;
        left_sum += cats[j].sum;
        let right_n = total_n - left_n;
        if (left_n as usize) < min_leaf || (right_n as usize) < min_leaf {
            continue;
        }
        let gain = split_gain(left_sum, left_n, total_sum - left_sum, right_n);
        let improves = match best {
            None => true,
            Some((g, _)) => gain > g,
        };
        if improves {
            best = Some((gain, j + 1));
        }
    }
    best.map(|(gain, prefix)| {
        let mut left: Vec<u32> = cats[..prefix].iter().map(|c| c.code).collect();
        left.sort_unstable();
        (gain, SplitTest::Categories { left })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_view<'a>(
        columns: &'a [Vec<f64>],
        kinds: &'a [FeatureKind],
        grad: &'a [f64],
    ) -> TrainView<'a> {
        TrainView {
            columns,
            kinds,
            grad,
            hess: None,
        }
    }

    /// Exhaustive SSE split-scan oracle for one numeric feature.
    fn brute_best_threshold(xs: &[f64], ys: &[f64]) -> (f64, f64) {
        let mut values: Vec<f64> = xs.to_vec();
        values.sort_unstable_by(|a, b| a.total_cmp(b));
        values.dedup();
        let sse = |side: &[f64]| -> f64 {
            if side.is_empty() {
                return 0.0;
            }
            let mean = side.iter().sum::<f64>() / side.len() as f64;
            side.iter().map(|y| (y - mean).powi(2)).sum()
        };
        let mut best = (f64::INFINITY, f64::NAN);
        for w in values.windows(2) {
            let threshold = (w[0] + w[1]) / 2.0;
            let left: Vec<f64> = xs
                .iter()
                .zip(ys)
                .filter(|(x, _)| **x < threshold)
                .map(|(_, y)| *y)
                .collect();
            let right: Vec<f64> = xs
                .iter()
                .zip(ys)
                .filter(|(x, _)| **x >= threshold)
                .map(|(_, y)| *y)
                .collect();
            let total = sse(&left) + sse(&right);
            if total < best.0 {
                best = (total, threshold);
            }
        }
        best
    }

    #[test]
    fn stump_threshold_matches_exhaustive_scan() {
        // y = 10 * [x > 5] on x in {2,4,6,8}: the scanned midpoint is 5.
        let xs = vec![2.0, 4.0, 6.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x| if *x > 5.0 { 10.0 } else { 0.0 }).collect();
        let (_, oracle_threshold) = brute_best_threshold(&xs, &ys);
        assert_eq!(oracle_threshold, 5.0);

        let columns = vec![xs.clone()];
        let kinds = vec![FeatureKind::Numeric];
        let view = unit_view(&columns, &kinds, &ys);
        let mut responses = vec![0.0; 4];
        let tree = grow(
            &view,
            (0..4).collect(),
            &GrowParams {
                max_depth: 1,
                min_samples_leaf: 1,
            },
            &mut responses,
        );
        match &tree {
            TreeNode::Split { feature, test, left, right } => {
                assert_eq!(*feature, 0);
                assert_eq!(
                    test,
                    &SplitTest::Numeric {
                        threshold: oracle_threshold
                    }
                );
                assert_eq!(**left, TreeNode::Leaf { value: 0.0 });
                assert_eq!(**right, TreeNode::Leaf { value: 10.0 });
            }
            other => panic!("expected split, got {other:?}"),
        }
        // Training MSE 0 at lr 1.
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(tree.response(&[*x]), *y);
        }
    }

    #[test]
    fn constant_target_grows_no_split() {
        let columns = vec![vec![1.0, 2.0, 3.0]];
        let kinds = vec![FeatureKind::Numeric];
        let grad = vec![4.0, 4.0, 4.0];
        let view = unit_view(&columns, &kinds, &grad);
        let mut responses = vec![0.0; 3];
        let tree = grow(
            &view,
            (0..3).collect(),
            &GrowParams {
                max_depth: 3,
                min_samples_leaf: 1,
            },
            &mut responses,
        );
        assert_eq!(tree, TreeNode::Leaf { value: 4.0 });
        assert_eq!(responses, vec![4.0; 3]);
    }

    #[test]
    fn categorical_split_separates_by_mean() {
        // Codes 2,3,4 with targets 0,0,9: subset {2,3} goes left.
        let columns = vec![vec![2.0, 3.0, 4.0, 2.0, 3.0, 4.0]];
        let kinds = vec![FeatureKind::Categorical];
        let grad = vec![0.0, 0.0, 9.0, 0.0, 0.0, 9.0];
        let view = unit_view(&columns, &kinds, &grad);
        let mut responses = vec![0.0; 6];
        let tree = grow(
            &view,
            (0..6).collect(),
            &GrowParams {
                max_depth: 1,
                min_samples_leaf: 1,
            },
            &mut responses,
        );
        match tree {
            TreeNode::Split { test, .. } => {
                assert_eq!(test, SplitTest::Categories { left: vec![2, 3] });
            }
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn min_leaf_blocks_unbalanced_split() {
        // Only split x<1.5 would isolate one row; min_leaf 2 forbids it.
        let columns = vec![vec![1.0, 2.0, 2.0, 2.0]];
        let kinds = vec![FeatureKind::Numeric];
        let grad = vec![10.0, 0.0, 0.0, 0.0];
        let view = unit_view(&columns, &kinds, &grad);
        let mut responses = vec![0.0; 4];
        let tree = grow(
            &view,
            (0..4).collect(),
            &GrowParams {
                max_depth: 2,
                min_samples_leaf: 2,
            },
            &mut responses,
        );
        assert_eq!(tree.n_leaves(), 1);
    }

    #[test]
    fn nan_rows_go_left() {
        let columns = vec![vec![f64::NAN, 1.0, 2.0, 3.0]];
        let kinds = vec![FeatureKind::Numeric];
        let grad = vec![5.0, 5.0, 0.0, 0.0];
        let view = unit_view(&columns, &kinds, &grad);
        let mut responses = vec![0.0; 4];
        let tree = grow(
            &view,
            (0..4).collect(),
            &GrowParams {
                max_depth: 1,
                min_samples_leaf: 1,
            },
            &mut responses,
        );
        // Best split: {NaN, 1.0} vs {2.0, 3.0}.
        assert_eq!(tree.response(&[f64::NAN]), 5.0);
        assert_eq!(tree.response(&[1.0]), 5.0);
        assert_eq!(tree.response(&[2.5]), 0.0);
    }
}
