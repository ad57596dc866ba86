//! Gradient-boosted decision trees: the prediction oracle behind every
//! KPI predictor.
//!
//! A plain greedy GBDT: trees are grown sequentially on the negative
//! gradients of the loss, with exact split search (no histogram binning,
//! no row/column subsampling), so the same dataset always yields the same
//! model regardless of row order. Squared error drives numeric KPIs;
//! boolean KPIs use logistic loss with Newton-step leaf values and a
//! sigmoid on top of the raw ensemble sum.

mod tree;

pub use tree::{SplitTest, TreeNode};

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::{EncodedDataset, EncoderConfig, FeatureDescriptor, FeatureKind};
use crate::error::{Error, Result};

/// Loss function the ensemble is trained under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    SquaredError,
    Logistic,
}

/// Boosting hyperparameters.
///
/// `seed` is carried for config provenance; training itself draws no
/// random numbers (no subsampling).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_trees: 300,
            max_depth: 6,
            learning_rate: 0.1,
            min_samples_leaf: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be >= 1".to_string()));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be >= 1".to_string()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".to_string()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be >= 1".to_string()));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A trained additive ensemble. Immutable; prediction is a pure function
/// of (model, row), safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub objective: Objective,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<TreeNode>,
    pub descriptors: Vec<FeatureDescriptor>,
    pub encoder_config: EncoderConfig,
}

impl GbdtModel {
    /// Assemble a model from parts (hand-built or generated ensembles).
    pub fn from_parts(
        objective: Objective,
        base_score: f64,
        learning_rate: f64,
        trees: Vec<TreeNode>,
        descriptors: Vec<FeatureDescriptor>,
        encoder_config: EncoderConfig,
    ) -> Self {
        GbdtModel {
            objective,
            base_score,
            learning_rate,
            trees,
            descriptors,
            encoder_config,
        }
    }

    pub fn width(&self) -> usize {
        self.descriptors.len()
    }

    /// Raw ensemble sum: base + lr * sum of tree responses. For the
    /// logistic objective this is the logit scale.
    pub fn predict_raw(&self, row: &[f64]) -> f64 {
        assert_eq!(
            row.len(),
            self.descriptors.len(),
            "row width {} does not match model width {}",
            row.len(),
            self.descriptors.len()
        );
        let mut score = self.base_score;
        for tree in &self.trees {
            score += self.learning_rate * tree.response(row);
        }
        score
    }

    /// Predicted KPI value: the raw sum for squared error, a probability
    /// in [0,1] for logistic.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let raw = self.predict_raw(row);
        match self.objective {
            Objective::SquaredError => raw,
            Objective::Logistic => sigmoid(raw),
        }
    }

    /// Feature indices used by at least one split.
    pub fn used_features(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for tree in &self.trees {
            tree.collect_features(&mut out);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from_model(self))?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str::<ModelFile>(json)?.into_model()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = BufWriter::new(File::create(path)?);
        file.write_all(self.to_json()?.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = BufReader::new(File::open(path)?);
        serde_json::from_reader::<_, ModelFile>(file)?.into_model()
    }
}

/// Train an ensemble on an encoded dataset.
///
/// Squared error: base score is the label mean and each tree fits the
/// residuals, leaves carrying the mean residual. Logistic: labels must be
/// 0/1, the base score is the log-odds of the positive rate, trees fit
/// y - p with Newton-step leaves. All-constant labels yield a model with
/// zero trees.
pub fn train(dataset: &EncodedDataset, config: &TrainConfig, objective: Objective) -> Result<GbdtModel> {
    train_with_encoder_config(dataset, config, objective, EncoderConfig::default())
}

/// As [`train`], stamping the encoder configuration the dataset was built
/// with into the model.
pub fn train_with_encoder_config(
    dataset: &EncodedDataset,
    config: &TrainConfig,
    objective: Objective,
    encoder_config: EncoderConfig,
) -> Result<GbdtModel> {
    config.validate()?;
    if dataset.width() == 0 {
        return Err(Error::Config("dataset has zero feature columns".to_string()));
    }
    let n = dataset.n_rows();
    if n == 0 {
        return Err(Error::Config("dataset has no rows".to_string()));
    }
    if objective == Objective::Logistic {
        if let Some(bad) = dataset.labels.iter().find(|y| **y != 0.0 && **y != 1.0) {
            return Err(Error::Config(format!(
                "logistic objective requires 0/1 labels, found {bad}"
            )));
        }
    }

    // Base score from the label distribution, order-independent.
    let mut sorted_labels = dataset.labels.clone();
    let label_sum = tree::stable_sum(&mut sorted_labels);
    let base_score = match objective {
        Objective::SquaredError => label_sum / n as f64,
        Objective::Logistic => {
            let rate = (label_sum / n as f64).clamp(1e-6, 1.0 - 1e-6);
            (rate / (1.0 - rate)).ln()
        }
    };

    let mut model = GbdtModel {
        objective,
        base_score,
        learning_rate: config.learning_rate,
        trees: Vec::new(),
        descriptors: dataset.descriptors.clone(),
        encoder_config,
    };

    let constant_labels = dataset
        .labels
        .iter()
        .all(|y| *y == dataset.labels[0]);
    if constant_labels {
        return Ok(model);
    }

    // Column-major copy for cache-friendly split scans.
    let width = dataset.width();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n); width];
    for row in &dataset.rows {
        for (c, v) in row.iter().enumerate() {
            columns[c].push(*v);
        }
    }
    let kinds: Vec<FeatureKind> = dataset.descriptors.iter().map(|d| d.value_kind).collect();

    let params = tree::GrowParams {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
    };

    let mut raw: Vec<f64> = vec![base_score; n];
    let mut grad: Vec<f64> = vec![0.0; n];
    let mut hess: Vec<f64> = vec![0.0; n];
    let mut response: Vec<f64> = vec![0.0; n];

    for _ in 0..config.n_trees {
        match objective {
            Objective::SquaredError => {
                for i in 0..n {
                    grad[i] = dataset.labels[i] - raw[i];
                }
            }
            Objective::Logistic => {
                for i in 0..n {
                    let p = sigmoid(raw[i]);
                    grad[i] = dataset.labels[i] - p;
                    hess[i] = (p * (1.0 - p)).max(1e-12);
                }
            }
        }
        let view = tree::TrainView {
            columns: &columns,
            kinds: &kinds,
            grad: &grad,
            hess: match objective {
                Objective::SquaredError => None,
                Objective::Logistic => Some(&hess),
            },
        };
        let root = tree::grow(&view, (0..n as u32).collect(), &params, &mut response);
        for i in 0..n {
            raw[i] += config.learning_rate * response[i];
        }
        model.trees.push(root);
    }
    Ok(model)
}

// ---------------------------------------------------------------------
// Versioned JSON form: trees flattened to node arrays with explicit
// indices so the file is stable and implementation-independent.
// ---------------------------------------------------------------------

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    objective: Objective,
    base_score: f64,
    learning_rate: f64,
    trees: Vec<FlatTree>,
    descriptors: Vec<FeatureDescriptor>,
    encoder_config: EncoderConfig,
}

#[derive(Serialize, Deserialize)]
struct FlatTree {
    nodes: Vec<FlatNode>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FlatNode {
    SplitNumeric {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    SplitCategories {
        feature: usize,
        left_categories: Vec<u32>,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

fn flatten(node: &TreeNode, nodes: &mut Vec<FlatNode>) -> usize {
    match node {
        TreeNode::Leaf { value } => {
            nodes.push(FlatNode::Leaf { value: *value });
            nodes.len() - 1
        }
        TreeNode::Split {
            feature,
            test,
            left,
            right,
        } => {
            let idx = nodes.len();
            // Reserve the slot so children follow their parent.
            nodes.push(FlatNode::Leaf { value: 0.0 });
            let left_idx = flatten(left, nodes);
            let right_idx = flatten(right, nodes);
            nodes[idx] = match test {
                SplitTest::Numeric { threshold } => FlatNode::SplitNumeric {
                    feature: *feature,
                    threshold: *threshold,
                    left: left_idx,
                    right: right_idx,
                },
                SplitTest::Categories { left } => FlatNode::SplitCategories {
                    feature: *feature,
                    left_categories: left.clone(),
                    left: left_idx,
                    right: right_idx,
                },
            };
            idx
        }
    }
}

fn unflatten(nodes: &[FlatNode], idx: usize) -> Result<TreeNode> {
    let node = nodes
        .get(idx)
        .ok_or_else(|| Error::Config(format!("tree node index {idx} out of range")))?;
    Ok(match node {
        FlatNode::Leaf { value } => TreeNode::Leaf { value: *value },
        FlatNode::SplitNumeric {
            feature,
            threshold,
            left,
            right,
        } => TreeNode::Split {
            feature: *feature,
            test: SplitTest::Numeric {
                threshold: *threshold,
            },
            left: Box::new(unflatten(nodes, *left)?),
            right: Box::new(unflatten(nodes, *right)?),
        },
        FlatNode::SplitCategories {
            feature,
            left_categories,
            left,
            right,
        } => TreeNode::Split {
            feature: *feature,
            test: SplitTest::Categories {
                left: left_categories.clone(),
            },
            left: Box::new(unflatten(nodes, *left)?),
            right: Box::new(unflatten(nodes, *right)?),
        },
    })
}

impl ModelFile {
    fn from_model(model: &GbdtModel) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            objective: model.objective,
            base_score: model.base_score,
            learning_rate: model.learning_rate,
            trees: model
                .trees
                .iter()
                .map(|t| {
                    let mut nodes = Vec::new();
                    flatten(t, &mut nodes);
                    FlatTree { nodes }
                })
                .collect(),
            descriptors: model.descriptors.clone(),
            encoder_config: model.encoder_config.clone(),
        }
    }

    fn into_model(self) -> Result<GbdtModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        let trees = self
            .trees
            .iter()
            .map(|t| unflatten(&t.nodes, 0))
            .collect::<Result<Vec<_>>>()?;
        Ok(GbdtModel {
            objective: self.objective,
            base_score: self.base_score,
            learning_rate: self.learning_rate,
            trees,
            descriptors: self.descriptors,
            encoder_config: self.encoder_config,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{FeaturePosition, RowProvenance};

    fn descriptor(name: &str, kind: FeatureKind) -> FeatureDescriptor {
        FeatureDescriptor {
            source_attribute: name.to_string(),
            position: FeaturePosition::LastEvent,
            value_kind: kind,
        }
    }

    fn dataset(rows: Vec<Vec<f64>>, labels: Vec<f64>, kinds: &[FeatureKind]) -> EncodedDataset {
        let descriptors = kinds
            .iter()
            .enumerate()
            .map(|(i, k)| descriptor(&format!("f{i}"), *k))
            .collect();
        let provenance = (0..rows.len())
            .map(|i| RowProvenance {
                case_id: format!("c{i}"),
                prefix_length: 1,
            })
            .collect();
        EncodedDataset {
            rows,
            labels,
            descriptors,
            row_provenance: provenance,
            warnings: Vec::new(),
        }
    }

    fn small_config(n_trees: usize, depth: usize, lr: f64) -> TrainConfig {
        TrainConfig {
            n_trees,
            max_depth: depth,
            learning_rate: lr,
            min_samples_leaf: 1,
            seed: 0,
        }
    }

    #[test]
    fn constant_labels_give_base_only_model() {
        let ds = dataset(
            vec![vec![1.0], vec![2.0], vec![3.0]],
            vec![7.0, 7.0, 7.0],
            &[FeatureKind::Numeric],
        );
        let model = train(&ds, &small_config(10, 3, 0.1), Objective::SquaredError).unwrap();
        assert!(model.trees.is_empty());
        for x in [0.0, 1.5, 99.0] {
            assert_eq!(model.predict(&[x]), 7.0);
        }
    }

    #[test]
    fn single_stump_reproduces_step_function() {
        let ds = dataset(
            vec![vec![2.0], vec![4.0], vec![6.0], vec![8.0]],
            vec![0.0, 0.0, 10.0, 10.0],
            &[FeatureKind::Numeric],
        );
        let model = train(&ds, &small_config(1, 1, 1.0), Objective::SquaredError).unwrap();
        let mut mse = 0.0;
        for (row, y) in ds.rows.iter().zip(&ds.labels) {
            mse += (model.predict(row) - y).powi(2);
        }
        assert_eq!(mse, 0.0);
        match &model.trees[0] {
            TreeNode::Split { test, .. } => {
                assert_eq!(test, &SplitTest::Numeric { threshold: 5.0 });
            }
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn empty_width_is_config_error() {
        let ds = dataset(vec![vec![], vec![]], vec![1.0, 2.0], &[]);
        assert!(matches!(
            train(&ds, &small_config(1, 1, 0.1), Objective::SquaredError),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn empty_ensemble_predicts_base_score() {
        let model = GbdtModel::from_parts(
            Objective::SquaredError,
            3.25,
            0.1,
            vec![],
            vec![descriptor("x", FeatureKind::Numeric)],
            EncoderConfig::default(),
        );
        assert_eq!(model.predict(&[42.0]), 3.25);
    }

    #[test]
    fn logistic_output_is_probability() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let labels: Vec<f64> = (0..40).map(|i| if i >= 20 { 1.0 } else { 0.0 }).collect();
        let ds = dataset(rows, labels, &[FeatureKind::Numeric]);
        let model = train(&ds, &small_config(50, 2, 0.3), Objective::Logistic).unwrap();
        for i in -10..50 {
            let p = model.predict(&[i as f64]);
            assert!((0.0..=1.0).contains(&p), "p = {p}");
        }
        assert!(model.predict(&[0.0]) < 0.1);
        assert!(model.predict(&[39.0]) > 0.9);
    }

    #[test]
    fn hand_built_tree_traced_path() {
        // x0 < 1.0 -> 5.0; else categorical x1 in {2} -> -1.0, else 2.0.
        let tree = TreeNode::Split {
            feature: 0,
            test: SplitTest::Numeric { threshold: 1.0 },
            left: Box::new(TreeNode::Leaf { value: 5.0 }),
            right: Box::new(TreeNode::Split {
                feature: 1,
                test: SplitTest::Categories { left: vec![2] },
                left: Box::new(TreeNode::Leaf { value: -1.0 }),
                right: Box::new(TreeNode::Leaf { value: 2.0 }),
            }),
        };
        let model = GbdtModel::from_parts(
            Objective::SquaredError,
            0.0,
            1.0,
            vec![tree],
            vec![
                descriptor("x0", FeatureKind::Numeric),
                descriptor("x1", FeatureKind::Categorical),
            ],
            EncoderConfig::default(),
        );
        assert_eq!(model.predict(&[0.5, 3.0]), 5.0);
        assert_eq!(model.predict(&[1.5, 2.0]), -1.0);
        assert_eq!(model.predict(&[1.5, 3.0]), 2.0);
    }

    #[test]
    fn training_loss_non_increasing_squared() {
        // Mixed numeric/categorical data with a noisy target.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        for _ in 0..200 {
            let x = next() * 10.0;
            let c = (next() * 4.0).floor() + 2.0;
            let y = if x > 5.0 { 8.0 } else { 1.0 } + c + next();
            rows.push(vec![x, c]);
            labels.push(y);
        }
        let ds = dataset(
            rows,
            labels,
            &[FeatureKind::Numeric, FeatureKind::Categorical],
        );
        let mut config = small_config(30, 3, 0.5);
        config.min_samples_leaf = 5;
        let model = train(&ds, &config, Objective::SquaredError).unwrap();

        // Replay the ensemble prefix by prefix.
        let mut preds: Vec<f64> = vec![model.base_score; ds.n_rows()];
        let mut prev_loss = f64::INFINITY;
        for t in 0..=model.trees.len() {
            if t > 0 {
                for (i, row) in ds.rows.iter().enumerate() {
                    preds[i] += model.learning_rate * model.trees[t - 1].response(row);
                }
            }
            let loss: f64 = preds
                .iter()
                .zip(&ds.labels)
                .map(|(p, y)| (p - y).powi(2))
                .sum();
            assert!(
                loss <= prev_loss + 1e-9,
                "loss increased at iteration {t}: {prev_loss} -> {loss}"
            );
            prev_loss = loss;
        }
    }

    #[test]
    fn prediction_invariant_to_row_order() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        // Duplicate feature values on purpose so tie handling matters.
        for i in 0..120 {
            let x = (i % 10) as f64;
            let c = ((i % 3) + 2) as f64;
            let y = x * 2.0 + c * 3.0 + ((i * 7) % 5) as f64;
            rows.push(vec![x, c]);
            labels.push(y);
        }
        let ds = dataset(
            rows.clone(),
            labels.clone(),
            &[FeatureKind::Numeric, FeatureKind::Categorical],
        );

        // Deterministic shuffle.
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let mut state = 99u64;
        for i in (1..order.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let j = (state >> 33) as usize % (i + 1);
            order.swap(i, j);
        }
        let shuffled = dataset(
            order.iter().map(|&i| rows[i].clone()).collect(),
            order.iter().map(|&i| labels[i]).collect(),
            &[FeatureKind::Numeric, FeatureKind::Categorical],
        );

        let config = small_config(20, 4, 0.3);
        let a = train(&ds, &config, Objective::SquaredError).unwrap();
        let b = train(&shuffled, &config, Objective::SquaredError).unwrap();
        for probe in 0..30 {
            let row = vec![(probe % 11) as f64 * 0.9, ((probe % 3) + 2) as f64];
            let pa = a.predict(&row);
            let pb = b.predict(&row);
            assert_eq!(pa.to_bits(), pb.to_bits(), "row {row:?}: {pa} vs {pb}");
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i as f64) * 0.37, ((i % 5) + 2) as f64])
            .collect();
        let labels: Vec<f64> = rows.iter().map(|r| r[0].sin() * 10.0 + r[1]).collect();
        let ds = dataset(
            rows.clone(),
            labels,
            &[FeatureKind::Numeric, FeatureKind::Categorical],
        );
        let model = train(&ds, &small_config(15, 4, 0.1), Objective::SquaredError).unwrap();
        let json = model.to_json().unwrap();
        let restored = GbdtModel::from_json(&json).unwrap();
        assert_eq!(model, restored);
        for row in &rows {
            assert_eq!(
                model.predict(row).to_bits(),
                restored.predict(row).to_bits()
            );
        }
        // Serializing again yields the same bytes.
        assert_eq!(json, restored.to_json().unwrap());
    }

    #[test]
    #[should_panic(expected = "row width")]
    fn width_mismatch_panics() {
        let model = GbdtModel::from_parts(
            Objective::SquaredError,
            0.0,
            0.1,
            vec![],
            vec![descriptor("x", FeatureKind::Numeric)],
            EncoderConfig::default(),
        );
        model.predict(&[1.0, 2.0]);
    }
}
