//! Experiment orchestration: trace-level splits, scoring, and the
//! history-length and hyperparameter searches.

mod config;
mod experiment;

pub use config::{
    ColumnConfig, ExplainConfig, Grid, ReportConfig, RunConfig, SearchModeConfig, SplitConfig,
};
pub use experiment::{
    explain_last_prefixes, fit_final, prepare, run_experiment, Explainer, ExperimentOutput,
    ExperimentReport, FittedModel, LocalExplanation, Prepared, SplitSummary,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{EncodedDataset, Encoder, EncoderConfig, History};
use crate::error::{Error, Result};
use crate::event_log::EventLog;
use crate::gbdt::{train_with_encoder_config, GbdtModel, Objective, TrainConfig};
use crate::kpi::{KpiSpec, KpiValueKind};

/// Trace-level split specification. Traces never straddle splits: every
/// prefix of one trace lands in exactly one part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction_of_train: f64,
    pub strategy: SplitStrategy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    /// Order traces by first-event timestamp; the most recent third is
    /// the test set, the most recent slice of the pool the validation.
    ChronologicalByCaseStart,
    /// Uniform shuffle under the run seed.
    SeededRandom,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 2.0 / 3.0,
            validation_fraction_of_train: 0.2,
            strategy: SplitStrategy::ChronologicalByCaseStart,
        }
    }
}

/// The three disjoint trace-level parts of a split.
#[derive(Debug, Clone)]
pub struct SplitLogs {
    pub train: EventLog,
    pub validation: EventLog,
    pub test: EventLog,
}

impl SplitLogs {
    /// Train and validation merged, used for the final fit.
    pub fn train_pool(&self) -> EventLog {
        let mut traces = self.train.traces.clone();
        traces.extend(self.validation.traces.clone());
        EventLog::from_traces(traces, self.train.attribute_schema.clone())
    }
}

/// Partition a log into train/validation/test trace sets.
///
/// The train pool takes `round(n * train_fraction)` traces; the
/// validation carve-out rounds toward train (`floor`).
pub fn split(log: &EventLog, spec: &SplitSpec, seed: u64) -> Result<SplitLogs> {
    let n = log.traces.len();
    if n < 3 {
        return Err(Error::Config(format!(
            "need at least 3 traces to split, got {n}"
        )));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config("train_fraction must be in (0,1)".to_string()));
    }
    if !(spec.validation_fraction_of_train >= 0.0 && spec.validation_fraction_of_train < 1.0) {
        return Err(Error::Config(
            "validation_fraction_of_train must be in [0,1)".to_string(),
        ));
    }

    let mut order: Vec<usize> = (0..n).collect();
    match spec.strategy {
        SplitStrategy::ChronologicalByCaseStart => {
            order.sort_by_key(|&i| (log.traces[i].events[0].timestamp, i));
        }
        SplitStrategy::SeededRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            order.shuffle(&mut rng);
        }
    }

    let pool_n = ((n as f64 * spec.train_fraction).round() as usize).clamp(1, n - 1);
    let validation_n = (pool_n as f64 * spec.validation_fraction_of_train).floor() as usize;
    let train_n = pool_n - validation_n;

    let pick = |idx: &[usize]| -> EventLog {
        EventLog::from_traces(
            idx.iter().map(|&i| log.traces[i].clone()).collect(),
            log.attribute_schema.clone(),
        )
    };
    Ok(SplitLogs {
        train: pick(&order[..train_n]),
        validation: pick(&order[train_n..pool_n]),
        test: pick(&order[pool_n..]),
    })
}

/// Score a model on an encoded dataset: mean absolute error for numeric
/// KPIs, F1 of the positive class at threshold 0.5 for boolean ones.
pub fn score(model: &GbdtModel, dataset: &EncodedDataset, kind: KpiValueKind) -> Result<f64> {
    if dataset.n_rows() == 0 {
        return Err(Error::Scoring("empty dataset".to_string()));
    }
    match kind {
        KpiValueKind::Numeric => {
            let total: f64 = dataset
                .rows
                .iter()
                .zip(&dataset.labels)
                .map(|(row, y)| (model.predict(row) - y).abs())
                .sum();
            Ok(total / dataset.n_rows() as f64)
        }
        KpiValueKind::Boolean => {
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fne = 0usize;
            for (row, y) in dataset.rows.iter().zip(&dataset.labels) {
                let predicted = model.predict(row) >= 0.5;
                let actual = *y >= 0.5;
                match (predicted, actual) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fne += 1,
                    (false, false) => {}
                }
            }
            Ok(f1_from_counts(tp, fp, fne))
        }
    }
}

/// F1 = 2TP / (2TP + FP + FN); the degenerate all-true-negative case
/// scores 1.0.
pub fn f1_from_counts(tp: usize, fp: usize, fne: usize) -> f64 {
    let denom = 2 * tp + fp + fne;
    if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Per-prefix-index mean-label baseline: predict, for each test row, the
/// training-set mean label among rows of the same prefix length (overall
/// mean for unseen lengths). Returns the baseline's MAE on `test`.
pub fn baseline_mae_by_prefix_index(
    train: &EncodedDataset,
    test: &EncodedDataset,
) -> Result<f64> {
    if train.n_rows() == 0 || test.n_rows() == 0 {
        return Err(Error::Scoring("empty dataset".to_string()));
    }
    use std::collections::BTreeMap;
    let mut per_index: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (prov, y) in train.row_provenance.iter().zip(&train.labels) {
        let slot = per_index.entry(prov.prefix_length).or_insert((0.0, 0));
        slot.0 += y;
        slot.1 += 1;
    }
    let overall = train.labels.iter().sum::<f64>() / train.n_rows() as f64;
    let total: f64 = test
        .row_provenance
        .iter()
        .zip(&test.labels)
        .map(|(prov, y)| {
            let pred = per_index
                .get(&prov.prefix_length)
                .map(|(s, n)| s / *n as f64)
                .unwrap_or(overall);
            (pred - y).abs()
        })
        .sum();
    Ok(total / test.n_rows() as f64)
}

/// One evaluated candidate during a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrailEntry {
    pub history: History,
    pub train_config: TrainConfig,
    pub score: f64,
}

/// Outcome of the history-length search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub chosen_history: History,
    pub chosen: TrainConfig,
    pub validation_score: f64,
    pub trail: Vec<TrailEntry>,
}

/// Search mode for the history length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Stop after two consecutive steps without a >= 1% relative
    /// improvement over the incumbent best.
    Heuristic,
    /// Evaluate every candidate.
    Complete,
}

fn objective_for(kind: KpiValueKind) -> Objective {
    match kind {
        KpiValueKind::Numeric => Objective::SquaredError,
        KpiValueKind::Boolean => Objective::Logistic,
    }
}

fn better(kind: KpiValueKind, candidate: f64, incumbent: f64) -> bool {
    match kind {
        KpiValueKind::Numeric => candidate < incumbent,
        KpiValueKind::Boolean => candidate > incumbent,
    }
}

/// A step "improves" iff it betters the incumbent best by at least 1%
/// relative.
fn improves_one_percent(kind: KpiValueKind, candidate: f64, incumbent: f64) -> bool {
    let eps = 1e-12;
    match kind {
        KpiValueKind::Numeric => (incumbent - candidate) / incumbent.abs().max(eps) >= 0.01,
        KpiValueKind::Boolean => (candidate - incumbent) / incumbent.abs().max(eps) >= 0.01,
    }
}

fn evaluate_history(
    train: &EventLog,
    validation: &EventLog,
    kpi: &KpiSpec,
    base: &TrainConfig,
    template: &EncoderConfig,
    history: History,
) -> Result<f64> {
    let encoder_config = EncoderConfig {
        history,
        enrich: template.enrich.clone(),
        include_final_prefix: template.include_final_prefix,
    };
    let encoder = Encoder::fit(train, encoder_config.clone())?;
    let train_ds = encoder.encode_dataset(train, kpi)?;
    let validation_ds = encoder.encode_dataset(validation, kpi)?;
    let kind = kpi.value_kind();
    let model = train_with_encoder_config(&train_ds, base, objective_for(kind), encoder_config)?;
    score(&model, &validation_ds, kind)
}

/// Search the history length: candidates k = 0..=mean events per case,
/// plus the aggregated encoding, scored on the validation split.
///
/// In heuristic mode the k-scan stops after two consecutive steps that do
/// not improve the incumbent best by >= 1% relative; the aggregated
/// encoding is always evaluated and competes with the best k. Complete
/// mode evaluates everything.
pub fn history_search(
    train: &EventLog,
    validation: &EventLog,
    kpi: &KpiSpec,
    base: &TrainConfig,
    template: &EncoderConfig,
    mode: SearchMode,
) -> Result<SearchResult> {
    if validation.traces.is_empty() {
        return Err(Error::Config(
            "history search needs a non-empty validation split".to_string(),
        ));
    }
    let kind = kpi.value_kind();
    let pool_traces = train.traces.len() + validation.traces.len();
    let pool_events: usize = train.total_events() + validation.total_events();
    let k_max = if pool_traces == 0 {
        0
    } else {
        (pool_events as f64 / pool_traces as f64).floor() as usize
    };

    let mut trail: Vec<TrailEntry> = Vec::new();
    let evaluate = |history: History, trail: &mut Vec<TrailEntry>| -> Result<f64> {
        let s = evaluate_history(train, validation, kpi, base, template, history.clone())?;
        trail.push(TrailEntry {
            history,
            train_config: base.clone(),
            score: s,
        });
        Ok(s)
    };

    let history_of = |k: usize| {
        if k == 0 {
            History::LastOnly
        } else {
            History::KHistory(k)
        }
    };

    let mut best_score = evaluate(history_of(0), &mut trail)?;
    let mut best_history = history_of(0);
    let mut consecutive_flat = 0usize;

    for k in 1..=k_max {
        let s = evaluate(history_of(k), &mut trail)?;
        if improves_one_percent(kind, s, best_score) {
            consecutive_flat = 0;
        } else {
            consecutive_flat += 1;
        }
        if better(kind, s, best_score) {
            best_score = s;
            best_history = history_of(k);
        }
        if mode == SearchMode::Heuristic && consecutive_flat >= 2 {
            break;
        }
    }

    let aggregated_score = evaluate(History::Aggregated, &mut trail)?;
    if better(kind, aggregated_score, best_score) {
        best_score = aggregated_score;
        best_history = History::Aggregated;
    }

    Ok(SearchResult {
        chosen_history: best_history,
        chosen: base.clone(),
        validation_score: best_score,
        trail,
    })
}

/// Outcome of the hyperparameter grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub chosen: TrainConfig,
    pub validation_score: f64,
    pub trail: Vec<TrailEntry>,
}

/// Exhaustive grid search over (n_trees, max_depth) with the history
/// fixed. Ties go to fewer trees, then smaller depth.
pub fn grid_search(
    train: &EventLog,
    validation: &EventLog,
    kpi: &KpiSpec,
    history: &History,
    template: &EncoderConfig,
    grid: &Grid,
    base: &TrainConfig,
) -> Result<GridResult> {
    if grid.n_trees.is_empty() || grid.max_depth.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".to_string()));
    }
    if validation.traces.is_empty() {
        return Err(Error::Config(
            "grid search needs a non-empty validation split".to_string(),
        ));
    }
    let kind = kpi.value_kind();
    let encoder_config = EncoderConfig {
        history: history.clone(),
        enrich: template.enrich.clone(),
        include_final_prefix: template.include_final_prefix,
    };
    let encoder = Encoder::fit(train, encoder_config.clone())?;
    let train_ds = encoder.encode_dataset(train, kpi)?;
    let validation_ds = encoder.encode_dataset(validation, kpi)?;

    // Priority order realizes the tie-break: fewer trees, then smaller depth.
    let mut cells: Vec<(usize, usize)> = Vec::new();
    for &trees in &grid.n_trees {
        for &depth in &grid.max_depth {
            cells.push((trees, depth));
        }
    }
    cells.sort_unstable();
    cells.dedup();

    let mut best: Option<(f64, TrainConfig)> = None;
    let mut trail = Vec::new();
    for (trees, depth) in cells {
        let candidate = TrainConfig {
            n_trees: trees,
            max_depth: depth,
            ..base.clone()
        };
        let model = train_with_encoder_config(
            &train_ds,
            &candidate,
            objective_for(kind),
            encoder_config.clone(),
        )?;
        let s = score(&model, &validation_ds, kind)?;
        trail.push(TrailEntry {
            history: history.clone(),
            train_config: candidate.clone(),
            score: s,
        });
        let replace = match &best {
            None => true,
            Some((incumbent, _)) => better(kind, s, *incumbent),
        };
        if replace {
            best = Some((s, candidate));
        }
    }
    let (validation_score, chosen) = best.unwrap();
    Ok(GridResult {
        chosen,
        validation_score,
        trail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::EnrichFlags;
    use crate::event_log::{Event, Trace};
    use chrono::{TimeZone, Utc};
    use std::collections::BTreeMap;

    fn log_with_starts(starts: &[i64]) -> EventLog {
        EventLog::from_traces(
            starts
                .iter()
                .enumerate()
                .map(|(i, s)| Trace {
                    case_id: format!("c{i}"),
                    events: vec![
                        Event::new("A", Utc.timestamp_opt(*s, 0).unwrap()),
                        Event::new("B", Utc.timestamp_opt(*s + 60, 0).unwrap()),
                    ],
                })
                .collect(),
            BTreeMap::new(),
        )
    }

    #[test]
    fn nine_traces_split_six_three_with_validation_carve() {
        let log = log_with_starts(&[1, 2, 3, 4, 5, 6, 7, 8, 9]);
        let parts = split(&log, &SplitSpec::default(), 0).unwrap();
        // Pool of 6 -> floor(6 * 0.2) = 1 validation, 5 train.
        assert_eq!(parts.train.n_traces(), 5);
        assert_eq!(parts.validation.n_traces(), 1);
        assert_eq!(parts.test.n_traces(), 3);
    }

    #[test]
    fn chronological_split_takes_latest_as_test() {
        let log = log_with_starts(&[5, 3, 9, 1, 7, 2, 8, 4, 6]);
        let parts = split(&log, &SplitSpec::default(), 0).unwrap();
        let mut test_starts: Vec<i64> = parts
            .test
            .traces
            .iter()
            .map(|t| t.events[0].timestamp.timestamp())
            .collect();
        test_starts.sort_unstable();
        assert_eq!(test_starts, vec![7, 8, 9]);
    }

    #[test]
    fn split_partitions_traces() {
        let log = log_with_starts(&(0..20).map(|i| i * 10).collect::<Vec<_>>());
        for strategy in [SplitStrategy::ChronologicalByCaseStart, SplitStrategy::SeededRandom] {
            let spec = SplitSpec {
                strategy,
                ..SplitSpec::default()
            };
            let parts = split(&log, &spec, 7).unwrap();
            let mut seen: Vec<&str> = parts
                .train
                .traces
                .iter()
                .chain(&parts.validation.traces)
                .chain(&parts.test.traces)
                .map(|t| t.case_id.as_str())
                .collect();
            assert_eq!(seen.len(), 20);
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), 20, "splits overlap under {strategy:?}");
        }
    }

    #[test]
    fn too_few_traces_is_config_error() {
        let log = log_with_starts(&[1, 2]);
        assert!(matches!(
            split(&log, &SplitSpec::default(), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn f1_arithmetic() {
        // TP=8, FP=2, FN=2 -> F1 = 2*0.8*0.8/(0.8+0.8) = 0.8.
        assert_eq!(f1_from_counts(8, 2, 2), 0.8);
        assert_eq!(f1_from_counts(0, 0, 0), 1.0);
        assert_eq!(f1_from_counts(0, 3, 1), 0.0);
    }

    fn constant_model(width: usize, value: f64) -> GbdtModel {
        use crate::encoding::{FeatureDescriptor, FeatureKind, FeaturePosition};
        GbdtModel::from_parts(
            Objective::SquaredError,
            value,
            0.1,
            vec![],
            (0..width)
                .map(|i| FeatureDescriptor {
                    source_attribute: format!("f{i}"),
                    position: FeaturePosition::LastEvent,
                    value_kind: FeatureKind::Numeric,
                })
                .collect(),
            EncoderConfig::default(),
        )
    }

    fn toy_dataset(labels: &[f64]) -> EncodedDataset {
        use crate::encoding::{FeatureDescriptor, FeatureKind, FeaturePosition, RowProvenance};
        EncodedDataset {
            rows: labels.iter().map(|_| vec![0.0]).collect(),
            labels: labels.to_vec(),
            descriptors: vec![FeatureDescriptor {
                source_attribute: "f0".to_string(),
                position: FeaturePosition::LastEvent,
                value_kind: FeatureKind::Numeric,
            }],
            row_provenance: labels
                .iter()
                .enumerate()
                .map(|(i, _)| RowProvenance {
                    case_id: format!("c{i}"),
                    prefix_length: 1 + i % 3,
                })
                .collect(),
            warnings: Vec::new(),
        }
    }

    #[test]
    fn mae_of_perfect_and_offset_predictions() {
        let ds = toy_dataset(&[5.0, 5.0, 5.0]);
        let perfect = constant_model(1, 5.0);
        assert_eq!(score(&perfect, &ds, KpiValueKind::Numeric).unwrap(), 0.0);
        // Constant half-day offset on every row.
        let off = constant_model(1, 5.0 + 0.5 * 86_400.0);
        assert_eq!(
            score(&off, &ds, KpiValueKind::Numeric).unwrap(),
            0.5 * 86_400.0
        );
    }

    #[test]
    fn empty_dataset_scoring_error() {
        let ds = EncodedDataset {
            rows: vec![],
            labels: vec![],
            descriptors: vec![],
            row_provenance: vec![],
            warnings: vec![],
        };
        let model = constant_model(0, 1.0);
        assert!(matches!(
            score(&model, &ds, KpiValueKind::Numeric),
            Err(Error::Scoring(_))
        ));
    }

    #[test]
    fn baseline_uses_per_prefix_index_means() {
        let train = toy_dataset(&[10.0, 20.0, 30.0, 10.0, 20.0, 30.0]);
        // Test rows with the same prefix-length cycle: baseline is exact.
        let test = toy_dataset(&[10.0, 20.0, 30.0]);
        assert_eq!(baseline_mae_by_prefix_index(&train, &test).unwrap(), 0.0);
    }

    /// Heuristic search on a flat trail: k=0 wins, stop after k=2.
    #[test]
    fn history_search_flat_trail_keeps_k0() {
        // KPI depends only on the last event: activity B at the end means
        // short remaining time. Longer history adds nothing.
        let ts = |s: i64| Utc.timestamp_opt(s, 0).unwrap();
        let mut traces = Vec::new();
        for i in 0..40 {
            let quick = i % 2 == 0;
            let gap: i64 = if quick { 60 } else { 7200 };
            traces.push(Trace {
                case_id: format!("c{i}"),
                events: vec![
                    Event::new("S", ts(i * 100_000)),
                    Event::new(if quick { "Q" } else { "W" }, ts(i * 100_000 + 10)),
                    Event::new("E", ts(i * 100_000 + 10 + gap)),
                ],
            });
        }
        let log = EventLog::from_traces(traces, BTreeMap::new());
        let parts = split(&log, &SplitSpec::default(), 1).unwrap();
        let template = EncoderConfig {
            history: History::LastOnly,
            enrich: EnrichFlags::none(),
            include_final_prefix: true,
        };
        let base = TrainConfig {
            n_trees: 30,
            max_depth: 3,
            learning_rate: 0.3,
            min_samples_leaf: 1,
            seed: 0,
        };
        let result = history_search(
            &parts.train,
            &parts.validation,
            &KpiSpec::RemainingTime,
            &base,
            &template,
            SearchMode::Heuristic,
        )
        .unwrap();
        assert_eq!(result.chosen_history, History::LastOnly);
        // k=0, k=1, k=2 evaluated, then stop; aggregated always evaluated.
        let k_entries = result
            .trail
            .iter()
            .filter(|t| t.history != History::Aggregated)
            .count();
        assert_eq!(k_entries, 3);
        assert_eq!(
            result.trail.last().unwrap().history,
            History::Aggregated
        );
    }

    #[test]
    fn grid_search_single_cell_and_tie_breaks() {
        let ts = |s: i64| Utc.timestamp_opt(s, 0).unwrap();
        let mut traces = Vec::new();
        for i in 0..30 {
            let fast = i % 2 == 0;
            let gap: i64 = if fast { 100 } else { 50_000 };
            traces.push(Trace {
                case_id: format!("c{i}"),
                events: vec![
                    Event::new(if fast { "F" } else { "S" }, ts(i * 10_000)),
                    Event::new("E", ts(i * 10_000 + gap)),
                ],
            });
        }
        let log = EventLog::from_traces(traces, BTreeMap::new());
        let parts = split(&log, &SplitSpec::default(), 3).unwrap();
        let template = EncoderConfig {
            history: History::LastOnly,
            enrich: EnrichFlags::none(),
            include_final_prefix: false,
        };
        let base = TrainConfig {
            n_trees: 10,
            max_depth: 2,
            learning_rate: 1.0,
            min_samples_leaf: 1,
            seed: 0,
        };

        let single = Grid {
            n_trees: vec![5],
            max_depth: vec![2],
        };
        let result = grid_search(
            &parts.train,
            &parts.validation,
            &KpiSpec::RemainingTime,
            &History::LastOnly,
            &template,
            &single,
            &base,
        )
        .unwrap();
        assert_eq!(result.chosen.n_trees, 5);
        assert_eq!(result.trail.len(), 1);

        // Planted step target is learned perfectly at any depth: the
        // tie-break picks the smallest cell.
        let grid = Grid {
            n_trees: vec![20, 5],
            max_depth: vec![3, 2],
        };
        let result = grid_search(
            &parts.train,
            &parts.validation,
            &KpiSpec::RemainingTime,
            &History::LastOnly,
            &template,
            &grid,
            &base,
        )
        .unwrap();
        assert_eq!(result.trail.len(), 4);
        assert_eq!(result.chosen.n_trees, 5);
        assert_eq!(result.chosen.max_depth, 2);
        assert_eq!(result.validation_score, 0.0);
    }
}
