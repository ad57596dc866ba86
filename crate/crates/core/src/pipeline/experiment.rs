//! Full experiment runs: split, search, final fit, test scoring, offline
//! explanation of the test prefixes, global aggregation, JSON artifacts.
//!
//! Artifacts are written with stable field order and no timestamps, so a
//! seeded run is byte-reproducible.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::{
    enrich, EncodedDataset, Encoder, EncoderConfig, FeatureKind, History, RowProvenance,
};
use crate::error::{Error, Result};
use crate::event_log::{log_statistics, AttributeValue, EventLog, LogStats, Trace};
use crate::gbdt::{train_with_encoder_config, GbdtModel, Objective, TrainConfig};
use crate::kpi::{kpi_value, KpiSpec, KpiValueKind};
use crate::pipeline::{
    baseline_mae_by_prefix_index, grid_search, history_search, score, split, ExplainConfig,
    RunConfig, SearchMode, SearchModeConfig, SearchResult, SplitLogs, SplitStrategy, TrailEntry,
};
use crate::shapley::{
    aggregate_global, exact_shapley, fit_discretizer, label_explanations, rescale_boolean,
    sampled_shapley, Discretizer, Explanation, GlobalExplanation, PayoutConfig, ShapleyVector,
    SortKey,
};

/// Parsed, enriched and split input.
pub struct Prepared {
    pub enriched: EventLog,
    pub stats: LogStats,
    pub splits: SplitLogs,
}

/// Parse the configured log, add engineered attributes, split traces.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let raw = cfg.load_log().map_err(|e| Error::stage("parse", e))?;
    let stats = log_statistics(&raw);
    let enriched =
        enrich(&raw, &cfg.encoder.enrich).map_err(|e| Error::stage("enrich", e))?;
    let splits = split(&enriched, &cfg.split, cfg.seed).map_err(|e| Error::stage("split", e))?;
    Ok(Prepared {
        enriched,
        stats,
        splits,
    })
}

/// Final model plus the encoder and dataset it was trained on
/// (train + validation traces).
pub struct FittedModel {
    pub model: GbdtModel,
    pub encoder: Encoder,
    pub train_dataset: EncodedDataset,
}

fn objective_for(kind: KpiValueKind) -> Objective {
    match kind {
        KpiValueKind::Numeric => Objective::SquaredError,
        KpiValueKind::Boolean => Objective::Logistic,
    }
}

/// Fit the final model on train + validation with the chosen history.
pub fn fit_final(
    prepared: &Prepared,
    cfg: &RunConfig,
    history: History,
    train_cfg: &TrainConfig,
) -> Result<FittedModel> {
    let encoder_config = EncoderConfig {
        history,
        enrich: cfg.encoder.enrich.clone(),
        include_final_prefix: cfg.encoder.include_final_prefix,
    };
    let pool = prepared.splits.train_pool();
    let encoder = Encoder::fit(&pool, encoder_config.clone())?;
    let train_dataset = encoder.encode_dataset(&pool, &cfg.kpi)?;
    let kind = cfg.kpi.value_kind();
    let model = train_with_encoder_config(
        &train_dataset,
        train_cfg,
        objective_for(kind),
        encoder_config,
    )?;
    Ok(FittedModel {
        model,
        encoder,
        train_dataset,
    })
}

/// Explains encoded rows against a fitted model: exact Shapley values up
/// to the configured width, the permutation estimator beyond it, bucket
/// labels from per-column discretizers fitted on the training dataset.
pub struct Explainer<'a> {
    model: &'a GbdtModel,
    encoder: &'a Encoder,
    discretizers: BTreeMap<usize, Discretizer>,
    payout: PayoutConfig,
    n_permutations: usize,
    seed: u64,
}

impl<'a> Explainer<'a> {
    pub fn new(fitted: &'a FittedModel, explain_cfg: &ExplainConfig, seed: u64) -> Self {
        let train = &fitted.train_dataset;
        let mut discretizers = BTreeMap::new();
        for (col, descriptor) in train.descriptors.iter().enumerate() {
            if descriptor.value_kind == FeatureKind::Numeric {
                let values: Vec<f64> = train.rows.iter().map(|r| r[col]).collect();
                discretizers.insert(
                    col,
                    fit_discretizer(&values, &train.labels, explain_cfg.max_buckets),
                );
            }
        }
        let mut payout =
            PayoutConfig::sample_from(&train.rows, explain_cfg.background_size, seed);
        payout.exact_threshold = explain_cfg.exact_threshold;
        Explainer {
            model: &fitted.model,
            encoder: &fitted.encoder,
            discretizers,
            payout,
            n_permutations: explain_cfg.n_permutations,
            seed,
        }
    }

    pub fn discretizers(&self) -> &BTreeMap<usize, Discretizer> {
        &self.discretizers
    }

    /// Explain one encoded row. Boolean-KPI vectors come back on the
    /// [-1, 1] display scale. `ordinal` keeps sampled runs deterministic
    /// per instance.
    pub fn explain_row(
        &self,
        row: &[f64],
        provenance: Option<RowProvenance>,
        ordinal: u64,
    ) -> Result<(ShapleyVector, Vec<Explanation>)> {
        let mut vector = if row.len() <= self.payout.exact_threshold {
            exact_shapley(self.model, row, &self.payout)?
        } else {
            sampled_shapley(
                self.model,
                row,
                &self.payout,
                self.n_permutations,
                self.seed.wrapping_add(ordinal),
            )?
        };
        if self.model.objective == Objective::Logistic {
            vector = rescale_boolean(&vector, Objective::Logistic)?;
        }
        vector.provenance = provenance;
        let explanations = label_explanations(&vector, row, self.encoder, &self.discretizers);
        Ok((vector, explanations))
    }
}

/// One explained trace prefix, ready for rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    pub case_id: String,
    pub prefix_length: usize,
    pub last_activity: String,
    pub base_value: f64,
    pub prediction: f64,
    /// Forecast of the completed KPI: elapsed + remaining for remaining
    /// time, current + remaining for running totals, the prediction
    /// itself otherwise.
    pub predicted_final: f64,
    /// The KPI-related running measurement at this prefix, when defined.
    pub current_value: Option<f64>,
    pub explanations: Vec<Explanation>,
}

fn current_and_final(
    kpi: &KpiSpec,
    trace: &Trace,
    prefix_length: usize,
    prediction: f64,
) -> (Option<f64>, f64) {
    let last = &trace.events[prefix_length - 1];
    match kpi {
        KpiSpec::RemainingTime => {
            let elapsed =
                (last.timestamp - trace.events[0].timestamp).num_milliseconds() as f64 / 1000.0;
            (Some(elapsed), elapsed + prediction)
        }
        KpiSpec::RunningNumericTotal { attribute } => {
            match last.attributes.get(attribute).and_then(|v| v.as_numeric()) {
                Some(current) => (Some(current), current + prediction),
                None => (None, prediction),
            }
        }
        KpiSpec::TraceLevelAttribute { .. } | KpiSpec::ActivityOccurrence { .. } => {
            (None, prediction)
        }
    }
}

/// Average completed-KPI value over a log: mean case duration for
/// remaining time, mean final value for totals and trace attributes,
/// occurrence rate (on the [-1, 1] display scale) for boolean KPIs.
pub fn average_completed_kpi(kpi: &KpiSpec, log: &EventLog) -> f64 {
    let mut values = Vec::new();
    for trace in &log.traces {
        match kpi {
            KpiSpec::RemainingTime => values.push(trace.duration_secs()),
            KpiSpec::ActivityOccurrence { .. } => {
                if let Ok(v) = kpi_value(kpi, trace, 1) {
                    values.push(v);
                }
            }
            KpiSpec::TraceLevelAttribute { attribute }
            | KpiSpec::RunningNumericTotal { attribute } => {
                if let Some(AttributeValue::Numeric(v)) =
                    trace.events.last().and_then(|e| e.attributes.get(attribute))
                {
                    values.push(*v);
                }
            }
        }
    }
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    match kpi.value_kind() {
        KpiValueKind::Boolean => 2.0 * mean - 1.0,
        KpiValueKind::Numeric => mean,
    }
}

/// Trace-count summary of one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub strategy: SplitStrategy,
}

/// Everything a rendered report needs, minus the explanation lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kpi: String,
    pub kpi_spec: KpiSpec,
    pub value_kind: KpiValueKind,
    /// "mae" (KPI units) or "f1".
    pub score_metric: String,
    /// Scale of the explanation artifacts: "kpi_units" or "[-1,1]".
    pub value_scale: String,
    pub seed: u64,
    pub log_stats: LogStats,
    pub split: SplitSummary,
    pub search_mode: SearchModeConfig,
    pub history_search: Option<SearchResult>,
    pub grid_trail: Option<Vec<TrailEntry>>,
    pub chosen_history: History,
    pub chosen_train_config: TrainConfig,
    pub validation_score: Option<f64>,
    pub test_score: f64,
    /// Per-prefix-index mean-label baseline MAE (numeric KPIs).
    pub baseline_mae: Option<f64>,
    pub train_mean_label: f64,
    /// Average completed-KPI value over the training traces; per-case
    /// panels show predictions as a delta against it.
    pub avg_completed_kpi: f64,
    pub explained_instances: usize,
    pub warnings: Vec<String>,
}

/// In-memory result of [`run_experiment`]; the same data is on disk under
/// the configured output directory.
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub locals: Vec<LocalExplanation>,
    pub globals: Vec<GlobalExplanation>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Run the full pipeline and write `model.json`, `report.json`,
/// `local_explanations.json` and `global_explanations.json` under the
/// configured output directory.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let prepared = prepare(cfg)?;
    let kind = cfg.kpi.value_kind();

    // History selection.
    let mut history_result: Option<SearchResult> = None;
    let chosen_history = match cfg.search {
        SearchModeConfig::None => cfg.encoder.history.clone(),
        mode => {
            let search_mode = match mode {
                SearchModeConfig::Heuristic => SearchMode::Heuristic,
                SearchModeConfig::Complete => SearchMode::Complete,
                SearchModeConfig::None => unreachable!(),
            };
            let result = history_search(
                &prepared.splits.train,
                &prepared.splits.validation,
                &cfg.kpi,
                &cfg.train,
                &cfg.encoder,
                search_mode,
            )
            .map_err(|e| Error::stage("history_search", e))?;
            let chosen = result.chosen_history.clone();
            history_result = Some(result);
            chosen
        }
    };

    // Hyperparameter grid.
    let mut grid_trail: Option<Vec<TrailEntry>> = None;
    let mut validation_score = history_result.as_ref().map(|r| r.validation_score);
    let chosen_train_config = if cfg.grid.n_cells() == 1 {
        TrainConfig {
            n_trees: cfg.grid.n_trees[0],
            max_depth: cfg.grid.max_depth[0],
            ..cfg.train.clone()
        }
    } else {
        let result = grid_search(
            &prepared.splits.train,
            &prepared.splits.validation,
            &cfg.kpi,
            &chosen_history,
            &cfg.encoder,
            &cfg.grid,
            &cfg.train,
        )
        .map_err(|e| Error::stage("grid_search", e))?;
        validation_score = Some(result.validation_score);
        grid_trail = Some(result.trail);
        result.chosen
    };

    // Final fit on train + validation.
    let fitted = fit_final(&prepared, cfg, chosen_history.clone(), &chosen_train_config)
        .map_err(|e| Error::stage("train", e))?;

    // Test scoring.
    let test_dataset = fitted
        .encoder
        .encode_dataset(&prepared.splits.test, &cfg.kpi)
        .map_err(|e| Error::stage("score", e))?;
    let test_score = score(&fitted.model, &test_dataset, kind)
        .map_err(|e| Error::stage("score", e))?;
    let baseline_mae = match kind {
        KpiValueKind::Numeric => Some(
            baseline_mae_by_prefix_index(&fitted.train_dataset, &test_dataset)
                .map_err(|e| Error::stage("score", e))?,
        ),
        KpiValueKind::Boolean => None,
    };

    let train_mean_label = fitted.train_dataset.labels.iter().sum::<f64>()
        / fitted.train_dataset.n_rows().max(1) as f64;
    let pool = prepared.splits.train_pool();
    let avg_completed_kpi = average_completed_kpi(&cfg.kpi, &pool);

    // Offline explanation of the test prefixes.
    let mut locals: Vec<LocalExplanation> = Vec::new();
    let mut globals: Vec<GlobalExplanation> = Vec::new();
    if cfg.explain.enabled && test_dataset.n_rows() > 0 {
        let explainer = Explainer::new(&fitted, &cfg.explain, cfg.seed);
        let n = test_dataset.n_rows();
        let indices: Vec<usize> =
            if cfg.explain.max_instances > 0 && n > cfg.explain.max_instances {
                (0..cfg.explain.max_instances)
                    .map(|i| i * n / cfg.explain.max_instances)
                    .collect()
            } else {
                (0..n).collect()
            };
        for (ordinal, &i) in indices.iter().enumerate() {
            let provenance = test_dataset.row_provenance[i].clone();
            let (vector, explanations) = explainer
                .explain_row(
                    &test_dataset.rows[i],
                    Some(provenance.clone()),
                    ordinal as u64,
                )
                .map_err(|e| Error::stage("explain", e))?;
            let trace = prepared
                .splits
                .test
                .trace_by_case(&provenance.case_id)
                .expect("provenance points into the test log");
            let (current_value, predicted_final) = current_and_final(
                &cfg.kpi,
                trace,
                provenance.prefix_length,
                vector.prediction,
            );
            locals.push(LocalExplanation {
                case_id: provenance.case_id,
                prefix_length: provenance.prefix_length,
                last_activity: trace.events[provenance.prefix_length - 1].activity.clone(),
                base_value: vector.base_value,
                prediction: vector.prediction,
                predicted_final,
                current_value,
                explanations,
            });
        }
        globals = aggregate_global(
            locals.iter().map(|l| l.explanations.as_slice()),
            cfg.explain.sort,
        );
    }

    let mut warnings = fitted.train_dataset.warnings.clone();
    warnings.extend(test_dataset.warnings.iter().cloned());
    warnings.dedup();

    let report = ExperimentReport {
        kpi: cfg.kpi.describe(),
        kpi_spec: cfg.kpi.clone(),
        value_kind: kind,
        score_metric: match kind {
            KpiValueKind::Numeric => "mae".to_string(),
            KpiValueKind::Boolean => "f1".to_string(),
        },
        value_scale: match kind {
            KpiValueKind::Numeric => "kpi_units".to_string(),
            KpiValueKind::Boolean => "[-1,1]".to_string(),
        },
        seed: cfg.seed,
        log_stats: prepared.stats.clone(),
        split: SplitSummary {
            n_train: prepared.splits.train.n_traces(),
            n_validation: prepared.splits.validation.n_traces(),
            n_test: prepared.splits.test.n_traces(),
            strategy: cfg.split.strategy,
        },
        search_mode: cfg.search,
        history_search: history_result,
        grid_trail,
        chosen_history,
        chosen_train_config,
        validation_score,
        test_score,
        baseline_mae,
        train_mean_label,
        avg_completed_kpi,
        explained_instances: locals.len(),
        warnings,
    };

    fs::create_dir_all(&cfg.out_dir)?;
    fitted
        .model
        .save(&cfg.out_dir.join("model.json"))
        .map_err(|e| Error::stage("write", e))?;
    write_json(&cfg.out_dir.join("report.json"), &report)
        .map_err(|e| Error::stage("write", e))?;
    write_json(&cfg.out_dir.join("local_explanations.json"), &locals)
        .map_err(|e| Error::stage("write", e))?;
    write_json(&cfg.out_dir.join("global_explanations.json"), &globals)
        .map_err(|e| Error::stage("write", e))?;

    Ok(ExperimentOutput {
        report,
        locals,
        globals,
    })
}

/// Online-style explanation: the last observed prefix of every trace in
/// `log` (typically a log of running cases), aggregated globally.
pub fn explain_last_prefixes(
    explainer: &Explainer,
    kpi: &KpiSpec,
    log: &EventLog,
    sort: SortKey,
) -> Result<(Vec<LocalExplanation>, Vec<GlobalExplanation>)> {
    let mut locals = Vec::new();
    for (ordinal, trace) in log.traces.iter().enumerate() {
        if trace.events.is_empty() {
            continue;
        }
        let row = explainer
            .encoder
            .encode_prefix_events(&trace.events, None);
        let provenance = RowProvenance {
            case_id: trace.case_id.clone(),
            prefix_length: trace.len(),
        };
        let (vector, explanations) =
            explainer.explain_row(&row, Some(provenance), ordinal as u64)?;
        let (current_value, predicted_final) =
            current_and_final(kpi, trace, trace.len(), vector.prediction);
        locals.push(LocalExplanation {
            case_id: trace.case_id.clone(),
            prefix_length: trace.len(),
            last_activity: trace.events[trace.len() - 1].activity.clone(),
            base_value: vector.base_value,
            prediction: vector.prediction,
            predicted_final,
            current_value,
            explanations,
        });
    }
    let globals = aggregate_global(locals.iter().map(|l| l.explanations.as_slice()), sort);
    Ok((locals, globals))
}
