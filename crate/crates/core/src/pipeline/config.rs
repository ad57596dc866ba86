//! Run configuration: one JSON or TOML file drives a whole experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoding::EncoderConfig;
use crate::error::{Error, Result};
use crate::event_log::{parse_csv_file, parse_xes_file, CsvConfig, EventLog};
use crate::gbdt::TrainConfig;
use crate::kpi::KpiSpec;
use crate::pipeline::SplitSpec;
use crate::shapley::SortKey;

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnConfig {
    pub case: String,
    pub activity: String,
    pub timestamp: String,
    pub time_format: Option<String>,
}

impl Default for ColumnConfig {
    fn default() -> Self {
        ColumnConfig {
            case: "case".to_string(),
            activity: "activity".to_string(),
            timestamp: "timestamp".to_string(),
            time_format: None,
        }
    }
}

impl ColumnConfig {
    pub fn to_csv_config(&self) -> CsvConfig {
        CsvConfig {
            case_col: self.case.clone(),
            activity_col: self.activity.clone(),
            time_col: self.timestamp.clone(),
            time_format: self.time_format.clone(),
        }
    }
}

/// Split fractions and strategy (serde-facing alias of [`SplitSpec`]).
pub type SplitConfig = SplitSpec;

/// How the history length is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SearchModeConfig {
    #[default]
    Heuristic,
    Complete,
    /// Skip the search and use `encoder.history` as configured.
    None,
}

/// Hyperparameter grid; the desk-scale default keeps runs in minutes.
/// The paper-scale grid ({1500,3000,4000} x {3,6,10}) is one config away.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            n_trees: vec![100, 300, 600],
            max_depth: vec![3, 6, 10],
        }
    }
}

impl Grid {
    pub fn single(n_trees: usize, max_depth: usize) -> Self {
        Grid {
            n_trees: vec![n_trees],
            max_depth: vec![max_depth],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_trees.len() * self.max_depth.len()
    }
}

/// Explanation-stage knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub enabled: bool,
    /// Background sample size for the interventional payout.
    pub background_size: usize,
    /// Widest instance explained exactly; wider ones are sampled.
    pub exact_threshold: usize,
    /// Permutations for the sampled estimator.
    pub n_permutations: usize,
    /// Bucket budget per numeric feature.
    pub max_buckets: usize,
    /// Cap on explained test prefixes (0 = all), applied as an evenly
    /// strided subsample.
    pub max_instances: usize,
    pub sort: SortKey,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            enabled: true,
            background_size: crate::shapley::DEFAULT_BACKGROUND_SIZE,
            exact_threshold: crate::shapley::DEFAULT_EXACT_THRESHOLD,
            n_permutations: 200,
            max_buckets: 8,
            max_instances: 0,
            sort: SortKey::Mean,
        }
    }
}

/// Static-report knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    /// Labels shown in the global chart.
    pub top_n: usize,
    /// Cap on rendered per-case panels (0 = all).
    pub max_cases: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            top_n: 15,
            max_cases: 200,
        }
    }
}

/// Everything one experiment run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Event log path (.csv or .xes).
    pub log: PathBuf,
    /// Directory all artifacts are written under.
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub columns: ColumnConfig,
    pub kpi: KpiSpec,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub search: SearchModeConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    /// Base training config: learning rate, min leaf and the tree/depth
    /// defaults used during the history search.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub explain: ExplainConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

impl RunConfig {
    /// Load a config from a `.json` or `.toml` file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Ok(serde_json::from_str(&text)?),
            Some("toml") => toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
            other => Err(Error::Config(format!(
                "config must be .json or .toml, got {other:?}"
            ))),
        }
    }

    /// Parse the configured event log (CSV or XES by extension).
    pub fn load_log(&self) -> Result<EventLog> {
        match self.log.extension().and_then(|e| e.to_str()) {
            Some("xes") => parse_xes_file(&self.log),
            _ => parse_csv_file(&self.log, &self.columns.to_csv_config()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::History;

    #[test]
    fn toml_round_trip_with_defaults() {
        let text = r#"
            log = "data/log.csv"
            out_dir = "runs/demo"
            seed = 7

            [kpi]
            kind = "activity_occurrence"
            activity = "Authorization Requested"

            [encoder]
            history = "aggregated"

            [grid]
            n_trees = [50]
            max_depth = [3]
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(
            cfg.kpi,
            KpiSpec::ActivityOccurrence {
                activity: "Authorization Requested".to_string()
            }
        );
        assert_eq!(cfg.encoder.history, History::Aggregated);
        assert!(cfg.encoder.enrich.time_from_start);
        assert_eq!(cfg.search, SearchModeConfig::Heuristic);
        assert_eq!(cfg.grid.n_cells(), 1);
        assert_eq!(cfg.explain.background_size, 100);
        assert_eq!(cfg.train.n_trees, 300);
    }

    #[test]
    fn json_config_parses() {
        let text = r#"{
            "log": "x.csv",
            "out_dir": "out",
            "kpi": {"kind": "remaining_time"},
            "split": {"strategy": "seeded_random"},
            "search": "complete"
        }"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.kpi, KpiSpec::RemainingTime);
        assert_eq!(cfg.search, SearchModeConfig::Complete);
        assert_eq!(
            cfg.split.strategy,
            crate::pipeline::SplitStrategy::SeededRandom
        );
    }

    #[test]
    fn kpi_spec_toml_forms() {
        #[derive(Deserialize)]
        struct Holder {
            kpi: KpiSpec,
        }
        let h: Holder = toml::from_str("kpi = { kind = \"remaining_time\" }").unwrap();
        assert_eq!(h.kpi, KpiSpec::RemainingTime);
        let h: Holder =
            toml::from_str("kpi = { kind = \"running_numeric_total\", attribute = \"case_cost\" }")
                .unwrap();
        assert_eq!(
            h.kpi,
            KpiSpec::RunningNumericTotal {
                attribute: "case_cost".to_string()
            }
        );
    }
}
