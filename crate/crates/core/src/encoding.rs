//! Trace-to-instance encoding: fixed-width feature rows from trace
//! prefixes.
//!
//! Three encodings are supported. `last_only` encodes the attributes of
//! the prefix's last event. `k_history` concatenates the encodings of the
//! last k+1 events (oldest slot first); slots beyond the prefix start are
//! padded with the missing code (categoricals) / 0.0 (numerics) and each
//! padded-able slot carries a `present[-j]` flag so padding is never
//! mistaken for a real zero. `aggregated` prepends one per-activity count
//! column to the last event's encoding.
//!
//! Categorical attributes are carried as integer category codes, not
//! one-hot: the tree model splits on category subsets directly. Code 0 is
//! reserved for missing cells, code 1 for categories unseen at training
//! time; observed categories get codes 2.. in sorted value order.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{AttributeValue, Event, EventLog, Trace, ValueKind};
use crate::kpi::{kpi_value, KpiSpec};

/// Reserved category code for a missing cell.
pub const CODE_MISSING: u32 = 0;
/// Reserved category code for a value unseen at training time.
pub const CODE_UNKNOWN: u32 = 1;
const CODE_BASE: u32 = 2;

/// Name of the engineered elapsed-time attribute added by [`enrich`].
pub const TIME_FROM_START: &str = "time_from_start";
/// Name of the engineered weekday attribute added by [`enrich`].
pub const WEEKDAY: &str = "weekday";
/// Name of the engineered cumulative-cost attribute added by [`enrich`].
pub const CASE_COST: &str = "case_cost";

/// How much history a feature row carries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum History {
    /// Only the last event of the prefix (k = 0).
    LastOnly,
    /// The last k+1 events, padded for short prefixes.
    KHistory(usize),
    /// Per-activity occurrence counts plus the last event.
    Aggregated,
}

impl Default for History {
    fn default() -> Self {
        History::LastOnly
    }
}

impl History {
    pub fn describe(&self) -> String {
        match self {
            History::LastOnly => "last_only".to_string(),
            History::KHistory(k) => format!("k_history({k})"),
            History::Aggregated => "aggregated".to_string(),
        }
    }
}

/// Engineered attributes to add before encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichFlags {
    #[serde(default = "default_true")]
    pub time_from_start: bool,
    #[serde(default = "default_true")]
    pub weekday: bool,
    /// Name of a numeric per-event cost column to accumulate into
    /// [`CASE_COST`].
    #[serde(default)]
    pub running_cost: Option<String>,
}

fn default_true() -> bool {
    true
}

impl Default for EnrichFlags {
    fn default() -> Self {
        EnrichFlags {
            time_from_start: true,
            weekday: true,
            running_cost: None,
        }
    }
}

impl EnrichFlags {
    pub fn none() -> Self {
        EnrichFlags {
            time_from_start: false,
            weekday: false,
            running_cost: None,
        }
    }
}

/// Full encoder configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    #[serde(default)]
    pub history: History,
    #[serde(default)]
    pub enrich: EnrichFlags,
    /// Whether the full-length prefix (remaining time 0, occurrence
    /// forced false) generates a dataset row.
    #[serde(default = "default_true")]
    pub include_final_prefix: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            history: History::LastOnly,
            enrich: EnrichFlags::default(),
            include_final_prefix: true,
        }
    }
}

impl EncoderConfig {
    pub fn with_history(history: History) -> Self {
        EncoderConfig {
            history,
            ..EncoderConfig::default()
        }
    }
}

/// Where a dataset column comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturePosition {
    /// Attribute of the prefix's last event.
    LastEvent,
    /// Attribute of the event `offset` steps before the last one.
    HistoryOffset(usize),
    /// Occurrence count of the activity named in `source_attribute`.
    AggregateCount,
    /// Synthesized by the encoder itself (slot presence flags).
    Engineered,
}

/// Whether a column holds raw numbers or category codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

/// Human-readable identity of one dataset column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub source_attribute: String,
    pub position: FeaturePosition,
    pub value_kind: FeatureKind,
}

impl FeatureDescriptor {
    /// Display name used in explanation labels and inspection CSVs.
    pub fn display_name(&self) -> String {
        match &self.position {
            FeaturePosition::LastEvent | FeaturePosition::Engineered => {
                self.source_attribute.clone()
            }
            FeaturePosition::HistoryOffset(j) => format!("{}[-{j}]", self.source_attribute),
            FeaturePosition::AggregateCount => format!("count({})", self.source_attribute),
        }
    }
}

/// Per-row origin: which trace prefix produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowProvenance {
    pub case_id: String,
    pub prefix_length: usize,
}

/// One fixed-width feature row per trace prefix, plus labels and
/// descriptors tying each column back to its source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedDataset {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub descriptors: Vec<FeatureDescriptor>,
    pub row_provenance: Vec<RowProvenance>,
    /// Non-fatal issues: excluded traces, unseen activities, ...
    pub warnings: Vec<String>,
}

impl EncodedDataset {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.descriptors.len()
    }

    /// Columnar inspection CSV: provenance, decoded feature cells, label.
    pub fn write_csv<W: Write>(&self, encoder: &Encoder, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["case_id".to_string(), "prefix_length".to_string()];
        header.extend(self.descriptors.iter().map(|d| d.display_name()));
        header.push("label".to_string());
        wtr.write_record(&header)
            .map_err(|e| Error::Schema(format!("csv write: {e}")))?;
        for (row_idx, row) in self.rows.iter().enumerate() {
            let prov = &self.row_provenance[row_idx];
            let mut record = vec![prov.case_id.clone(), prov.prefix_length.to_string()];
            for (col, value) in row.iter().enumerate() {
                record.push(match self.descriptors[col].value_kind {
                    FeatureKind::Categorical => encoder.decode_category(col, *value),
                    FeatureKind::Numeric if value.is_nan() => String::new(),
                    FeatureKind::Numeric => format!("{value}"),
                });
            }
            record.push(format!("{}", self.labels[row_idx]));
            wtr.write_record(&record)
                .map_err(|e| Error::Schema(format!("csv write: {e}")))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// JSON sidecar describing every column.
    pub fn descriptors_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.descriptors)?)
    }
}

/// Add engineered attributes to every event. Applied before encoding so
/// the new attributes flow through every encoder uniformly.
pub fn enrich(log: &EventLog, flags: &EnrichFlags) -> Result<EventLog> {
    if let Some(cost_col) = &flags.running_cost {
        match log.attribute_schema.get(cost_col) {
            Some(ValueKind::Numeric) => {}
            Some(_) => {
                return Err(Error::Config(format!(
                    "running_cost column {cost_col:?} is not numeric"
                )))
            }
            None => {
                return Err(Error::Config(format!(
                    "running_cost column {cost_col:?} not present in the log"
                )))
            }
        }
    }
    let mut added: Vec<(&str, ValueKind)> = Vec::new();
    if flags.time_from_start {
        added.push((TIME_FROM_START, ValueKind::Numeric));
    }
    if flags.weekday {
        added.push((WEEKDAY, ValueKind::Literal));
    }
    if flags.running_cost.is_some() {
        added.push((CASE_COST, ValueKind::Numeric));
    }
    if added.is_empty() {
        return Ok(log.clone());
    }
    for (name, _) in &added {
        if log.attribute_schema.contains_key(*name) {
            return Err(Error::Config(format!(
                "enrichment would overwrite existing attribute {name:?}"
            )));
        }
    }

    let mut schema = log.attribute_schema.clone();
    for (name, kind) in &added {
        schema.insert(name.to_string(), *kind);
    }

    let mut traces = Vec::with_capacity(log.traces.len());
    for trace in &log.traces {
        let start = trace.events[0].timestamp;
        let mut running = 0.0;
        let mut events = Vec::with_capacity(trace.events.len());
        for event in &trace.events {
            let mut event = event.clone();
            if flags.time_from_start {
                let secs = (event.timestamp - start).num_milliseconds() as f64 / 1000.0;
                event
                    .attributes
                    .insert(TIME_FROM_START.to_string(), AttributeValue::Numeric(secs));
            }
            if flags.weekday {
                let day = match event.timestamp.weekday() {
                    chrono::Weekday::Mon => "Monday",
                    chrono::Weekday::Tue => "Tuesday",
                    chrono::Weekday::Wed => "Wednesday",
                    chrono::Weekday::Thu => "Thursday",
                    chrono::Weekday::Fri => "Friday",
                    chrono::Weekday::Sat => "Saturday",
                    chrono::Weekday::Sun => "Sunday",
                };
                event.attributes.insert(
                    WEEKDAY.to_string(),
                    AttributeValue::Literal(day.to_string()),
                );
            }
            if let Some(cost_col) = &flags.running_cost {
                // A missing per-event cost contributes nothing.
                if let Some(AttributeValue::Numeric(c)) = event.attributes.get(cost_col) {
                    running += *c;
                }
                event
                    .attributes
                    .insert(CASE_COST.to_string(), AttributeValue::Numeric(running));
            }
            events.push(event);
        }
        traces.push(Trace {
            case_id: trace.case_id.clone(),
            events,
        });
    }
    Ok(EventLog {
        traces,
        attribute_schema: schema,
        activity_alphabet: log.activity_alphabet.clone(),
    })
}

/// The canonical name of the activity column in feature space.
pub const ACTIVITY_ATTR: &str = "activity";
const PRESENT_FLAG: &str = "present";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ColumnSource {
    Activity,
    Attribute(String),
}

/// A fitted encoder: the frozen attribute schema, per-attribute category
/// vocabularies and the activity alphabet of the training log, plus the
/// history configuration. Immutable once fitted; encoding is pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    config: EncoderConfig,
    /// Per-event columns in encoding order: activity first, then
    /// attributes sorted by name.
    event_columns: Vec<(ColumnSource, ValueKind)>,
    /// Sorted distinct training values per categorical attribute;
    /// code = index + 2.
    vocabs: BTreeMap<String, Vec<String>>,
    /// Sorted activity alphabet of the training log.
    alphabet: Vec<String>,
    descriptors: Vec<FeatureDescriptor>,
}

fn categorical_string(value: &AttributeValue) -> Option<String> {
    match value {
        AttributeValue::Literal(s) => Some(s.clone()),
        AttributeValue::Boolean(b) => Some(b.to_string()),
        _ => None,
    }
}

impl Encoder {
    /// Freeze schema, vocabularies and alphabet from a training log.
    pub fn fit(log: &EventLog, config: EncoderConfig) -> Result<Self> {
        let mut event_columns = vec![(ColumnSource::Activity, ValueKind::Literal)];
        for (name, kind) in &log.attribute_schema {
            event_columns.push((ColumnSource::Attribute(name.clone()), *kind));
        }

        let mut vocabs: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut collect = |attr: &str, value: Option<String>| {
            if let Some(v) = value {
                let vocab = vocabs.entry(attr.to_string()).or_default();
                if let Err(pos) = vocab.binary_search(&v) {
                    vocab.insert(pos, v);
                }
            }
        };
        for trace in &log.traces {
            for event in &trace.events {
                collect(ACTIVITY_ATTR, Some(event.activity.clone()));
                for (name, value) in &event.attributes {
                    match log.attribute_schema.get(name) {
                        Some(ValueKind::Literal) | Some(ValueKind::Boolean) => {
                            collect(name, categorical_string(value));
                        }
                        _ => {}
                    }
                }
            }
        }
        // Boolean columns always get the full vocabulary.
        for (name, kind) in &log.attribute_schema {
            if *kind == ValueKind::Boolean {
                vocabs.insert(name.clone(), vec!["false".to_string(), "true".to_string()]);
            }
        }

        let alphabet: Vec<String> = log.activity_alphabet.iter().cloned().collect();

        let mut encoder = Encoder {
            config,
            event_columns,
            vocabs,
            alphabet,
            descriptors: Vec::new(),
        };
        encoder.descriptors = encoder.build_descriptors();
        Ok(encoder)
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn descriptors(&self) -> &[FeatureDescriptor] {
        &self.descriptors
    }

    pub fn width(&self) -> usize {
        self.descriptors.len()
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    fn attr_feature_kind(kind: ValueKind) -> FeatureKind {
        match kind {
            ValueKind::Literal | ValueKind::Boolean => FeatureKind::Categorical,
            ValueKind::Numeric | ValueKind::Timestamp => FeatureKind::Numeric,
        }
    }

    fn event_block_descriptors(&self, position: FeaturePosition) -> Vec<FeatureDescriptor> {
        self.event_columns
            .iter()
            .map(|(source, kind)| FeatureDescriptor {
                source_attribute: match source {
                    ColumnSource::Activity => ACTIVITY_ATTR.to_string(),
                    ColumnSource::Attribute(name) => name.clone(),
                },
                position: position.clone(),
                value_kind: Self::attr_feature_kind(*kind),
            })
            .collect()
    }

    fn build_descriptors(&self) -> Vec<FeatureDescriptor> {
        let mut out = Vec::new();
        match self.config.history {
            History::LastOnly => {
                out.extend(self.event_block_descriptors(FeaturePosition::LastEvent));
            }
            History::KHistory(k) => {
                for j in (1..=k).rev() {
                    out.push(FeatureDescriptor {
                        source_attribute: format!("{PRESENT_FLAG}[-{j}]"),
                        position: FeaturePosition::Engineered,
                        value_kind: FeatureKind::Categorical,
                    });
                    out.extend(
                        self.event_block_descriptors(FeaturePosition::HistoryOffset(j)),
                    );
                }
                out.extend(self.event_block_descriptors(FeaturePosition::LastEvent));
            }
            History::Aggregated => {
                for activity in &self.alphabet {
                    out.push(FeatureDescriptor {
                        source_attribute: activity.clone(),
                        position: FeaturePosition::AggregateCount,
                        value_kind: FeatureKind::Numeric,
                    });
                }
                out.extend(self.event_block_descriptors(FeaturePosition::LastEvent));
            }
        }
        out
    }

    fn code_for(&self, attr: &str, value: &str) -> f64 {
        match self.vocabs.get(attr) {
            Some(vocab) => match vocab.binary_search_by(|v| v.as_str().cmp(value)) {
                Ok(idx) => (idx as u32 + CODE_BASE) as f64,
                Err(_) => CODE_UNKNOWN as f64,
            },
            None => CODE_UNKNOWN as f64,
        }
    }

    /// Decode a categorical cell of column `col` back to its string form.
    pub fn decode_category(&self, col: usize, cell: f64) -> String {
        let descriptor = &self.descriptors[col];
        debug_assert_eq!(descriptor.value_kind, FeatureKind::Categorical);
        let code = cell as u32;
        match code {
            CODE_MISSING => "missing".to_string(),
            CODE_UNKNOWN => "unknown".to_string(),
            _ => {
                let idx = (code - CODE_BASE) as usize;
                if descriptor.position == FeaturePosition::Engineered {
                    // Presence flags: codes 2/3 encode false/true.
                    return ["false", "true"].get(idx).unwrap_or(&"?").to_string();
                }
                self.vocabs
                    .get(&descriptor.source_attribute)
                    .and_then(|v| v.get(idx))
                    .cloned()
                    .unwrap_or_else(|| "?".to_string())
            }
        }
    }

    /// zeta(e): one cell per per-event column, appended to `out`.
    fn encode_event_into(&self, event: &Event, out: &mut Vec<f64>) {
        for (source, kind) in &self.event_columns {
            match source {
                ColumnSource::Activity => out.push(self.code_for(ACTIVITY_ATTR, &event.activity)),
                ColumnSource::Attribute(name) => {
                    let value = event.attributes.get(name);
                    match Self::attr_feature_kind(*kind) {
                        FeatureKind::Categorical => match value.and_then(categorical_string) {
                            Some(s) => out.push(self.code_for(name, &s)),
                            None => out.push(CODE_MISSING as f64),
                        },
                        FeatureKind::Numeric => out.push(match value {
                            Some(AttributeValue::Numeric(v)) => *v,
                            Some(AttributeValue::Timestamp(t)) => {
                                t.timestamp_millis() as f64 / 1000.0
                            }
                            _ => f64::NAN,
                        }),
                    }
                }
            }
        }
    }

    fn encode_padding_into(&self, out: &mut Vec<f64>) {
        for (_, kind) in &self.event_columns {
            match Self::attr_feature_kind(*kind) {
                FeatureKind::Categorical => out.push(CODE_MISSING as f64),
                FeatureKind::Numeric => out.push(0.0),
            }
        }
    }

    /// Encode one event alone — the k = 0 feature row.
    pub fn encode_event(&self, event: &Event) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.event_columns.len());
        self.encode_event_into(event, &mut out);
        out
    }

    /// Encode a prefix given as its event slice, according to the
    /// configured history. Unseen activities under the aggregated
    /// encoding contribute to no count column; the caller may pass
    /// `warn_unseen` to be told about them.
    pub fn encode_prefix_events(
        &self,
        events: &[Event],
        mut warn_unseen: Option<&mut Vec<String>>,
    ) -> Vec<f64> {
        assert!(!events.is_empty(), "cannot encode an empty prefix");
        let mut out = Vec::with_capacity(self.width());
        match self.config.history {
            History::LastOnly => {
                self.encode_event_into(events.last().unwrap(), &mut out);
            }
            History::KHistory(k) => {
                let m = events.len();
                for j in (1..=k).rev() {
                    let present = m > j;
                    out.push((CODE_BASE + present as u32) as f64);
                    if present {
                        self.encode_event_into(&events[m - 1 - j], &mut out);
                    } else {
                        self.encode_padding_into(&mut out);
                    }
                }
                self.encode_event_into(events.last().unwrap(), &mut out);
            }
            History::Aggregated => {
                let mut counts = vec![0.0; self.alphabet.len()];
                for event in events {
                    match self.alphabet.binary_search(&event.activity) {
                        Ok(idx) => counts[idx] += 1.0,
                        Err(_) => {
                            if let Some(warnings) = warn_unseen.as_deref_mut() {
                                warnings.push(format!(
                                    "activity {:?} unseen at training time; not counted",
                                    event.activity
                                ));
                            }
                        }
                    }
                }
                out.extend_from_slice(&counts);
                self.encode_event_into(events.last().unwrap(), &mut out);
            }
        }
        debug_assert_eq!(out.len(), self.width());
        out
    }

    /// Encode a prefix trace.
    pub fn encode_prefix(&self, prefix: &Trace) -> Vec<f64> {
        self.encode_prefix_events(&prefix.events, None)
    }

    /// Encode every prefix of every trace of `log`, labeled under `kpi`.
    /// Traces that cannot be labeled are excluded whole, with a warning.
    pub fn encode_dataset(&self, log: &EventLog, kpi: &KpiSpec) -> Result<EncodedDataset> {
        let mut dataset = EncodedDataset {
            rows: Vec::new(),
            labels: Vec::new(),
            descriptors: self.descriptors.clone(),
            row_provenance: Vec::new(),
            warnings: Vec::new(),
        };
        let mut excluded = 0usize;
        for trace in &log.traces {
            let n = trace.len();
            if n == 0 {
                continue;
            }
            let upto = if self.config.include_final_prefix {
                n
            } else {
                n - 1
            };
            if upto == 0 {
                continue;
            }
            // Label the whole trace first so a labeling failure excludes
            // every prefix of it.
            let mut labels = Vec::with_capacity(upto);
            let mut failed = None;
            for i in 1..=upto {
                match kpi_value(kpi, trace, i) {
                    Ok(v) => labels.push(v),
                    Err(e) => {
                        failed = Some(e);
                        break;
                    }
                }
            }
            if let Some(e) = failed {
                excluded += 1;
                dataset
                    .warnings
                    .push(format!("trace {:?} excluded: {e}", trace.case_id));
                continue;
            }
            for i in 1..=upto {
                let row = self.encode_prefix_events(
                    &trace.events[..i],
                    Some(&mut dataset.warnings),
                );
                dataset.rows.push(row);
                dataset.labels.push(labels[i - 1]);
                dataset.row_provenance.push(RowProvenance {
                    case_id: trace.case_id.clone(),
                    prefix_length: i,
                });
            }
        }
        if excluded > 0 {
            dataset
                .warnings
                .push(format!("{excluded} trace(s) excluded during labeling"));
        }
        Ok(dataset)
    }
}

/// One-shot convenience: enrich, fit the encoder on `log` itself, encode.
pub fn build_dataset(
    log: &EventLog,
    kpi: &KpiSpec,
    config: &EncoderConfig,
) -> Result<(Encoder, EncodedDataset)> {
    let enriched = enrich(log, &config.enrich)?;
    let encoder = Encoder::fit(&enriched, config.clone())?;
    let dataset = encoder.encode_dataset(&enriched, kpi)?;
    Ok((encoder, dataset))
}
