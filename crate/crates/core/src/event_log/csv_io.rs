//! CSV ingestion and the canonical CSV form.
//!
//! Input: UTF-8, comma-separated, first row is the header. The case-id,
//! activity and timestamp columns are named in [`CsvConfig`]; every other
//! column becomes an event attribute whose kind is inferred over the whole
//! file (numeric if every non-empty cell parses as a number, boolean if
//! every non-empty cell is `true`/`false`, literal otherwise).
//!
//! The canonical form written by [`write_csv`] uses the fixed header
//! `case,activity,timestamp,<attrs sorted by name>` with ISO-8601
//! millisecond UTC timestamps; parsing it back yields an identical log.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, TimeZone, Utc};

use super::{AttributeValue, Event, EventLog, Trace, ValueKind};
use crate::error::{Error, Result};

/// Column mapping and timestamp format for CSV ingestion.
#[derive(Debug, Clone)]
pub struct CsvConfig {
    pub case_col: String,
    pub activity_col: String,
    pub time_col: String,
    /// chrono format string; when `None`, ISO-8601 variants are tried.
    pub time_format: Option<String>,
}

impl CsvConfig {
    pub fn new(case_col: &str, activity_col: &str, time_col: &str) -> Self {
        CsvConfig {
            case_col: case_col.to_string(),
            activity_col: activity_col.to_string(),
            time_col: time_col.to_string(),
            time_format: None,
        }
    }

    /// The canonical header written by [`write_csv`].
    pub fn canonical() -> Self {
        CsvConfig::new("case", "activity", "timestamp")
    }
}

pub(crate) fn parse_timestamp(
    raw: &str,
    format: Option<&str>,
    line: u64,
) -> Result<DateTime<Utc>> {
    let parsed = if let Some(fmt) = format {
        if fmt.contains("%z") || fmt.contains("%:z") || fmt.contains("%#z") {
            DateTime::parse_from_str(raw, fmt)
                .map(|dt| dt.with_timezone(&Utc))
                .ok()
        } else {
            NaiveDateTime::parse_from_str(raw, fmt)
                .map(|naive| Utc.from_utc_datetime(&naive))
                .ok()
        }
    } else {
        DateTime::parse_from_rfc3339(raw)
            .map(|dt| dt.with_timezone(&Utc))
            .ok()
            .or_else(|| {
                NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S%.f")
                    .ok()
                    .map(|naive| Utc.from_utc_datetime(&naive))
            })
            .or_else(|| {
                NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S%.f")
                    .ok()
                    .map(|naive| Utc.from_utc_datetime(&naive))
            })
    };
    let dt = parsed.ok_or_else(|| Error::Row {
        line,
        message: format!("unparseable timestamp {raw:?}"),
    })?;
    // Millisecond precision: truncate so serialize/parse round-trips.
    let millis = dt.timestamp_millis();
    Ok(Utc.timestamp_millis_opt(millis).unwrap())
}

/// Infer the kind of one attribute column from its non-empty cells.
fn infer_kind<'a>(cells: impl Iterator<Item = &'a str>) -> ValueKind {
    let mut any = false;
    let mut all_numeric = true;
    let mut all_boolean = true;
    for cell in cells {
        if cell.is_empty() {
            continue;
        }
        any = true;
        if cell.parse::<f64>().is_err() {
            all_numeric = false;
        }
        if cell != "true" && cell != "false" {
            all_boolean = false;
        }
        if !all_numeric && !all_boolean {
            return ValueKind::Literal;
        }
    }
    if !any {
        return ValueKind::Literal;
    }
    if all_numeric {
        ValueKind::Numeric
    } else if all_boolean {
        ValueKind::Boolean
    } else {
        ValueKind::Literal
    }
}

fn typed_cell(raw: &str, kind: ValueKind, line: u64) -> Result<AttributeValue> {
    if raw.is_empty() {
        return Ok(AttributeValue::Missing);
    }
    Ok(match kind {
        ValueKind::Literal => AttributeValue::Literal(raw.to_string()),
        ValueKind::Numeric => AttributeValue::Numeric(raw.parse::<f64>().map_err(|_| {
            Error::Row {
                line,
                message: format!("expected numeric cell, got {raw:?}"),
            }
        })?),
        ValueKind::Boolean => AttributeValue::Boolean(raw == "true"),
        ValueKind::Timestamp => AttributeValue::Timestamp(parse_timestamp(raw, None, line)?),
    })
}

/// Parse a CSV event log from a reader. See the module docs for the format.
pub fn parse_csv<R: Read>(reader: R, config: &CsvConfig) -> Result<EventLog> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .clone();

    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing mandatory column {name:?}")))
    };
    let case_idx = col_index(&config.case_col)?;
    let activity_idx = col_index(&config.activity_col)?;
    let time_idx = col_index(&config.time_col)?;

    // Attribute columns in header order, skipping the mandatory three.
    let attr_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != case_idx && *i != activity_idx && *i != time_idx)
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    // First pass: materialize rows (logs are desk-scale by assumption).
    struct RawRow {
        line: u64,
        cells: csv::StringRecord,
    }
    let mut rows: Vec<RawRow> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Row {
                line,
                message: format!("malformed csv record: {e}"),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        rows.push(RawRow {
            line,
            cells: record,
        });
    }

    // Kind inference per attribute column.
    let mut attribute_schema: BTreeMap<String, ValueKind> = BTreeMap::new();
    for (idx, name) in &attr_cols {
        let kind = infer_kind(rows.iter().map(|r| r.cells.get(*idx).unwrap_or("")));
        if let Some(prev) = attribute_schema.insert(name.clone(), kind) {
            if prev != kind {
                return Err(Error::Schema(format!(
                    "attribute {name:?} has mixed value kinds"
                )));
            }
            return Err(Error::Schema(format!("duplicate column {name:?}")));
        }
    }

    // Second pass: typed events grouped by case, preserving file order.
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<(usize, Event)>> = BTreeMap::new();
    for (file_pos, row) in rows.iter().enumerate() {
        let get = |idx: usize| row.cells.get(idx).unwrap_or("");
        let case_id = get(case_idx).to_string();
        if case_id.is_empty() {
            return Err(Error::Row {
                line: row.line,
                message: "empty case id".to_string(),
            });
        }
        let activity = get(activity_idx).to_string();
        if activity.is_empty() {
            return Err(Error::Row {
                line: row.line,
                message: "empty activity".to_string(),
            });
        }
        let raw_time = get(time_idx);
        if raw_time.is_empty() {
            return Err(Error::Row {
                line: row.line,
                message: "empty timestamp".to_string(),
            });
        }
        let timestamp = parse_timestamp(raw_time, config.time_format.as_deref(), row.line)?;

        let mut event = Event::new(activity, timestamp);
        for (idx, name) in &attr_cols {
            let kind = attribute_schema[name];
            event
                .attributes
                .insert(name.clone(), typed_cell(get(*idx), kind, row.line)?);
        }
        if !grouped.contains_key(&case_id) {
            order.push(case_id.clone());
        }
        grouped.entry(case_id).or_default().push((file_pos, event));
    }

    let mut traces = Vec::with_capacity(order.len());
    for case_id in order {
        let mut events = grouped.remove(&case_id).unwrap();
        // Stable by construction: ties keep ascending file position.
        events.sort_by(|a, b| a.1.timestamp.cmp(&b.1.timestamp).then(a.0.cmp(&b.0)));
        traces.push(Trace {
            case_id,
            events: events.into_iter().map(|(_, e)| e).collect(),
        });
    }

    Ok(EventLog::from_traces(traces, attribute_schema))
}

/// Parse a CSV event log from a file path.
pub fn parse_csv_file(path: &Path, config: &CsvConfig) -> Result<EventLog> {
    parse_csv(File::open(path)?, config)
}

fn cell_string(value: &AttributeValue) -> String {
    match value {
        AttributeValue::Literal(s) => s.clone(),
        AttributeValue::Numeric(v) => format!("{v}"),
        AttributeValue::Boolean(b) => b.to_string(),
        AttributeValue::Timestamp(t) => t.to_rfc3339_opts(SecondsFormat::Millis, true),
        AttributeValue::Missing => String::new(),
    }
}

/// Write the canonical CSV form: header `case,activity,timestamp` followed
/// by the attribute columns sorted by name; missing cells are empty.
pub fn write_csv<W: Write>(log: &EventLog, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let attr_names: Vec<&String> = log.attribute_schema.keys().collect();
    let mut header = vec!["case", "activity", "timestamp"];
    header.extend(attr_names.iter().map(|s| s.as_str()));
    wtr.write_record(&header)
        .map_err(|e| Error::Schema(format!("csv write: {e}")))?;
    for trace in &log.traces {
        for event in &trace.events {
            let mut record = vec![
                trace.case_id.clone(),
                event.activity.clone(),
                event.timestamp.to_rfc3339_opts(SecondsFormat::Millis, true),
            ];
            for name in &attr_names {
                record.push(
                    event
                        .attributes
                        .get(*name)
                        .map(cell_string)
                        .unwrap_or_default(),
                );
            }
            wtr.write_record(&record)
                .map_err(|e| Error::Schema(format!("csv write: {e}")))?;
        }
    }
    wtr.flush()?;
    Ok(())
}
