//! Thin XES importer.
//!
//! Maps the standard keys onto the CSV-equivalent model: `concept:name` on
//! a trace becomes the case id, `concept:name` on an event the activity,
//! `time:timestamp` the event timestamp. Every other `string`, `int`,
//! `float`, `boolean` or `date` element becomes an event attribute;
//! trace-level attributes are copied onto each event of the trace so they
//! are visible to prefix encoders. CSV remains the canonical format.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use chrono::{DateTime, Utc};
use quick_xml::events::Event as XmlEvent;
use quick_xml::Reader;

use super::{AttributeValue, Event, EventLog, Trace, ValueKind};
use crate::error::{Error, Result};

fn attr_of(e: &quick_xml::events::BytesStart, name: &[u8]) -> Option<String> {
    e.attributes().flatten().find_map(|a| {
        (a.key.as_ref() == name)
            .then(|| String::from_utf8_lossy(a.value.as_ref()).into_owned())
    })
}

fn parse_xes_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(raw)
        .ok()
        .map(|dt| dt.with_timezone(&Utc))
        .map(|dt| {
            chrono::TimeZone::timestamp_millis_opt(&Utc, dt.timestamp_millis()).unwrap()
        })
}

fn typed_value(tag: &[u8], raw: &str) -> Option<AttributeValue> {
    match tag {
        b"string" => Some(AttributeValue::Literal(raw.to_string())),
        b"int" | b"float" => raw.parse::<f64>().ok().map(AttributeValue::Numeric),
        b"boolean" => match raw {
            "true" => Some(AttributeValue::Boolean(true)),
            "false" => Some(AttributeValue::Boolean(false)),
            _ => None,
        },
        b"date" => parse_xes_timestamp(raw).map(AttributeValue::Timestamp),
        _ => None,
    }
}

/// Parse an XES log from a reader.
pub fn parse_xes<R: Read>(reader: R) -> Result<EventLog> {
    let mut xml = Reader::from_reader(BufReader::new(reader));
    xml.config_mut().trim_text(true);

    let mut traces: Vec<Trace> = Vec::new();
    let mut schema: BTreeMap<String, ValueKind> = BTreeMap::new();

    // Parser state: at most one open trace and one open event.
    let mut in_trace = false;
    let mut in_event = false;
    let mut case_id: Option<String> = None;
    let mut trace_attrs: BTreeMap<String, AttributeValue> = BTreeMap::new();
    let mut event_activity: Option<String> = None;
    let mut event_time: Option<DateTime<Utc>> = None;
    let mut event_attrs: BTreeMap<String, AttributeValue> = BTreeMap::new();
    let mut events: Vec<Event> = Vec::new();

    let mut buf = Vec::new();
    loop {
        let ev = xml
            .read_event_into(&mut buf)
            .map_err(|e| Error::Xml(format!("{e}")))?;
        match ev {
            XmlEvent::Start(ref e) | XmlEvent::Empty(ref e) => {
                let tag = e.name();
                let tag = tag.as_ref();
                match tag {
                    b"trace" => {
                        in_trace = true;
                        case_id = None;
                        trace_attrs.clear();
                        events.clear();
                    }
                    b"event" => {
                        in_event = true;
                        event_activity = None;
                        event_time = None;
                        event_attrs.clear();
                    }
                    b"string" | b"int" | b"float" | b"boolean" | b"date" => {
                        let (Some(key), Some(value)) =
                            (attr_of(e, b"key"), attr_of(e, b"value"))
                        else {
                            continue;
                        };
                        if in_event {
                            match key.as_str() {
                                "concept:name" => event_activity = Some(value),
                                "time:timestamp" => {
                                    event_time =
                                        Some(parse_xes_timestamp(&value).ok_or_else(|| {
                                            Error::Xml(format!(
                                                "unparseable time:timestamp {value:?}"
                                            ))
                                        })?)
                                }
                                _ => {
                                    if let Some(v) = typed_value(tag, &value) {
                                        event_attrs.insert(key, v);
                                    }
                                }
                            }
                        } else if in_trace {
                            if key == "concept:name" {
                                case_id = Some(value);
                            } else if let Some(v) = typed_value(tag, &value) {
                                trace_attrs.insert(key, v);
                            }
                        }
                    }
                    _ => {}
                }
            }
            XmlEvent::End(ref e) => match e.name().as_ref() {
                b"event" => {
                    in_event = false;
                    let activity = event_activity.take().ok_or_else(|| {
                        Error::Xml("event without concept:name".to_string())
                    })?;
                    let timestamp = event_time.take().ok_or_else(|| {
                        Error::Xml("event without time:timestamp".to_string())
                    })?;
                    let mut event = Event::new(activity, timestamp);
                    event.attributes = event_attrs.clone();
                    events.push(event);
                }
                b"trace" => {
                    in_trace = false;
                    if events.is_empty() {
                        continue;
                    }
                    let case_id = case_id
                        .take()
                        .unwrap_or_else(|| format!("trace_{}", traces.len()));
                    let mut stamped: Vec<(usize, Event)> = events.drain(..).enumerate().collect();
                    stamped.sort_by(|a, b| a.1.timestamp.cmp(&b.1.timestamp).then(a.0.cmp(&b.0)));
                    let mut sorted: Vec<Event> = stamped.into_iter().map(|(_, e)| e).collect();
                    for event in &mut sorted {
                        for (k, v) in &trace_attrs {
                            event.attributes.entry(k.clone()).or_insert_with(|| v.clone());
                        }
                    }
                    for event in &sorted {
                        for (name, value) in &event.attributes {
                            if let Some(kind) = value.kind() {
                                match schema.get(name) {
                                    None => {
                                        schema.insert(name.clone(), kind);
                                    }
                                    Some(prev) if *prev != kind => {
                                        return Err(Error::Schema(format!(
                                            "attribute {name:?} has mixed value kinds"
                                        )));
                                    }
                                    _ => {}
                                }
                            }
                        }
                    }
                    traces.push(Trace {
                        case_id,
                        events: sorted,
                    });
                }
                _ => {}
            },
            XmlEvent::Eof => break,
            _ => {}
        }
        buf.clear();
    }

    Ok(EventLog::from_traces(traces, schema))
}

/// Parse an XES log from a file path.
pub fn parse_xes_file(path: &Path) -> Result<EventLog> {
    parse_xes(BufReader::new(File::open(path)?))
}
