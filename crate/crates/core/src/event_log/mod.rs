//! Core process data model: attribute-valued events grouped into traces.
//!
//! A log is a sequence of traces, one per case; each trace is the
//! timestamp-ordered sequence of events recorded for that case. Every
//! attribute carries exactly one value kind across the whole log, enforced
//! at parse time.

mod csv_io;
mod xes;

pub use csv_io::{parse_csv, parse_csv_file, write_csv, CsvConfig};
pub use xes::{parse_xes, parse_xes_file};

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single attribute value. `Missing` marks an empty cell; it never
/// changes the attribute's inferred kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum AttributeValue {
    Literal(String),
    Numeric(f64),
    Boolean(bool),
    Timestamp(DateTime<Utc>),
    Missing,
}

impl AttributeValue {
    pub fn kind(&self) -> Option<ValueKind> {
        match self {
            AttributeValue::Literal(_) => Some(ValueKind::Literal),
            AttributeValue::Numeric(_) => Some(ValueKind::Numeric),
            AttributeValue::Boolean(_) => Some(ValueKind::Boolean),
            AttributeValue::Timestamp(_) => Some(ValueKind::Timestamp),
            AttributeValue::Missing => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, AttributeValue::Missing)
    }

    pub fn as_numeric(&self) -> Option<f64> {
        match self {
            AttributeValue::Numeric(v) => Some(*v),
            _ => None,
        }
    }
}

/// The value kind of one attribute column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Literal,
    Numeric,
    Boolean,
    Timestamp,
}

/// One recorded process step. Activity and timestamp are mandatory; all
/// other columns live in `attributes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub activity: String,
    pub timestamp: DateTime<Utc>,
    pub attributes: BTreeMap<String, AttributeValue>,
}

impl Event {
    pub fn new(activity: impl Into<String>, timestamp: DateTime<Utc>) -> Self {
        Event {
            activity: activity.into(),
            timestamp,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, name: impl Into<String>, value: AttributeValue) -> Self {
        self.attributes.insert(name.into(), value);
        self
    }
}

/// The ordered event sequence of one case. Events are sorted by timestamp
/// with ties broken by original input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Total wall-clock duration in seconds (last minus first timestamp).
    pub fn duration_secs(&self) -> f64 {
        match (self.events.first(), self.events.last()) {
            (Some(first), Some(last)) => {
                (last.timestamp - first.timestamp).num_milliseconds() as f64 / 1000.0
            }
            _ => 0.0,
        }
    }
}

/// All prefixes of `trace`, shortest first. Prefix `i` shares the case id
/// and contains the first `i` events.
pub fn prefixes(trace: &Trace) -> impl Iterator<Item = Trace> + '_ {
    (1..=trace.events.len()).map(move |i| Trace {
        case_id: trace.case_id.clone(),
        events: trace.events[..i].to_vec(),
    })
}

/// An event log: one trace per case, plus the per-attribute value kinds
/// and the set of activities observed.
///
/// Immutable after construction; safe to share read-only across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub traces: Vec<Trace>,
    pub attribute_schema: BTreeMap<String, ValueKind>,
    pub activity_alphabet: BTreeSet<String>,
}

impl EventLog {
    /// Build a log from traces, recomputing the activity alphabet and
    /// keeping the given attribute schema.
    pub fn from_traces(traces: Vec<Trace>, attribute_schema: BTreeMap<String, ValueKind>) -> Self {
        let activity_alphabet = traces
            .iter()
            .flat_map(|t| t.events.iter().map(|e| e.activity.clone()))
            .collect();
        EventLog {
            traces,
            attribute_schema,
            activity_alphabet,
        }
    }

    pub fn n_traces(&self) -> usize {
        self.traces.len()
    }

    pub fn trace_by_case(&self, case_id: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.case_id == case_id)
    }

    /// Total number of events across all traces. Equals the total number
    /// of prefixes, since every trace of length n has exactly n prefixes.
    pub fn total_events(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }
}

/// Summary statistics over one log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogStats {
    pub n_traces: usize,
    pub n_activities: usize,
    pub mean_events_per_trace: f64,
    pub median_events_per_trace: f64,
    pub mean_duration_secs: f64,
    pub std_duration_secs: f64,
}

/// Compute per-log statistics. An empty log yields all-zero stats.
/// Duration std is the sample standard deviation (n-1), zero for n < 2.
pub fn log_statistics(log: &EventLog) -> LogStats {
    let n = log.traces.len();
    if n == 0 {
        return LogStats {
            n_traces: 0,
            n_activities: 0,
            mean_events_per_trace: 0.0,
            median_events_per_trace: 0.0,
            mean_duration_secs: 0.0,
            std_duration_secs: 0.0,
        };
    }
    let mut lengths: Vec<usize> = log.traces.iter().map(Trace::len).collect();
    lengths.sort_unstable();
    let mean_events = lengths.iter().sum::<usize>() as f64 / n as f64;
    let median_events = if n % 2 == 1 {
        lengths[n / 2] as f64
    } else {
        (lengths[n / 2 - 1] + lengths[n / 2]) as f64 / 2.0
    };
    let durations: Vec<f64> = log.traces.iter().map(Trace::duration_secs).collect();
    let mean_duration = durations.iter().sum::<f64>() / n as f64;
    let std_duration = if n < 2 {
        0.0
    } else {
        let ss: f64 = durations.iter().map(|d| (d - mean_duration).powi(2)).sum();
        (ss / (n as f64 - 1.0)).sqrt()
    };
    LogStats {
        n_traces: n,
        n_activities: log.activity_alphabet.len(),
        mean_events_per_trace: mean_events,
        median_events_per_trace: median_events,
        mean_duration_secs: mean_duration,
        std_duration_secs: std_duration,
    }
}

/// Validate log invariants: unique case ids, non-empty traces, sorted
/// events, alphabet matching observed activities.
pub fn validate(log: &EventLog) -> Result<()> {
    let mut seen = BTreeSet::new();
    for trace in &log.traces {
        if !seen.insert(&trace.case_id) {
            return Err(Error::Schema(format!(
                "duplicate case id {:?}",
                trace.case_id
            )));
        }
        if trace.events.is_empty() {
            return Err(Error::Schema(format!(
                "trace {:?} has no events",
                trace.case_id
            )));
        }
        for pair in trace.events.windows(2) {
            if pair[0].timestamp > pair[1].timestamp {
                return Err(Error::Schema(format!(
                    "trace {:?} events are not timestamp-sorted",
                    trace.case_id
                )));
            }
        }
        for event in &trace.events {
            if !log.activity_alphabet.contains(&event.activity) {
                return Err(Error::Schema(format!(
                    "activity {:?} missing from alphabet",
                    event.activity
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ts(secs: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(secs, 0).unwrap()
    }

    fn trace_of_len(case: &str, len: usize, gap_secs: i64) -> Trace {
        Trace {
            case_id: case.to_string(),
            events: (0..len)
                .map(|i| Event::new("A", ts(i as i64 * gap_secs)))
                .collect(),
        }
    }

    #[test]
    fn prefixes_of_singleton_is_the_trace() {
        let t = trace_of_len("c", 1, 60);
        let ps: Vec<Trace> = prefixes(&t).collect();
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0], t);
    }

    #[test]
    fn prefixes_counting() {
        let t = trace_of_len("c", 4, 60);
        let ps: Vec<Trace> = prefixes(&t).collect();
        assert_eq!(ps.len(), 4);
        for (i, p) in ps.iter().enumerate() {
            assert_eq!(p.len(), i + 1);
            assert_eq!(p.case_id, "c");
        }
    }

    #[test]
    fn prefix_count_sums_to_total_events() {
        // Trace lengths {2,3,5}: enumeration gives 2+3+5 = 10 prefixes.
        let log = EventLog::from_traces(
            vec![
                trace_of_len("a", 2, 1),
                trace_of_len("b", 3, 1),
                trace_of_len("c", 5, 1),
            ],
            BTreeMap::new(),
        );
        let total: usize = log.traces.iter().map(|t| prefixes(t).count()).sum();
        assert_eq!(total, 10);
        assert_eq!(total, log.total_events());
    }

    #[test]
    fn stats_degenerate_single_event_trace() {
        let log = EventLog::from_traces(vec![trace_of_len("c", 1, 0)], BTreeMap::new());
        let stats = log_statistics(&log);
        assert_eq!(stats.mean_events_per_trace, 1.0);
        assert_eq!(stats.median_events_per_trace, 1.0);
        assert_eq!(stats.mean_duration_secs, 0.0);
    }

    #[test]
    fn stats_generated_log_matches_brute_force() {
        // Lengths {2,4}, durations {10h, 20h}.
        let log = EventLog::from_traces(
            vec![
                trace_of_len("a", 2, 36_000),
                trace_of_len("b", 4, 24_000),
            ],
            BTreeMap::new(),
        );
        // Brute-force recomputation from the generated rows.
        let lengths: Vec<f64> = log.traces.iter().map(|t| t.len() as f64).collect();
        let durs: Vec<f64> = log
            .traces
            .iter()
            .map(|t| {
                (t.events.last().unwrap().timestamp - t.events[0].timestamp).num_milliseconds()
                    as f64
                    / 1000.0
            })
            .collect();
        let expect_mean_len = lengths.iter().sum::<f64>() / 2.0;
        let expect_mean_dur = durs.iter().sum::<f64>() / 2.0;

        let stats = log_statistics(&log);
        assert_eq!(stats.mean_events_per_trace, expect_mean_len);
        assert_eq!(stats.mean_events_per_trace, 3.0);
        assert_eq!(stats.median_events_per_trace, 3.0);
        assert_eq!(stats.mean_duration_secs, expect_mean_dur);
        assert_eq!(stats.mean_duration_secs, 15.0 * 3600.0);
    }

    #[test]
    fn stats_empty_log_is_zeroed() {
        let log = EventLog::from_traces(vec![], BTreeMap::new());
        let stats = log_statistics(&log);
        assert_eq!(stats.n_traces, 0);
        assert_eq!(stats.mean_duration_secs, 0.0);
    }
}
