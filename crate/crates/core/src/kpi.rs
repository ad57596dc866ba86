//! KPI target functions evaluated on trace prefixes.
//!
//! Labeling happens at training time over completed traces: for a trace of
//! length n and a prefix position 1 <= i <= n, the KPI value describes
//! what the rest of the execution looked like from position i.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{AttributeValue, Trace};

/// Whether a KPI is regression- or classification-shaped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KpiValueKind {
    Numeric,
    Boolean,
}

/// Declarative KPI choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KpiSpec {
    /// Seconds from the prefix's last event to the end of the trace.
    RemainingTime,
    /// Does `activity` still occur after position i? Always false at i = n.
    ActivityOccurrence { activity: String },
    /// Value of `attribute` on the last event, constant across i
    /// (customer satisfaction, accumulated total cost, ...).
    TraceLevelAttribute { attribute: String },
    /// Value of `attribute` at the last event minus its value at position
    /// i — the remaining-total analog for cumulative numeric columns.
    RunningNumericTotal { attribute: String },
}

impl KpiSpec {
    pub fn value_kind(&self) -> KpiValueKind {
        match self {
            KpiSpec::RemainingTime | KpiSpec::RunningNumericTotal { .. } => KpiValueKind::Numeric,
            KpiSpec::ActivityOccurrence { .. } => KpiValueKind::Boolean,
            // Literal trace attributes cannot be targets; kpi_value rejects
            // them, so by the time labels exist the kind is resolved.
            KpiSpec::TraceLevelAttribute { .. } => KpiValueKind::Numeric,
        }
    }

    /// Short name used in reports and artifact metadata.
    pub fn describe(&self) -> String {
        match self {
            KpiSpec::RemainingTime => "remaining_time".to_string(),
            KpiSpec::ActivityOccurrence { activity } => {
                format!("activity_occurrence({activity})")
            }
            KpiSpec::TraceLevelAttribute { attribute } => {
                format!("trace_level_attribute({attribute})")
            }
            KpiSpec::RunningNumericTotal { attribute } => {
                format!("running_numeric_total({attribute})")
            }
        }
    }
}

fn numeric_attr(trace: &Trace, event_idx: usize, attribute: &str) -> Result<f64> {
    let event = &trace.events[event_idx];
    match event.attributes.get(attribute) {
        Some(AttributeValue::Numeric(v)) => Ok(*v),
        Some(AttributeValue::Boolean(b)) => Ok(if *b { 1.0 } else { 0.0 }),
        Some(AttributeValue::Missing) | None => Err(Error::Labeling(format!(
            "trace {:?}: attribute {attribute:?} missing on event {}",
            trace.case_id,
            event_idx + 1
        ))),
        Some(other) => Err(Error::Labeling(format!(
            "trace {:?}: attribute {attribute:?} is {:?}, not numeric",
            trace.case_id,
            other.kind()
        ))),
    }
}

/// Evaluate the KPI of `trace` after its first `i` events (1-based).
/// Boolean KPIs are returned as 0.0 / 1.0.
pub fn kpi_value(spec: &KpiSpec, trace: &Trace, i: usize) -> Result<f64> {
    let n = trace.len();
    if i == 0 || i > n {
        return Err(Error::Contract(format!(
            "prefix index {i} out of range 1..={n} for trace {:?}",
            trace.case_id
        )));
    }
    match spec {
        KpiSpec::RemainingTime => {
            let last = trace.events[n - 1].timestamp;
            let here = trace.events[i - 1].timestamp;
            Ok((last - here).num_milliseconds() as f64 / 1000.0)
        }
        KpiSpec::ActivityOccurrence { activity } => {
            let occurs = i < n && trace.events[i..].iter().any(|e| &e.activity == activity);
            Ok(if occurs { 1.0 } else { 0.0 })
        }
        KpiSpec::TraceLevelAttribute { attribute } => numeric_attr(trace, n - 1, attribute),
        KpiSpec::RunningNumericTotal { attribute } => {
            let total = numeric_attr(trace, n - 1, attribute)?;
            let here = numeric_attr(trace, i - 1, attribute)?;
            Ok(total - here)
        }
    }
}
