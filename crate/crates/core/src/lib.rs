//! Explainable KPI prediction over business-process event logs.
//!
//! The crate covers the full path from a raw event log to an explained
//! prediction:
//!
//! 1. [`event_log`] — parse CSV/XES logs into traces of timestamped events.
//! 2. [`kpi`] — label every trace prefix with a KPI target (remaining time,
//!    future activity occurrence, trace-level outcome, running total).
//! 3. [`encoding`] — turn prefixes into fixed-width feature rows
//!    (last-event, k-history or aggregated-count encodings) with
//!    human-readable feature descriptors.
//! 4. [`gbdt`] — train a gradient-boosted tree ensemble as the predictor.
//! 5. [`shapley`] — attribute each prediction to its features via Shapley
//!    values, bucket numeric features, and aggregate local explanations
//!    into global ones.
//! 6. [`pipeline`] — splits, history/grid search, scoring, and full
//!    experiment runs producing JSON artifacts.
//! 7. [`report`] — static SVG/HTML rendering of global and per-case
//!    explanation charts.

pub mod encoding;
pub mod error;
pub mod event_log;
pub mod gbdt;
pub mod kpi;
pub mod pipeline;
pub mod report;
pub mod shapley;

pub use error::{Error, Result};
