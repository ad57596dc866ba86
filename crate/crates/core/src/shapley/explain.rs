//! Labeled explanations and their cross-instance aggregation.
//!
//! A labeled explanation pairs a human-readable `attr=value` (categorical)
//! or bucket-form (numeric) label with its Shapley value. Global
//! explanations group the labels across many explained instances and
//! report the mean signed influence per label, its median, and how many
//! instances carried it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::encoding::{Encoder, FeatureKind, TIME_FROM_START};
use crate::shapley::{Discretizer, ShapleyVector};

/// One labeled attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub label: String,
    #[serde(rename = "shap")]
    pub shapley_value: f64,
}

/// Aggregate influence of one explanation label across instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalExplanation {
    pub label: String,
    #[serde(rename = "mean")]
    pub mean_influence: f64,
    #[serde(rename = "median")]
    pub median_influence: f64,
    pub count: usize,
}

/// Which statistic orders the global list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    Mean,
    Median,
}

/// Compact deterministic number formatting for labels: four significant
/// digits below 1000, integers above.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs();
    if magnitude >= 1000.0 {
        return format!("{x:.0}");
    }
    let leading = magnitude.log10().floor() as i32;
    let precision = (3 - leading).max(0) as usize;
    let mut s = format!("{x:.precision$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

fn fmt_hours(secs: f64) -> String {
    format!("{}h", fmt_num(secs / 3600.0))
}

/// Label every feature of an explained instance.
///
/// Categorical cells label as `attr=value` (history slots as
/// `attr[-k]=value`); numeric cells get the bucket of their fitted
/// discretizer, NaN cells label as `attr=missing`. `discretizers` maps
/// column index to the discretizer fitted for that column.
pub fn label_explanations(
    vector: &ShapleyVector,
    row: &[f64],
    encoder: &Encoder,
    discretizers: &BTreeMap<usize, Discretizer>,
) -> Vec<Explanation> {
    let descriptors = encoder.descriptors();
    assert_eq!(vector.values.len(), descriptors.len());
    assert_eq!(row.len(), descriptors.len());

    descriptors
        .iter()
        .enumerate()
        .map(|(col, descriptor)| {
            let display = descriptor.display_name();
            let cell = row[col];
            let label = match descriptor.value_kind {
                FeatureKind::Categorical => {
                    format!("{display}={}", encoder.decode_category(col, cell))
                }
                FeatureKind::Numeric if cell.is_nan() => format!("{display}=missing"),
                FeatureKind::Numeric => {
                    let fmt: Box<dyn Fn(f64) -> String> =
                        if descriptor.source_attribute == TIME_FROM_START {
                            Box::new(fmt_hours)
                        } else {
                            Box::new(fmt_num)
                        };
                    match discretizers.get(&col) {
                        Some(d) => d.bucket_label(&display, cell, fmt.as_ref()),
                        None => format!("{display}={}", fmt(cell)),
                    }
                }
            };
            Explanation {
                label,
                shapley_value: vector.values[col],
            }
        })
        .collect()
}

/// Group labeled explanations across instances and sort by descending
/// absolute influence (ties by label). Only instances carrying a label
/// contribute to its statistics; `count` preserves the frequency.
pub fn aggregate_global<'a, I>(per_instance: I, sort_key: SortKey) -> Vec<GlobalExplanation>
where
    I: IntoIterator<Item = &'a [Explanation]>,
{
    let mut groups: BTreeMap<&'a str, Vec<f64>> = BTreeMap::new();
    for explanations in per_instance {
        for explanation in explanations {
            groups
                .entry(explanation.label.as_str())
                .or_default()
                .push(explanation.shapley_value);
        }
    }
    let mut out: Vec<GlobalExplanation> = groups
        .into_iter()
        .map(|(label, mut values)| {
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            values.sort_unstable_by(|a, b| a.total_cmp(b));
            let median = if count % 2 == 1 {
                values[count / 2]
            } else {
                (values[count / 2 - 1] + values[count / 2]) / 2.0
            };
            GlobalExplanation {
                label: label.to_string(),
                mean_influence: mean,
                median_influence: median,
                count,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        let ka = match sort_key {
            SortKey::Mean => a.mean_influence.abs(),
            SortKey::Median => a.median_influence.abs(),
        };
        let kb = match sort_key {
            SortKey::Mean => b.mean_influence.abs(),
            SortKey::Median => b.median_influence.abs(),
        };
        kb.total_cmp(&ka).then_with(|| a.label.cmp(&b.label))
    });
    out
}
