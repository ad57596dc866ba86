//! Static report rendering: an SVG bar chart for global explanations and
//! HTML panels per case, assembled under `<out_dir>/report/`.
//!
//! Every number rendered here comes straight from the JSON artifacts; the
//! renderer only formats. Output is deterministic for fixed input: stable
//! ordering, no timestamps.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kpi::{KpiSpec, KpiValueKind};
use crate::pipeline::{ExperimentReport, LocalExplanation, ReportConfig};
use crate::shapley::{fmt_num, Explanation, GlobalExplanation, SortKey};

/// Axis semantics for the rendered influence values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KpiDisplay {
    /// Remaining time: seconds rendered as days.
    Days,
    /// Generic numeric KPI units (costs, totals).
    Units,
    /// Boolean KPI on the [-1, +1] display scale.
    Probability,
}

impl KpiDisplay {
    pub fn for_kpi(spec: &KpiSpec) -> Self {
        match spec {
            KpiSpec::RemainingTime => KpiDisplay::Days,
            KpiSpec::ActivityOccurrence { .. } => KpiDisplay::Probability,
            _ => KpiDisplay::Units,
        }
    }

    fn to_display(self, value: f64) -> f64 {
        match self {
            KpiDisplay::Days => value / 86_400.0,
            _ => value,
        }
    }

    fn format(self, value: f64) -> String {
        match self {
            KpiDisplay::Days => format!("{}d", fmt_num(value / 86_400.0)),
            KpiDisplay::Units => fmt_num(value),
            KpiDisplay::Probability => fmt_num(value),
        }
    }

    fn axis_label(self) -> &'static str {
        match self {
            KpiDisplay::Days => "influence on the KPI (days)",
            KpiDisplay::Units => "influence on the KPI (units)",
            KpiDisplay::Probability => "influence on the KPI [-1, +1]",
        }
    }
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&#39;")
}

fn truncate_label(label: &str, max: usize) -> String {
    if label.chars().count() <= max {
        label.to_string()
    } else {
        let cut: String = label.chars().take(max - 1).collect();
        format!("{cut}\u{2026}")
    }
}

// Positive influence = reds, negative = blues; darker = more cases.
const REDS: [&str; 5] = ["#f6c9c4", "#ef9f96", "#e47468", "#d24a3e", "#b71c1c"];
const BLUES: [&str; 5] = ["#c5d8f0", "#9abde4", "#6f9fd8", "#4579bd", "#1a4e96"];

struct Bar {
    label: String,
    display_value: f64,
    shade: usize,
}

fn bars_svg(bars: &[Bar], axis_label: &str, title: &str, footer: &str) -> String {
    const WIDTH: f64 = 960.0;
    const LABEL_W: f64 = 380.0;
    const ROW_H: f64 = 26.0;
    const TOP: f64 = 56.0;
    const BOTTOM: f64 = 48.0;
    let plot_left = LABEL_W + 10.0;
    let plot_right = WIDTH - 90.0;
    let center = (plot_left + plot_right) / 2.0;
    let half = (plot_right - plot_left) / 2.0;
    let height = TOP + bars.len() as f64 * ROW_H + BOTTOM;
    let max_abs = bars
        .iter()
        .map(|b| b.display_value.abs())
        .fold(0.0_f64, f64::max)
        .max(1e-12);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" \
         viewBox=\"0 0 {WIDTH} {height}\" font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"24\" font-size=\"16\" font-weight=\"bold\">{}</text>\n",
        esc(title)
    ));
    svg.push_str(&format!(
        "  <line x1=\"{center}\" y1=\"{TOP}\" x2=\"{center}\" y2=\"{}\" stroke=\"#777\" stroke-width=\"1\"/>\n",
        TOP + bars.len() as f64 * ROW_H
    ));
    for (i, bar) in bars.iter().enumerate() {
        let y = TOP + i as f64 * ROW_H;
        let bar_len = bar.display_value.abs() / max_abs * half;
        let (x, fill) = if bar.display_value >= 0.0 {
            (center, REDS[bar.shade.min(4)])
        } else {
            (center - bar_len, BLUES[bar.shade.min(4)])
        };
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            LABEL_W,
            y + 17.0,
            esc(&truncate_label(&bar.label, 52))
        ));
        svg.push_str(&format!(
            "  <rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{bar_len:.2}\" height=\"16\" fill=\"{fill}\"/>\n",
            y + 5.0
        ));
        let value_x = if bar.display_value >= 0.0 {
            center + bar_len + 6.0
        } else {
            center - bar_len - 6.0
        };
        let anchor = if bar.display_value >= 0.0 { "start" } else { "end" };
        svg.push_str(&format!(
            "  <text x=\"{value_x:.2}\" y=\"{}\" text-anchor=\"{anchor}\" fill=\"#333\">{}</text>\n",
            y + 17.0,
            fmt_num(bar.display_value)
        ));
    }
    let axis_y = TOP + bars.len() as f64 * ROW_H + 18.0;
    svg.push_str(&format!(
        "  <text x=\"{plot_left}\" y=\"{axis_y}\" fill=\"#555\">-{}</text>\n",
        fmt_num(max_abs)
    ));
    svg.push_str(&format!(
        "  <text x=\"{center}\" y=\"{axis_y}\" text-anchor=\"middle\" fill=\"#555\">0</text>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{plot_right}\" y=\"{axis_y}\" text-anchor=\"end\" fill=\"#555\">+{}</text>\n",
        fmt_num(max_abs)
    ));
    svg.push_str(&format!(
        "  <text x=\"{center}\" y=\"{}\" text-anchor=\"middle\" fill=\"#555\">{}</text>\n",
        axis_y + 18.0,
        esc(axis_label)
    ));
    if !footer.is_empty() {
        svg.push_str(&format!(
            "  <text x=\"16\" y=\"{}\" fill=\"#777\" font-size=\"11\">{}</text>\n",
            axis_y + 18.0,
            esc(footer)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Quantile shade per count: darker bars mark labels carried by more
/// cases.
fn count_shades(counts: &[usize]) -> Vec<usize> {
    let mut sorted: Vec<usize> = counts.to_vec();
    sorted.sort_unstable();
    counts
        .iter()
        .map(|c| {
            let rank = sorted.partition_point(|x| x <= c);
            ((rank * 5).saturating_sub(1) / counts.len().max(1)).min(4)
        })
        .collect()
}

/// Render the global-explanation bar chart: one horizontal bar per label,
/// signed length = mean (or median) influence, darkness = case count.
pub fn render_global_chart(
    globals: &[GlobalExplanation],
    display: KpiDisplay,
    top_n: usize,
    sort: SortKey,
) -> String {
    let mut rows: Vec<&GlobalExplanation> = globals.iter().collect();
    rows.sort_by(|a, b| {
        let (ka, kb) = match sort {
            SortKey::Mean => (a.mean_influence.abs(), b.mean_influence.abs()),
            SortKey::Median => (a.median_influence.abs(), b.median_influence.abs()),
        };
        kb.total_cmp(&ka).then_with(|| a.label.cmp(&b.label))
    });
    let shown = &rows[..rows.len().min(top_n.max(1))];
    let counts: Vec<usize> = shown.iter().map(|g| g.count).collect();
    let shades = count_shades(&counts);
    let bars: Vec<Bar> = shown
        .iter()
        .zip(shades)
        .map(|(g, shade)| Bar {
            label: g.label.clone(),
            display_value: display.to_display(match sort {
                SortKey::Mean => g.mean_influence,
                SortKey::Median => g.median_influence,
            }),
            shade,
        })
        .collect();
    bars_svg(
        &bars,
        display.axis_label(),
        "Global explanations",
        "darker bars occur in more cases",
    )
}

/// Labels produced by the encoder rather than recorded by the process:
/// engineered attributes, padding flags, aggregate counts.
fn is_derived_label(label: &str) -> bool {
    label.starts_with("time_from_start")
        || label.starts_with("weekday=")
        || label.starts_with("case_cost")
        || label.starts_with("present[")
        || label.starts_with("count(")
}

fn explanation_bars(explanations: &[Explanation], display: KpiDisplay) -> Vec<Bar> {
    let mut sorted: Vec<&Explanation> = explanations.iter().collect();
    sorted.sort_by(|a, b| {
        b.shapley_value
            .abs()
            .total_cmp(&a.shapley_value.abs())
            .then_with(|| a.label.cmp(&b.label))
    });
    sorted
        .iter()
        .map(|e| Bar {
            label: e.label.clone(),
            display_value: display.to_display(e.shapley_value),
            shade: 2,
        })
        .collect()
}

/// Render one case panel as an HTML fragment: header metrics, the
/// process-attribute bars, and a separated "Derived attributes" section
/// for encoder-made features.
pub fn render_case_panel(local: &LocalExplanation, report: &ExperimentReport) -> String {
    let display = KpiDisplay::for_kpi(&report.kpi_spec);
    let delta = local.predicted_final - report.avg_completed_kpi;
    let sign = if delta >= 0.0 { "+" } else { "" };

    let (derived, process): (Vec<Explanation>, Vec<Explanation>) = local
        .explanations
        .iter()
        .cloned()
        .partition(|e| is_derived_label(&e.label));

    let shap_sum: f64 = local.explanations.iter().map(|e| e.shapley_value).sum();

    let mut html = String::new();
    html.push_str(&format!(
        "<div class=\"case-panel\" data-case=\"{}\">\n",
        esc(&local.case_id)
    ));
    html.push_str(&format!(
        "<h2>Case {} &mdash; {}</h2>\n",
        esc(&local.case_id),
        esc(&report.kpi)
    ));
    html.push_str("<table class=\"metrics\">\n");
    html.push_str(&format!(
        "<tr><td>last activity</td><td>{}</td></tr>\n",
        esc(&local.last_activity)
    ));
    html.push_str(&format!(
        "<tr><td>events observed</td><td>{}</td></tr>\n",
        local.prefix_length
    ));
    if let Some(current) = local.current_value {
        html.push_str(&format!(
            "<tr><td>current value</td><td>{}</td></tr>\n",
            display.format(current)
        ));
    }
    html.push_str(&format!(
        "<tr><td>predicted</td><td>{}</td></tr>\n",
        display.format(local.prediction)
    ));
    html.push_str(&format!(
        "<tr><td>expected final</td><td>{}</td></tr>\n",
        display.format(local.predicted_final)
    ));
    html.push_str(&format!(
        "<tr><td>expected vs AVG (target)</td><td>{sign}{} vs AVG {}</td></tr>\n",
        display.format(delta),
        display.format(report.avg_completed_kpi)
    ));
    html.push_str("</table>\n");

    html.push_str(&bars_svg(
        &explanation_bars(&process, display),
        display.axis_label(),
        "Process attributes",
        "",
    ));
    if !derived.is_empty() {
        html.push_str("<h3>Derived attributes</h3>\n");
        html.push_str(
            "<p class=\"note\">These features are computed from the event data during \
             encoding (elapsed time, weekday, running totals, history padding, activity \
             counts); they are not recorded process attributes.</p>\n",
        );
        html.push_str(&bars_svg(
            &explanation_bars(&derived, display),
            display.axis_label(),
            "Derived attributes",
            "",
        ));
    }
    html.push_str(&format!(
        "<p class=\"footer\">bars sum to {} = prediction {} &minus; base value {}</p>\n",
        display.format(shap_sum),
        display.format(local.prediction),
        display.format(local.base_value)
    ));
    html.push_str("</div>\n");
    html
}

fn page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n\
         <title>{}</title>\n<style>\n\
         body {{ font-family: sans-serif; margin: 24px; color: #222; }}\n\
         table.metrics td {{ padding: 2px 10px 2px 0; }}\n\
         table.cases {{ border-collapse: collapse; }}\n\
         table.cases td, table.cases th {{ border: 1px solid #ccc; padding: 4px 8px; }}\n\
         p.note {{ color: #666; max-width: 70em; }}\n\
         p.footer {{ color: #666; font-size: 12px; }}\n\
         </style>\n</head>\n<body>\n{}\n</body>\n</html>\n",
        esc(title),
        body
    )
}

fn sanitize_filename(case_id: &str) -> String {
    case_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Render the full static report from the JSON artifacts in `out_dir`:
/// `report/index.html`, `report/global.svg` and `report/cases/<id>.html`.
/// `sort` reorders the global chart, `filter_label` keeps only labels
/// containing the given substring.
pub fn render_all(
    out_dir: &Path,
    cfg: &ReportConfig,
    sort: SortKey,
    filter_label: Option<&str>,
) -> Result<()> {
    let report: ExperimentReport =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json"))?)?;
    let globals: Vec<GlobalExplanation> = serde_json::from_str(&fs::read_to_string(
        out_dir.join("global_explanations.json"),
    )?)?;
    let locals: Vec<LocalExplanation> = serde_json::from_str(&fs::read_to_string(
        out_dir.join("local_explanations.json"),
    )?)?;

    let filtered: Vec<GlobalExplanation> = match filter_label {
        Some(needle) => globals
            .iter()
            .filter(|g| g.label.contains(needle))
            .cloned()
            .collect(),
        None => globals,
    };

    let report_dir = out_dir.join("report");
    let cases_dir = report_dir.join("cases");
    fs::create_dir_all(&cases_dir)?;

    let display = KpiDisplay::for_kpi(&report.kpi_spec);
    let svg = render_global_chart(&filtered, display, cfg.top_n, sort);
    fs::write(report_dir.join("global.svg"), &svg)?;

    // One panel per case: the last explained prefix plays the running-case
    // view.
    let mut last_per_case: BTreeMap<&str, &LocalExplanation> = BTreeMap::new();
    for local in &locals {
        let slot = last_per_case.entry(local.case_id.as_str()).or_insert(local);
        if local.prefix_length > slot.prefix_length {
            *slot = local;
        }
    }
    let mut cases: Vec<&LocalExplanation> = last_per_case.into_values().collect();
    cases.sort_by(|a, b| {
        let da = (a.predicted_final - report.avg_completed_kpi).abs();
        let db = (b.predicted_final - report.avg_completed_kpi).abs();
        db.total_cmp(&da).then_with(|| a.case_id.cmp(&b.case_id))
    });
    if cfg.max_cases > 0 {
        cases.truncate(cfg.max_cases);
    }

    let mut used_names: BTreeMap<String, usize> = BTreeMap::new();
    let mut case_rows = String::new();
    for local in &cases {
        let mut name = sanitize_filename(&local.case_id);
        let n = used_names.entry(name.clone()).or_insert(0);
        if *n > 0 {
            name = format!("{name}_{n}");
        }
        *n += 1;
        let panel = render_case_panel(local, &report);
        fs::write(
            cases_dir.join(format!("{name}.html")),
            page(&format!("Case {}", local.case_id), &panel),
        )?;
        let delta = local.predicted_final - report.avg_completed_kpi;
        let sign = if delta >= 0.0 { "+" } else { "" };
        case_rows.push_str(&format!(
            "<tr><td><a href=\"cases/{name}.html\">{}</a></td><td>{}</td><td>{}</td>\
             <td>{}</td><td>{sign}{}</td></tr>\n",
            esc(&local.case_id),
            esc(&local.last_activity),
            local
                .current_value
                .map(|v| display.format(v))
                .unwrap_or_else(|| "&mdash;".to_string()),
            display.format(local.predicted_final),
            display.format(delta),
        ));
    }

    let stats = &report.log_stats;
    let mut body = String::new();
    body.push_str(&format!("<h1>{}</h1>\n", esc(&report.kpi)));
    body.push_str("<h2>Overview</h2>\n<table class=\"metrics\">\n");
    body.push_str(&format!(
        "<tr><td>traces</td><td>{}</td></tr>\n<tr><td>activities</td><td>{}</td></tr>\n\
         <tr><td>mean events/trace</td><td>{}</td></tr>\n\
         <tr><td>mean duration</td><td>{}d</td></tr>\n",
        stats.n_traces,
        stats.n_activities,
        fmt_num(stats.mean_events_per_trace),
        fmt_num(stats.mean_duration_secs / 86_400.0),
    ));
    body.push_str(&format!(
        "<tr><td>split (train/validation/test)</td><td>{}/{}/{} traces</td></tr>\n",
        report.split.n_train, report.split.n_validation, report.split.n_test
    ));
    body.push_str(&format!(
        "<tr><td>encoding</td><td>{}</td></tr>\n",
        esc(&report.chosen_history.describe())
    ));
    body.push_str(&format!(
        "<tr><td>model</td><td>{} trees, depth {}, lr {}</td></tr>\n",
        report.chosen_train_config.n_trees,
        report.chosen_train_config.max_depth,
        fmt_num(report.chosen_train_config.learning_rate)
    ));
    let test_score_text = match report.value_kind {
        KpiValueKind::Numeric => format!("MAE {}", display.format(report.test_score)),
        KpiValueKind::Boolean => format!("F1 {}", fmt_num(report.test_score)),
    };
    body.push_str(&format!(
        "<tr><td>test score</td><td>{test_score_text}</td></tr>\n"
    ));
    if let Some(baseline) = report.baseline_mae {
        body.push_str(&format!(
            "<tr><td>baseline (per-prefix-index mean)</td><td>MAE {}</td></tr>\n",
            display.format(baseline)
        ));
    }
    body.push_str(&format!(
        "<tr><td>AVG completed KPI (target)</td><td>{}</td></tr>\n",
        display.format(report.avg_completed_kpi)
    ));
    body.push_str(&format!(
        "<tr><td>explained instances</td><td>{}</td></tr>\n",
        report.explained_instances
    ));
    body.push_str("</table>\n");

    body.push_str(
        "<h2>Global explanations</h2>\n<img src=\"global.svg\" alt=\"global explanations\">\n",
    );

    body.push_str(&format!(
        "<h2>Cases ({} shown)</h2>\n<table class=\"cases\">\n\
         <tr><th>case</th><th>last activity</th><th>current</th>\
         <th>expected final</th><th>vs AVG</th></tr>\n{case_rows}</table>\n",
        cases.len()
    ));

    if !report.warnings.is_empty() {
        body.push_str("<h2>Warnings</h2>\n<ul>\n");
        for w in &report.warnings {
            body.push_str(&format!("<li>{}</li>\n", esc(w)));
        }
        body.push_str("</ul>\n");
    }

    fs::write(report_dir.join("index.html"), page(&report.kpi, &body)).map_err(Error::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn globals_fixture() -> Vec<GlobalExplanation> {
        vec![
            GlobalExplanation {
                label: "closure_type=Inheritance".to_string(),
                mean_influence: 2.2 * 86_400.0,
                median_influence: 2.0 * 86_400.0,
                count: 10,
            },
            GlobalExplanation {
                label: "activity=Request Created".to_string(),
                mean_influence: -86_400.0,
                median_influence: -0.9 * 86_400.0,
                count: 100,
            },
        ]
    }

    #[test]
    fn single_label_chart_has_one_rightward_bar() {
        let globals = vec![GlobalExplanation {
            label: "x=1".to_string(),
            mean_influence: 2.0 * 86_400.0,
            median_influence: 2.0 * 86_400.0,
            count: 1,
        }];
        let svg = render_global_chart(&globals, KpiDisplay::Days, 15, SortKey::Mean);
        assert_eq!(svg.matches("<rect").count(), 1);
        assert!(svg.contains("x=1"));
        assert!(svg.contains(">2<"), "bar value rendered in days: {svg}");
    }

    #[test]
    fn opposite_bars_equal_length_different_shades() {
        let globals = vec![
            GlobalExplanation {
                label: "a=1".to_string(),
                mean_influence: 1.0,
                median_influence: 1.0,
                count: 1,
            },
            GlobalExplanation {
                label: "b=2".to_string(),
                mean_influence: -1.0,
                median_influence: -1.0,
                count: 100,
            },
        ];
        let svg = render_global_chart(&globals, KpiDisplay::Units, 15, SortKey::Mean);
        // Equal |mean| gives equal width on both bars.
        let widths: Vec<&str> = svg
            .match_indices("<rect")
            .map(|(i, _)| {
                let rest = &svg[i..];
                let w = rest.find("width=\"").unwrap() + 7;
                let rest = &rest[w..];
                &rest[..rest.find('"').unwrap()]
            })
            .collect();
        assert_eq!(widths.len(), 2);
        assert_eq!(widths[0], widths[1]);
        // The count=100 bar is darker (deepest palette entry), the other pale.
        assert!(svg.contains(BLUES[4]));
        assert!(svg.contains(REDS[0]));
    }

    #[test]
    fn chart_is_deterministic_with_no_timestamps() {
        let globals = globals_fixture();
        let a = render_global_chart(&globals, KpiDisplay::Days, 15, SortKey::Mean);
        let b = render_global_chart(&globals, KpiDisplay::Days, 15, SortKey::Mean);
        assert_eq!(a, b);
    }

    #[test]
    fn top_n_truncates() {
        let mut globals = globals_fixture();
        for i in 0..30 {
            globals.push(GlobalExplanation {
                label: format!("f=v{i}"),
                mean_influence: 0.1,
                median_influence: 0.1,
                count: 1,
            });
        }
        let svg = render_global_chart(&globals, KpiDisplay::Units, 5, SortKey::Mean);
        assert_eq!(svg.matches("<rect").count(), 5);
    }

    fn report_fixture() -> ExperimentReport {
        use crate::encoding::History;
        use crate::event_log::LogStats;
        use crate::gbdt::TrainConfig;
        use crate::pipeline::{SearchModeConfig, SplitStrategy, SplitSummary};
        ExperimentReport {
            kpi: "remaining_time".to_string(),
            kpi_spec: KpiSpec::RemainingTime,
            value_kind: KpiValueKind::Numeric,
            score_metric: "mae".to_string(),
            value_scale: "kpi_units".to_string(),
            seed: 0,
            log_stats: LogStats {
                n_traces: 2,
                n_activities: 2,
                mean_events_per_trace: 2.0,
                median_events_per_trace: 2.0,
                mean_duration_secs: 86_400.0,
                std_duration_secs: 0.0,
            },
            split: SplitSummary {
                n_train: 1,
                n_validation: 0,
                n_test: 1,
                strategy: SplitStrategy::ChronologicalByCaseStart,
            },
            search_mode: SearchModeConfig::None,
            history_search: None,
            grid_trail: None,
            chosen_history: History::LastOnly,
            chosen_train_config: TrainConfig::default(),
            validation_score: None,
            test_score: 3600.0,
            baseline_mae: Some(7200.0),
            train_mean_label: 4000.0,
            avg_completed_kpi: 18.0 * 86_400.0,
            explained_instances: 1,
            warnings: vec![],
        }
    }

    #[test]
    fn case_panel_shows_delta_vs_average_and_sections() {
        let report = report_fixture();
        let local = LocalExplanation {
            case_id: "c9".to_string(),
            prefix_length: 2,
            last_activity: "B".to_string(),
            base_value: 10.0 * 86_400.0,
            prediction: 12.0 * 86_400.0,
            predicted_final: 20.0 * 86_400.0,
            current_value: Some(8.0 * 86_400.0),
            explanations: vec![
                Explanation {
                    label: "activity=B".to_string(),
                    shapley_value: 86_400.0,
                },
                Explanation {
                    label: "time_from_start>=2h".to_string(),
                    shapley_value: 86_400.0,
                },
            ],
        };
        let html = render_case_panel(&local, &report);
        // Predicted final 20d vs average 18d: "+2d vs AVG".
        assert!(html.contains("+2d vs AVG"), "{html}");
        assert!(html.contains("Derived attributes"));
        assert_eq!(html.matches("<rect").count(), 2);
        // Efficiency surfaced in the footer: bars sum to prediction - base.
        assert!(html.contains("bars sum to 2d"), "{html}");
    }
}
