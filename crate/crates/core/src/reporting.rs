//! Text, Markdown and JSON renderings of run artifacts.
//!
//! Percentages and deltas are always recomputed from the raw counts, so a
//! hand-edited `report.json` cannot smuggle in different numbers.

use serde::{Deserialize, Serialize};

use crate::client::EndpointConfig;
use crate::manifest::ItemKind;
use crate::redundancy::{ComparisonSummary, RedundancyReport};
use crate::scoring::{format_hundredths, percent_hundredths, AccuracyTable, Signed};
use crate::sweep::{SweepKind, SweepResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Markdown,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedRedundancy {
    pub label: String,
    pub report: RedundancyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
    #[serde(default)]
    pub endpoints: Vec<EndpointConfig>,
    pub accuracy: AccuracyTable,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweeps: Vec<SweepResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub redundancy: Vec<NamedRedundancy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonSummary>,
}

impl RunReport {
    pub fn new(run_id: impl Into<String>, accuracy: AccuracyTable) -> Self {
        Self {
            run_id: run_id.into(),
            tool_version: TOOL_VERSION.to_string(),
            manifest_hash: accuracy.manifest_hash.clone(),
            endpoints: Vec::new(),
            accuracy,
            sweeps: Vec::new(),
            redundancy: Vec::new(),
            comparison: None,
        }
    }
}

/// Copy of `table` with percents and deltas rebuilt from the counts.
pub fn recompute(table: &AccuracyTable) -> AccuracyTable {
    let mut out = table.clone();
    for cell in &mut out.cells {
        cell.percent_hundredths = percent_hundredths(cell.numerator, cell.denominator);
        cell.percent = format_hundredths(cell.percent_hundredths as i64);
    }
    let deltas: Vec<Option<String>> = out
        .cells
        .iter()
        .map(|c| out.delta_vs_best_baseline(&c.model, &c.stage, c.kind).map(|d| format!("{:+}", Signed(d))))
        .collect();
    for (cell, d) in out.cells.iter_mut().zip(deltas) {
        cell.delta_vs_best_baseline = d;
    }
    out
}

const KINDS: [ItemKind; 2] = [ItemKind::HiddenText, ItemKind::HiddenObject];

fn accuracy_cell(table: &AccuracyTable, model: &str, stage: &str, kind: ItemKind) -> String {
    let Some(cell) = table.cell(model, stage, kind) else { return "-".into() };
    match table.delta_vs_best_baseline(model, stage, kind) {
        Some(d) => format!("{} ({:+})", cell.percent, Signed(d)),
        None => cell.percent.clone(),
    }
}

fn width(s: &str) -> usize {
    s.chars().count()
}

fn pad(s: &str, w: usize) -> String {
    format!("{s}{}", " ".repeat(w.saturating_sub(width(s))))
}

/// Aligned text table; `groups` are optional spanning headers over pairs of columns.
fn text_table(groups: Option<&[String]>, header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| width(h)).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(width(c));
        }
    }
    if let Some(groups) = groups {
        // widen pairs so each group title fits over its two columns
        for (g, title) in groups.iter().enumerate() {
            let (a, b) = (1 + 2 * g, 2 + 2 * g);
            let span = widths[a] + 3 + widths[b];
            if width(title) > span {
                widths[b] += width(title) - span;
            }
        }
    }
    let line = |cells: &[String]| -> String {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, &w)| pad(c, w)).collect();
        parts.join(" | ").trim_end().to_string()
    };
    let mut out = String::new();
    if let Some(groups) = groups {
        let mut parts = vec![" ".repeat(widths[0])];
        for (g, title) in groups.iter().enumerate() {
            parts.push(pad(title, widths[1 + 2 * g] + 3 + widths[2 + 2 * g]));
        }
        out.push_str(parts.join(" | ").trim_end());
        out.push('\n');
    }
    out.push_str(&line(header));
    out.push('\n');
    out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

fn md_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = format!("| {} |\n", header.join(" | "));
    out.push_str(&format!("|{}\n", header.iter().map(|_| "---|").collect::<String>()));
    for row in rows {
        out.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    out
}

pub fn render_accuracy_table(report: &RunReport, format: Format) -> String {
    let table = recompute(&report.accuracy);
    if format == Format::Json {
        return serde_json::to_string_pretty(&table).expect("table serializes") + "\n";
    }
    let rows: Vec<Vec<String>> = table
        .models
        .iter()
        .map(|m| {
            let mut row = vec![m.clone()];
            for s in &table.stages {
                row.extend(KINDS.iter().map(|&k| accuracy_cell(&table, m, &s.label, k)));
            }
            row
        })
        .collect();
    let note = "Accuracy in percent. Parenthesised values are the change against the best of the baseline prompting stages for the same model and item kind.";
    match format {
        Format::Text => {
            let groups: Vec<String> = table.stages.iter().map(|s| s.header.clone()).collect();
            let mut header = vec!["Model".to_string()];
            for _ in &table.stages {
                header.extend(KINDS.iter().map(|k| k.short().to_string()));
            }
            let body = text_table((!groups.is_empty()).then_some(&groups[..]), &header, &rows);
            format!("{note}\n\n{body}")
        }
        Format::Markdown => {
            let mut header = vec!["Model".to_string()];
            for s in &table.stages {
                header.extend(KINDS.iter().map(|k| format!("{} ({})", s.header, k.short())));
            }
            format!("{note}\n\n{}", md_table(&header, &rows))
        }
        Format::Json => unreachable!(),
    }
}

/// Symbols of one item's row, space separated, e.g. `✗ ✓ ✗ ✗`.
pub fn sweep_row(result: &SweepResult, item_id: &str) -> String {
    result.row(item_id).iter().map(|s| s.symbol()).collect::<Vec<_>>().join(" ")
}

pub fn render_sweep_matrix(result: &SweepResult, format: Format) -> String {
    if format == Format::Json {
        return serde_json::to_string_pretty(result).expect("sweep serializes") + "\n";
    }
    let title = match result.kind {
        SweepKind::Resolution => format!("Zoom-out resolution sweep, model {}", result.model),
        SweepKind::Squint => format!("Squint configuration grid, model {}", result.model),
    };
    let mut header = vec!["Item".to_string()];
    header.extend(result.columns.iter().map(|c| c.label.clone()));
    let rows: Vec<Vec<String>> = result
        .item_ids
        .iter()
        .map(|id| {
            let mut row = vec![id.clone()];
            row.extend(result.columns.iter().map(|c| result.flag(id, &c.label).map_or("-", |s| s.symbol()).to_string()));
            row
        })
        .collect();
    match format {
        Format::Text => format!("{title}\n\n{}", text_table(None, &header, &rows)),
        _ => format!("### {title}\n\n{}", md_table(&header, &rows)),
    }
}

fn redundancy_rows(entries: &[NamedRedundancy]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["Input", "Tokens", "Repeated", "Rate", "Max run", "Threshold", "Hidden attention"]
        .map(String::from)
        .to_vec();
    let rows = entries
        .iter()
        .map(|e| {
            let r = &e.report;
            vec![
                e.label.clone(),
                r.token_count.to_string(),
                r.repeated_token_count.to_string(),
                format!("{:.4}", r.repetition_rate),
                r.max_consecutive_run.to_string(),
                format!("{}", r.threshold),
                r.attention_mass_hidden.map_or("-".into(), |m| format!("{m:.4}")),
            ]
        })
        .collect();
    (header, rows)
}

pub fn render_redundancy(entries: &[NamedRedundancy], comparison: Option<&ComparisonSummary>, format: Format) -> String {
    if format == Format::Json {
        let value = serde_json::json!({ "reports": entries, "comparison": comparison });
        return serde_json::to_string_pretty(&value).expect("redundancy serializes") + "\n";
    }
    let (header, rows) = redundancy_rows(entries);
    let mut out = match format {
        Format::Text => format!("Token redundancy\n\n{}", text_table(None, &header, &rows)),
        _ => format!("### Token redundancy\n\n{}", md_table(&header, &rows)),
    };
    if let Some(c) = comparison {
        out.push_str(&format!(
            "\nrepeated tokens delta {}, rate delta {:.4}, max run delta {}, redundancy reduced: {}\n",
            c.repeated_token_delta,
            c.repetition_rate_delta,
            c.max_run_delta,
            if c.redundancy_reduced { "yes" } else { "no" }
        ));
    }
    out
}

/// Whole-report document: accuracy table, then any sweeps and redundancy.
pub fn render_report(report: &RunReport, format: Format) -> String {
    if format == Format::Json {
        let mut normalized = report.clone();
        normalized.accuracy = recompute(&report.accuracy);
        return serde_json::to_string_pretty(&normalized).expect("report serializes") + "\n";
    }
    let hash = report.manifest_hash.as_deref().unwrap_or("-");
    let mut out = match format {
        Format::Text => format!("Run {} (zoomeval {})\nManifest {hash}\n\n", report.run_id, report.tool_version),
        _ => format!("# Run {}\n\nzoomeval {}, manifest `{hash}`\n\n", report.run_id, report.tool_version),
    };
    if !report.accuracy.models.is_empty() || report.sweeps.is_empty() {
        out.push_str(&render_accuracy_table(report, format));
    }
    for sweep in &report.sweeps {
        out.push('\n');
        out.push_str(&render_sweep_matrix(sweep, format));
    }
    if !report.redundancy.is_empty() {
        out.push('\n');
        out.push_str(&render_redundancy(&report.redundancy, report.comparison.as_ref(), format));
    }
    out
}
