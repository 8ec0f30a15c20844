//! Report rendering: text table, CSV and plot-ready JSON documents.
//!
//! All numbers are written with three decimals and rows follow the report's
//! key order, so the same report always renders to the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{json, Value};

use super::aggregate::{AggregateReport, Cell};
use crate::config::SchemeId;
use crate::prompt::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    TableText,
    Csv,
    PlotDataJson,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table-text" | "table" | "text" => Ok(ReportFormat::TableText),
            "csv" => Ok(ReportFormat::Csv),
            "plot-data-json" | "plot" | "json" => Ok(ReportFormat::PlotDataJson),
            other => Err(format!("unknown report format '{other}'")),
        }
    }
}

pub const CSV_HEADER: &str = "model,scheme,kind,language,category,n_items,n_failures,mean_bias,mean_utility,\
mean_composite,mean_r_g,mean_r_j,mean_r,gate_phi,failed_fp_g,failed_fp_j";

fn fixed(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

fn rounded(v: Option<f64>) -> Value {
    match v {
        Some(x) => {
            let r: f64 = format!("{x:.3}").parse().expect("formatted float parses");
            json!(r)
        }
        None => Value::Null,
    }
}

fn category_label(cell: &Cell) -> String {
    cell.key.category.map(|c| c.to_string()).unwrap_or_else(|| "all".into())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(report: &AggregateReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for cell in &report.cells {
        let (k, s) = (&cell.key, &cell.stats);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&k.model),
            k.scheme,
            k.kind,
            k.language,
            category_label(cell),
            s.n_items,
            s.n_failures,
            fixed(s.mean_bias),
            fixed(s.mean_utility),
            fixed(s.mean_composite),
            fixed(s.mean_r_g),
            fixed(s.mean_r_j),
            fixed(s.mean_r),
            fixed(s.gate_phi),
            s.failed_fp_g,
            s.failed_fp_j,
        )
        .expect("write to string");
    }
    out
}

pub fn render_table(report: &AggregateReport) -> String {
    let dash = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    let mut out = String::new();
    writeln!(
        out,
        "{:<16} {:<18} {:<8} {:<8} {:<20} {:>5} {:>5} {:>6} {:>7} {:>6} {:>6} {:>6} {:>6} {:>6}",
        "model",
        "scheme",
        "kind",
        "language",
        "category",
        "n",
        "fail",
        "bias",
        "utility",
        "comp",
        "R_G",
        "R_J",
        "R",
        "phi"
    )
    .expect("write to string");
    for cell in &report.cells {
        let (k, s) = (&cell.key, &cell.stats);
        writeln!(
            out,
            "{:<16} {:<18} {:<8} {:<8} {:<20} {:>5} {:>5} {:>6} {:>7} {:>6} {:>6} {:>6} {:>6} {:>6}",
            k.model,
            k.scheme.as_str(),
            k.kind.to_string(),
            k.language.to_string(),
            category_label(cell),
            s.n_items,
            s.n_failures,
            dash(s.mean_bias),
            dash(s.mean_utility),
            dash(s.mean_composite),
            dash(s.mean_r_g),
            dash(s.mean_r_j),
            dash(s.mean_r),
            dash(s.gate_phi),
        )
        .expect("write to string");
    }
    out
}

fn pooled(report: &AggregateReport) -> impl Iterator<Item = &Cell> {
    report.cells.iter().filter(|c| c.key.category.is_none())
}

/// Bias and utility per scheme, one bar pair per pooled cell.
pub fn scheme_bars(report: &AggregateReport) -> Value {
    let series: Vec<Value> = pooled(report)
        .map(|c| {
            json!({
                "model": c.key.model,
                "kind": c.key.kind,
                "language": c.key.language,
                "scheme": c.key.scheme,
                "bias": rounded(c.stats.mean_bias),
                "utility": rounded(c.stats.mean_utility),
            })
        })
        .collect();
    json!({ "figure": "scheme_bars", "series": series })
}

type HeatCells = BTreeMap<(Category, SchemeId), Vec<f64>>;

/// Category × scheme matrix of mean bias per (kind, language), averaged over
/// models.
pub fn category_heatmap(report: &AggregateReport) -> Value {
    let mut groups: BTreeMap<(String, String), HeatCells> = BTreeMap::new();
    for c in report.cells.iter() {
        let (Some(category), Some(bias)) = (c.key.category, c.stats.mean_bias) else { continue };
        groups
            .entry((c.key.kind.to_string(), c.key.language.to_string()))
            .or_default()
            .entry((category, c.key.scheme))
            .or_default()
            .push(bias);
    }
    let panels: Vec<Value> = groups
        .into_iter()
        .map(|((kind, language), values)| {
            let mut rows: Vec<Category> = values.keys().map(|(c, _)| *c).collect();
            rows.dedup();
            let mut cols: Vec<SchemeId> = values.keys().map(|(_, s)| *s).collect();
            cols.sort();
            cols.dedup();
            let matrix: Vec<Vec<Value>> = rows
                .iter()
                .map(|r| {
                    cols.iter()
                        .map(|s| rounded(values.get(&(*r, *s)).map(|v| v.iter().sum::<f64>() / v.len() as f64)))
                        .collect()
                })
                .collect();
            json!({ "kind": kind, "language": language, "rows": rows, "columns": cols, "values": matrix })
        })
        .collect();
    json!({ "figure": "category_heatmap", "panels": panels })
}

/// Utility (x) against bias (y), one point per pooled cell.
pub fn tradeoff_scatter(report: &AggregateReport) -> Value {
    let points: Vec<Value> = pooled(report)
        .map(|c| {
            json!({
                "label": c.key.scheme,
                "model": c.key.model,
                "kind": c.key.kind,
                "language": c.key.language,
                "x_utility": rounded(c.stats.mean_utility),
                "y_bias": rounded(c.stats.mean_bias),
            })
        })
        .collect();
    json!({ "figure": "bias_utility_tradeoff", "x": "utility", "y": "bias", "points": points })
}

/// Generator overhead (x) against bias gain over the matching baseline cell (y).
pub fn overhead_scatter(report: &AggregateReport) -> Value {
    let baseline = |c: &Cell| {
        pooled(report)
            .find(|b| {
                b.key.scheme == SchemeId::Baseline
                    && b.key.model == c.key.model
                    && b.key.kind == c.key.kind
                    && b.key.language == c.key.language
            })
            .and_then(|b| b.stats.mean_bias)
    };
    let points: Vec<Value> = pooled(report)
        .map(|c| {
            let gain = match (c.stats.mean_bias, baseline(c)) {
                (Some(b), Some(base)) => Some(b - base),
                _ => None,
            };
            json!({
                "label": c.key.scheme,
                "model": c.key.model,
                "kind": c.key.kind,
                "language": c.key.language,
                "x_r_g": rounded(c.stats.mean_r_g),
                "x_r_j": rounded(c.stats.mean_r_j),
                "y_bias_gain": rounded(gain),
            })
        })
        .collect();
    json!({ "figure": "overhead_vs_gain", "x": "r_g", "y": "bias_gain", "points": points })
}

/// Pooled gate firing rate per gated cell.
pub fn gate_firing(report: &AggregateReport) -> Value {
    let bars: Vec<Value> = pooled(report)
        .filter(|c| c.key.scheme.is_gated())
        .map(|c| {
            json!({
                "model": c.key.model,
                "scheme": c.key.scheme,
                "kind": c.key.kind,
                "language": c.key.language,
                "phi": rounded(c.stats.gate_phi),
            })
        })
        .collect();
    json!({ "figure": "gate_firing_rate", "bars": bars })
}

/// Plot documents keyed by file name.
pub fn plot_documents(report: &AggregateReport) -> Vec<(&'static str, Value)> {
    vec![
        ("plot_scheme_bars.json", scheme_bars(report)),
        ("plot_category_heatmap.json", category_heatmap(report)),
        ("plot_tradeoff_scatter.json", tradeoff_scatter(report)),
        ("plot_overhead_scatter.json", overhead_scatter(report)),
        ("plot_gate_firing.json", gate_firing(report)),
    ]
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plot data serialises");
    s.push('\n');
    s
}

/// Writes the report in `format` under `dir` and returns the files written.
pub fn emit_report(report: &AggregateReport, format: ReportFormat, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let files: Vec<(String, String)> = match format {
        ReportFormat::TableText => vec![("report.txt".into(), render_table(report))],
        ReportFormat::Csv => vec![("report.csv".into(), render_csv(report))],
        ReportFormat::PlotDataJson => {
            plot_documents(report).into_iter().map(|(name, doc)| (name.to_string(), pretty(&doc))).collect()
        }
    };
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = dir.join(name);
        std::fs::write(&path, contents)?;
        written.push(path);
    }
    Ok(written)
}
