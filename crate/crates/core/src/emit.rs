//! Deterministic rendering of report tables.
//!
//! Numbers are printed with exactly four decimals using Rust's own
//! formatting, so output is locale independent. Rounding happens here only.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::write_file;
use crate::error::Result;
use crate::report::{BinReport, DeltaTable, SemanticTrend};
use crate::saliency::{BinDistribution, SaliencyBin};
use crate::scalar::Score;
use crate::semantic::COMPONENT_NAMES;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(usize),
    /// `None` renders as `undefined` (text/CSV) or `null` (JSON).
    Num(Option<f64>),
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn num<S: Score>(v: Option<S>) -> Self {
        Cell::Num(v.map(Score::as_f64))
    }

    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(n) => n.to_string(),
            Cell::Num(Some(v)) => fixed4(*v),
            Cell::Num(None) => "undefined".into(),
        }
    }

    fn render_json(&self) -> String {
        match self {
            Cell::Text(s) => serde_json::to_string(s).expect("string serializes"),
            Cell::Int(n) => n.to_string(),
            Cell::Num(Some(v)) => fixed4(*v),
            Cell::Num(None) => "null".into(),
        }
    }

    fn is_numeric(&self) -> bool {
        !matches!(self, Cell::Text(_))
    }
}

fn fixed4(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }
}

/// Provenance written at the top of every report file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportHeader {
    pub corpus_hash: String,
    pub tool: String,
    pub tool_version: String,
}

impl ReportHeader {
    pub fn new(corpus_hash: impl Into<String>) -> Self {
        Self {
            corpus_hash: corpus_hash.into(),
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    TableText,
    Delimited,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::TableText => "txt",
            Format::Delimited => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "table-text" | "text" | "txt" => Ok(Format::TableText),
            "delimited-values" | "csv" => Ok(Format::Delimited),
            "structured-json" | "json" => Ok(Format::Json),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

pub fn render(table: &Table, header: &ReportHeader, format: Format) -> String {
    match format {
        Format::TableText => render_text(table, header),
        Format::Delimited => render_csv(table, header),
        Format::Json => render_json(table, header),
    }
}

fn comment_header(header: &ReportHeader) -> String {
    format!(
        "# corpus_sha256: {}\n# tool: {} {}\n",
        header.corpus_hash, header.tool, header.tool_version
    )
}

fn render_text(table: &Table, header: &ReportHeader) -> String {
    let cells: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| r.iter().map(Cell::render).collect())
        .collect();
    let widths: Vec<usize> = (0..table.columns.len())
        .map(|c| {
            cells
                .iter()
                .map(|r| r[c].len())
                .chain([table.columns[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = comment_header(header);
    let line = |vals: Vec<(String, bool)>| {
        let mut s = String::new();
        for (i, (v, right)) in vals.into_iter().enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            if right {
                let _ = write!(s, "{v:>w$}", w = widths[i]);
            } else {
                let _ = write!(s, "{v:<w$}", w = widths[i]);
            }
        }
        s.trim_end().to_string()
    };
    out.push_str(&line(table.columns.iter().map(|c| (c.to_string(), false)).collect()));
    out.push('\n');
    for (row, rendered) in table.rows.iter().zip(cells) {
        out.push_str(&line(
            rendered.into_iter().zip(row.iter().map(Cell::is_numeric)).collect(),
        ));
        out.push('\n');
    }
    out
}

fn render_csv(table: &Table, header: &ReportHeader) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(&table.columns).expect("in-memory csv");
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render)).expect("in-memory csv");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv");
    comment_header(header) + &body
}

fn render_json(table: &Table, header: &ReportHeader) -> String {
    let q = |s: &str| serde_json::to_string(s).expect("string serializes");
    let mut out = String::from("{\n");
    let _ = writeln!(
        out,
        "  \"provenance\": {{\"corpus_sha256\": {}, \"tool\": {}, \"tool_version\": {}}},",
        q(&header.corpus_hash),
        q(&header.tool),
        q(&header.tool_version)
    );
    let _ = writeln!(out, "  \"table\": {},", q(&table.name));
    let cols: Vec<String> = table.columns.iter().map(|c| q(c)).collect();
    let _ = writeln!(out, "  \"columns\": [{}],", cols.join(", "));
    if table.rows.is_empty() {
        out.push_str("  \"rows\": []\n}\n");
        return out;
    }
    out.push_str("  \"rows\": [\n");
    for (i, row) in table.rows.iter().enumerate() {
        let fields: Vec<String> = table
            .columns
            .iter()
            .zip(row)
            .map(|(c, v)| format!("{}: {}", q(c), v.render_json()))
            .collect();
        let sep = if i + 1 == table.rows.len() { "" } else { "," };
        let _ = writeln!(out, "    {{{}}}{sep}", fields.join(", "));
    }
    out.push_str("  ]\n}\n");
    out
}

/// Writes each table to `<out_dir>/<name>.<ext>` and returns the paths.
pub fn emit_report(tables: &[Table], header: &ReportHeader, format: Format, out_dir: &Path) -> Result<Vec<PathBuf>> {
    tables
        .iter()
        .map(|t| {
            let path = out_dir.join(format!("{}.{}", t.name, format.extension()));
            write_file(&path, render(t, header, format).as_bytes())?;
            Ok(path)
        })
        .collect()
}

pub const DETECTION_COLUMNS: [&str; 8] = [
    "dataset",
    "detector",
    "condition",
    "bin_index",
    "bin_label",
    "count",
    "mean_auroc",
    "undefined_count",
];

pub const SEMANTIC_COLUMNS: [&str; 7] = [
    "dataset",
    "bin_index",
    "count",
    "top1_overlap",
    "top5_overlap",
    "top5_iou",
    "top5_prob_change",
];

pub const PLOT_COLUMNS: [&str; 3] = ["series", "x", "y"];

/// Five group rows plus an `overall` row per report.
pub fn detection_table<S: Score>(reports: &[(String, BinReport<S>)]) -> Table {
    let mut t = Table::new("detection", &DETECTION_COLUMNS);
    for (dataset, r) in reports {
        let head = || {
            vec![
                Cell::text(dataset),
                Cell::text(&r.detector_name),
                Cell::text(r.condition.as_str()),
            ]
        };
        for (bin, stats) in SaliencyBin::ALL.iter().zip(&r.bins) {
            let mut row = head();
            row.extend([
                Cell::Int(bin.index()),
                Cell::text(bin.label()),
                Cell::Int(stats.count),
                Cell::num(stats.mean),
                Cell::Int(stats.undefined_count()),
            ]);
            t.push(row);
        }
        let mut row = head();
        row.extend([
            Cell::text("all"),
            Cell::text("overall"),
            Cell::Int(r.overall.count),
            Cell::num(r.overall.mean),
            Cell::Int(r.overall.undefined_count()),
        ]);
        t.push(row);
    }
    t
}

/// Plot-ready series: x = group label, y = mean AuROC.
pub fn detection_plot<S: Score>(reports: &[(String, BinReport<S>)]) -> Table {
    let mut t = Table::new("detection_plot", &PLOT_COLUMNS);
    for (dataset, r) in reports {
        let series = format!("{dataset}/{}/{}", r.detector_name, r.condition);
        for (bin, stats) in SaliencyBin::ALL.iter().zip(&r.bins) {
            t.push(vec![
                Cell::text(&series),
                Cell::text(bin.label()),
                Cell::num(stats.mean),
            ]);
        }
    }
    t
}

pub fn distribution_table<S: Score>(dists: &[(String, BinDistribution<S>)]) -> Table {
    let mut t = Table::new(
        "bin_distribution",
        &["dataset", "bin_index", "bin_label", "count", "proportion"],
    );
    for (dataset, d) in dists {
        for (i, bin) in SaliencyBin::ALL.iter().enumerate() {
            t.push(vec![
                Cell::text(dataset),
                Cell::Int(bin.index()),
                Cell::text(bin.label()),
                Cell::Int(d.counts[i]),
                Cell::num(Some(d.proportions[i])),
            ]);
        }
    }
    t
}

/// Per-group before/after means and deltas, followed by a `range` row
/// holding the between-group spread before and after.
pub fn delta_table<S: Score>(deltas: &[(String, DeltaTable<S>)]) -> Table {
    let mut t = Table::new(
        "enhancement_delta",
        &[
            "dataset",
            "detector",
            "before_condition",
            "after_condition",
            "bin_index",
            "bin_label",
            "before",
            "after",
            "delta",
        ],
    );
    for (dataset, d) in deltas {
        let head = || {
            vec![
                Cell::text(dataset),
                Cell::text(&d.detector_name),
                Cell::text(d.before_condition.as_str()),
                Cell::text(d.after_condition.as_str()),
            ]
        };
        for b in &d.bins {
            let mut row = head();
            row.extend([
                Cell::Int(b.bin.index()),
                Cell::text(b.bin.label()),
                Cell::num(b.before),
                Cell::num(b.after),
                Cell::num(b.delta()),
            ]);
            t.push(row);
        }
        let mut row = head();
        let change = d.after_range.zip(d.before_range).map(|(a, b)| a - b);
        row.extend([
            Cell::text("range"),
            Cell::text("variation"),
            Cell::num(d.before_range),
            Cell::num(d.after_range),
            Cell::num(change),
        ]);
        t.push(row);
    }
    t
}

pub fn semantic_table<S: Score>(trends: &[(String, SemanticTrend<S>)]) -> Table {
    let mut t = Table::new("semantic", &SEMANTIC_COLUMNS);
    for (dataset, tr) in trends {
        for (bin, b) in SaliencyBin::ALL.iter().zip(&tr.bins) {
            let mut row = vec![Cell::text(dataset), Cell::Int(bin.index()), Cell::Int(b.count)];
            match b.mean {
                Some(m) => row.extend(m.components().map(|c| Cell::num(Some(c)))),
                None => row.extend((0..4).map(|_| Cell::Num(None))),
            }
            t.push(row);
        }
    }
    t
}

pub fn semantic_trend_table<S: Score>(trends: &[(String, SemanticTrend<S>)]) -> Table {
    let mut t = Table::new("semantic_trend", &["dataset", "metric", "trend"]);
    for (dataset, tr) in trends {
        for (name, trend) in COMPONENT_NAMES.iter().zip(tr.trends) {
            t.push(vec![Cell::text(dataset), Cell::text(*name), Cell::text(trend.as_str())]);
        }
    }
    t
}

pub fn semantic_plot<S: Score>(trends: &[(String, SemanticTrend<S>)]) -> Table {
    let mut t = Table::new("semantic_plot", &PLOT_COLUMNS);
    for (dataset, tr) in trends {
        for (c, name) in COMPONENT_NAMES.iter().enumerate() {
            for (bin, b) in SaliencyBin::ALL.iter().zip(&tr.bins) {
                t.push(vec![
                    Cell::text(format!("{dataset}/{name}")),
                    Cell::text(bin.label()),
                    Cell::num(b.mean.map(|m| m.components()[c])),
                ]);
            }
        }
    }
    t
}
