//! Text, delimited and structured renderings of a [`ResultTable`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use csmri_core::masking::MaskKind;
use csmri_io::Track;

use crate::error::{io_err, BenchError, Result};
use crate::plan::Metric;
use crate::table::{Method, ResultTable, TableRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Delimited,
    Structured,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Text, ReportFormat::Delimited, ReportFormat::Structured];

    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Text => "report.txt",
            ReportFormat::Delimited => "report.csv",
            ReportFormat::Structured => "report.json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(ReportFormat::Text),
            "delimited" | "csv" => Ok(ReportFormat::Delimited),
            "structured" | "json" => Ok(ReportFormat::Structured),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

pub fn render(t: &ResultTable, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => render_text(t),
        ReportFormat::Delimited => render_delimited(t),
        ReportFormat::Structured => render_structured(t),
    }
}

/// Writes one format into `dir`; returns the file path.
pub fn emit_report(t: &ResultTable, format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(format.file_name());
    fs::write(&path, render(t, format)).map_err(io_err(&path))?;
    Ok(path)
}

pub fn emit_all(t: &ResultTable, dir: &Path) -> Result<Vec<PathBuf>> {
    ReportFormat::ALL.iter().map(|&f| emit_report(t, f, dir)).collect()
}

/// Reads a structured report back.
pub fn load_table(path: &Path) -> Result<ResultTable> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| BenchError::Table { path: path.to_path_buf(), detail: e.to_string() })
}

fn render_structured(t: &ResultTable) -> String {
    let mut s = serde_json::to_string_pretty(t).expect("tables serialize");
    s.push('\n');
    s
}

fn number(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

pub const DELIMITED_HEADER: [&str; 11] =
    ["track", "acceleration", "mask_kind", "acquisition", "method", "lambda", "volumes", "metric", "value", "best", "psnr_infinite"];

/// Long format: one line per (row, metric).
fn render_delimited(t: &ResultTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DELIMITED_HEADER).expect("in-memory write");
    for r in &t.rows {
        for &m in &t.metrics {
            let lambda = r.method.lambda().map(number).unwrap_or_default();
            w.write_record([
                r.track.as_str().to_string(),
                r.acceleration.to_string(),
                r.mask_kind.to_string(),
                r.acquisition.clone(),
                method_name(&r.method),
                lambda,
                r.volumes.to_string(),
                m.label().to_string(),
                number(r.value(m)),
                (r.best.get(m) as u8).to_string(),
                r.psnr_infinite.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii fields")
}

fn method_name(m: &Method) -> String {
    match m {
        Method::ZeroFilled => "zero-filled".into(),
        Method::Cs { regularizer, .. } => regularizer.clone(),
        Method::External { model } => model.clone(),
    }
}

fn cell_text(m: Metric, v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return number(v);
    }
    match m {
        Metric::Nmse => format!("{v:.4}"),
        Metric::Psnr => format!("{v:.2}"),
        Metric::Ssim => format!("{v:.4}"),
        Metric::L1 => format!("{v:.4e}"),
    }
}

fn track_title(t: Track) -> &'static str {
    match t {
        Track::SingleCoil => "Single-coil",
        Track::MultiCoil => "Multi-coil",
    }
}

const LABEL_WIDTH: usize = 22;
const VALUE_WIDTH: usize = 9;

/// One block per (track, mask kind, acquisition): methods down the side,
/// accelerations across the top with a metric sub-header, and a `best`
/// column per acceleration listing the metrics where the row wins.
fn render_text(t: &ResultTable) -> String {
    let mut out = String::new();
    if t.rows.is_empty() {
        out.push_str("(no results)\n");
    }
    let mut sections: BTreeMap<(Track, MaskKind, (bool, String)), Vec<&TableRow>> = BTreeMap::new();
    for r in &t.rows {
        let acq = (r.acquisition != crate::table::ALL_ACQUISITIONS, r.acquisition.clone());
        sections.entry((r.track, r.mask_kind, acq)).or_default().push(r);
    }
    for ((track, kind, (_, acq)), rows) in &sections {
        let mut accels: Vec<u32> = rows.iter().map(|r| r.acceleration).collect();
        accels.sort_unstable();
        accels.dedup();
        let mut methods: Vec<&Method> = Vec::new();
        for r in rows {
            if !methods.contains(&&r.method) {
                methods.push(&r.method);
            }
        }
        methods.sort_by(|a, b| a.order(b));

        let block = t.metrics.len() * (VALUE_WIDTH + 1) + 6;
        let _ = writeln!(out, "{} {} masks, acquisition {}", track_title(*track), kind, acq);
        let mut head1 = format!("{:<LABEL_WIDTH$}", "");
        let mut head2 = format!("{:<LABEL_WIDTH$}", "model");
        for r in &accels {
            head1.push_str(&format!("|{:^block$}", format!("{r}-fold")));
            head2.push('|');
            for m in &t.metrics {
                head2.push_str(&format!("{:>VALUE_WIDTH$} ", m.label()));
            }
            head2.push_str(&format!("{:<6}", " best"));
        }
        let _ = writeln!(out, "{}", head1.trim_end());
        let _ = writeln!(out, "{}", head2.trim_end());
        let _ = writeln!(out, "{}", "-".repeat(LABEL_WIDTH + accels.len() * (block + 1)));
        for method in methods {
            let mut line = format!("{:<LABEL_WIDTH$}", method.to_string());
            for &a in &accels {
                line.push('|');
                match rows.iter().find(|r| r.acceleration == a && &r.method == method) {
                    Some(r) => {
                        let mut flags = String::new();
                        for &m in &t.metrics {
                            line.push_str(&format!("{:>VALUE_WIDTH$} ", cell_text(m, r.value(m))));
                            if r.best.get(m) {
                                flags.push(m.label().chars().next().unwrap_or('?'));
                            }
                        }
                        line.push_str(&format!(" {:<5}", flags));
                    }
                    None => {
                        for _ in &t.metrics {
                            line.push_str(&format!("{:>VALUE_WIDTH$} ", "-"));
                        }
                        line.push_str(&format!("{:<6}", ""));
                    }
                }
            }
            let _ = writeln!(out, "{}", line.trim_end());
        }
        let excluded: usize = rows.iter().map(|r| r.psnr_infinite).sum();
        if excluded > 0 {
            let _ = writeln!(out, "PSNR means exclude {excluded} exact (infinite PSNR) volume results");
        }
        out.push('\n');
    }
    if !t.failures.is_empty() {
        let _ = writeln!(out, "Failures ({})", t.failures.len());
        for f in &t.failures {
            let _ = writeln!(out, "  {} {} [{}]: {}", f.track, f.volume_id, f.context, f.error);
        }
    }
    out
}
