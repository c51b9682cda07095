//! CSV tables and plain-text summaries. Numbers are written with a fixed
//! six-decimal format so reruns produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::metrics::MetricsReport;

pub fn fmt_f(x: f64) -> String {
    format!("{x:.6}")
}

/// Writes a header and rows as CSV.
pub fn write_table(path: impl AsRef<Path>, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-class precision, FDR and F1 plus macro rows.
pub fn write_metrics(path: impl AsRef<Path>, report: &MetricsReport) -> Result<()> {
    let header: Vec<String> = ["class", "support", "precision", "fdr", "f1"]
        .map(String::from)
        .to_vec();
    let mut rows: Vec<Vec<String>> = report
        .per_class
        .iter()
        .map(|c| {
            vec![
                c.label.to_string(),
                c.support.to_string(),
                fmt_f(c.precision),
                fmt_f(c.fdr),
                fmt_f(c.f1),
            ]
        })
        .collect();
    let total: usize = report.per_class.iter().map(|c| c.support).sum();
    rows.push(vec![
        "macro".into(),
        total.to_string(),
        String::new(),
        String::new(),
        fmt_f(report.macro_f1),
    ]);
    rows.push(vec![
        "accuracy".into(),
        total.to_string(),
        String::new(),
        String::new(),
        fmt_f(report.accuracy),
    ]);
    write_table(path, &header, &rows)
}

/// Confusion matrix with true classes as rows.
pub fn write_confusion(path: impl AsRef<Path>, report: &MetricsReport) -> Result<()> {
    let mut header = vec!["true\\pred".to_string()];
    header.extend(report.classes.iter().map(|l| l.to_string()));
    let rows: Vec<Vec<String>> = report
        .classes
        .iter()
        .zip(&report.confusion)
        .map(|(l, row)| {
            let mut r = vec![l.to_string()];
            r.extend(row.iter().map(|c| c.to_string()));
            r
        })
        .collect();
    write_table(path, &header, &rows)
}

/// Human-readable block for a summary file.
pub fn metrics_text(title: &str, report: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    let _ = writeln!(s, "  macro F1 {:.4}  accuracy {:.4}", report.macro_f1, report.accuracy);
    for c in &report.per_class {
        let _ = writeln!(
            s,
            "  class {:>4}  support {:>5}  F1 {:.4}  FDR {:.4}",
            c.label, c.support, c.f1, c.fdr
        );
    }
    s
}
