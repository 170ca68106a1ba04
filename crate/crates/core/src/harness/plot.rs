//! Summary CSV reading and a plain SVG line chart of it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub arm: String,
    pub index: usize,
    pub mean: f64,
    pub se: f64,
    pub running_mean: f64,
    pub overrides: usize,
    pub n: usize,
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::MalformedSummary(format!("{}: {e}", path.display())))?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<SummaryRow>, _>>()
        .map_err(|e| Error::MalformedSummary(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(Error::MalformedSummary(format!("{} has no rows", path.display())));
    }
    Ok(rows)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const W: f64 = 720.0;
const H: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 150.0, 40.0, 50.0); // left, right, top, bottom

/// Mean ± one standard error per arm, plus dashed horizontal reference lines.
pub fn render_summary_svg(rows: &[SummaryRow], references: &[(String, f64)], title: &str) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::MalformedSummary("nothing to plot".into()));
    }
    if rows.iter().any(|r| !r.mean.is_finite() || !r.se.is_finite()) {
        return Err(Error::MalformedSummary("non-finite mean or standard error".into()));
    }
    let mut arms: Vec<&str> = Vec::new();
    for r in rows {
        if !arms.contains(&r.arm.as_str()) {
            arms.push(&r.arm);
        }
    }
    let x_max = rows.iter().map(|r| r.index).max().unwrap_or(1).max(2) as f64;
    let x_min = rows.iter().map(|r| r.index).min().unwrap_or(0) as f64;
    let mut y_lo = rows.iter().map(|r| r.mean - r.se).fold(f64::INFINITY, f64::min);
    let mut y_hi = rows.iter().map(|r| r.mean + r.se).fold(f64::NEG_INFINITY, f64::max);
    for (_, v) in references {
        y_lo = y_lo.min(*v);
        y_hi = y_hi.max(*v);
    }
    if y_hi - y_lo < 1e-9 {
        y_lo -= 1.0;
        y_hi += 1.0;
    }
    let pad = 0.05 * (y_hi - y_lo);
    let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);
    let (ml, mr, mt, mb) = MARGIN;
    let px = |x: f64| ml + (x - x_min) / (x_max - x_min).max(1.0) * (W - ml - mr);
    let py = |y: f64| H - mb - (y - y_lo) / (y_hi - y_lo) * (H - mt - mb);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{ml},{mt} L{ml},{} L{},{}" fill="none" stroke="black"/>"#,
        H - mb,
        W - mr,
        H - mb
    );
    for k in 0..=4 {
        let y = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.2}</text>"#, ml - 6.0, py(y) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{ml}" y="{}">{}</text>"#, H - mb + 18.0, x_min);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, W - mr, H - mb + 18.0, x_max);

    for (i, arm) in arms.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<&SummaryRow> = rows.iter().filter(|r| r.arm == *arm).collect();
        let mut band = String::new();
        for r in &pts {
            let _ = write!(band, "{:.1},{:.1} ", px(r.index as f64), py(r.mean + r.se));
        }
        for r in pts.iter().rev() {
            let _ = write!(band, "{:.1},{:.1} ", px(r.index as f64), py(r.mean - r.se));
        }
        let _ = writeln!(s, r#"<polygon points="{}" fill="{colour}" fill-opacity="0.15" stroke="none"/>"#, band.trim_end());
        let line: Vec<String> = pts.iter().map(|r| format!("{:.1},{:.1}", px(r.index as f64), py(r.mean))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#, line.join(" "));
        let ly = mt + 18.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{colour}">{}</text>"#, W - mr + 10.0, escape(arm));
    }
    for (j, (name, v)) in references.iter().enumerate() {
        let _ = writeln!(
            s,
            r##"<line x1="{ml}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#555" stroke-dasharray="4 3"/>"##,
            W - mr,
            y = py(*v)
        );
        let ly = mt + 18.0 * (arms.len() + j) as f64 + 6.0;
        let _ = writeln!(s, r##"<text x="{}" y="{ly}" fill="#555">{} {v:.2}</text>"##, W - mr + 10.0, escape(name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Reads a summary CSV and writes its chart next to it (same stem, `.svg`).
pub fn plot_summary(summary: &Path) -> Result<std::path::PathBuf> {
    let rows = read_summary_csv(summary)?;
    let refs_path = summary.with_file_name("references.csv");
    let mut references = Vec::new();
    if let Ok(mut r) = csv::Reader::from_path(&refs_path) {
        for rec in r.deserialize::<(String, f64)>() {
            references.push(rec.map_err(|e| Error::MalformedSummary(format!("{}: {e}", refs_path.display())))?);
        }
    }
    let title = summary.parent().and_then(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let out = summary.with_extension("svg");
    fs::write(&out, render_summary_svg(&rows, &references, &title)?)?;
    Ok(out)
}
