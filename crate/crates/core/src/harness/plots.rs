//! Minimal SVG charts. Every chart is written next to a CSV of its data.

use std::fmt::Write as _;
use std::path::Path;

use super::checkpoint::write_atomic;
use super::HarnessError;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
}

fn axes(out: &mut String, x_label: &str, y_label: &str, y_lo: f64, y_hi: f64) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        let y = y0 - (y0 - y1) * i as f64 / 4.0;
        let _ = writeln!(out, r#"<line x1="{}" y1="{y:.1}" x2="{x0}" y2="{y:.1}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, x0 - 6.0, y + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 14.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 14.0;
        let _ = writeln!(out, r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/>"#, y - 10.0, COLORS[i % COLORS.len()]);
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{}</text>"#, x + 18.0, escape(name));
    }
}

fn y_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let lo = lo.min(0.0);
    let hi = if hi > lo { hi } else { lo + 1.0 };
    (lo, hi)
}

/// Line chart with optional log-scaled x axis and a dashed vertical marker.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool, marker: Option<f64>) -> String {
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| tx(p.0))).collect();
    let x_lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x_hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (x_lo, x_hi) = if x_lo.is_finite() && x_hi > x_lo { (x_lo, x_hi) } else { (x_lo.min(0.0), x_lo.max(0.0) + 1.0) };
    let (y_lo, y_hi) = y_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let px = |x: f64| LEFT + (tx(x) - x_lo) / (x_hi - x_lo) * (W - RIGHT - LEFT);
    let py = |y: f64| H - BOTTOM - (y - y_lo) / (y_hi - y_lo) * (H - BOTTOM - TOP);

    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, x_label, y_label, y_lo, y_hi);
    let mut ticks: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for t in ticks {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{}" text-anchor="middle">{t}</text>"#, px(t), H - BOTTOM + 16.0);
    }
    for (i, s) in series.iter().enumerate() {
        let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
        for &(x, y) in &s.points {
            let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
    }
    if let Some(m) = marker {
        let x = px(m);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="gray" stroke-dasharray="4 3"/>"#,
            H - BOTTOM,
            TOP
        );
    }
    legend(&mut out, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Grouped bar chart; `None` values leave a gap.
pub fn bar_chart_svg(title: &str, y_label: &str, groups: &[String], series: &[(String, Vec<Option<f64>>)]) -> String {
    let (y_lo, y_hi) = y_range(series.iter().flat_map(|(_, v)| v.iter().flatten().copied()));
    let py = |y: f64| H - BOTTOM - (y - y_lo) / (y_hi - y_lo) * (H - BOTTOM - TOP);
    let slot = (W - RIGHT - LEFT) / groups.len().max(1) as f64;
    let bar = slot * 0.8 / series.len().max(1) as f64;

    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, "", y_label, y_lo, y_hi);
    for (g, name) in groups.iter().enumerate() {
        let x = LEFT + slot * (g as f64 + 0.5);
        let _ = writeln!(out, r#"<text x="{x:.1}" y="{}" text-anchor="middle" font-size="10">{}</text>"#, H - BOTTOM + 16.0, escape(name));
        for (i, (_, values)) in series.iter().enumerate() {
            if let Some(Some(v)) = values.get(g) {
                let left = LEFT + slot * g as f64 + slot * 0.1 + bar * i as f64;
                let _ = writeln!(
                    out,
                    r#"<rect x="{left:.1}" y="{:.1}" width="{bar:.1}" height="{:.1}" fill="{}"/>"#,
                    py(*v),
                    py(y_lo) - py(*v),
                    COLORS[i % COLORS.len()]
                );
            }
        }
    }
    legend(&mut out, &series.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Writes a header row plus records as CSV, atomically.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| HarnessError::Config(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Config(format!("csv: {e}")))?;
    write_atomic(path, &bytes)
}

pub fn write_svg(path: &Path, svg: &str) -> Result<(), HarnessError> {
    write_atomic(path, svg.as_bytes())
}
