//! Small writers for the artifacts: CSV tables, JSON and SVG sparklines.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use rect_core::numeric::fmt_f64;
use serde::Serialize;

/// Plain CSV built in memory; fields never contain separators.
pub struct Table {
    buf: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Self { buf }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.buf)
    }
}

pub fn num(x: f64) -> String {
    fmt_f64(x)
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

/// Polyline of `(x, y)` in log-log coordinates, scaled into a fixed box.
/// Nonpositive values are dropped.
pub fn sparkline(points: &[(f64, f64)], title: &str) -> String {
    const W: f64 = 320.0;
    const H: f64 = 96.0;
    const PAD: f64 = 8.0;
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, "<title>{}</title>", escape(title));
    if !logs.is_empty() {
        let (x0, x1) = bounds(logs.iter().map(|p| p.0));
        let (y0, y1) = bounds(logs.iter().map(|p| p.1));
        let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
        let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
        let coords: Vec<String> = logs.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="black" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparkline_has_one_vertex_per_positive_point() {
        let svg = sparkline(&[(0.1, 0.01), (0.2, 0.02), (0.4, 0.0)], "a<b");
        let poly = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert_eq!(poly.matches(',').count(), 2);
        assert!(svg.contains("a&lt;b"));
    }

    #[test]
    fn flat_series_stays_inside_the_box() {
        let svg = sparkline(&[(1.0, 1.0), (2.0, 1.0)], "flat");
        assert!(svg.contains("8.00,48.00 312.00,48.00"));
    }

    #[test]
    fn table_rows_end_with_newline() {
        let mut t = Table::new(&["a", "b"]);
        t.row(&[num(1.0), opt_num(None)]);
        assert_eq!(t.buf, "a,b\n1.0000000000000000e0,\n");
    }
}
