//! Artifact writers: CSV and JSON files carrying a metadata block with the
//! resolved configuration, and dependency-free SVG line plots.
//!
//! Every artifact is a pure function of its configuration; no timestamps or
//! host details are written, so re-running from the embedded configuration
//! reproduces the file byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

const CONFIG_PREFIX: &str = "# config: ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// The fully resolved configuration, usable as a `--config` file.
    pub config: Value,
}

impl Metadata {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Metadata {
            tool: "viralfeed".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
        })
    }
}

/// Shortest round-trip decimal form; infinities as `inf` / `-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x}")
    }
}

/// CSV text with two `#` comment lines (tool and config) before the header.
pub fn csv_string(meta: &Metadata, header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut out = format!(
        "# {} {} {}\n{CONFIG_PREFIX}{}\n",
        meta.tool,
        meta.version,
        meta.command,
        serde_json::to_string(&meta.config)?
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::domain(
                "csv",
                format!("row has {} fields, header has {}", r.len(), header.len()),
            ));
        }
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

pub fn write_csv(
    path: &Path,
    meta: &Metadata,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    std::fs::write(path, csv_string(meta, header, rows)?)?;
    Ok(())
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    meta: &'a Metadata,
    result: &'a T,
}

pub fn json_string<T: Serialize>(meta: &Metadata, data: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Envelope { meta, result: data })?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, meta: &Metadata, data: &T) -> Result<()> {
    std::fs::write(path, json_string(meta, data)?)?;
    Ok(())
}

/// Recovers the configuration embedded in an artifact, or returns the text
/// itself parsed as JSON when it is a plain configuration file.
pub fn extract_config(text: &str) -> Result<Value> {
    if let Some(line) = text.lines().find_map(|l| l.strip_prefix(CONFIG_PREFIX)) {
        return Ok(serde_json::from_str(line)?);
    }
    let v: Value = serde_json::from_str(text)?;
    match v.get("meta").and_then(|m| m.get("config")) {
        Some(c) if v.get("result").is_some() => Ok(c.clone()),
        _ => Ok(v),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub series: Vec<Series>,
    /// Draw the reference line `y = x`.
    pub diagonal: bool,
    /// Horizontal reference lines.
    pub h_lines: Vec<f64>,
    /// Vertical reference lines.
    pub v_lines: Vec<f64>,
}

impl Plot {
    pub fn new(
        title: &str,
        x_label: &str,
        y_label: &str,
        x_range: (f64, f64),
        y_range: (f64, f64),
    ) -> Self {
        Plot {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            x_range,
            y_range,
            series: Vec::new(),
            diagonal: false,
            h_lines: Vec::new(),
            v_lines: Vec::new(),
        }
    }

    pub fn series(mut self, name: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series {
            name: name.to_string(),
            points,
        });
        self
    }
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders axes, ticks, reference lines and one polyline per series.
pub fn render_svg(plot: &Plot) -> String {
    let (w, h) = (560.0, 420.0);
    let (left, right, top, bottom) = (60.0, 20.0, 36.0, 50.0);
    let (x0, x1) = plot.x_range;
    let (y0, y1) = plot.y_range;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(&plot.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - left - right,
        h - top - bottom
    );
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f64 / 5.0;
        let fy = y0 + (y1 - y0) * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(fx),
            h - bottom + 16.0,
            tick(fx)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            sy(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (left + w - right) / 2.0,
        h - 12.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0,
        escape(&plot.y_label)
    );
    let line = |s: &mut String, a: (f64, f64), b: (f64, f64)| {
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
            sx(a.0),
            sy(a.1),
            sx(b.0),
            sy(b.1)
        );
    };
    if plot.diagonal {
        let lo = x0.max(y0);
        let hi = x1.min(y1);
        if lo < hi {
            line(&mut s, (lo, lo), (hi, hi));
        }
    }
    for &y in &plot.h_lines {
        line(&mut s, (x0, y), (x1, y));
    }
    for &x in &plot.v_lines {
        line(&mut s, (x, y0), (x, y1));
    }
    for (i, series) in plot.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = series
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
            left + 8.0,
            top + 16.0 + 14.0 * i as f64,
            escape(&series.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    if r.abs() >= 1000.0 {
        format!("{r:.0}")
    } else {
        format!("{r}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_carries_config() {
        let meta = Metadata::new("simulate", &serde_json::json!({"q": 0.55, "K": 7})).unwrap();
        let text = csv_string(&meta, &["a", "b"], &[vec!["1".into(), "x,y".into()]]).unwrap();
        assert!(text.starts_with("# viralfeed "));
        assert!(text.contains("a,b\n1,\"x,y\"\n"));
        assert_eq!(extract_config(&text).unwrap(), meta.config);
        assert!(csv_string(&meta, &["a"], &[vec![]]).is_err());
    }

    #[test]
    fn json_envelope_round_trip() {
        let meta = Metadata::new("lambda-star", &serde_json::json!({"q": 0.51})).unwrap();
        let text = json_string(&meta, &vec![1, 2]).unwrap();
        assert_eq!(extract_config(&text).unwrap(), meta.config);
        let plain = r#"{"q": 0.6, "K": 4}"#;
        assert_eq!(extract_config(plain).unwrap()["K"], 4);
    }

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(1.0), "1");
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let plot = Plot::new("phi", "x", "phi(x)", (0.0, 1.0), (0.0, 1.0))
            .series("a", vec![(0.0, 0.1), (1.0, 0.9)])
            .series("b <c>", vec![(0.0, 0.5), (0.5, f64::NAN), (1.0, 0.5)]);
        let svg = render_svg(&Plot {
            diagonal: true,
            ..plot
        });
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b &lt;c&gt;"));
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
