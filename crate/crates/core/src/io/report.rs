use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::BandPoint;

pub const SCHEMA_ID: &str = "emitter-coherence/report";
pub const SCHEMA_VERSION: u32 = 1;

/// The JSON document every command writes.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, I: Serialize, R: Serialize> {
    pub schema: &'static str,
    pub schema_version: u32,
    pub command: &'a str,
    pub inputs: &'a I,
    pub result: &'a R,
}

pub fn render_report<I: Serialize, R: Serialize>(command: &str, inputs: &I, result: &R) -> Result<String> {
    let env = Envelope {
        schema: SCHEMA_ID,
        schema_version: SCHEMA_VERSION,
        command,
        inputs,
        result,
    };
    let mut text = serde_json::to_string_pretty(&env).map_err(|e| Error::invalid(format!("serialising report: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Writes `<dir>/<command>.json` and returns its path.
pub fn write_report<I: Serialize, R: Serialize>(dir: &Path, command: &str, inputs: &I, result: &R) -> Result<PathBuf> {
    let text = render_report(command, inputs, result)?;
    let path = dir.join(format!("{command}.json"));
    write_text(&path, &text)?;
    Ok(path)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Plot data with columns `x,y,band_lo,band_hi`.
pub fn plot_csv(points: &[BandPoint]) -> String {
    let mut out = String::from("x,y,band_lo,band_hi\n");
    for p in points {
        let _ = writeln!(out, "{:?},{:?},{:?},{:?}", p.x, p.y, p.lo, p.hi);
    }
    out
}

pub fn write_plot_csv(path: &Path, points: &[BandPoint]) -> Result<()> {
    write_text(path, &plot_csv(points))
}

/// Static line plot with a shaded band.
pub fn plot_svg(title: &str, x_label: &str, y_label: &str, points: &[BandPoint]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 56.0;
    let finite = |v: f64| v.is_finite();
    let pts: Vec<&BandPoint> = points.iter().filter(|p| finite(p.x) && finite(p.lo) && finite(p.hi)).collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
    if pts.len() >= 2 {
        let (x0, x1) = span(pts.iter().map(|p| p.x));
        let (y0, y1) = span(pts.iter().flat_map(|p| [p.lo, p.hi, p.y]));
        let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
        let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
        let upper = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.hi)));
        let lower = pts.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.lo)));
        let band: Vec<String> = upper.chain(lower).collect();
        let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.y))).collect();
        let _ = writeln!(svg, "<polygon points=\"{}\" fill=\"#9ecae1\" stroke=\"none\"/>", band.join(" "));
        let _ = writeln!(svg, "<polyline points=\"{}\" fill=\"none\" stroke=\"#08519c\" stroke-width=\"1.5\"/>", line.join(" "));
        let _ = writeln!(
            svg,
            "<rect x=\"{M}\" y=\"{M}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
            W - 2.0 * M,
            H - 2.0 * M
        );
        for (x, y, anchor, v) in [
            (M, H - M + 16.0, "start", x0),
            (W - M, H - M + 16.0, "end", x1),
            (M - 4.0, H - M, "end", y0),
            (M - 4.0, M + 10.0, "end", y1),
        ] {
            let _ = writeln!(
                svg,
                "<text x=\"{x}\" y=\"{y}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" font-size=\"11\">{v:.4e}</text>"
            );
        }
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
        W / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    svg.push_str("</svg>\n");
    svg
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
