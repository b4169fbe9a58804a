use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{outlier_indices, studentized_residuals, RegressionResult};
use crate::csvio::{self, TableWriter};
use crate::error::{Error, Result};
use crate::time::UtcInstant;

pub const SCATTER_HEADER: [&str; 7] = [
    "timestamp_utc",
    "cot_norm",
    "lum_norm",
    "fitted",
    "residual",
    "studentized",
    "outlier",
];

const SIZE: f64 = 600.0;
const LEFT: f64 = 80.0;
const TOP: f64 = 40.0;
const SPAN: f64 = 480.0;

const X_LABEL: &str = "Normalized cloud optical thickness (MODIS)";
const Y_LABEL: &str = "Normalized luminance difference (sky camera)";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterPoint {
    pub timestamp: UtcInstant,
    pub cot_norm: f64,
    pub lum_norm: f64,
}

fn px(x: f64) -> f64 {
    LEFT + SPAN * x
}

fn py(y: f64) -> f64 {
    TOP + SPAN * (1.0 - y)
}

/// Scatter of normalized COT (x) against normalized luminance difference
/// (y) on unit axes, with the fitted line clipped to the plot area.
pub fn render_scatter_svg(points: &[ScatterPoint], fit: Option<&RegressionResult>) -> String {
    let mut s = String::new();
    let bottom = TOP + SPAN;
    let right = LEFT + SPAN;
    // writing to a String is infallible
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(s, "<title>{X_LABEL} vs {Y_LABEL}</title>");
    let _ = writeln!(
        s,
        r##"<defs><clipPath id="plot-area"><rect x="{LEFT}" y="{TOP}" width="{SPAN}" height="{SPAN}"/></clipPath></defs>"##
    );
    let _ = writeln!(
        s,
        r##"<rect class="background" x="0" y="0" width="{SIZE}" height="{SIZE}" fill="#ffffff"/>"##
    );
    let _ = writeln!(
        s,
        r##"<rect class="frame" x="{LEFT}" y="{TOP}" width="{SPAN}" height="{SPAN}" fill="none" stroke="#000000"/>"##
    );
    let _ = writeln!(s, r##"<g class="ticks" stroke="#000000">"##);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let (x, y) = (px(v), py(v));
        let _ = writeln!(
            s,
            r#"<line x1="{x:.3}" y1="{bottom:.3}" x2="{x:.3}" y2="{:.3}"/><line x1="{LEFT:.3}" y1="{y:.3}" x2="{:.3}" y2="{y:.3}"/>"#,
            bottom + 6.0,
            LEFT - 6.0
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="tick-labels">"#);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{v:.1}</text><text x="{:.3}" y="{:.3}" text-anchor="end">{v:.1}</text>"#,
            px(v),
            bottom + 22.0,
            LEFT - 10.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text class="x-label" x="{:.3}" y="{:.3}" text-anchor="middle">{X_LABEL}</text>"#,
        LEFT + SPAN / 2.0,
        bottom + 50.0
    );
    let (lx, ly) = (LEFT - 50.0, TOP + SPAN / 2.0);
    let _ = writeln!(
        s,
        r#"<text class="y-label" x="{lx:.3}" y="{ly:.3}" text-anchor="middle" transform="rotate(-90 {lx:.3} {ly:.3})">{Y_LABEL}</text>"#
    );
    let _ = writeln!(s, r##"<g class="points" fill="#1f77b4">"##);
    for p in points {
        let _ = writeln!(
            s,
            r#"<circle class="point" cx="{:.3}" cy="{:.3}" r="3"/>"#,
            px(p.cot_norm),
            py(p.lum_norm)
        );
    }
    let _ = writeln!(s, "</g>");
    if let Some(f) = fit {
        let _ = writeln!(
            s,
            r##"<line class="fit" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#d62728" stroke-width="2" clip-path="url(#plot-area)"/>"##,
            px(0.0),
            py(f.predict(0.0)),
            px(1.0),
            py(f.predict(1.0))
        );
        let _ = writeln!(
            s,
            r#"<text class="fit-label" x="{:.3}" y="{:.3}" text-anchor="end">y = {:.4}x + {:.4}, r = {:.4}</text>"#,
            right - 6.0,
            TOP + 18.0,
            f.slope,
            f.intercept,
            f.r
        );
    }
    let _ = writeln!(s, "</svg>");
    s
}

/// The plotted table, with residual diagnostics when a fit is given.
pub fn render_scatter_csv(points: &[ScatterPoint], fit: Option<&RegressionResult>) -> Vec<u8> {
    let xs: Vec<f64> = points.iter().map(|p| p.cot_norm).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.lum_norm).collect();
    let student = fit.map(|f| studentized_residuals(&xs, &ys, f));
    let flagged = student.as_deref().map(outlier_indices).unwrap_or_default();
    let mut w = TableWriter::new(&SCATTER_HEADER);
    for (i, p) in points.iter().enumerate() {
        let (fitted, resid, t) = match (fit, &student) {
            (Some(f), Some(st)) => {
                let yhat = f.predict(p.cot_norm);
                (
                    csvio::fmt_f64(yhat),
                    csvio::fmt_f64(p.lum_norm - yhat),
                    csvio::fmt_f64(st[i]),
                )
            }
            _ => Default::default(),
        };
        w.row([
            p.timestamp.to_string(),
            csvio::fmt_f64(p.cot_norm),
            csvio::fmt_f64(p.lum_norm),
            fitted,
            resid,
            t,
            if flagged.contains(&i) { "1" } else { "0" }.to_string(),
        ]);
    }
    w.into_bytes()
}

/// Writes the SVG to `svg_path` and the plotted table beside it as
/// `<stem>_points.csv`. Returns the CSV path.
pub fn emit_scatter(
    points: &[ScatterPoint],
    fit: Option<&RegressionResult>,
    svg_path: &Path,
) -> Result<PathBuf> {
    if points.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let stem = svg_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scatter");
    let csv_path = svg_path.with_file_name(format!("{stem}_points.csv"));
    csvio::write_atomic(svg_path, render_scatter_svg(points, fit).as_bytes())?;
    csvio::write_atomic(&csv_path, &render_scatter_csv(points, fit))?;
    Ok(csv_path)
}
