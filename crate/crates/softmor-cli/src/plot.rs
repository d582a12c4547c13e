//! Minimal deterministic SVG renderer for error-versus-basis-size curves,
//! one log-scale curve per method.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Result};

use crate::records::RunRecord;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 200.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 56.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Render the plottable records (error <= 100%) as an SVG document.
/// Records with larger errors are dropped, matching how the error tables
/// are read.
pub fn render_error_plot(records: &[RunRecord], title: &str) -> Result<String> {
    let mut series: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_plottable() && r.error > 0.0) {
        series.entry(r.method.as_str()).or_default().push(r);
    }
    if series.is_empty() {
        bail!(softmor::Error::EmptyRecords);
    }
    for pts in series.values_mut() {
        pts.sort_by_key(|r| r.n_v);
    }

    let mut x_min = usize::MAX;
    let mut x_max = 0usize;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for pts in series.values() {
        for p in pts {
            x_min = x_min.min(p.n_v);
            x_max = x_max.max(p.n_v);
            let ly = p.error.log10();
            y_min = y_min.min(ly);
            y_max = y_max.max(ly);
        }
    }
    if x_min == x_max {
        x_min = x_min.saturating_sub(1);
        x_max += 1;
    }
    let y_lo = y_min.floor();
    let y_hi = y_max.ceil().max(y_lo + 1.0);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |n: usize| MARGIN_LEFT + (n - x_min) as f64 / (x_max - x_min) as f64 * plot_w;
    let y_of = |err: f64| {
        let ly = err.log10();
        MARGIN_TOP + (y_hi - ly) / (y_hi - y_lo) * plot_h
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        title
    );

    // Axes.
    let x0 = MARGIN_LEFT;
    let x1 = MARGIN_LEFT + plot_w;
    let y0 = MARGIN_TOP + plot_h;
    let y1 = MARGIN_TOP;
    let _ = writeln!(
        svg,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black"/>"#
    );

    // Horizontal decade grid and labels.
    let mut dec = y_lo as i64;
    while dec <= y_hi as i64 {
        let y = y_of(10f64.powi(dec as i32));
        let _ = writeln!(
            svg,
            r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#dddddd"/>"##
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">1e{}</text>"#,
            x0 - 6.0,
            y + 4.0,
            dec
        );
        dec += 1;
    }

    // X ticks at each distinct basis size.
    let mut sizes: Vec<usize> = series.values().flatten().map(|r| r.n_v).collect();
    sizes.sort_unstable();
    sizes.dedup();
    for n in &sizes {
        let x = x_of(*n);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            y0 + 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{n}</text>"#,
            y0 + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">basis size</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.2})">relative error</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    // Curves and legend.
    for (idx, (method, pts)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        if pts.len() > 1 {
            let path: Vec<String> = pts
                .iter()
                .map(|p| format!("{:.2},{:.2}", x_of(p.n_v), y_of(p.error)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        for p in pts {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                x_of(p.n_v),
                y_of(p.error)
            );
        }
        let ly = MARGIN_TOP + 14.0 + idx as f64 * 18.0;
        let lx = x1 + 16.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx:.2}" y="{:.2}" width="12" height="12" fill="{color}"/>"#,
            ly - 10.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}" font-family="sans-serif" font-size="12">{method}</text>"#,
            lx + 18.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
