//! Deterministic SVG line charts of report curves with confidence bands.

use std::fmt::Write;

use levy_sync::mc::{ExperimentReport, ReportRow};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    /// Logarithmic axes in both directions.
    LogLog,
    /// Linear abscissa, logarithmic ordinate.
    SemiLog,
    Linear,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Copy)]
struct Axis {
    log: bool,
    lo: f64,
    hi: f64,
    pixel_lo: f64,
    pixel_hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool, pixel_lo: f64, pixel_hi: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if log { 0.5 } else { 0.5 * lo.abs().max(1.0) };
            (lo, hi) = (lo - pad, hi + pad);
        } else {
            let pad = 0.05 * (hi - lo);
            (lo, hi) = (lo - pad, hi + pad);
        }
        Self {
            log,
            lo,
            hi,
            pixel_lo,
            pixel_hi,
        }
    }

    /// Pixel position of `v`, with non-positive values pinned to the lower
    /// edge of a log axis.
    fn map(&self, v: f64) -> f64 {
        let u = if self.log {
            if v > 0.0 {
                v.log10()
            } else {
                self.lo
            }
        } else {
            v
        };
        let u = u.clamp(self.lo, self.hi);
        self.pixel_lo + (u - self.lo) / (self.hi - self.lo) * (self.pixel_hi - self.pixel_lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            let step = ((b - a) / 6 + 1).max(1);
            (a..=b)
                .step_by(step as usize)
                .map(|e| (10f64.powi(e), format!("1e{e}")))
                .collect()
        } else {
            let span = self.hi - self.lo;
            let raw = span / 5.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
            let first = (self.lo / step).ceil() as i64;
            let last = (self.hi / step).floor() as i64;
            (first..=last)
                .map(|i| {
                    let v = i as f64 * step;
                    (v, format!("{}", (v * 1e9).round() / 1e9))
                })
                .collect()
        }
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Chart of every estimator in `report` against its sweep value.
pub fn emit_plot(report: &ExperimentReport, kind: PlotKind) -> Result<String, CliError> {
    emit_plot_rows(&report.rows, kind, &report.manifest.experiment)
}

/// Chart of `rows`, one series per estimator in order of first appearance.
/// A series with a single row is drawn as a marker without a line.
pub fn emit_plot_rows(rows: &[ReportRow], kind: PlotKind, title: &str) -> Result<String, CliError> {
    if rows.is_empty() {
        return Err(CliError::EmptyReport);
    }
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.estimator.as_str()) {
            names.push(&r.estimator);
        }
    }
    let (log_x, log_y) = match kind {
        PlotKind::LogLog => (true, true),
        PlotKind::SemiLog => (false, true),
        PlotKind::Linear => (false, false),
    };
    let x_axis = Axis::fit(rows.iter().map(|r| r.sweep_value), log_x, MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let y_axis = Axis::fit(
        rows.iter().flat_map(|r| [r.value, r.lo, r.hi]),
        log_y,
        HEIGHT - MARGIN_BOTTOM,
        MARGIN_TOP,
    );

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
    let _ = writeln!(
        svg,
        r##"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
        x1 - x0,
        y0 - y1
    );
    for (v, label) in x_axis.ticks() {
        let px = x_axis.map(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}" stroke="#444"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{label}</text>"##,
            y0 + 5.0,
            y0 + 19.0
        );
    }
    for (v, label) in y_axis.ticks() {
        let py = y_axis.map(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{x0:.2}" y2="{py:.2}" stroke="#444"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">sweep value</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 14.0
    );

    for (i, name) in names.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let series: Vec<&ReportRow> = rows.iter().filter(|r| r.estimator == *name).collect();
        let pts: Vec<(f64, f64, f64, f64)> = series
            .iter()
            .map(|r| (x_axis.map(r.sweep_value), y_axis.map(r.value), y_axis.map(r.lo), y_axis.map(r.hi)))
            .collect();
        if pts.len() == 1 {
            let (px, py, plo, phi) = pts[0];
            let _ = writeln!(
                svg,
                r#"<line x1="{px:.2}" y1="{plo:.2}" x2="{px:.2}" y2="{phi:.2}" stroke="{color}" stroke-opacity="0.5"/>"#
            );
            let _ = writeln!(svg, r#"<circle cx="{px:.2}" cy="{py:.2}" r="4" fill="{color}"/>"#);
        } else {
            let mut band = String::new();
            for (px, _, _, phi) in &pts {
                let _ = write!(band, "{px:.2},{phi:.2} ");
            }
            for (px, _, plo, _) in pts.iter().rev() {
                let _ = write!(band, "{px:.2},{plo:.2} ");
            }
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
                band.trim_end()
            );
            let line: Vec<String> = pts.iter().map(|(px, py, _, _)| format!("{px:.2},{py:.2}")).collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                line.join(" ")
            );
            for (px, py, _, _) in &pts {
                let _ = writeln!(svg, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="{color}"/>"#);
            }
        }
        let ly = MARGIN_TOP + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{ly:.2}">{}</text>"#,
            x1 - 180.0,
            ly - 9.0,
            x1 - 165.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
