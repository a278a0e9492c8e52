//! Three-panel SVG chart of a sweep: |bias|, variance trace and RMSE against
//! the number of rollouts, log scale on both axes.

use std::fmt::Write as _;
use std::path::Path;

use super::report::CellSummary;
use crate::error::{Error, Result};

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 300.0;
const LEGEND_H: f64 = 40.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 50.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

struct Panel {
    key: &'static str,
    title: &'static str,
    value: fn(&CellSummary) -> f64,
}

const PANELS: [Panel; 3] = [
    Panel {
        key: "bias",
        title: "|bias|",
        value: |c| c.bias_norm,
    },
    Panel {
        key: "variance",
        title: "variance (trace)",
        value: |c| c.var_trace,
    },
    Panel {
        key: "rmse",
        title: "RMSE",
        value: |c| c.rmse,
    },
];

/// Maps `[lo, hi]` in log10 space onto pixel range `[p0, p1]`.
struct LogAxis {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl LogAxis {
    fn new(values: impl Iterator<Item = f64>, p0: f64, p1: f64) -> Self {
        let logs: Vec<f64> = values.filter(|v| *v > 0.0).map(f64::log10).collect();
        let (mut lo, mut hi) = logs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| {
                (l.min(*x), h.max(*x))
            });
        if logs.is_empty() {
            (lo, hi) = (0.0, 1.0);
        }
        lo = lo.floor();
        hi = hi.ceil();
        if hi - lo < 1.0 {
            hi = lo + 1.0;
        }
        Self { lo, hi, p0, p1 }
    }

    fn map(&self, v: f64) -> f64 {
        // non-positive values sit on the lower edge
        let l = if v > 0.0 {
            v.log10().clamp(self.lo, self.hi)
        } else {
            self.lo
        };
        self.p0 + (l - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }

    fn decades(&self) -> impl Iterator<Item = i32> {
        (self.lo as i32)..=(self.hi as i32)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders the chart as a standalone SVG document.
pub fn render_svg(cells: &[CellSummary]) -> Result<String> {
    if cells.is_empty() {
        return Err(Error::InvalidArgument(
            "nothing to plot: empty sweep".into(),
        ));
    }
    let mut estimators: Vec<&str> = Vec::new();
    for c in cells {
        if !estimators.contains(&c.estimator.as_str()) {
            estimators.push(&c.estimator);
        }
    }
    let width = PANEL_W * PANELS.len() as f64;
    let height = PANEL_H + LEGEND_H;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    );

    for (pi, panel) in PANELS.iter().enumerate() {
        let x0 = pi as f64 * PANEL_W;
        let (left, right) = (x0 + MARGIN_L, x0 + PANEL_W - MARGIN_R);
        let (top, bottom) = (MARGIN_T, PANEL_H - MARGIN_B);
        let xaxis = LogAxis::new(cells.iter().map(|c| c.n_rollouts as f64), left, right);
        let yaxis = LogAxis::new(cells.iter().map(panel.value), bottom, top);

        let _ = writeln!(svg, r#"<g class="panel" data-panel="{}">"#, panel.key);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"#,
            (left + right) / 2.0,
            top - 12.0,
            escape(panel.title)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            right - left,
            bottom - top
        );
        for d in xaxis.decades() {
            let x = xaxis.map(10f64.powi(d));
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{top:.2}" x2="{x:.2}" y2="{bottom:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{d}</text>"##,
                bottom + 14.0
            );
        }
        for d in yaxis.decades() {
            let y = yaxis.map(10f64.powi(d));
            let _ = writeln!(
                svg,
                r##"<line x1="{left:.2}" y1="{y:.2}" x2="{right:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
                left - 4.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">rollouts</text>"#,
            (left + right) / 2.0,
            bottom + 32.0
        );

        for (ei, est) in estimators.iter().enumerate() {
            let color = COLORS[ei % COLORS.len()];
            let mut pts: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.estimator == *est)
                .map(|c| (xaxis.map(c.n_rollouts as f64), yaxis.map((panel.value)(c))))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pts.len() > 1 {
                let coords: Vec<String> =
                    pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline class="series" data-estimator="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    escape(est),
                    coords.join(" ")
                );
            }
            for (x, y) in pts {
                let _ = writeln!(
                    svg,
                    r#"<circle class="marker" data-estimator="{}" cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#,
                    escape(est)
                );
            }
        }
        let _ = writeln!(svg, "</g>");
    }

    let _ = writeln!(svg, r#"<g class="legend">"#);
    for (ei, est) in estimators.iter().enumerate() {
        let x = MARGIN_L + ei as f64 * 160.0;
        let y = PANEL_H + LEGEND_H / 2.0;
        let color = COLORS[ei % COLORS.len()];
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 24.0,
            x + 30.0,
            y + 4.0,
            escape(est)
        );
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(cells: &[CellSummary], path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(cells)?)?;
    Ok(())
}
