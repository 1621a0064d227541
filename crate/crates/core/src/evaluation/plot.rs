//! NDCG-versus-questions curves as CSV and a two-panel SVG.

use std::fmt::Write as _;

use super::harness::{EvalReport, Metric};

#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub label: String,
    /// `(questions, value)`, ascending in questions.
    pub points: Vec<(usize, f64)>,
}

impl Curve {
    /// One point per checkpoint of `report` for the given metric and list length.
    pub fn from_report(label: impl Into<String>, report: &EvalReport, metric: Metric, n: usize) -> Self {
        let points = report
            .meta
            .checkpoints
            .iter()
            .filter_map(|&c| report.mean(c, metric, n).map(|v| (c, v)))
            .collect();
        Curve {
            label: label.into(),
            points,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub title: String,
    pub curves: Vec<Curve>,
}

/// `panel,method,questions,value`.
pub fn curves_csv(panels: &[Panel]) -> String {
    let mut out = String::from("panel,method,questions,value\n");
    for p in panels {
        for c in &p.curves {
            for &(q, v) in &c.points {
                let _ = writeln!(out, "{},{},{},{}", p.title, c.label, q, v);
            }
        }
    }
    out
}

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];
const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 320.0;
const MARGIN: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Side-by-side panels sharing a legend; y axis starts at 0.
pub fn curves_svg(panels: &[Panel], y_label: &str) -> String {
    let width = MARGIN + panels.len() as f64 * (PANEL_W + MARGIN) + 140.0;
    let height = PANEL_H + 2.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let all_points = || panels.iter().flat_map(|p| &p.curves).flat_map(|c| &c.points);
    let x_max = all_points().map(|p| p.0).max().unwrap_or(1).max(1) as f64;
    let y_top = all_points().map(|p| p.1).fold(0.0f64, f64::max);
    let y_max = if y_top > 0.0 { (y_top * 1.1 * 20.0).ceil() / 20.0 } else { 1.0 };

    let mut labels: Vec<&str> = Vec::new();
    for p in panels {
        for c in &p.curves {
            if !labels.contains(&c.label.as_str()) {
                labels.push(&c.label);
            }
        }
    }

    for (k, panel) in panels.iter().enumerate() {
        let x0 = MARGIN + k as f64 * (PANEL_W + MARGIN);
        let y0 = MARGIN;
        let px = |q: f64| x0 + q / x_max * PANEL_W;
        let py = |v: f64| y0 + PANEL_H - v / y_max * PANEL_H;
        let _ = writeln!(
            svg,
            r#"<rect x="{x0}" y="{y0}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
            x0 + PANEL_W / 2.0,
            y0 - 12.0,
            escape(&panel.title)
        );
        for t in 0..=5 {
            let v = y_max * t as f64 / 5.0;
            let y = py(v);
            let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y}" x2="{}" y2="{y}" stroke="lightgray"/>"#, x0 + PANEL_W);
            let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, x0 - 4.0, y + 4.0);
        }
        let mut ticks: Vec<usize> = panel.curves.iter().flat_map(|c| c.points.iter().map(|p| p.0)).collect();
        ticks.sort_unstable();
        ticks.dedup();
        for q in ticks {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle">{q}</text>"#,
                px(q as f64),
                y0 + PANEL_H + 16.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">questions</text>"#,
            x0 + PANEL_W / 2.0,
            y0 + PANEL_H + 34.0
        );
        if k == 0 {
            let _ = writeln!(
                svg,
                r#"<text x="12" y="{}" text-anchor="middle" transform="rotate(-90 12 {})">{}</text>"#,
                y0 + PANEL_H / 2.0,
                y0 + PANEL_H / 2.0,
                escape(y_label)
            );
        }
        for c in &panel.curves {
            let color = COLORS[labels.iter().position(|l| *l == c.label).unwrap() % COLORS.len()];
            let pts: Vec<String> = c.points.iter().map(|&(q, v)| format!("{:.2},{:.2}", px(q as f64), py(v))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                pts.join(" ")
            );
            for &(q, v) in &c.points {
                let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(q as f64), py(v));
            }
        }
    }
    let lx = MARGIN + panels.len() as f64 * (PANEL_W + MARGIN);
    for (k, label) in labels.iter().enumerate() {
        let y = MARGIN + 10.0 + 20.0 * k as f64;
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, y + 4.0, escape(label));
    }
    svg.push_str("</svg>\n");
    svg
}
