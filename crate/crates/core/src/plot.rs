//! Minimal SVG line charts with a fixed two-panel layout.

use std::fmt::Write;

use crate::irf::IrfResult;
use crate::study::StudyResult;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 300.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 44.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#555555"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick positions at a 1-2-5 step covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn bounds(panel: &Panel) -> (f64, f64, f64, f64) {
    let pts = panel.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, -1.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.08).max(1e-6);
    (x0, x1, y0 - pad, y1 + pad)
}

fn draw_panel(out: &mut String, panel: &Panel, top: f64) {
    let (x0, x1, y0, y1) = bounds(panel);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let left = MARGIN_LEFT;
    let ptop = top + MARGIN_TOP;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| ptop + (y1 - y) / (y1 - y0) * plot_h;

    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle">{}</text>"#,
        left + plot_w / 2.0,
        top + 22.0,
        escape(&panel.title)
    );
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(out, r##"<line x1="{left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e0e0e0"/>"##, left + plot_w);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
            ptop + plot_h + 16.0,
            fmt_tick(t)
        );
    }
    if y0 < 0.0 && y1 > 0.0 {
        let y = sy(0.0);
        let _ = writeln!(out, r##"<line x1="{left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#888888"/>"##, left + plot_w);
    }
    let _ = writeln!(
        out,
        r##"<rect x="{left:.1}" y="{ptop:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#333333"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
        left + plot_w / 2.0,
        ptop + plot_h + 34.0,
        escape(&panel.x_label)
    );
    for (i, s) in panel.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = ptop + 14.0 + 18.0 * i as f64;
        let lx = left + plot_w + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
}

/// Two panels stacked vertically.
pub fn two_panel_svg(top: &Panel, bottom: &Panel) -> String {
    let height = 2.0 * PANEL_HEIGHT;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    draw_panel(&mut out, top, 0.0);
    draw_panel(&mut out, bottom, PANEL_HEIGHT);
    out.push_str("</svg>\n");
    out
}

fn irf_panel(results: &[(String, &IrfResult)], var: &str) -> Panel {
    let series = results
        .iter()
        .filter_map(|(label, r)| {
            let k = r.var_names().iter().position(|v| v == var)?;
            Some(Series { label: label.clone(), points: (0..=r.horizon()).map(|h| (h as f64, r.values[(h, k)])).collect() })
        })
        .collect();
    Panel { title: format!("response of {var}"), x_label: "horizon".into(), series }
}

/// IRF overlay: top panel `top_var`, bottom panel `bottom_var`.
pub fn irf_overlay(results: &[(String, &IrfResult)], top_var: &str, bottom_var: &str) -> String {
    two_panel_svg(&irf_panel(results, top_var), &irf_panel(results, bottom_var))
}

/// MSE row over bias row for one response variable.
pub fn study_panels(result: &StudyResult, var: &str) -> String {
    let multi = result.config.deltas.len() > 1;
    let mut mse = Vec::new();
    let mut bias = Vec::new();
    for &est in &result.config.estimators {
        for &delta in &result.config.deltas {
            let rows: Vec<_> =
                result.rows.iter().filter(|r| r.estimator == est && r.delta == delta && r.var == var).collect();
            let label = if multi { format!("{} d={delta}", est.name()) } else { est.name().to_string() };
            mse.push(Series { label: label.clone(), points: rows.iter().map(|r| (r.h as f64, r.mse)).collect() });
            bias.push(Series { label, points: rows.iter().map(|r| (r.h as f64, r.bias)).collect() });
        }
    }
    two_panel_svg(
        &Panel { title: format!("MSE, {var}"), x_label: "horizon".into(), series: mse },
        &Panel { title: format!("bias, {var}"), x_label: "horizon".into(), series: bias },
    )
}

/// Profile plot of the dependence measure and its log.
pub fn profile_panels(delta_hat: &[f64], fitted: Option<&[f64]>) -> String {
    let pts: Vec<(f64, f64)> = delta_hat.iter().enumerate().map(|(h, &v)| (h as f64, v)).collect();
    let logs: Vec<(f64, f64)> = pts.iter().filter(|p| p.1 > 0.0).map(|&(h, v)| (h, v.ln())).collect();
    let mut top = vec![Series { label: "estimate".into(), points: pts }];
    let mut bottom = vec![Series { label: "log estimate".into(), points: logs }];
    if let Some(f) = fitted {
        let fp: Vec<(f64, f64)> = f.iter().enumerate().map(|(h, &v)| (h as f64, v)).collect();
        bottom.push(Series { label: "fitted".into(), points: fp.iter().filter(|p| p.1 > 0.0).map(|&(h, v)| (h, v.ln())).collect() });
        top.push(Series { label: "fitted".into(), points: fp });
    }
    two_panel_svg(
        &Panel { title: "dependence measure".into(), x_label: "h".into(), series: top },
        &Panel { title: "log dependence measure".into(), x_label: "h".into(), series: bottom },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_steps() {
        assert_eq!(ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(ticks(-0.13, 0.21).len(), 4);
        assert_eq!(fmt_tick(0.1 + 0.2), "0.3");
    }

    #[test]
    fn two_panels_and_series() {
        let s = |label: &str| Series { label: label.into(), points: vec![(0.0, 1.0), (1.0, -0.5), (2.0, f64::NAN)] };
        let p = Panel { title: "a<b".into(), x_label: "h".into(), series: vec![s("one"), s("two")] };
        let svg = two_panel_svg(&p, &p);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert_eq!(svg.matches("<rect x=").count(), 2);
        assert!(svg.contains("a&lt;b"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn empty_panel_is_valid() {
        let p = Panel { title: String::new(), x_label: String::new(), series: vec![] };
        assert!(two_panel_svg(&p, &p).contains("</svg>"));
    }
}
