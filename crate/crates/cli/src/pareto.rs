//! Passenger-vs-operator trade-off plots as standalone SVG.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use tndp_core::{Error, Result};

/// Mean and standard deviation of both cost components, in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub alpha: f64,
    pub cp_mean: f64,
    pub cp_std: f64,
    pub co_mean: f64,
    pub co_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSeries {
    pub label: String,
    pub points: Vec<ParetoPoint>,
}

pub const WIDTH: f64 = 720.0;
pub const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Data-to-pixel mapping; `y` grows upward in data space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axes {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Axes {
    fn fit(series: &[ParetoSeries]) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in series.iter().flat_map(|s| &s.points) {
            x0 = x0.min(p.cp_mean - p.cp_std);
            x1 = x1.max(p.cp_mean + p.cp_std);
            y0 = y0.min(p.co_mean - p.co_std);
            y1 = y1.max(p.co_mean + p.co_std);
        }
        let pad = |lo: f64, hi: f64| {
            let span = hi - lo;
            if span > 0.0 {
                (lo - 0.05 * span, hi + 0.05 * span)
            } else {
                (lo - 1.0, hi + 1.0)
            }
        };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        Axes { x0, x1, y0, y1 }
    }

    pub fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    pub fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=4).map(|k| lo + (hi - lo) * k as f64 / 4.0).collect()
}

/// Renders every series as markers with one-standard-deviation error bars,
/// joined in increasing `α` order.
pub fn render_svg(series: &[ParetoSeries]) -> Result<String> {
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::InvalidParams("nothing to plot".into()));
    }
    let ax = Axes::fit(series);
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<g id="axes" data-x0="{}" data-x1="{}" data-y0="{}" data-y1="{}" stroke="black">"#,
        ax.x0, ax.x1, ax.y0, ax.y1
    );
    let (left, right) = (ax.px(ax.x0), ax.px(ax.x1));
    let (bottom, top) = (ax.py(ax.y0), ax.py(ax.y1));
    let _ = writeln!(w, r#"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/>"#);
    let _ = writeln!(w, r#"<line x1="{left}" y1="{bottom}" x2="{left}" y2="{top}"/>"#);
    for t in ticks(ax.x0, ax.x1) {
        let x = ax.px(t);
        let _ = writeln!(w, r#"<line x1="{x}" y1="{bottom}" x2="{x}" y2="{}"/>"#, bottom + 5.0);
        let _ = writeln!(
            w,
            r#"<text x="{x}" y="{}" text-anchor="middle" stroke="none">{t:.1}</text>"#,
            bottom + 18.0
        );
    }
    for t in ticks(ax.y0, ax.y1) {
        let y = ax.py(t);
        let _ = writeln!(w, r#"<line x1="{}" y1="{y}" x2="{left}" y2="{y}"/>"#, left - 5.0);
        let _ = writeln!(
            w,
            r#"<text x="{}" y="{}" text-anchor="end" stroke="none">{t:.1}</text>"#,
            left - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(
        w,
        r#"<text x="{}" y="{}" text-anchor="middle">passenger cost C_p (minutes)</text>"#,
        (left + right) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        w,
        r#"<text transform="translate(20 {}) rotate(-90)" text-anchor="middle">operator cost C_o (minutes)</text>"#,
        (top + bottom) / 2.0
    );

    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = ser.points.clone();
        pts.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
        let _ = writeln!(w, r#"<g class="series" data-label="{}" stroke="{color}" fill="{color}">"#, escape(&ser.label));
        if pts.len() >= 2 {
            let coords: Vec<String> = pts
                .iter()
                .map(|p| format!("{},{}", ax.px(p.cp_mean), ax.py(p.co_mean)))
                .collect();
            let _ = writeln!(w, r#"<polyline fill="none" points="{}"/>"#, coords.join(" "));
        }
        for p in &pts {
            let (x, y) = (ax.px(p.cp_mean), ax.py(p.co_mean));
            let _ = writeln!(
                w,
                r#"<line class="errorbar" x1="{}" y1="{y}" x2="{}" y2="{y}"/>"#,
                ax.px(p.cp_mean - p.cp_std),
                ax.px(p.cp_mean + p.cp_std)
            );
            let _ = writeln!(
                w,
                r#"<line class="errorbar" x1="{x}" y1="{}" x2="{x}" y2="{}"/>"#,
                ax.py(p.co_mean - p.co_std),
                ax.py(p.co_mean + p.co_std)
            );
            let _ = writeln!(
                w,
                r#"<circle class="point" cx="{x}" cy="{y}" r="3.5" data-alpha="{}" data-cp="{}" data-co="{}"/>"#,
                p.alpha, p.cp_mean, p.co_mean
            );
        }
        let ly = MARGIN_TOP + 20.0 * k as f64 + 10.0;
        let lx = WIDTH - MARGIN_RIGHT + 20.0;
        let _ = writeln!(w, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}"/>"#, lx + 20.0);
        let _ = writeln!(
            w,
            r#"<text x="{}" y="{}" stroke="none" fill="black">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&ser.label)
        );
        let _ = writeln!(w, "</g>");
    }
    let _ = writeln!(w, "</svg>");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(alpha: f64, cp: f64, co: f64) -> ParetoPoint {
        ParetoPoint {
            alpha,
            cp_mean: cp,
            cp_std: 0.5,
            co_mean: co,
            co_std: 1.0,
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(render_svg(&[]).is_err());
        let s = ParetoSeries {
            label: "x".into(),
            points: vec![],
        };
        assert!(render_svg(&[s]).is_err());
    }

    #[test]
    fn labels_are_escaped() {
        let s = ParetoSeries {
            label: "a<b & c".into(),
            points: vec![pt(0.0, 1.0, 2.0)],
        };
        let svg = render_svg(&[s]).unwrap();
        assert!(svg.contains("a&lt;b &amp; c"));
    }

    #[test]
    fn axes_map_monotonically() {
        let ax = Axes {
            x0: 0.0,
            x1: 10.0,
            y0: 0.0,
            y1: 10.0,
        };
        assert!(ax.px(1.0) < ax.px(2.0));
        assert!(ax.py(1.0) > ax.py(2.0));
    }
}
