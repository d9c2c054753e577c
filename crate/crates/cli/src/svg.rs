//! Minimal SVG charts: line plots, scatter plots and matrix heatmaps.

use std::fmt::Write;

use subcol_core::numlin::Matrix;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Accumulates drawing commands for one document.
pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg { width, height, body: String::new() }
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" text-anchor="{anchor}" font-family="sans-serif">{}</text>"#,
            esc(s)
        );
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="1"/>"#
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, dashed: bool) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let dash = if dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"{dash}/>"#,
            coords.join(" ")
        );
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}" fill-opacity="0.8"/>"#);
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.3}" height="{h:.3}" fill="{fill}"/>"#);
    }

    pub fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    pub dashed: bool,
    /// Draw markers instead of a connecting line.
    pub markers: bool,
}

/// Axis-aligned plotting area inside a document.
pub struct Panel {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-300 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Draws axes, tick labels and every series into `panel`. With `log_y`
/// nonpositive values are dropped.
pub fn plot(svg: &mut Svg, panel: &Panel, title: &str, xlabel: &str, ylabel: &str, series: &[Series], log_y: bool) {
    let ty = |v: f64| if log_y { v.log10() } else { v };
    let keep = |&(_, y): &(f64, f64)| !log_y || y > 0.0;
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().filter(|p| keep(p)).map(|p| ty(p.1))));
    let (left, top) = (panel.x + 60.0, panel.y + 30.0);
    let (w, h) = (panel.w - 80.0, panel.h - 70.0);
    let sx = |v: f64| left + (v - x0) / (x1 - x0) * w;
    let sy = |v: f64| top + h - (ty(v) - y0) / (y1 - y0) * h;

    svg.text(panel.x + panel.w / 2.0, panel.y + 18.0, 14.0, "middle", title);
    svg.line(left, top + h, left + w, top + h, "black");
    svg.line(left, top, left, top + h, "black");
    for t in 0..=4 {
        let f = t as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let px = left + f * w;
        let py = top + h - f * h;
        svg.line(px, top + h, px, top + h + 4.0, "black");
        svg.text(px, top + h + 16.0, 10.0, "middle", &format!("{xv:.3}"));
        svg.line(left - 4.0, py, left, py, "black");
        let label = if log_y { format!("1e{yv:.1}") } else { format!("{yv:.3e}") };
        svg.text(left - 6.0, py + 3.0, 10.0, "end", &label);
    }
    svg.text(left + w / 2.0, top + h + 34.0, 12.0, "middle", xlabel);
    svg.text(panel.x + 12.0, top - 8.0, 12.0, "start", ylabel);

    for s in series {
        let pts: Vec<(f64, f64)> = s.points.iter().filter(|p| keep(p)).map(|&(x, y)| (sx(x), sy(y))).collect();
        if s.markers {
            for &(x, y) in &pts {
                svg.circle(x, y, 2.5, s.color);
            }
        } else {
            svg.polyline(&pts, s.color, s.dashed);
        }
    }
    for (i, s) in series.iter().filter(|s| !s.name.is_empty()).enumerate() {
        let y = top + 12.0 + 14.0 * i as f64;
        svg.line(left + w - 110.0, y - 4.0, left + w - 92.0, y - 4.0, s.color);
        svg.text(left + w - 88.0, y, 10.0, "start", &s.name);
    }
}

/// Matrix heatmap of `|m|`, white for zero and dark for the largest entry.
/// On the log scale entries below `max·1e-8` are drawn white.
pub fn heatmap(svg: &mut Svg, panel: &Panel, title: &str, m: &Matrix, log: bool) {
    const LOG_DECADES: f64 = 8.0;
    let max = m.max_abs();
    let (left, top) = (panel.x + 10.0, panel.y + 30.0);
    let side = (panel.w - 20.0).min(panel.h - 50.0);
    let (cw, ch) = (side / m.cols().max(1) as f64, side / m.rows().max(1) as f64);
    svg.text(panel.x + panel.w / 2.0, panel.y + 18.0, 14.0, "middle", title);
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let v = m[(i, j)].abs();
            if v == 0.0 || max == 0.0 {
                continue;
            }
            let t = if log { ((v / max).log10() + LOG_DECADES) / LOG_DECADES } else { v / max };
            if t <= 0.0 {
                continue;
            }
            let shade = (255.0 * (1.0 - t.min(1.0))).round() as u8;
            let fill = format!("#{shade:02x}{shade:02x}ff");
            svg.rect(left + j as f64 * cw, top + i as f64 * ch, cw, ch, &fill);
        }
    }
    svg.line(left, top, left + side, top, "#888888");
    svg.line(left, top + side, left + side, top + side, "#888888");
    svg.line(left, top, left, top + side, "#888888");
    svg.line(left + side, top, left + side, top + side, "#888888");
}
