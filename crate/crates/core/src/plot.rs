//! A tiny SVG plotter: scatter and line series on linear axes, laid out
//! singly or in a grid of panels.
//!
//! Coordinates are printed with three decimals, so identical inputs give
//! identical files.

use std::fmt::Write as _;

pub const ORANGE: &str = "#f28e2b";
pub const BLUE: &str = "#4e79a7";
pub const RED: &str = "#e15759";
pub const GREEN: &str = "#59a14f";
pub const PURPLE: &str = "#b07aa1";
pub const GRAY: &str = "#79706e";

/// Color cycle for line charts with several series.
pub const PALETTE: [&str; 6] = [BLUE, ORANGE, GREEN, PURPLE, GRAY, RED];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Style {
    Scatter { radius: f64, opacity: f64 },
    Line,
    Dashed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub style: Style,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn scatter(label: impl Into<String>, color: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            color: color.into(),
            style: Style::Scatter {
                radius: 1.2,
                opacity: 0.5,
            },
            points,
        }
    }

    pub fn line(label: impl Into<String>, color: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            color: color.into(),
            style: Style::Line,
            points,
        }
    }

    /// Horizontal dashed line at `y` across `[x0, x1]`.
    pub fn reference(label: impl Into<String>, color: &str, y: f64, x0: f64, x1: f64) -> Self {
        Self {
            label: label.into(),
            color: color.into(),
            style: Style::Dashed,
            points: vec![(x0, y), (x1, y)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Fixed axis ranges; `None` fits the data.
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
    pub legend: bool,
}

impl Chart {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: String::new(),
            y_label: String::new(),
            series: Vec::new(),
            x_range: None,
            y_range: None,
            legend: true,
        }
    }

    pub fn labels(mut self, x: impl Into<String>, y: impl Into<String>) -> Self {
        self.x_label = x.into();
        self.y_label = y.into();
        self
    }

    pub fn with(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    pub fn x_range(mut self, lo: f64, hi: f64) -> Self {
        self.x_range = Some((lo, hi));
        self
    }

    pub fn y_range(mut self, lo: f64, hi: f64) -> Self {
        self.y_range = Some((lo, hi));
        self
    }

    pub fn without_legend(mut self) -> Self {
        self.legend = false;
        self
    }

    fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let finite = || {
            self.series
                .iter()
                .flat_map(|s| s.points.iter())
                .filter(|(x, y)| x.is_finite() && y.is_finite())
        };
        let fit = |get: &dyn Fn(&(f64, f64)) -> f64| {
            let (lo, hi) = finite().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(get(p)), hi.max(get(p)))
            });
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.04 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        (
            self.x_range.unwrap_or_else(|| fit(&|p| p.0)),
            self.y_range.unwrap_or_else(|| fit(&|p| p.1)),
        )
    }

    /// Renders as a standalone SVG document.
    pub fn to_svg(&self, width: f64, height: f64) -> String {
        let mut out = String::new();
        open_svg(&mut out, width, height);
        self.render(&mut out, 0.0, 0.0, width, height);
        out.push_str("</svg>\n");
        out
    }

    /// Draws the chart into the box `(x, y, w, h)` of an open SVG document.
    pub fn render(&self, out: &mut String, x: f64, y: f64, w: f64, h: f64) {
        let (left, right, top, bottom) = (52.0, 12.0, 26.0, 40.0);
        let pw = (w - left - right).max(10.0);
        let ph = (h - top - bottom).max(10.0);
        let (px, py) = (x + left, y + top);
        let ((x0, x1), (y0, y1)) = self.bounds();
        let sx = |v: f64| px + (v - x0) / (x1 - x0) * pw;
        let sy = |v: f64| py + ph - (v - y0) / (y1 - y0) * ph;

        let _ = writeln!(
            out,
            r#"<g><rect x="{}" y="{}" width="{}" height="{}" fill="white" stroke="dimgray" stroke-width="0.8"/>"#,
            f(px),
            f(py),
            f(pw),
            f(ph)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
            f(px + pw / 2.0),
            f(y + 17.0),
            escape(&self.title)
        );
        for t in ticks(x0, x1, 5) {
            let tx = sx(t);
            let _ = writeln!(
                out,
                r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="dimgray" stroke-width="0.8"/><text x="{0}" y="{3}" text-anchor="middle" font-size="10">{4}</text>"#,
                f(tx),
                f(py + ph),
                f(py + ph + 4.0),
                f(py + ph + 15.0),
                tick_label(t)
            );
        }
        for t in ticks(y0, y1, 5) {
            let ty = sy(t);
            let _ = writeln!(
                out,
                r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="dimgray" stroke-width="0.8"/><text x="{3}" y="{4}" text-anchor="end" font-size="10">{5}</text>"#,
                f(px - 4.0),
                f(ty),
                f(px),
                f(px - 6.0),
                f(ty + 3.5),
                tick_label(t)
            );
        }
        if !self.x_label.is_empty() {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">{}</text>"#,
                f(px + pw / 2.0),
                f(py + ph + 32.0),
                escape(&self.x_label)
            );
        }
        if !self.y_label.is_empty() {
            let (lx, ly) = (x + 12.0, py + ph / 2.0);
            let _ = writeln!(
                out,
                r#"<text x="{0}" y="{1}" text-anchor="middle" font-size="11" transform="rotate(-90 {0} {1})">{2}</text>"#,
                f(lx),
                f(ly),
                escape(&self.y_label)
            );
        }

        let _ = writeln!(
            out,
            r#"<clipPath id="c{0}_{1}"><rect x="{0}" y="{1}" width="{2}" height="{3}"/></clipPath><g clip-path="url(#c{0}_{1})">"#,
            f(px),
            f(py),
            f(pw),
            f(ph)
        );
        for s in &self.series {
            match s.style {
                Style::Scatter { radius, opacity } => {
                    let _ = write!(
                        out,
                        r#"<g fill="{}" fill-opacity="{}">"#,
                        s.color,
                        f(opacity)
                    );
                    for &(vx, vy) in s.points.iter().filter(|(a, b)| a.is_finite() && b.is_finite()) {
                        let _ = write!(
                            out,
                            r#"<circle cx="{}" cy="{}" r="{}"/>"#,
                            f(sx(vx)),
                            f(sy(vy)),
                            f(radius)
                        );
                    }
                    out.push_str("</g>\n");
                }
                Style::Line | Style::Dashed => {
                    let dash = if s.style == Style::Dashed {
                        r#" stroke-dasharray="6 4""#
                    } else {
                        ""
                    };
                    let pts: Vec<String> = s
                        .points
                        .iter()
                        .filter(|(a, b)| a.is_finite() && b.is_finite())
                        .map(|&(vx, vy)| format!("{},{}", f(sx(vx)), f(sy(vy))))
                        .collect();
                    let _ = writeln!(
                        out,
                        r#"<polyline fill="none" stroke="{}" stroke-width="1.6"{} points="{}"/>"#,
                        s.color,
                        dash,
                        pts.join(" ")
                    );
                }
            }
        }
        out.push_str("</g>\n");

        if self.legend && !self.series.is_empty() {
            for (i, s) in self.series.iter().enumerate() {
                let ly = py + 12.0 + 14.0 * i as f64;
                let lx = px + pw - 8.0;
                let swatch = match s.style {
                    Style::Scatter { .. } => format!(
                        r#"<circle cx="{}" cy="{}" r="3" fill="{}"/>"#,
                        f(lx - 6.0),
                        f(ly - 3.5),
                        s.color
                    ),
                    Style::Line | Style::Dashed => format!(
                        r#"<line x1="{0}" y1="{2}" x2="{1}" y2="{2}" stroke="{3}" stroke-width="2"{4}/>"#,
                        f(lx - 14.0),
                        f(lx),
                        f(ly - 3.5),
                        s.color,
                        if s.style == Style::Dashed {
                            r#" stroke-dasharray="4 2""#
                        } else {
                            ""
                        }
                    ),
                };
                let _ = writeln!(
                    out,
                    r#"{}<text x="{}" y="{}" text-anchor="end" font-size="10">{}</text>"#,
                    swatch,
                    f(lx - 18.0),
                    f(ly),
                    escape(&s.label)
                );
            }
        }
        out.push_str("</g>\n");
    }
}

/// Lays charts out row by row, `columns` per row, each `cell_w × cell_h`.
pub fn grid_svg(title: &str, charts: &[Chart], columns: usize, cell_w: f64, cell_h: f64) -> String {
    let columns = columns.max(1);
    let rows = charts.len().div_ceil(columns).max(1);
    let header = 28.0;
    let width = cell_w * columns as f64;
    let height = header + cell_h * rows as f64;
    let mut out = String::new();
    open_svg(&mut out, width, height);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="19" text-anchor="middle" font-size="15" font-weight="bold">{}</text>"#,
        f(width / 2.0),
        escape(title)
    );
    for (i, chart) in charts.iter().enumerate() {
        let (r, c) = (i / columns, i % columns);
        chart.render(
            &mut out,
            c as f64 * cell_w,
            header + r as f64 * cell_h,
            cell_w,
            cell_h,
        );
    }
    out.push_str("</svg>\n");
    out
}

fn open_svg(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{1}" viewBox="0 0 {0} {1}" font-family="sans-serif">"#,
        f(width),
        f(height)
    );
    let _ = writeln!(
        out,
        r#"<rect width="{}" height="{}" fill="white"/>"#,
        f(width),
        f(height)
    );
}

fn f(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Round tick positions covering `[lo, hi]`, about `target` of them.
pub fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Vec::new();
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
