//! Deterministic SVG figures: temporal attribution scatter, importance
//! curves and value histograms.

mod charts;
mod scatter;

use std::fmt::Write as _;

pub use charts::{histogram_counts, render_curves, render_histogram, Histogram};
pub use scatter::render_temporal_scatter;

use crate::{Error, Result};

pub const WHITE: [u8; 3] = [255, 255, 255];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub r_min: f64,
    pub r_max: f64,
    /// Symmetric color range; `None` uses the largest displayed `|value|`.
    pub vmax: Option<f64>,
    /// Grid pitch of the scatter, in user units.
    pub cell: f64,
    /// Canvas size for curves and histograms.
    pub width: f64,
    pub height: f64,
    pub font_family: String,
    pub font_size: f64,
    /// Hide features whose ranking score is below this.
    pub min_score: Option<f64>,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            r_min: 1.0,
            r_max: 9.0,
            vmax: None,
            cell: 22.0,
            width: 720.0,
            height: 420.0,
            font_family: "sans-serif".into(),
            font_size: 11.0,
            min_score: None,
        }
    }
}

impl PlotStyle {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_min >= 0.0 && self.r_max >= self.r_min && self.r_max.is_finite()) {
            return Err(Error::InvalidArgument("radius range needs 0 <= r_min <= r_max".into()));
        }
        if let Some(v) = self.vmax {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("vmax must be positive, got {v}")));
            }
        }
        if !(self.cell > 0.0 && self.width > 0.0 && self.height > 0.0 && self.font_size > 0.0) {
            return Err(Error::InvalidArgument("canvas sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn radius(&self, value: f64, vmax: f64) -> f64 {
        let t = if vmax > 0.0 { (value.abs() / vmax).min(1.0) } else { 0.0 };
        self.r_min + (self.r_max - self.r_min) * t
    }
}

fn channel(x: f64) -> u8 {
    (x + 0.5).floor() as u8
}

/// Blue-white-red map on `[-vmax, vmax]`, values outside clamped.
pub fn colormap(value: f64, vmax: f64) -> Result<[u8; 3]> {
    if !(vmax > 0.0) || !vmax.is_finite() {
        return Err(Error::InvalidArgument(format!("vmax must be positive, got {vmax}")));
    }
    if value.is_nan() {
        return Err(Error::NonFinite("cannot color NaN".into()));
    }
    let t = (value.abs() / vmax).min(1.0);
    let c = channel(255.0 * (1.0 - t));
    Ok(if value >= 0.0 { [255, c, c] } else { [c, c, 255] })
}

pub(crate) fn hex([r, g, b]: [u8; 3]) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Fixed three-decimal formatting with negative zero folded to zero.
pub fn fmt3(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(ch),
        }
    }
    out
}

/// Minimal SVG document writer.
pub(crate) struct Svg {
    out: String,
    font_size: f64,
}

impl Svg {
    pub(crate) fn new(width: f64, height: f64, style: &PlotStyle) -> Self {
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"{f}\" font-size=\"{s}\">",
            w = fmt3(width),
            h = fmt3(height),
            f = escape(&style.font_family),
            s = fmt3(style.font_size),
        );
        let _ = writeln!(out, "<rect x=\"0.000\" y=\"0.000\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>", fmt3(width), fmt3(height));
        Self { out, font_size: style.font_size }
    }

    pub(crate) fn font_size(&self) -> f64 {
        self.font_size
    }

    pub(crate) fn text(&mut self, x: f64, y: f64, anchor: &str, body: &str) {
        let _ = writeln!(
            self.out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\">{}</text>",
            fmt3(x),
            fmt3(y),
            escape(body)
        );
    }

    pub(crate) fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.out,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\" stroke-width=\"{}\"/>",
            fmt3(x1),
            fmt3(y1),
            fmt3(x2),
            fmt3(y2),
            fmt3(width)
        );
    }

    pub(crate) fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: Option<&str>) {
        let stroke = stroke.map(|s| format!(" stroke=\"{s}\"")).unwrap_or_default();
        let _ = writeln!(
            self.out,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\"{stroke}/>",
            fmt3(x),
            fmt3(y),
            fmt3(w),
            fmt3(h)
        );
    }

    pub(crate) fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.out,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{fill}\" stroke=\"#808080\" stroke-width=\"0.300\"/>",
            fmt3(cx),
            fmt3(cy),
            fmt3(r)
        );
    }

    pub(crate) fn polyline(&mut self, points: &[(f64, f64)], stroke: &str) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{},{}", fmt3(*x), fmt3(*y))).collect();
        let _ = writeln!(
            self.out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.500\"/>",
            pts.join(" ")
        );
    }

    pub(crate) fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}
