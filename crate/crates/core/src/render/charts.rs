use super::{fmt3, PlotStyle, Svg};
use crate::{Error, Result};

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];
const MARGIN: f64 = 50.0;
const LEGEND_WIDTH: f64 = 150.0;

fn y_range(lo: f64, hi: f64) -> (f64, f64) {
    let (lo, hi) = (lo.min(0.0), hi.max(0.0));
    if hi - lo > 0.0 {
        (lo, hi)
    } else {
        (-1.0, 1.0)
    }
}

/// One polyline per series over days `1..=L`, with a zero baseline.
pub fn render_curves(series: &[(String, Vec<f64>)], title: &str, style: &PlotStyle) -> Result<String> {
    style.validate()?;
    let first = series.first().ok_or_else(|| Error::EmptyInput("no series to plot".into()))?;
    let len = first.1.len();
    if len == 0 {
        return Err(Error::EmptyInput(format!("series `{}` is empty", first.0)));
    }
    if let Some((name, s)) = series.iter().find(|(_, s)| s.len() != len) {
        return Err(Error::Mismatch(format!("series `{name}` has {} points, expected {len}", s.len())));
    }
    let all = series.iter().flat_map(|(_, s)| s.iter().copied());
    if all.clone().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("series contain non-finite values".into()));
    }
    let (lo, hi) = y_range(all.clone().fold(f64::INFINITY, f64::min), all.fold(f64::NEG_INFINITY, f64::max));

    let (w, h) = (style.width, style.height);
    let plot_w = w - 2.0 * MARGIN - LEGEND_WIDTH;
    let plot_h = h - 2.0 * MARGIN;
    let x_of = |t: usize| MARGIN + if len > 1 { plot_w * t as f64 / (len - 1) as f64 } else { plot_w / 2.0 };
    let y_of = |v: f64| MARGIN + plot_h * (hi - v) / (hi - lo);

    let mut svg = Svg::new(w, h, style);
    let fs = svg.font_size();
    svg.text(MARGIN, MARGIN / 2.0, "start", title);
    svg.rect(MARGIN, MARGIN, plot_w, plot_h, "none", Some("#c0c0c0"));
    svg.line(MARGIN, y_of(0.0), MARGIN + plot_w, y_of(0.0), "#404040", 1.0);
    for v in [hi, 0.0, lo] {
        svg.text(MARGIN - 4.0, y_of(v) + fs * 0.35, "end", &fmt3(v));
    }
    for t in 0..len {
        if t == 0 || (t + 1) % 5 == 0 || t + 1 == len {
            svg.text(x_of(t), MARGIN + plot_h + fs + 4.0, "middle", &(t + 1).to_string());
        }
    }
    svg.text(MARGIN + plot_w / 2.0, h - 10.0, "middle", "day");
    for (k, (name, s)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s.iter().enumerate().map(|(t, &v)| (x_of(t), y_of(v))).collect();
        svg.polyline(&pts, color);
        let ly = MARGIN + k as f64 * (fs + 6.0);
        let lx = MARGIN + plot_w + 20.0;
        svg.line(lx, ly, lx + 18.0, ly, color, 2.0);
        svg.text(lx + 24.0, ly + fs * 0.35, "start", name);
    }
    Ok(svg.finish())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

/// Equal-width bins over `[min, max]`; the maximum falls in the last bin.
pub fn histogram_counts(values: &[f64], bins: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::EmptyInput("no values to bin".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be at least 1".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("histogram values must be finite".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let b = if width > 0.0 { (((v - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[b] += 1;
    }
    Ok(Histogram { lo, hi, counts })
}

pub fn render_histogram(values: &[f64], bins: usize, title: &str, style: &PlotStyle) -> Result<String> {
    style.validate()?;
    let hist = histogram_counts(values, bins)?;
    let (w, h) = (style.width, style.height);
    let plot_w = w - 2.0 * MARGIN;
    let plot_h = h - 2.0 * MARGIN;
    let peak = *hist.counts.iter().max().expect("bins >= 1") as f64;
    let bar_w = plot_w / bins as f64;

    let mut svg = Svg::new(w, h, style);
    let fs = svg.font_size();
    svg.text(MARGIN, MARGIN / 2.0, "start", title);
    svg.line(MARGIN, MARGIN + plot_h, MARGIN + plot_w, MARGIN + plot_h, "#404040", 1.0);
    for (k, &c) in hist.counts.iter().enumerate() {
        let bh = plot_h * c as f64 / peak;
        svg.rect(MARGIN + bar_w * k as f64, MARGIN + plot_h - bh, bar_w, bh, "#4c72b0", Some("#ffffff"));
    }
    svg.text(MARGIN, MARGIN + plot_h + fs + 4.0, "start", &fmt3(hist.lo));
    svg.text(MARGIN + plot_w, MARGIN + plot_h + fs + 4.0, "end", &fmt3(hist.hi));
    svg.text(MARGIN - 4.0, MARGIN + fs * 0.35, "end", &format!("{peak}"));
    svg.text(MARGIN - 4.0, MARGIN + plot_h, "end", "0");
    svg.text(MARGIN + plot_w / 2.0, h - 10.0, "middle", &format!("n = {}", values.len()));
    Ok(svg.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_values_fill_one_bin() {
        let h = histogram_counts(&[3.0; 100], 5).unwrap();
        assert_eq!(h.counts, vec![100, 0, 0, 0, 0]);
    }

    #[test]
    fn uniform_integers_fill_bins_evenly() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(histogram_counts(&v, 10).unwrap().counts, vec![1; 10]);
        assert!(histogram_counts(&[], 3).is_err());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let s = vec![("a".to_string(), vec![0.0, 1.0]), ("b".to_string(), vec![0.0])];
        assert!(render_curves(&s, "t", &PlotStyle::default()).is_err());
    }
}
