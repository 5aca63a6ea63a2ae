use super::{colormap, fmt3, hex, PlotStyle, Svg, WHITE};
use crate::analytics::{AttributionSummary, FeatureRanking};
use crate::{Error, Result};

const LEGEND_STEPS: usize = 11;
const LEGEND_WIDTH: f64 = 150.0;

/// One dot per (feature, day): features top to bottom in ranking order, days left to right.
pub fn render_temporal_scatter(
    summary: &AttributionSummary,
    names: &[String],
    ranking: &FeatureRanking,
    style: &PlotStyle,
) -> Result<String> {
    style.validate()?;
    if summary.count == 0 {
        return Err(Error::EmptyInput("summary aggregates no samples".into()));
    }
    let shown = match style.min_score {
        Some(min) => ranking.filter_min_score(min),
        None => ranking.clone(),
    };
    if shown.is_empty() {
        return Err(Error::InvalidArgument("no features left to display after the score filter".into()));
    }
    let rows: Vec<(String, usize)> = shown
        .entries()
        .iter()
        .map(|e| {
            names
                .iter()
                .position(|n| *n == e.feature)
                .map(|i| (e.feature.clone(), i))
                .ok_or_else(|| Error::UnknownFeature(e.feature.clone()))
        })
        .collect::<Result<_>>()?;
    let l = summary.values.window_length();
    let vmax = match style.vmax {
        Some(v) => v,
        None => rows
            .iter()
            .flat_map(|&(_, i)| summary.values.row(i).iter().map(|v| v.abs()))
            .fold(0.0, f64::max),
    };
    if !vmax.is_finite() {
        return Err(Error::NonFinite("summary contains non-finite values".into()));
    }

    let fs = style.font_size;
    let longest = rows.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0) as f64;
    let left = 16.0 + 0.6 * fs * longest;
    let top = 40.0;
    let grid_w = style.cell * l as f64;
    let grid_h = style.cell * rows.len() as f64;
    let width = left + grid_w + LEGEND_WIDTH;
    let height = (top + grid_h + 3.0 * fs + 16.0).max(top + (LEGEND_STEPS as f64 + 5.0) * (fs + 4.0));
    let mut svg = Svg::new(width, height, style);
    svg.text(left, 20.0, "start", "Mean attribution by feature and day");
    svg.rect(left, top, grid_w, grid_h, "none", Some("#c0c0c0"));

    for (r, (name, _)) in rows.iter().enumerate() {
        let y = top + style.cell * (r as f64 + 0.5);
        svg.text(left - 6.0, y + fs * 0.35, "end", name);
    }
    for t in 0..l {
        if t == 0 || (t + 1) % 5 == 0 || t + 1 == l {
            let x = left + style.cell * (t as f64 + 0.5);
            svg.text(x, top + grid_h + fs + 4.0, "middle", &(t + 1).to_string());
        }
    }
    svg.text(left + grid_w / 2.0, top + grid_h + 2.0 * fs + 10.0, "middle", "day");

    for (r, &(_, i)) in rows.iter().enumerate() {
        let y = top + style.cell * (r as f64 + 0.5);
        for t in 0..l {
            let v = summary.values.get(i, t);
            let color = if vmax > 0.0 { colormap(v, vmax)? } else { WHITE };
            let x = left + style.cell * (t as f64 + 0.5);
            svg.circle(x, y, style.radius(v, vmax), &hex(color));
        }
    }

    let lx = left + grid_w + 20.0;
    let step = svg.font_size() + 4.0;
    let mut y = top;
    for line in [
        format!("explainer: {}", summary.explainer),
        format!("n = {}", summary.count),
        format!("group: {}", summary.group_key),
    ] {
        svg.text(lx, y, "start", &line);
        y += step;
    }
    y += 4.0;
    for k in 0..LEGEND_STEPS {
        let v = vmax * (1.0 - 2.0 * k as f64 / (LEGEND_STEPS - 1) as f64);
        let color = if vmax > 0.0 { colormap(v, vmax)? } else { WHITE };
        svg.rect(lx, y, 14.0, step, &hex(color), Some("#808080"));
        svg.text(lx + 20.0, y + step * 0.75, "start", &fmt3(v));
        y += step;
    }
    Ok(svg.finish())
}
