use rand::prelude::*;
use rand::seq::index;

use super::value::ValueFunction;
use super::{Attribution, BackgroundMode, BackgroundSet, Diagnostics, ExplainerKind, PlayerScheme};
use crate::data::WindowedSample;
use crate::linalg::{cholesky_solve, weighted_normal_equations};
use crate::predict::Predictor;
use crate::rng::stream_rng;
use crate::{Error, Result};

pub const RIDGE_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LimeConfig {
    /// Defaults to `10 * M`.
    pub num_perturbations: Option<usize>,
    /// Defaults to `0.75 * sqrt(M)`.
    pub kernel_width: Option<f64>,
    pub top_k: Option<usize>,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self { num_perturbations: None, kernel_width: None, top_k: None, seed: 0 }
    }
}

pub fn default_kernel_width(players: usize) -> f64 {
    0.75 * (players as f64).sqrt()
}

/// Weighted ridge with an unpenalized intercept. Returns `(intercept, coefficients)`.
fn weighted_ridge(z: &[Vec<bool>], cols: &[usize], y: &[f64], w: &[f64]) -> Result<(f64, Vec<f64>)> {
    let total: f64 = w.iter().sum();
    let k = cols.len();
    let mut mean = vec![0.0; k];
    for (row, &wi) in z.iter().zip(w) {
        for (m, &c) in mean.iter_mut().zip(cols) {
            *m += wi * f64::from(u8::from(row[c]));
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let y_mean = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total;
    let mut design = Vec::with_capacity(z.len() * k);
    for row in z {
        design.extend(cols.iter().zip(&mean).map(|(&c, m)| f64::from(u8::from(row[c])) - m));
    }
    let centered: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let (mut gram, rhs) = weighted_normal_equations(&design, z.len(), k, w, &centered);
    for i in 0..k {
        gram[(i, i)] += RIDGE_ALPHA;
    }
    let beta = cholesky_solve(&gram, &rhs, 0.0)?;
    let intercept = y_mean - beta.iter().zip(&mean).map(|(b, m)| b * m).sum::<f64>();
    Ok((intercept, beta))
}

/// Local linear surrogate over binary keep/replace indicators.
///
/// Switched-off players take the background's mean row.
pub fn lime_explain(
    predictor: &dyn Predictor,
    sample: &WindowedSample,
    background: &BackgroundSet,
    scheme: &PlayerScheme,
    cfg: &LimeConfig,
) -> Result<Attribution> {
    let m = scheme.len();
    if m == 0 {
        return Err(Error::InvalidArgument("no players to explain".into()));
    }
    let n = cfg.num_perturbations.unwrap_or(10 * m);
    if n < 2 {
        return Err(Error::InsufficientSamples { requested: n, minimum: 2, players: m });
    }
    let width = cfg.kernel_width.unwrap_or_else(|| default_kernel_width(m));
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::KernelWidth(format!("width must be positive and finite, got {width}")));
    }
    if let Some(k) = cfg.top_k {
        if k == 0 || k > m {
            return Err(Error::InvalidArgument(format!("top_k must be in 1..={m}, got {k}")));
        }
    }
    predictor.input_shape().check(&sample.values)?;
    let mean = BackgroundSet::from_rows(BackgroundMode::Mean, background.shape(), 0, background.mean_row());
    let vf = ValueFunction::new(predictor, sample.values.as_slice(), &mean, scheme)?;

    let mut rng = stream_rng(cfg.seed, "lime", sample.sample_id);
    let mut z = Vec::with_capacity(n);
    z.push(vec![true; m]);
    for _ in 1..n {
        let off = rng.gen_range(1..=m);
        let mut row = vec![true; m];
        for j in index::sample(&mut rng, m, off) {
            row[j] = false;
        }
        z.push(row);
    }
    let mut y = vf.evaluate(n - 1, |c, j| z[c + 1][j])?;
    let fx = vf.full()?;
    y.insert(0, fx);
    let weights: Vec<f64> = z
        .iter()
        .map(|row| {
            let d2 = row.iter().filter(|&&b| !b).count() as f64;
            (-d2 / (width * width)).exp()
        })
        .collect();
    if weights[1..].iter().all(|&w| w == 0.0) {
        return Err(Error::KernelWidth(format!(
            "width {width} leaves no weight on any perturbed sample"
        )));
    }

    let all: Vec<usize> = (0..m).collect();
    let (mut intercept, mut beta) = weighted_ridge(&z, &all, &y, &weights)?;
    if let Some(k) = cfg.top_k.filter(|&k| k < m) {
        let mut order = all.clone();
        order.sort_by(|&a, &b| beta[b].abs().total_cmp(&beta[a].abs()).then(a.cmp(&b)));
        let mut keep = order[..k].to_vec();
        keep.sort_unstable();
        let (b0, sub) = weighted_ridge(&z, &keep, &y, &weights)?;
        intercept = b0;
        beta = vec![0.0; m];
        for (&j, v) in keep.iter().zip(sub) {
            beta[j] = v;
        }
    }
    if beta.iter().any(|v| !v.is_finite()) || !intercept.is_finite() {
        return Err(Error::NonFinite("lime produced a non-finite coefficient".into()));
    }
    Ok(Attribution::from_players(
        ExplainerKind::Lime,
        sample.sample_id,
        cfg.seed,
        intercept,
        fx,
        scheme,
        &beta,
        Diagnostics { coalitions: n, residual: intercept + beta.iter().sum::<f64>() - fx },
    ))
}
