use super::value::ValueFunction;
use super::{Attribution, BackgroundSet, Diagnostics, ExplainerKind, PlayerScheme};
use crate::data::WindowedSample;
use crate::linalg::CompensatedSum;
use crate::predict::Predictor;
use crate::{Error, Result};

pub const EXACT_PLAYER_LIMIT: usize = 20;

/// `binom[k] = C(n, k)` as reals.
pub(crate) fn binomials(n: usize) -> Vec<f64> {
    let mut row = vec![1.0; n + 1];
    for k in 1..=n {
        row[k] = row[k - 1] * (n - k + 1) as f64 / k as f64;
    }
    row
}

/// Shapley values by enumerating all `2^M` coalitions.
pub fn exact_shapley(
    predictor: &dyn Predictor,
    sample: &WindowedSample,
    background: &BackgroundSet,
    scheme: &PlayerScheme,
) -> Result<Attribution> {
    let m = scheme.len();
    if m > EXACT_PLAYER_LIMIT {
        return Err(Error::EnumerationLimit { players: m, limit: EXACT_PLAYER_LIMIT });
    }
    predictor.input_shape().check(&sample.values)?;
    let vf = ValueFunction::new(predictor, sample.values.as_slice(), background, scheme)?;
    let total = 1usize << m;
    let fx = vf.full()?;
    let mut v = vf.evaluate(total - 1, |c, j| c >> j & 1 == 1)?;
    v.push(fx);

    let binom = binomials(m.saturating_sub(1));
    let weight: Vec<f64> = (0..m).map(|s| 1.0 / (m as f64 * binom[s])).collect();
    let mut phi = Vec::with_capacity(m);
    for i in 0..m {
        let bit = 1usize << i;
        let mut acc = CompensatedSum::default();
        for s in 0..total {
            if s & bit == 0 {
                acc.add(weight[s.count_ones() as usize] * (v[s | bit] - v[s]));
            }
        }
        phi.push(acc.value());
    }
    let base = v[0];
    Ok(Attribution::from_players(
        ExplainerKind::ExactShapley,
        sample.sample_id,
        0,
        base,
        fx,
        scheme,
        &phi,
        Diagnostics { coalitions: total, residual: base + phi.iter().sum::<f64>() - fx },
    ))
}
