use super::players::PlayerScheme;
use super::background::BackgroundSet;
use crate::linalg::CompensatedSum;
use crate::predict::Predictor;
use crate::{Error, Result};

/// Composite rows per predictor call.
const CHUNK_ROWS: usize = 8192;

/// Interventional value function `v(S) = mean_b f(x_S, b_rest)`.
pub(crate) struct ValueFunction<'a> {
    predictor: &'a dyn Predictor,
    sample: &'a [f64],
    background: &'a BackgroundSet,
    scheme: &'a PlayerScheme,
}

impl<'a> ValueFunction<'a> {
    pub(crate) fn new(
        predictor: &'a dyn Predictor,
        sample: &'a [f64],
        background: &'a BackgroundSet,
        scheme: &'a PlayerScheme,
    ) -> Result<Self> {
        let shape = predictor.input_shape();
        for other in [background.shape(), scheme.shape()] {
            if other != shape {
                return Err(Error::ShapeMismatch {
                    expected_features: shape.n_features,
                    expected_days: shape.window_length,
                    actual_features: other.n_features,
                    actual_days: other.window_length,
                });
            }
        }
        assert_eq!(sample.len(), shape.columns());
        Ok(Self { predictor, sample, background, scheme })
    }

    pub(crate) fn players(&self) -> usize {
        self.scheme.len()
    }

    /// `f(x)` for the explained sample itself.
    pub(crate) fn full(&self) -> Result<f64> {
        let p = self.predictor.predict_rows(self.sample)?;
        finite(p[0])
    }

    /// Evaluates `count` coalitions; `member(c, j)` says whether player `j` is in coalition `c`.
    pub(crate) fn evaluate(&self, count: usize, member: impl Fn(usize, usize) -> bool) -> Result<Vec<f64>> {
        let cols = self.sample.len();
        let b = self.background.len();
        let per_chunk = (CHUNK_ROWS / b).max(1);
        let mut out = Vec::with_capacity(count);
        let mut rows = Vec::with_capacity(per_chunk * b * cols);
        let mut start = 0;
        while start < count {
            let end = (start + per_chunk).min(count);
            rows.clear();
            for c in start..end {
                let players: Vec<usize> = (0..self.players()).filter(|&j| member(c, j)).collect();
                for i in 0..b {
                    let at = rows.len();
                    rows.extend_from_slice(self.background.row(i));
                    for &j in &players {
                        for &cell in &self.scheme.players()[j].cells {
                            rows[at + cell] = self.sample[cell];
                        }
                    }
                }
            }
            let preds = self.predictor.predict_rows(&rows)?;
            if preds.len() != (end - start) * b {
                return Err(Error::Transport(format!(
                    "expected {} predictions, got {}",
                    (end - start) * b,
                    preds.len()
                )));
            }
            for chunk in preds.chunks_exact(b) {
                let mut s = CompensatedSum::default();
                for &p in chunk {
                    s.add(finite(p)?);
                }
                out.push(s.value() / b as f64);
            }
            start = end;
        }
        Ok(out)
    }
}

fn finite(p: f64) -> Result<f64> {
    if p.is_finite() {
        Ok(p)
    } else {
        Err(Error::NonFinite(format!("predictor returned {p}")))
    }
}
