use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{flatten, WindowedSample};
use crate::predict::{evaluate_accuracy, predicted_label, Predictor};
use crate::rng::stream_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationScore {
    pub feature: usize,
    /// Baseline accuracy minus mean permuted accuracy.
    pub score: f64,
    /// Population standard deviation of the drop across repeats.
    pub std: f64,
}

/// Accuracy drop when one feature's whole series is shuffled across samples.
pub fn permutation_importance(
    predictor: &dyn Predictor,
    split: &[WindowedSample],
    repeats: usize,
    seed: u64,
) -> Result<Vec<PermutationScore>> {
    if split.is_empty() {
        return Err(Error::EmptyInput("permutation importance needs a non-empty split".into()));
    }
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let baseline = evaluate_accuracy(predictor, split)?.accuracy;
    let shape = predictor.input_shape();
    let (l, cols) = (shape.window_length, shape.columns());
    let (rows, labels) = flatten(split);
    let n = split.len();
    let mut out = Vec::with_capacity(shape.n_features);
    let mut permuted = rows.clone();
    for f in 0..shape.n_features {
        let mut drops = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut stream_rng(seed, &format!("permutation/{f}"), r as u64));
            for (dst, &src) in order.iter().enumerate() {
                let (d, s) = (dst * cols + f * l, src * cols + f * l);
                permuted[d..d + l].copy_from_slice(&rows[s..s + l]);
            }
            let probs = predictor.predict_rows(&permuted)?;
            let hits = probs.iter().zip(&labels).filter(|(&p, &y)| predicted_label(p) == y).count();
            drops.push(baseline - hits as f64 / n as f64);
        }
        for i in 0..n {
            let d = i * cols + f * l;
            permuted[d..d + l].copy_from_slice(&rows[d..d + l]);
        }
        let mean = drops.iter().sum::<f64>() / repeats as f64;
        let var = drops.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / repeats as f64;
        out.push(PermutationScore { feature: f, score: mean, std: var.sqrt() });
    }
    Ok(out)
}
