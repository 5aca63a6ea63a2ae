//! L2-regularized logistic regression on standardized columns.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_binary_labels, sigmoid};
use crate::rng::stream_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub l2: f64,
    pub epochs: usize,
    pub step: f64,
    /// `None` means full-batch gradient descent.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            epochs: 300,
            step: 0.5,
            batch_size: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    offsets: Vec<f64>,
    scales: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

impl LogisticModel {
    /// Model over raw inputs: `p = sigmoid(intercept + w · x)`.
    pub fn from_coefficients(weights: Vec<f64>, intercept: f64) -> Self {
        let c = weights.len();
        Self {
            offsets: vec![0.0; c],
            scales: vec![1.0; c],
            weights,
            bias: intercept,
        }
    }

    pub fn fit(rows: &[f64], labels: &[u8], columns: usize, cfg: &LogisticConfig) -> Result<Self> {
        check_binary_labels(labels)?;
        if !(cfg.l2 >= 0.0) || !(cfg.step > 0.0) || cfg.batch_size == Some(0) {
            return Err(Error::InvalidArgument("logistic: l2 >= 0, step > 0, batch_size >= 1".into()));
        }
        let n = labels.len();
        let mut offsets = vec![0.0; columns];
        let mut scales = vec![1.0; columns];
        for c in 0..columns {
            let mean = (0..n).map(|i| rows[i * columns + c]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (rows[i * columns + c] - mean).powi(2)).sum::<f64>() / n as f64;
            offsets[c] = mean;
            scales[c] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let x: Vec<f64> = rows
            .chunks_exact(columns)
            .flat_map(|r| r.iter().enumerate().map(|(c, v)| (v - offsets[c]) / scales[c]).collect::<Vec<_>>())
            .collect();
        let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();

        let mut w = vec![0.0; columns];
        let mut b = 0.0;
        let mut order: Vec<usize> = (0..n).collect();
        let batch = cfg.batch_size.unwrap_or(n).min(n);
        let mut gw = vec![0.0; columns];
        for epoch in 0..cfg.epochs {
            if cfg.batch_size.is_some() {
                order.shuffle(&mut stream_rng(cfg.seed, "logistic/epoch", epoch as u64));
            }
            for chunk in order.chunks(batch) {
                gw.iter_mut().for_each(|g| *g = 0.0);
                let mut gb = 0.0;
                for &i in chunk {
                    let row = &x[i * columns..(i + 1) * columns];
                    let z = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                    let r = sigmoid(z) - y[i];
                    gb += r;
                    for (g, a) in gw.iter_mut().zip(row) {
                        *g += r * a;
                    }
                }
                let m = chunk.len() as f64;
                for (wj, g) in w.iter_mut().zip(&gw) {
                    *wj -= cfg.step * (g / m + cfg.l2 * *wj);
                }
                b -= cfg.step * gb / m;
            }
            let loss = log_loss(&x, &y, &w, b, columns) + 0.5 * cfg.l2 * w.iter().map(|v| v * v).sum::<f64>();
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch: epoch + 1 });
            }
        }
        Ok(Self {
            offsets,
            scales,
            weights: w,
            bias: b,
        })
    }

    /// Coefficients on standardized columns.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(weights, intercept)` expressed on raw inputs.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let w: Vec<f64> = self.weights.iter().zip(&self.scales).map(|(w, s)| w / s).collect();
        let intercept = self.bias - w.iter().zip(&self.offsets).map(|(w, m)| w * m).sum::<f64>();
        (w, intercept)
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let z = self.bias
            + row
                .iter()
                .zip(&self.weights)
                .enumerate()
                .map(|(c, (v, w))| w * (v - self.offsets[c]) / self.scales[c])
                .sum::<f64>();
        sigmoid(z)
    }
}

fn log_loss(x: &[f64], y: &[f64], w: &[f64], b: f64, columns: usize) -> f64 {
    let n = y.len();
    let mut total = 0.0;
    for i in 0..n {
        let z = b + x[i * columns..(i + 1) * columns].iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        // log(1 + e^z) - y z, evaluated without overflow
        let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        total += softplus - y[i] * z;
    }
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_one_half() {
        let m = LogisticModel::from_coefficients(vec![0.0; 3], 0.0);
        assert_eq!(m.predict_row(&[5.0, -2.0, 1e6]), 0.5);
    }

    #[test]
    fn duplicated_columns_learn_equal_weights() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let a = (i as f64 * 0.37).sin();
            let b = (i as f64 * 1.3).cos();
            rows.extend([a, a, b]);
            labels.push(u8::from(a + 0.3 * b > 0.0));
        }
        for batch_size in [None, Some(7)] {
            let cfg = LogisticConfig { batch_size, seed: 3, ..Default::default() };
            let m = LogisticModel::fit(&rows, &labels, 3, &cfg).unwrap();
            assert!((m.weights()[0] - m.weights()[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_input_reports_epoch() {
        let rows = [0.0, f64::NAN, 1.0, 2.0];
        assert!(matches!(
            LogisticModel::fit(&rows, &[0, 1, 0, 1], 1, &LogisticConfig::default()),
            Err(Error::Divergence { epoch: 1 })
        ));
    }

    #[test]
    fn raw_coefficients_reproduce_predictions() {
        let rows: Vec<f64> = (0..50).flat_map(|i| [i as f64, (i % 7) as f64 * 10.0]).collect();
        let labels: Vec<u8> = (0..50).map(|i| u8::from(i % 3 == 0 || i > 35)).collect();
        let m = LogisticModel::fit(&rows, &labels, 2, &LogisticConfig::default()).unwrap();
        let (w, b) = m.raw_coefficients();
        let raw = LogisticModel::from_coefficients(w, b);
        for r in rows.chunks(2) {
            assert!((m.predict_row(r) - raw.predict_row(r)).abs() < 1e-12);
        }
    }
}
