use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::WindowedSample;
use crate::linalg::CompensatedSum;
use crate::predict::InputShape;
use crate::rng::stream_rng;
use crate::{Error, Result};

pub const DEFAULT_BACKGROUND_SIZE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    Sampled,
    Mean,
}

impl fmt::Display for BackgroundMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackgroundMode::Sampled => "sampled",
            BackgroundMode::Mean => "mean",
        })
    }
}

impl FromStr for BackgroundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled" => Ok(BackgroundMode::Sampled),
            "mean" => Ok(BackgroundMode::Mean),
            _ => Err(Error::InvalidArgument(format!("unknown background mode `{s}` (sampled|mean)"))),
        }
    }
}

/// Reference rows defining the value function.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSet {
    mode: BackgroundMode,
    shape: InputShape,
    seed: u64,
    rows: Vec<f64>,
    digest: String,
}

impl BackgroundSet {
    /// Draws `size` training samples without replacement (all of them if fewer).
    pub fn sample(train: &[WindowedSample], size: usize, seed: u64) -> Result<Self> {
        let shape = shape_of(train)?;
        if size == 0 {
            return Err(Error::InvalidArgument("background size must be at least 1".into()));
        }
        let mut picked: Vec<usize> = if size >= train.len() {
            (0..train.len()).collect()
        } else {
            sample(&mut stream_rng(seed, "background", 0), train.len(), size).into_vec()
        };
        picked.sort_unstable();
        let rows = picked.iter().flat_map(|&i| train[i].values.as_slice().iter().copied()).collect();
        Ok(Self::from_rows(BackgroundMode::Sampled, shape, seed, rows))
    }

    /// Single row of per-cell training means.
    pub fn mean(train: &[WindowedSample]) -> Result<Self> {
        let shape = shape_of(train)?;
        let rows = (0..shape.columns())
            .map(|c| {
                let mut s = CompensatedSum::default();
                for w in train {
                    s.add(w.values.as_slice()[c]);
                }
                s.value() / train.len() as f64
            })
            .collect();
        Ok(Self::from_rows(BackgroundMode::Mean, shape, 0, rows))
    }

    pub fn from_rows(mode: BackgroundMode, shape: InputShape, seed: u64, rows: Vec<f64>) -> Self {
        assert!(!rows.is_empty() && rows.len() % shape.columns() == 0, "background rows do not match shape");
        let mut h = Sha256::new();
        h.update(mode.to_string().as_bytes());
        h.update((shape.n_features as u64).to_le_bytes());
        h.update((shape.window_length as u64).to_le_bytes());
        for v in &rows {
            h.update(v.to_bits().to_le_bytes());
        }
        let digest = hex::encode(h.finalize());
        Self { mode, shape, seed, rows, digest }
    }

    pub fn mode(&self) -> BackgroundMode {
        self.mode
    }

    pub fn shape(&self) -> InputShape {
        self.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.shape.columns()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.shape.columns();
        &self.rows[i * c..(i + 1) * c]
    }

    /// Per-cell mean over the rows.
    pub fn mean_row(&self) -> Vec<f64> {
        let c = self.shape.columns();
        (0..c)
            .map(|j| {
                let mut s = CompensatedSum::default();
                for i in 0..self.len() {
                    s.add(self.rows[i * c + j]);
                }
                s.value() / self.len() as f64
            })
            .collect()
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }
}

fn shape_of(train: &[WindowedSample]) -> Result<InputShape> {
    let first = train
        .first()
        .ok_or_else(|| Error::EmptyInput("background needs at least one training sample".into()))?;
    Ok(InputShape::new(first.values.n_features(), first.values.window_length()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Window;

    fn train(n: usize) -> Vec<WindowedSample> {
        (0..n)
            .map(|i| WindowedSample::new(i as u64, 0, None, Window::filled(2, 2, i as f64)))
            .collect()
    }

    #[test]
    fn sampling_is_seeded_and_without_replacement() {
        let t = train(50);
        let a = BackgroundSet::sample(&t, 10, 7).unwrap();
        let b = BackgroundSet::sample(&t, 10, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let mut firsts: Vec<u64> = (0..10).map(|i| a.row(i)[0] as u64).collect();
        firsts.dedup();
        assert_eq!(firsts.len(), 10);
        assert_ne!(a.digest(), BackgroundSet::sample(&t, 10, 8).unwrap().digest());
        assert_eq!(BackgroundSet::sample(&t, 500, 1).unwrap().len(), 50);
    }

    #[test]
    fn mean_mode_has_one_row() {
        let m = BackgroundSet::mean(&train(4)).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.row(0), &[1.5, 1.5, 1.5, 1.5]);
    }
}
