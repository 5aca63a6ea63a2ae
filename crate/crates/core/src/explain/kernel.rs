use std::collections::HashMap;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand::seq::index::sample;

use super::exact::binomials;
use super::value::ValueFunction;
use super::{Attribution, BackgroundSet, Diagnostics, ExplainerKind, PlayerScheme};
use crate::data::WindowedSample;
use crate::linalg::{cholesky_solve, weighted_normal_equations};
use crate::predict::Predictor;
use crate::rng::stream_rng;
use crate::{Error, Result};

const PIVOT_TOLERANCE: f64 = 1e-12;

pub fn default_coalitions(players: usize) -> usize {
    2 * players + 2048
}

/// Shapley kernel weight for a coalition of `size` out of `m` players.
pub fn shapley_kernel(m: usize, size: usize) -> f64 {
    let binom = binomials(m);
    (m - 1) as f64 / (binom[size] * size as f64 * (m - size) as f64)
}

struct Coalitions {
    masks: Vec<Vec<bool>>,
    weights: Vec<f64>,
    index: HashMap<Vec<bool>, usize>,
}

impl Coalitions {
    fn new() -> Self {
        Self { masks: Vec::new(), weights: Vec::new(), index: HashMap::new() }
    }

    /// Returns true when the mask was not present yet.
    fn add(&mut self, mask: Vec<bool>, weight: f64) -> bool {
        if let Some(&i) = self.index.get(&mask) {
            self.weights[i] += weight;
            return false;
        }
        self.index.insert(mask.clone(), self.masks.len());
        self.masks.push(mask);
        self.weights.push(weight);
        true
    }

    fn len(&self) -> usize {
        self.masks.len()
    }
}

fn for_each_subset(m: usize, size: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        f(&idx);
        let Some(pos) = (0..size).rev().find(|&i| idx[i] != i + m - size) else {
            return;
        };
        idx[pos] += 1;
        for i in pos + 1..size {
            idx[i] = idx[i - 1] + 1;
        }
    }
}

fn mask_of(m: usize, members: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; m];
    for &j in members {
        mask[j] = true;
    }
    mask
}

fn enumerate_all(m: usize) -> Coalitions {
    let mut set = Coalitions::new();
    for size in 1..m {
        let w = shapley_kernel(m, size);
        for_each_subset(m, size, |members| {
            set.add(mask_of(m, members), w);
        });
    }
    set
}

/// Enumerates whole coalition sizes (smallest and largest first) while the
/// budget covers them, then samples the remaining sizes in complementary pairs.
fn sample_coalitions(m: usize, budget: usize, rng: &mut impl Rng) -> Coalitions {
    let binom = binomials(m);
    let num_sizes = (m - 1).div_ceil(2);
    let num_paired = (m - 1) / 2;
    let mut weight: Vec<f64> = (1..=num_sizes).map(|s| (m - 1) as f64 / (s * (m - s)) as f64).collect();
    let total: f64 = weight.iter().sum();
    weight.iter_mut().for_each(|w| *w /= total);

    let mut set = Coalitions::new();
    let mut left = budget as f64;
    let mut remaining = weight.clone();
    let mut full_sizes = 0;
    for size in 1..=num_sizes {
        let paired = size <= num_paired;
        let count = binom[size] * if paired { 2.0 } else { 1.0 };
        if left * remaining[size - 1] / count < 1.0 - 1e-8 {
            break;
        }
        full_sizes += 1;
        left -= count;
        if remaining[size - 1] < 1.0 {
            let scale = 1.0 - remaining[size - 1];
            remaining.iter_mut().for_each(|w| *w /= scale);
        }
        let w = weight[size - 1] / count;
        for_each_subset(m, size, |members| {
            let mask = mask_of(m, members);
            if paired {
                set.add(mask.iter().map(|b| !b).collect(), w);
            }
            set.add(mask, w);
        });
    }
    if full_sizes == num_sizes {
        return set;
    }
    let fixed = set.len();
    let mut samples_left = left.round().max(0.0) as usize;
    let tail = &weight[full_sizes..];
    let dist = WeightedIndex::new(tail).expect("positive kernel weights");
    let mut draws = 4 * samples_left;
    while samples_left > 0 && draws > 0 {
        draws -= 1;
        let size = full_sizes + 1 + dist.sample(rng);
        let members = sample(rng, m, size).into_vec();
        let mask = mask_of(m, &members);
        let complement: Vec<bool> = mask.iter().map(|b| !b).collect();
        if set.add(mask, 1.0) {
            samples_left -= 1;
        }
        if samples_left > 0 && size <= num_paired && set.add(complement, 1.0) {
            samples_left -= 1;
        }
    }
    let weight_left: f64 = tail.iter().sum();
    let sampled: f64 = set.weights[fixed..].iter().sum();
    if sampled > 0.0 {
        set.weights[fixed..].iter_mut().for_each(|w| *w *= weight_left / sampled);
    }
    set
}

/// KernelSHAP with the efficiency constraint eliminated into the last player.
pub fn kernel_shap(
    predictor: &dyn Predictor,
    sample: &WindowedSample,
    background: &BackgroundSet,
    scheme: &PlayerScheme,
    num_coalitions: usize,
    seed: u64,
) -> Result<Attribution> {
    let m = scheme.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("kernel_shap needs at least 2 players, got {m}")));
    }
    if num_coalitions < m + 2 {
        return Err(Error::InsufficientSamples { requested: num_coalitions, minimum: m + 2, players: m });
    }
    predictor.input_shape().check(&sample.values)?;
    let vf = ValueFunction::new(predictor, sample.values.as_slice(), background, scheme)?;
    let enumerate = m < 63 && (num_coalitions as u128) >= (1u128 << m) - 2;
    let set = if enumerate {
        enumerate_all(m)
    } else {
        sample_coalitions(m, num_coalitions, &mut stream_rng(seed, "kernel_shap", sample.sample_id))
    };

    let fx = vf.full()?;
    let values = vf.evaluate(set.len() + 1, |c, j| c > 0 && set.masks[c - 1][j])?;
    let base = values[0];
    let delta = fx - base;

    let last = m - 1;
    let rows = set.len();
    let mut design = Vec::with_capacity(rows * last);
    let mut target = Vec::with_capacity(rows);
    for (mask, &v) in set.masks.iter().zip(&values[1..]) {
        let zl = f64::from(u8::from(mask[last]));
        design.extend(mask[..last].iter().map(|&z| f64::from(u8::from(z)) - zl));
        target.push(v - base - zl * delta);
    }
    let (gram, rhs) = weighted_normal_equations(&design, rows, last, &set.weights, &target);
    let mut phi = cholesky_solve(&gram, &rhs, PIVOT_TOLERANCE)?;
    phi.push(delta - phi.iter().sum::<f64>());
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel_shap produced a non-finite attribution".into()));
    }
    Ok(Attribution::from_players(
        ExplainerKind::KernelShap,
        sample.sample_id,
        seed,
        base,
        fx,
        scheme,
        &phi,
        Diagnostics { coalitions: rows + 2, residual: base + phi.iter().sum::<f64>() - fx },
    ))
}
