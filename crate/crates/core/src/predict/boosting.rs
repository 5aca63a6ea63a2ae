//! Gradient-boosted regression trees on the logistic loss.
//!
//! Trees are grown level by level with exact greedy split search over
//! presorted columns, second-order leaf weights `-G / (H + lambda)` and
//! shrinkage by the learning rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{midpoint, Tree, TreeBuilder};
use super::{check_binary_labels, sigmoid, TreeEnsembleConfig};
use crate::Result;

const LAMBDA: f64 = 1.0;
const MIN_CHILD_WEIGHT: f64 = 1.0;
const MIN_GAIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    columns: usize,
    base_score: f64,
    trees: Vec<Tree>,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    column: usize,
    threshold: f64,
}

impl GradientBoosting {
    pub fn fit(rows: &[f64], labels: &[u8], columns: usize, cfg: &TreeEnsembleConfig) -> Result<Self> {
        cfg.validate()?;
        check_binary_labels(labels)?;
        let n = labels.len();
        let max_depth = cfg.max_depth.unwrap_or(6);
        let positive = labels.iter().filter(|&&y| y == 1).count() as f64 / n as f64;
        let base_score = (positive / (1.0 - positive)).ln();

        let by_column: Vec<Vec<f64>> = (0..columns)
            .map(|c| (0..n).map(|i| rows[i * columns + c]).collect())
            .collect();
        let sorted: Vec<Vec<u32>> = by_column
            .par_iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();

        let mut margin = vec![base_score; n];
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut trees = Vec::with_capacity(cfg.num_trees);
        for _ in 0..cfg.num_trees {
            for i in 0..n {
                let p = sigmoid(margin[i]);
                grad[i] = p - f64::from(labels[i]);
                hess[i] = (p * (1.0 - p)).max(1e-16);
            }
            let tree = grow(&by_column, &sorted, &grad, &hess, max_depth, cfg.learning_rate);
            for (i, m) in margin.iter_mut().enumerate() {
                *m += tree.predict(&rows[i * columns..(i + 1) * columns]);
            }
            trees.push(tree);
        }
        Ok(Self {
            columns,
            base_score,
            trees,
        })
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }
}

fn leaf_weight(g: f64, h: f64, eta: f64) -> f64 {
    -g / (h + LAMBDA) * eta
}

fn grow(
    by_column: &[Vec<f64>],
    sorted: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    max_depth: usize,
    eta: f64,
) -> Tree {
    const SETTLED: u32 = u32::MAX;
    let n = grad.len();
    let mut builder = TreeBuilder::new();
    // position of each sample in `active`, or SETTLED once its leaf is final
    let mut slot = vec![0u32; n];
    let mut active: Vec<(usize, f64, f64)> = vec![(0, grad.iter().sum(), hess.iter().sum())];

    for _ in 0..max_depth {
        if active.is_empty() {
            break;
        }
        let per_column: Vec<Vec<Option<Best>>> = (0..by_column.len())
            .into_par_iter()
            .map(|c| {
                let col = &by_column[c];
                let mut acc = vec![(0.0f64, 0.0f64, f64::NAN); active.len()];
                let mut best: Vec<Option<Best>> = vec![None; active.len()];
                for &i in &sorted[c] {
                    let i = i as usize;
                    let k = slot[i];
                    if k == SETTLED {
                        continue;
                    }
                    let k = k as usize;
                    let v = col[i];
                    let (gl, hl, last) = acc[k];
                    if v > last {
                        let (_, g, h) = active[k];
                        let (gr, hr) = (g - gl, h - hl);
                        if hl >= MIN_CHILD_WEIGHT && hr >= MIN_CHILD_WEIGHT {
                            let gain = gl * gl / (hl + LAMBDA) + gr * gr / (hr + LAMBDA) - g * g / (h + LAMBDA);
                            if best[k].is_none_or(|b| gain > b.gain) {
                                best[k] = Some(Best {
                                    gain,
                                    column: c,
                                    threshold: midpoint(last, v),
                                });
                            }
                        }
                    }
                    acc[k] = (gl + grad[i], hl + hess[i], v);
                }
                best
            })
            .collect();

        let mut chosen: Vec<Option<Best>> = vec![None; active.len()];
        for column_best in &per_column {
            for (k, b) in column_best.iter().enumerate() {
                if let Some(b) = b {
                    if b.gain > MIN_GAIN && chosen[k].is_none_or(|c| b.gain > c.gain) {
                        chosen[k] = Some(*b);
                    }
                }
            }
        }

        let mut children: Vec<(usize, f64, f64)> = Vec::new();
        let mut remap = vec![(SETTLED, SETTLED); active.len()];
        for (k, &(node, g, h)) in active.iter().enumerate() {
            match chosen[k] {
                Some(b) => {
                    let (l, r) = builder.split(node, b.column, b.threshold);
                    remap[k] = (children.len() as u32, children.len() as u32 + 1);
                    children.push((l, 0.0, 0.0));
                    children.push((r, 0.0, 0.0));
                }
                None => builder.set_leaf(node, leaf_weight(g, h, eta)),
            }
        }
        for i in 0..n {
            let k = slot[i];
            if k == SETTLED {
                continue;
            }
            let (l, r) = remap[k as usize];
            if l == SETTLED {
                slot[i] = SETTLED;
                continue;
            }
            let b = chosen[k as usize].expect("remapped nodes were split");
            let child = if by_column[b.column][i] <= b.threshold { l } else { r };
            slot[i] = child;
            children[child as usize].1 += grad[i];
            children[child as usize].2 += hess[i];
        }
        active = children;
    }
    for &(node, g, h) in &active {
        builder.set_leaf(node, leaf_weight(g, h, eta));
    }
    builder.finish()
}
