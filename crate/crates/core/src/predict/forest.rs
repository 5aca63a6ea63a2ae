//! Random forest of Gini-impurity classification trees.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{midpoint, Tree, TreeBuilder};
use super::{check_binary_labels, TreeEnsembleConfig};
use crate::rng::stream_rng;
use crate::Result;

/// Majority-vote forest: the probability is the fraction of trees voting 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    columns: usize,
    trees: Vec<Tree>,
}

impl RandomForest {
    /// Forest from explicit trees whose leaves hold class votes (0 or 1).
    pub fn from_trees(columns: usize, trees: Vec<Tree>) -> Self {
        assert!(!trees.is_empty());
        Self { columns, trees }
    }

    pub fn fit(rows: &[f64], labels: &[u8], columns: usize, cfg: &TreeEnsembleConfig) -> Result<Self> {
        cfg.validate()?;
        check_binary_labels(labels)?;
        let n = labels.len();
        let mtry = ((columns as f64).sqrt() as usize).max(1);
        let trees = (0..cfg.num_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream_rng(cfg.seed, "forest/tree", t as u64);
                let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                grow(rows, columns, labels, bootstrap, mtry, cfg, &mut rng)
            })
            .collect();
        Ok(Self { columns, trees })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn votes(&self, row: &[f64]) -> usize {
        self.trees.iter().filter(|t| t.predict(row) >= 0.5).count()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.votes(row) as f64 / self.trees.len() as f64
    }
}

fn grow(
    rows: &[f64],
    columns: usize,
    labels: &[u8],
    root: Vec<usize>,
    mtry: usize,
    cfg: &TreeEnsembleConfig,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let mut builder = TreeBuilder::new();
    let mut stack = vec![(0usize, root, 0usize)];
    let mut order: Vec<usize> = (0..columns).collect();
    let mut pairs: Vec<(f64, u8)> = Vec::new();
    while let Some((node, idx, depth)) = stack.pop() {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| labels[i] == 1).count();
        let leaf_value = if 2 * pos >= n { 1.0 } else { 0.0 };
        let depth_capped = cfg.max_depth.is_some_and(|d| depth >= d);
        if pos == 0 || pos == n || n < cfg.min_split || depth_capped {
            builder.set_leaf(node, leaf_value);
            continue;
        }

        order.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut visited = 0;
        for &c in &order {
            if visited >= mtry {
                break;
            }
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (rows[i * columns + c], labels[i])));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if pairs[0].0 == pairs[n - 1].0 {
                // constant columns do not count towards mtry
                continue;
            }
            visited += 1;
            let (mut lp, mut ln) = (0.0f64, 0.0f64);
            let (tp, tn) = (pos as f64, (n - pos) as f64);
            for k in 0..n - 1 {
                if pairs[k].1 == 1 {
                    lp += 1.0;
                } else {
                    ln += 1.0;
                }
                if pairs[k].0 < pairs[k + 1].0 {
                    let (rp, rn) = (tp - lp, tn - ln);
                    // maximizing this proxy minimizes the weighted child Gini impurity
                    let score = (lp * lp + ln * ln) / (lp + ln) + (rp * rp + rn * rn) / (rp + rn);
                    if best.is_none_or(|b| score > b.0) {
                        best = Some((score, c, midpoint(pairs[k].0, pairs[k + 1].0)));
                    }
                }
            }
        }
        let Some((_, column, threshold)) = best else {
            builder.set_leaf(node, leaf_value);
            continue;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| rows[i * columns + column] <= threshold);
        let (left, right) = builder.split(node, column, threshold);
        stack.push((right, right_idx, depth + 1));
        stack.push((left, left_idx, depth + 1));
    }
    builder.finish()
}
