//! Seeded synthetic datasets and random tree models for tests, demos and
//! acceptance checks.

use chrono::{Duration, NaiveDate};
use rand::prelude::*;

use crate::data::{Dataset, FeatureKind, FeatureSpec, Provenance, Window, WindowSchema, WindowedSample};
use crate::predict::tree::{Node, Tree};
use crate::predict::{InputShape, Predictor};
use crate::rng::stream_rng;
use crate::Result;

fn event_date(i: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 1, 1).expect("date") + Duration::days((i * 37 % 365) as i64)
}

fn split(schema: WindowSchema, samples: Vec<WindowedSample>, source: &str) -> Result<Dataset> {
    let cut = samples.len() * 4 / 5;
    let mut train = samples;
    let test = train.split_off(cut);
    Dataset::build(
        schema,
        train,
        None,
        test,
        Provenance { sources: vec![source.into()], ingested_at: String::new() },
    )
}

/// Feature `signal` carries the label with a margin of 0.5 on every day;
/// the others are uniform noise on [-1, 1]. 80/20 train/test split.
pub fn separable(n_samples: usize, n_features: usize, window_length: usize, seed: u64) -> Result<Dataset> {
    let mut features = vec![FeatureSpec::new("signal", FeatureKind::Dynamic)];
    features.extend((1..n_features).map(|i| FeatureSpec::new(format!("noise_{i}"), FeatureKind::Dynamic)));
    let schema = WindowSchema::new(features, window_length)?;
    let mut rng = stream_rng(seed, "synthetic/separable", 0);
    let samples = (0..n_samples)
        .map(|i| {
            let label = u8::from(rng.gen_bool(0.5));
            let sign = if label == 1 { 1.0 } else { -1.0 };
            let mut w = Window::filled(n_features, window_length, 0.0);
            for t in 0..window_length {
                w.set(0, t, sign * rng.gen_range(0.5..1.5));
                for f in 1..n_features {
                    w.set(f, t, rng.gen_range(-1.0..1.0));
                }
            }
            WindowedSample::new(i as u64, label, Some(event_date(i)), w)
        })
        .collect();
    split(schema, samples, "synthetic:separable")
}

/// Features named `f00`.. in a seeded order; `informative` of them drive the
/// label through the sum of their window means, the rest are noise.
/// Returns the dataset and the indices of the informative features.
pub fn informative_noise(
    n_samples: usize,
    informative: usize,
    noise: usize,
    window_length: usize,
    seed: u64,
) -> Result<(Dataset, Vec<usize>)> {
    let n = informative + noise;
    let mut rng = stream_rng(seed, "synthetic/informative", 0);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut signal: Vec<usize> = order[..informative].to_vec();
    signal.sort_unstable();
    let features = (0..n).map(|i| FeatureSpec::new(format!("f{i:02}"), FeatureKind::Dynamic)).collect();
    let schema = WindowSchema::new(features, window_length)?;
    let samples = (0..n_samples)
        .map(|i| {
            let mut w = Window::filled(n, window_length, 0.0);
            for f in 0..n {
                for t in 0..window_length {
                    w.set(f, t, rng.gen_range(-1.0..1.0));
                }
            }
            let score: f64 = signal
                .iter()
                .map(|&f| w.row(f).iter().sum::<f64>() / window_length as f64)
                .sum::<f64>()
                + rng.gen_range(-0.1..0.1);
            WindowedSample::new(i as u64, u8::from(score > 0.0), Some(event_date(i)), w)
        })
        .collect();
    Ok((split(schema, samples, "synthetic:informative")?, signal))
}

/// Random axis-aligned tree of the given depth with leaf values in [0, 1].
pub fn random_tree(rng: &mut impl Rng, columns: usize, depth: usize) -> Tree {
    let mut nodes = Vec::new();
    fn build(rng: &mut impl Rng, nodes: &mut Vec<Node>, columns: usize, depth: usize) -> usize {
        let at = nodes.len();
        if depth == 0 {
            nodes.push(Node::Leaf { value: rng.gen_range(0.0..1.0) });
            return at;
        }
        nodes.push(Node::Leaf { value: 0.0 });
        let column = rng.gen_range(0..columns);
        let threshold = rng.gen_range(-1.0..1.0);
        let left = build(rng, nodes, columns, depth - 1);
        let right = build(rng, nodes, columns, depth - 1);
        nodes[at] = Node::Split { column, threshold, left, right };
        at
    }
    build(rng, &mut nodes, columns, depth);
    Tree::from_nodes(nodes)
}

/// Mean of real-valued trees; an easy-to-reason-about black box.
#[derive(Debug, Clone)]
pub struct TreeAverage {
    shape: InputShape,
    trees: Vec<Tree>,
}

impl TreeAverage {
    pub fn new(shape: InputShape, trees: Vec<Tree>) -> Self {
        Self { shape, trees }
    }

    pub fn random(shape: InputShape, n_trees: usize, depth: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, "synthetic/trees", 0);
        let trees = (0..n_trees).map(|_| random_tree(&mut rng, shape.columns(), depth)).collect();
        Self { shape, trees }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
}

impl Predictor for TreeAverage {
    fn input_shape(&self) -> InputShape {
        self.shape
    }

    fn predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        Ok(rows
            .chunks_exact(self.shape.columns())
            .map(|r| self.trees.iter().map(|t| t.predict(r)).sum::<f64>() / self.trees.len() as f64)
            .collect())
    }
}

/// Uniform [-1, 1] windows, unlabeled (label 0), ids from `first_id`.
pub fn uniform_windows(shape: InputShape, count: usize, first_id: u64, seed: u64) -> Vec<WindowedSample> {
    let mut rng = stream_rng(seed, "synthetic/uniform", first_id);
    (0..count)
        .map(|i| {
            let values = (0..shape.columns()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w = Window::new(shape.n_features, shape.window_length, values).expect("shape");
            WindowedSample::new(first_id + i as u64, 0, None, w)
        })
        .collect()
}
