//! Experiment orchestration: model comparison, feature-selection studies and
//! the end-to-end explanation pipeline.

mod pipeline;

use std::collections::HashSet;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use pipeline::{
    explain_cohort, render_summary, run_explanation_pipeline, summarize, write_summary_files, PipelineConfig,
    PipelineOutputs,
};

use crate::analytics::{Direction, FeatureRanking};
use crate::data::Dataset;
use crate::predict::{
    evaluate_accuracy, train_gradient_boosting, train_logistic, train_random_forest, InputShape, LogisticConfig,
    ModelKind, PredictorHandle, TreeEnsembleConfig,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    RandomForest(TreeEnsembleConfig),
    GradientBoosting(TreeEnsembleConfig),
    Logistic(LogisticConfig),
    External { command: Vec<String> },
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::RandomForest(_) => ModelKind::RandomForest,
            ModelSpec::GradientBoosting(_) => ModelKind::GradientBoosting,
            ModelSpec::Logistic(_) => ModelKind::Logistic,
            ModelSpec::External { .. } => ModelKind::External,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelSpec::RandomForest(c) | ModelSpec::GradientBoosting(c) => c.seed,
            ModelSpec::Logistic(c) => c.seed,
            ModelSpec::External { .. } => 0,
        }
    }

    /// External models are trained elsewhere, so their rows cannot be regenerated here.
    pub fn reproducible(&self) -> bool {
        !matches!(self, ModelSpec::External { .. })
    }

    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("model spec serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn train(&self, dataset: &Dataset) -> Result<PredictorHandle> {
        match self {
            ModelSpec::RandomForest(c) => train_random_forest(dataset.train(), c),
            ModelSpec::GradientBoosting(c) => train_gradient_boosting(dataset.train(), c),
            ModelSpec::Logistic(c) => train_logistic(dataset.train(), c),
            ModelSpec::External { command } => {
                let schema = dataset.schema();
                PredictorHandle::external(command, InputShape::new(schema.n_features(), schema.window_length()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub configuration: String,
    pub model: ModelKind,
    pub features: usize,
    /// Test accuracy in percent.
    pub accuracy_pct: Option<f64>,
    /// Median wall-clock training time.
    pub train_seconds: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
    pub reproducible: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: String,
    pub dataset_hash: String,
    pub rows: Vec<StudyRow>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn run_row(configuration: String, dataset: &Dataset, spec: &ModelSpec, timing_runs: usize, extra_hash: &str) -> StudyRow {
    let features = dataset.schema().n_features();
    let mut row = StudyRow {
        configuration,
        model: spec.kind(),
        features,
        accuracy_pct: None,
        train_seconds: None,
        seed: spec.seed(),
        config_hash: hex::encode(Sha256::digest(format!("{}|{extra_hash}", spec.config_hash()))),
        reproducible: spec.reproducible(),
        error: None,
    };
    let runs = if spec.reproducible() { timing_runs.max(1) } else { 1 };
    let mut times = Vec::with_capacity(runs);
    let mut handle = None;
    for _ in 0..runs {
        let start = Instant::now();
        match spec.train(dataset) {
            Ok(h) => {
                times.push(start.elapsed().as_secs_f64());
                handle = Some(h);
            }
            Err(e) => {
                row.error = Some(format!("{}: {e}", e.kind()));
                return row;
            }
        }
    }
    let handle = handle.expect("at least one run");
    match evaluate_accuracy(&handle, dataset.test()) {
        Ok(e) => {
            row.accuracy_pct = Some(100.0 * e.accuracy);
            if spec.reproducible() {
                row.train_seconds = Some(median(times));
            }
        }
        Err(e) => row.error = Some(format!("{}: {e}", e.kind())),
    }
    row
}

/// Trains and evaluates every spec on the same splits; sorted by accuracy,
/// failed rows last.
pub fn run_model_comparison(dataset: &Dataset, specs: &[ModelSpec], timing_runs: usize) -> Result<StudyReport> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("model comparison needs at least one model".into()));
    }
    let mut rows: Vec<StudyRow> = specs
        .iter()
        .map(|s| run_row(s.kind().to_string(), dataset, s, timing_runs, ""))
        .collect();
    rows.sort_by(|a, b| match (a.accuracy_pct, b.accuracy_pct) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(StudyReport { study: "model_comparison".into(), dataset_hash: dataset.digest(), rows })
}

/// Feature indices for the `k` most or least important features, in schema order.
pub fn select_features(dataset: &Dataset, ranking: &FeatureRanking, k: usize, direction: Direction) -> Result<Vec<usize>> {
    let schema = dataset.schema();
    let mut idx: Vec<usize> = ranking
        .top(k, direction)?
        .iter()
        .map(|e| schema.feature_index(&e.feature).ok_or_else(|| Error::UnknownFeature(e.feature.clone())))
        .collect::<Result<_>>()?;
    idx.sort_unstable();
    Ok(idx)
}

/// Retrains on the top/bottom `k` ranked features for every `(k, direction)`.
/// The first row is the full-feature baseline.
pub fn run_feature_selection_study(
    dataset: &Dataset,
    ranking: &FeatureRanking,
    ks: &[usize],
    directions: &[Direction],
    spec: &ModelSpec,
    timing_runs: usize,
) -> Result<StudyReport> {
    let schema = dataset.schema();
    let n = schema.n_features();
    let names: HashSet<String> = schema.feature_names().into_iter().collect();
    let ranked: HashSet<String> = ranking.names().into_iter().collect();
    if names != ranked {
        return Err(Error::Mismatch("ranking does not cover exactly the dataset's features".into()));
    }
    if ks.is_empty() || directions.is_empty() {
        return Err(Error::InvalidArgument("feature selection needs at least one k and one direction".into()));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > n) {
        return Err(Error::InvalidArgument(format!("k = {k} must be in 1..={n}")));
    }
    let mut rows = vec![run_row(format!("baseline-{n}"), dataset, spec, timing_runs, "all")];
    for &k in ks {
        for &d in directions {
            let keep = select_features(dataset, ranking, k, d)?;
            let restricted = dataset.restrict_features(&keep)?;
            let kept: Vec<String> = keep.iter().map(|&i| schema.features()[i].name.clone()).collect();
            rows.push(run_row(format!("{d}-{k}"), &restricted, spec, timing_runs, &kept.join(",")));
        }
    }
    Ok(StudyReport { study: "feature_selection".into(), dataset_hash: dataset.digest(), rows })
}

impl StudyReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            "configuration",
            "model",
            "features",
            "accuracy_pct",
            "train_seconds",
            "seed",
            "dataset_hash",
            "config_hash",
            "reproducible",
            "error",
        ])
        .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.configuration.clone(),
                r.model.to_string(),
                r.features.to_string(),
                opt(r.accuracy_pct),
                opt(r.train_seconds),
                r.seed.to_string(),
                self.dataset_hash.clone(),
                r.config_hash.clone(),
                r.reproducible.to_string(),
                r.error.clone().unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn to_text(&self) -> String {
        let header = ["configuration", "model", "features", "accuracy %", "train s", "seed", "note"];
        let cells: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.configuration.clone(),
                    r.model.to_string(),
                    r.features.to_string(),
                    r.accuracy_pct.map(|a| format!("{a:.2}")).unwrap_or_else(|| "-".into()),
                    r.train_seconds.map(|t| format!("{t:.3}")).unwrap_or_else(|| "-".into()),
                    r.seed.to_string(),
                    match (&r.error, r.reproducible) {
                        (Some(e), _) => e.clone(),
                        (None, false) => "not reproducible here".into(),
                        (None, true) => String::new(),
                    },
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = format!("{} (dataset {})\n", self.study, &self.dataset_hash[..self.dataset_hash.len().min(12)]);
        let line = |out: &mut String, row: &[String]| {
            let parts: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if (2..6).contains(&i) { format!("{c:>w$}") } else { format!("{c:<w$}") })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &header.map(String::from));
        for row in &cells {
            line(&mut out, row);
        }
        out
    }
}
