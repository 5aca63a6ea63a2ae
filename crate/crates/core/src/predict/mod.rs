//! Probability predictors: native tree and linear baselines plus external
//! subprocess models behind one batch interface.

mod boosting;
mod forest;
mod logistic;
pub mod protocol;
pub mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use boosting::GradientBoosting;
pub use forest::RandomForest;
pub use logistic::{LogisticConfig, LogisticModel};
pub use protocol::ExternalPredictor;

use crate::data::{flatten, Window, WindowedSample};
use crate::{Error, Result};

const MODEL_FORMAT: &str = "tsattr-model";
const MODEL_VERSION: u32 = 1;
const PARALLEL_ROWS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub n_features: usize,
    pub window_length: usize,
}

impl InputShape {
    pub fn new(n_features: usize, window_length: usize) -> Self {
        Self { n_features, window_length }
    }

    pub fn columns(&self) -> usize {
        self.n_features * self.window_length
    }

    pub fn check(&self, window: &Window) -> Result<()> {
        if window.shape() == (self.n_features, self.window_length) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected_features: self.n_features,
                expected_days: self.window_length,
                actual_features: window.n_features(),
                actual_days: window.window_length(),
            })
        }
    }
}

impl fmt::Display for InputShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.n_features, self.window_length)
    }
}

/// Batch probability model over flattened windows.
pub trait Predictor: Send + Sync {
    fn input_shape(&self) -> InputShape;

    /// `rows` holds `k` flattened windows back to back; returns `k` probabilities.
    fn predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn input_shape(&self) -> InputShape {
        (**self).input_shape()
    }

    fn predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        (**self).predict_rows(rows)
    }
}

/// Wraps a per-row closure. Mostly useful for tests and synthetic models.
pub struct FnPredictor<F> {
    shape: InputShape,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnPredictor<F> {
    pub fn new(shape: InputShape, f: F) -> Self {
        Self { shape, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Predictor for FnPredictor<F> {
    fn input_shape(&self) -> InputShape {
        self.shape
    }

    fn predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        Ok(rows.chunks_exact(self.shape.columns()).map(&self.f).collect())
    }
}

pub fn predict_proba(predictor: &dyn Predictor, batch: &[Window]) -> Result<Vec<f64>> {
    let shape = predictor.input_shape();
    let mut rows = Vec::with_capacity(batch.len() * shape.columns());
    for w in batch {
        shape.check(w)?;
        rows.extend_from_slice(w.as_slice());
    }
    if batch.is_empty() {
        return Ok(Vec::new());
    }
    predictor.predict_rows(&rows)
}

pub fn predict_samples(predictor: &dyn Predictor, samples: &[WindowedSample]) -> Result<Vec<f64>> {
    let shape = predictor.input_shape();
    for s in samples {
        shape.check(&s.values)?;
    }
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    predictor.predict_rows(&flatten(samples).0)
}

/// Logistic link with the margin clamped so the result stays inside (0, 1).
pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-30.0, 30.0);
    1.0 / (1.0 + (-z).exp())
}

pub(crate) fn check_binary_labels(labels: &[u8]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::DegenerateTraining("training split is empty".into()));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::DegenerateTraining(format!("label {bad} is not binary")));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::DegenerateTraining(format!(
            "all {} training labels are {}",
            labels.len(),
            labels[0]
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleConfig {
    pub num_trees: usize,
    pub min_split: usize,
    pub max_depth: Option<usize>,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TreeEnsembleConfig {
    pub fn random_forest() -> Self {
        Self {
            num_trees: 100,
            min_split: 2,
            max_depth: None,
            learning_rate: 0.3,
            seed: 0,
        }
    }

    pub fn gradient_boosting() -> Self {
        Self {
            max_depth: Some(6),
            ..Self::random_forest()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(Error::InvalidArgument("num_trees must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::InvalidArgument("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RandomForest,
    GradientBoosting,
    Logistic,
    External,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::RandomForest,
        ModelKind::GradientBoosting,
        ModelKind::Logistic,
        ModelKind::External,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::RandomForest => "random_forest",
            ModelKind::GradientBoosting => "gradient_boosting",
            ModelKind::Logistic => "logistic",
            ModelKind::External => "external",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "trainer", rename_all = "snake_case")]
pub enum TrainerConfig {
    RandomForest(TreeEnsembleConfig),
    GradientBoosting(TreeEnsembleConfig),
    Logistic(LogisticConfig),
    External { command: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub config: TrainerConfig,
    pub seed: u64,
}

#[derive(Debug, Clone)]
enum Model {
    Forest(RandomForest),
    Boosting(GradientBoosting),
    Logistic(LogisticModel),
    External(Arc<ExternalPredictor>),
}

/// Immutable trained (or attached) model. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct PredictorHandle {
    id: String,
    kind: ModelKind,
    shape: InputShape,
    metadata: ModelMetadata,
    model: Model,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    id: String,
    kind: ModelKind,
    shape: InputShape,
    metadata: ModelMetadata,
    model: serde_json::Value,
}

fn training_shape(train: &[WindowedSample]) -> Result<InputShape> {
    let first = train
        .first()
        .ok_or_else(|| Error::DegenerateTraining("training split is empty".into()))?;
    let shape = InputShape::new(first.values.n_features(), first.values.window_length());
    for s in train {
        shape.check(&s.values)?;
    }
    Ok(shape)
}

pub fn train_random_forest(train: &[WindowedSample], cfg: &TreeEnsembleConfig) -> Result<PredictorHandle> {
    let shape = training_shape(train)?;
    let (rows, labels) = flatten(train);
    let model = RandomForest::fit(&rows, &labels, shape.columns(), cfg)?;
    PredictorHandle::native(
        shape,
        ModelMetadata { config: TrainerConfig::RandomForest(cfg.clone()), seed: cfg.seed },
        Model::Forest(model),
    )
}

pub fn train_gradient_boosting(train: &[WindowedSample], cfg: &TreeEnsembleConfig) -> Result<PredictorHandle> {
    let shape = training_shape(train)?;
    let (rows, labels) = flatten(train);
    let model = GradientBoosting::fit(&rows, &labels, shape.columns(), cfg)?;
    PredictorHandle::native(
        shape,
        ModelMetadata { config: TrainerConfig::GradientBoosting(cfg.clone()), seed: cfg.seed },
        Model::Boosting(model),
    )
}

pub fn train_logistic(train: &[WindowedSample], cfg: &LogisticConfig) -> Result<PredictorHandle> {
    let shape = training_shape(train)?;
    let (rows, labels) = flatten(train);
    let model = LogisticModel::fit(&rows, &labels, shape.columns(), cfg)?;
    PredictorHandle::native(
        shape,
        ModelMetadata { config: TrainerConfig::Logistic(cfg.clone()), seed: cfg.seed },
        Model::Logistic(model),
    )
}

fn content_id(prefix: &str, parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    format!("{prefix}-{}", &hex::encode(h.finalize())[..12])
}

impl PredictorHandle {
    fn native(shape: InputShape, metadata: ModelMetadata, model: Model) -> Result<Self> {
        let kind = match model {
            Model::Forest(_) => ModelKind::RandomForest,
            Model::Boosting(_) => ModelKind::GradientBoosting,
            Model::Logistic(_) => ModelKind::Logistic,
            Model::External(_) => ModelKind::External,
        };
        let mut handle = Self { id: String::new(), kind, shape, metadata, model };
        let body = serde_json::to_vec(&handle.model_json()?).map_err(|e| Error::Format(e.to_string()))?;
        let meta = serde_json::to_vec(&handle.metadata).map_err(|e| Error::Format(e.to_string()))?;
        handle.id = content_id(short_prefix(kind), &[kind.as_str().as_bytes(), &meta, &body]);
        Ok(handle)
    }

    pub fn from_random_forest(shape: InputShape, forest: RandomForest, cfg: TreeEnsembleConfig) -> Result<Self> {
        let seed = cfg.seed;
        Self::native(shape, ModelMetadata { config: TrainerConfig::RandomForest(cfg), seed }, Model::Forest(forest))
    }

    pub fn from_logistic(shape: InputShape, model: LogisticModel, cfg: LogisticConfig) -> Result<Self> {
        let seed = cfg.seed;
        Self::native(shape, ModelMetadata { config: TrainerConfig::Logistic(cfg), seed }, Model::Logistic(model))
    }

    /// Spawns `command` and completes the protocol handshake.
    pub fn external(command: &[String], shape: InputShape) -> Result<Self> {
        let child = ExternalPredictor::spawn(command, shape)?;
        let metadata = ModelMetadata { config: TrainerConfig::External { command: command.to_vec() }, seed: 0 };
        let joined = command.join("\u{1f}");
        let id = content_id("ext", &[joined.as_bytes(), shape.to_string().as_bytes()]);
        Ok(Self { id, kind: ModelKind::External, shape, metadata, model: Model::External(Arc::new(child)) })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    pub fn as_forest(&self) -> Option<&RandomForest> {
        match &self.model {
            Model::Forest(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_boosting(&self) -> Option<&GradientBoosting> {
        match &self.model {
            Model::Boosting(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_logistic(&self) -> Option<&LogisticModel> {
        match &self.model {
            Model::Logistic(m) => Some(m),
            _ => None,
        }
    }

    /// Whether concurrent `predict_rows` calls can make progress in parallel.
    pub fn concurrent(&self) -> bool {
        match &self.model {
            Model::External(e) => e.concurrent(),
            _ => true,
        }
    }

    fn model_json(&self) -> Result<serde_json::Value> {
        let v = match &self.model {
            Model::Forest(m) => serde_json::to_value(m),
            Model::Boosting(m) => serde_json::to_value(m),
            Model::Logistic(m) => serde_json::to_value(m),
            Model::External(_) => Ok(serde_json::Value::Null),
        };
        v.map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            id: self.id.clone(),
            kind: self.kind,
            shape: self.shape,
            metadata: self.metadata.clone(),
            model: self.model_json()?,
        };
        serde_json::to_string(&file).map_err(|e| Error::Format(e.to_string()))
    }

    /// Parses a model file. External models are spawned on load.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Format(format!("model file: {e}")))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Format(format!("not a model file (format `{}`)", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model file version {}", file.version)));
        }
        let de = |e: serde_json::Error| Error::Format(format!("model body: {e}"));
        let model = match file.kind {
            ModelKind::RandomForest => Model::Forest(serde_json::from_value(file.model).map_err(de)?),
            ModelKind::GradientBoosting => Model::Boosting(serde_json::from_value(file.model).map_err(de)?),
            ModelKind::Logistic => Model::Logistic(serde_json::from_value(file.model).map_err(de)?),
            ModelKind::External => {
                let TrainerConfig::External { command } = &file.metadata.config else {
                    return Err(Error::Format("external model without a command".into()));
                };
                let mut h = Self::external(command, file.shape)?;
                h.id = file.id;
                return Ok(h);
            }
        };
        let h = Self::native(file.shape, file.metadata, model)?;
        if h.id != file.id {
            return Err(Error::Format(format!("model id {} does not match its content ({})", file.id, h.id)));
        }
        Ok(h)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn short_prefix(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::RandomForest => "rf",
        ModelKind::GradientBoosting => "gb",
        ModelKind::Logistic => "lr",
        ModelKind::External => "ext",
    }
}

impl Predictor for PredictorHandle {
    fn input_shape(&self) -> InputShape {
        self.shape
    }

    fn predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let cols = self.shape.columns();
        if rows.len() % cols != 0 {
            return Err(Error::InvalidArgument(format!(
                "row buffer of length {} is not a multiple of {cols} columns",
                rows.len()
            )));
        }
        let row_fn = |row: &[f64]| match &self.model {
            Model::Forest(m) => m.predict_row(row),
            Model::Boosting(m) => m.predict_row(row),
            Model::Logistic(m) => m.predict_row(row),
            Model::External(_) => unreachable!(),
        };
        match &self.model {
            Model::External(e) => e.predict_rows(rows),
            _ if rows.len() / cols >= PARALLEL_ROWS => Ok(rows.par_chunks_exact(cols).map(row_fn).collect()),
            _ => Ok(rows.chunks_exact(cols).map(row_fn).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: Vec<bool>,
    pub probabilities: Vec<f64>,
}

/// A probability of exactly 0.5 counts as predicting the positive class.
pub fn predicted_label(p: f64) -> u8 {
    u8::from(p >= 0.5)
}

pub fn evaluate_accuracy(predictor: &dyn Predictor, split: &[WindowedSample]) -> Result<Evaluation> {
    if split.is_empty() {
        return Err(Error::EmptyInput("cannot evaluate on an empty split".into()));
    }
    let probabilities = predict_samples(predictor, split)?;
    let correct: Vec<bool> = split
        .iter()
        .zip(&probabilities)
        .map(|(s, &p)| predicted_label(p) == s.label)
        .collect();
    let hits = correct.iter().filter(|&&c| c).count();
    Ok(Evaluation {
        accuracy: hits as f64 / split.len() as f64,
        correct,
        probabilities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(values: &[(f64, u8)]) -> Vec<WindowedSample> {
        values
            .iter()
            .enumerate()
            .map(|(i, &(v, y))| WindowedSample::new(i as u64, y, None, Window::filled(1, 2, v)))
            .collect()
    }

    #[test]
    fn empty_batch_is_empty() {
        let p = FnPredictor::new(InputShape::new(1, 2), |_| 0.3);
        assert!(predict_proba(&p, &[]).unwrap().is_empty());
    }

    #[test]
    fn shape_mismatch_names_dims() {
        let p = FnPredictor::new(InputShape::new(1, 2), |_| 0.3);
        let err = predict_proba(&p, &[Window::filled(2, 2, 0.0)]).unwrap_err();
        assert!(matches!(
            err,
            Error::ShapeMismatch { expected_features: 1, expected_days: 2, actual_features: 2, actual_days: 2 }
        ));
    }

    #[test]
    fn accuracy_arithmetic() {
        let split = samples(&[(0.9, 1), (0.1, 0), (0.7, 0), (0.5, 1)]);
        let p = FnPredictor::new(InputShape::new(1, 2), |r| r[0]);
        let e = evaluate_accuracy(&p, &split).unwrap();
        assert_eq!(e.accuracy, 0.75);
        assert_eq!(e.correct, vec![true, true, false, true]);
        let anti = FnPredictor::new(InputShape::new(1, 2), |r| if r[0] >= 0.5 { 0.0 } else { 1.0 });
        let split = samples(&[(0.9, 1), (0.1, 0)]);
        assert_eq!(evaluate_accuracy(&anti, &split).unwrap().accuracy, 0.0);
        assert!(evaluate_accuracy(&p, &[]).is_err());
    }

    #[test]
    fn sigmoid_is_strictly_inside_unit_interval() {
        assert!(sigmoid(1e6) < 1.0);
        assert!(sigmoid(-1e6) > 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn model_file_round_trips() {
        let split = samples(&[(0.0, 0), (1.0, 1), (0.2, 0), (0.8, 1), (0.1, 0), (0.9, 1)]);
        let cfg = TreeEnsembleConfig { num_trees: 5, seed: 4, ..TreeEnsembleConfig::random_forest() };
        let h = train_random_forest(&split, &cfg).unwrap();
        let back = PredictorHandle::from_json(&h.to_json().unwrap()).unwrap();
        assert_eq!(back.id(), h.id());
        assert_eq!(back.to_json().unwrap(), h.to_json().unwrap());
        let tampered = h.to_json().unwrap().replacen("\"seed\":4", "\"seed\":5", 1);
        assert!(PredictorHandle::from_json(&tampered).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = TreeEnsembleConfig::gradient_boosting();
        assert!(cfg.validate().is_ok());
        cfg.max_depth = Some(0);
        assert!(cfg.validate().is_err());
        cfg = TreeEnsembleConfig { num_trees: 0, ..TreeEnsembleConfig::random_forest() };
        assert!(cfg.validate().is_err());
        cfg = TreeEnsembleConfig { learning_rate: 0.0, ..TreeEnsembleConfig::random_forest() };
        assert!(cfg.validate().is_err());
    }
}
