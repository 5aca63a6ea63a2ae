//! Windowed samples, schemas, ingestion and imputation.

mod archive;
mod calendar;
mod impute;
mod ingest;
mod report;
mod schema;

use std::collections::HashSet;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use calendar::{derive_calendar_groups, CalendarGroup, Season};
pub use impute::{apply_imputation, fit_imputer, FeatureImputation, ImputationStats};
pub use ingest::{ingest_csv, parse_csv, write_long_csv, Layout};
pub use report::{missingness_report, MissingnessReport, MissingnessRow};
pub use schema::{Derivation, FeatureKind, FeatureSpec, WindowSchema};

use crate::{Error, Result};

/// An `N × L` matrix stored feature-major: row `i` is feature `i` over days
/// `1..=L`. Missing cells are `NaN` until imputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    n_features: usize,
    window_length: usize,
    values: Vec<f64>,
}

impl Window {
    pub fn new(n_features: usize, window_length: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_features * window_length {
            return Err(Error::ShapeMismatch {
                expected_features: n_features,
                expected_days: window_length,
                actual_features: values.len() / window_length.max(1),
                actual_days: window_length,
            });
        }
        Ok(Self {
            n_features,
            window_length,
            values,
        })
    }

    pub fn filled(n_features: usize, window_length: usize, value: f64) -> Self {
        Self {
            n_features,
            window_length,
            values: vec![value; n_features * window_length],
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_features, self.window_length)
    }

    /// `day` is 0-based here.
    pub fn get(&self, feature: usize, day: usize) -> f64 {
        self.values[feature * self.window_length + day]
    }

    pub fn set(&mut self, feature: usize, day: usize, value: f64) {
        self.values[feature * self.window_length + day] = value;
    }

    pub fn row(&self, feature: usize) -> &[f64] {
        &self.values[feature * self.window_length..(feature + 1) * self.window_length]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn missing_cells(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    /// Keeps the listed feature rows in the given order.
    pub fn restrict(&self, features: &[usize]) -> Self {
        let mut values = Vec::with_capacity(features.len() * self.window_length);
        for &f in features {
            values.extend_from_slice(self.row(f));
        }
        Self {
            n_features: features.len(),
            window_length: self.window_length,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedSample {
    pub sample_id: u64,
    pub label: u8,
    pub event_date: Option<NaiveDate>,
    pub values: Window,
}

impl WindowedSample {
    pub fn new(sample_id: u64, label: u8, event_date: Option<NaiveDate>, values: Window) -> Self {
        debug_assert!(label <= 1);
        Self {
            sample_id,
            label,
            event_date,
            values,
        }
    }

    pub fn restrict(&self, features: &[usize]) -> Self {
        Self {
            values: self.values.restrict(features),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Val, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" | "validation" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sources: Vec<String>,
    /// RFC 3339 ingest time; excluded from the dataset digest.
    pub ingested_at: String,
}

/// Imputed, validated splits over one schema. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: WindowSchema,
    train: Vec<WindowedSample>,
    val: Option<Vec<WindowedSample>>,
    test: Vec<WindowedSample>,
    imputation: ImputationStats,
    missingness: MissingnessReport,
    provenance: Provenance,
}

impl Dataset {
    /// Fits imputation on `train` only and applies it to every split.
    pub fn build(
        schema: WindowSchema,
        train: Vec<WindowedSample>,
        val: Option<Vec<WindowedSample>>,
        test: Vec<WindowedSample>,
        provenance: Provenance,
    ) -> Result<Self> {
        let all: Vec<&WindowedSample> = train
            .iter()
            .chain(val.iter().flatten())
            .chain(test.iter())
            .collect();
        let missingness = report::missingness_report_refs(&all, &schema)?;
        let imputation = fit_imputer(&train, &schema)?;
        let train = apply_imputation(&train, &imputation, &schema)?;
        let val = val
            .map(|v| apply_imputation(&v, &imputation, &schema))
            .transpose()?;
        let test = apply_imputation(&test, &imputation, &schema)?;
        Self::from_parts(schema, train, val, test, imputation, missingness, provenance)
    }

    pub fn from_parts(
        schema: WindowSchema,
        train: Vec<WindowedSample>,
        val: Option<Vec<WindowedSample>>,
        test: Vec<WindowedSample>,
        imputation: ImputationStats,
        missingness: MissingnessReport,
        provenance: Provenance,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyInput("training split is empty".into()));
        }
        if test.is_empty() {
            return Err(Error::EmptyInput("test split is empty".into()));
        }
        let mut ids = HashSet::new();
        let shape = (schema.n_features(), schema.window_length());
        for s in train.iter().chain(val.iter().flatten()).chain(test.iter()) {
            if !ids.insert(s.sample_id) {
                return Err(Error::Validation(format!(
                    "sample_id {} appears in more than one split",
                    s.sample_id
                )));
            }
            if s.values.shape() != shape {
                return Err(Error::ShapeMismatch {
                    expected_features: shape.0,
                    expected_days: shape.1,
                    actual_features: s.values.n_features(),
                    actual_days: s.values.window_length(),
                });
            }
            if s.values.missing_cells() > 0 {
                return Err(Error::Validation(format!(
                    "sample_id {} still has missing cells",
                    s.sample_id
                )));
            }
        }
        Ok(Self {
            schema,
            train,
            val,
            test,
            imputation,
            missingness,
            provenance,
        })
    }

    pub fn schema(&self) -> &WindowSchema {
        &self.schema
    }

    pub fn train(&self) -> &[WindowedSample] {
        &self.train
    }

    pub fn val(&self) -> Option<&[WindowedSample]> {
        self.val.as_deref()
    }

    pub fn test(&self) -> &[WindowedSample] {
        &self.test
    }

    pub fn split(&self, name: SplitName) -> Result<&[WindowedSample]> {
        match name {
            SplitName::Train => Ok(&self.train),
            SplitName::Test => Ok(&self.test),
            SplitName::Val => self
                .val()
                .ok_or_else(|| Error::InvalidArgument("dataset has no validation split".into())),
        }
    }

    pub fn imputation(&self) -> &ImputationStats {
        &self.imputation
    }

    /// Missingness of the raw (pre-imputation) data across all splits.
    pub fn missingness(&self) -> &MissingnessReport {
        &self.missingness
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn all_samples(&self) -> impl Iterator<Item = &WindowedSample> {
        self.train
            .iter()
            .chain(self.val.iter().flatten())
            .chain(self.test.iter())
    }

    /// Same splits restricted to the listed feature rows (kept in the given order).
    pub fn restrict_features(&self, keep: &[usize]) -> Result<Self> {
        let schema = self.schema.restrict(keep)?;
        let r = |v: &[WindowedSample]| v.iter().map(|s| s.restrict(keep)).collect::<Vec<_>>();
        Ok(Self {
            imputation: self.imputation.restrict(keep),
            missingness: self.missingness.restrict(&schema),
            schema,
            train: r(&self.train),
            val: self.val.as_deref().map(r),
            test: r(&self.test),
            provenance: self.provenance.clone(),
        })
    }

    /// Content digest over schema and sample values; ignores provenance.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.schema.to_toml_string().as_bytes());
        for (name, split) in [
            ("train", Some(self.train.as_slice())),
            ("val", self.val()),
            ("test", Some(self.test.as_slice())),
        ] {
            let Some(split) = split else { continue };
            h.update(name.as_bytes());
            for s in split {
                h.update(s.sample_id.to_le_bytes());
                h.update([s.label]);
                if let Some(d) = s.event_date {
                    h.update(d.to_string().as_bytes());
                }
                for v in s.values.as_slice() {
                    h.update(v.to_bits().to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }
}

/// Flattens samples into a row-major `(rows, labels)` pair, one row per sample.
pub fn flatten(samples: &[WindowedSample]) -> (Vec<f64>, Vec<u8>) {
    let cols = samples.first().map_or(0, |s| s.values.as_slice().len());
    let mut rows = Vec::with_capacity(samples.len() * cols);
    let mut labels = Vec::with_capacity(samples.len());
    for s in samples {
        rows.extend_from_slice(s.values.as_slice());
        labels.push(s.label);
    }
    (rows, labels)
}
