//! Per-cell attributions for any [`Predictor`].

mod background;
mod exact;
mod kernel;
mod lime;
mod permutation;
mod players;
mod value;

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use background::{BackgroundMode, BackgroundSet, DEFAULT_BACKGROUND_SIZE};
pub use exact::{exact_shapley, EXACT_PLAYER_LIMIT};
pub use kernel::{default_coalitions, kernel_shap, shapley_kernel};
pub use lime::{default_kernel_width, lime_explain, LimeConfig, RIDGE_ALPHA};
pub use permutation::{permutation_importance, PermutationScore};
pub use players::{Granularity, Player, PlayerScheme};

use crate::data::{Window, WindowSchema, WindowedSample};
use crate::predict::Predictor;
use crate::{Error, Result};

const MANIFEST_FORMAT: &str = "tsattr-attributions";
const MANIFEST_VERSION: u32 = 1;
pub const ATTRIBUTIONS_FILE: &str = "attributions.csv";
pub const MANIFEST_FILE: &str = "attributions.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainerKind {
    ExactShapley,
    KernelShap,
    Lime,
    Permutation,
}

impl ExplainerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExplainerKind::ExactShapley => "exact_shapley",
            ExplainerKind::KernelShap => "kernel_shap",
            ExplainerKind::Lime => "lime",
            ExplainerKind::Permutation => "permutation",
        }
    }

    /// Whether outputs satisfy `base + sum = f(x)`.
    pub fn is_additive(self) -> bool {
        matches!(self, ExplainerKind::ExactShapley | ExplainerKind::KernelShap)
    }
}

impl fmt::Display for ExplainerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExplainerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            ExplainerKind::ExactShapley,
            ExplainerKind::KernelShap,
            ExplainerKind::Lime,
            ExplainerKind::Permutation,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown explainer `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Coalitions (or perturbations) evaluated, including the empty and full ones.
    pub coalitions: usize,
    /// `base + sum(values) - f(x)`.
    pub residual: f64,
}

/// One explained sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    pub explainer: ExplainerKind,
    pub sample_id: u64,
    pub seed: u64,
    pub base_value: f64,
    /// `f(x)` for the explained sample.
    pub prediction: f64,
    /// Player values spread over the N×L cells.
    pub values: Window,
    pub diagnostics: Diagnostics,
}

impl Attribution {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_players(
        explainer: ExplainerKind,
        sample_id: u64,
        seed: u64,
        base_value: f64,
        prediction: f64,
        scheme: &PlayerScheme,
        players: &[f64],
        diagnostics: Diagnostics,
    ) -> Self {
        Self {
            explainer,
            sample_id,
            seed,
            base_value,
            prediction,
            values: scheme.expand(players),
            diagnostics,
        }
    }

    pub fn total(&self) -> f64 {
        crate::linalg::compensated_sum(self.values.as_slice().iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Exact,
    Kernel { num_coalitions: Option<usize> },
    Lime(LimeConfig),
}

impl Method {
    pub fn kind(&self) -> ExplainerKind {
        match self {
            Method::Exact => ExplainerKind::ExactShapley,
            Method::Kernel { .. } => ExplainerKind::KernelShap,
            Method::Lime(_) => ExplainerKind::Lime,
        }
    }
}

/// Explains one sample with `method`. `seed` overrides any seed inside the method.
pub fn explain_one(
    predictor: &dyn Predictor,
    sample: &WindowedSample,
    background: &BackgroundSet,
    scheme: &PlayerScheme,
    method: &Method,
    seed: u64,
) -> Result<Attribution> {
    match method {
        Method::Exact => exact_shapley(predictor, sample, background, scheme),
        Method::Kernel { num_coalitions } => {
            let budget = num_coalitions.unwrap_or_else(|| default_coalitions(scheme.len()));
            kernel_shap(predictor, sample, background, scheme, budget, seed)
        }
        Method::Lime(cfg) => lime_explain(predictor, sample, background, scheme, &LimeConfig { seed, ..cfg.clone() }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundInfo {
    pub mode: BackgroundMode,
    pub size: usize,
    pub seed: u64,
    pub digest: String,
}

impl From<&BackgroundSet> for BackgroundInfo {
    fn from(b: &BackgroundSet) -> Self {
        Self { mode: b.mode(), size: b.len(), seed: b.seed(), digest: b.digest().to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: u64,
    pub prediction: f64,
    pub coalitions: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainManifest {
    pub format: String,
    pub version: u32,
    pub explainer: ExplainerKind,
    pub model_id: String,
    pub dataset_digest: String,
    pub granularity: Granularity,
    pub fused_groups: bool,
    pub players: usize,
    pub seed: u64,
    /// Coalitions for kernel_shap, perturbations for lime, `2^M` for exact.
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    pub background: BackgroundInfo,
    pub samples: Vec<SampleRecord>,
}

/// Attributions for a cohort plus the manifest describing how they were made.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionSet {
    pub manifest: ExplainManifest,
    pub attributions: Vec<Attribution>,
}

pub struct ExplainRequest<'a> {
    pub model_id: &'a str,
    pub dataset_digest: &'a str,
    pub background: &'a BackgroundSet,
    pub scheme: &'a PlayerScheme,
    pub method: &'a Method,
    pub seed: u64,
}

pub fn explain_samples(
    predictor: &dyn Predictor,
    samples: &[&WindowedSample],
    req: &ExplainRequest<'_>,
) -> Result<AttributionSet> {
    let m = req.scheme.len();
    let attributions = samples
        .iter()
        .map(|s| explain_one(predictor, s, req.background, req.scheme, req.method, req.seed))
        .collect::<Result<Vec<_>>>()?;
    let (budget, kernel_width, top_k) = match req.method {
        Method::Exact => (if m < usize::BITS as usize { 1usize << m } else { usize::MAX }, None, None),
        Method::Kernel { num_coalitions } => (num_coalitions.unwrap_or_else(|| default_coalitions(m)), None, None),
        Method::Lime(cfg) => (
            cfg.num_perturbations.unwrap_or(10 * m),
            Some(cfg.kernel_width.unwrap_or_else(|| default_kernel_width(m))),
            cfg.top_k,
        ),
    };
    let manifest = ExplainManifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        explainer: req.method.kind(),
        model_id: req.model_id.into(),
        dataset_digest: req.dataset_digest.into(),
        granularity: req.scheme.granularity(),
        fused_groups: req.scheme.grouped(),
        players: m,
        seed: req.seed,
        budget,
        kernel_width,
        top_k,
        background: req.background.into(),
        samples: attributions
            .iter()
            .map(|a| SampleRecord {
                sample_id: a.sample_id,
                prediction: a.prediction,
                coalitions: a.diagnostics.coalitions,
                residual: a.diagnostics.residual,
            })
            .collect(),
    };
    Ok(AttributionSet { manifest, attributions })
}

/// Long-format CSV: `sample_id,explainer,base_value,feature,day,value`.
pub fn write_attributions_csv(out: impl Write, attributions: &[Attribution], schema: &WindowSchema) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["sample_id", "explainer", "base_value", "feature", "day", "value"]).map_err(fmt)?;
    for a in attributions {
        for (i, f) in schema.features().iter().enumerate() {
            for t in 0..schema.window_length() {
                w.write_record([
                    a.sample_id.to_string(),
                    a.explainer.to_string(),
                    a.base_value.to_string(),
                    f.name.clone(),
                    (t + 1).to_string(),
                    a.values.get(i, t).to_string(),
                ])
                .map_err(fmt)?;
            }
        }
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Reads the CSV written by [`write_attributions_csv`]. Prediction and
/// diagnostics are not part of the CSV and come back as NaN / default.
pub fn read_attributions_csv(input: impl Read, schema: &WindowSchema) -> Result<Vec<Attribution>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    let expected = ["sample_id", "explainer", "base_value", "feature", "day", "value"];
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Format(format!("attribution header must be {}", expected.join(","))));
    }
    let (n, l) = (schema.n_features(), schema.window_length());
    let mut out: Vec<(Attribution, usize)> = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let line = row + 2;
        let parse_err = |column: &str, message: String| Error::Parse { row: line, column: column.into(), message };
        let sample_id: u64 = rec[0].parse().map_err(|e| parse_err("sample_id", format!("{e}")))?;
        let explainer: ExplainerKind = rec[1].parse()?;
        let base: f64 = rec[2].parse().map_err(|e| parse_err("base_value", format!("{e}")))?;
        let feature = schema
            .feature_index(&rec[3])
            .ok_or_else(|| Error::UnknownFeature(rec[3].to_string()))?;
        let day: usize = rec[4].parse().map_err(|e| parse_err("day", format!("{e}")))?;
        if day == 0 || day > l {
            return Err(parse_err("day", format!("day {day} outside 1..={l}")));
        }
        let value: f64 = rec[5].parse().map_err(|e| parse_err("value", format!("{e}")))?;
        let start_new = out.last().is_none_or(|(a, _)| a.sample_id != sample_id || a.explainer != explainer);
        if start_new {
            out.push((
                Attribution {
                    explainer,
                    sample_id,
                    seed: 0,
                    base_value: base,
                    prediction: f64::NAN,
                    values: Window::filled(n, l, f64::NAN),
                    diagnostics: Diagnostics::default(),
                },
                0,
            ));
        }
        let (a, filled) = out.last_mut().expect("pushed");
        if !a.values.get(feature, day - 1).is_nan() {
            return Err(Error::Validation(format!("sample {sample_id}: duplicate cell {}@{day}", &rec[3])));
        }
        a.values.set(feature, day - 1, value);
        *filled += 1;
    }
    out.into_iter()
        .map(|(a, filled)| {
            if filled == n * l {
                Ok(a)
            } else {
                Err(Error::Validation(format!("sample {}: {filled} of {} cells present", a.sample_id, n * l)))
            }
        })
        .collect()
}

impl AttributionSet {
    pub fn save(&self, dir: &Path, schema: &WindowSchema) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join(ATTRIBUTIONS_FILE);
        let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        write_attributions_csv(std::io::BufWriter::new(file), &self.attributions, schema)?;
        let json = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::Format(e.to_string()))?;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, schema: &WindowSchema) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: ExplainManifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
            return Err(Error::Format(format!("{} is not a version {MANIFEST_VERSION} attribution manifest", path.display())));
        }
        let csv_path = dir.join(ATTRIBUTIONS_FILE);
        let file = std::fs::File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let mut attributions = read_attributions_csv(std::io::BufReader::new(file), schema)?;
        if attributions.len() != manifest.samples.len() {
            return Err(Error::Validation(format!(
                "manifest lists {} samples, csv has {}",
                manifest.samples.len(),
                attributions.len()
            )));
        }
        for (a, rec) in attributions.iter_mut().zip(&manifest.samples) {
            if a.sample_id != rec.sample_id || a.explainer != manifest.explainer {
                return Err(Error::Validation(format!("csv sample {} does not match the manifest", a.sample_id)));
            }
            a.seed = manifest.seed;
            a.prediction = rec.prediction;
            a.diagnostics = Diagnostics { coalitions: rec.coalitions, residual: rec.residual };
        }
        Ok(Self { manifest, attributions })
    }
}
