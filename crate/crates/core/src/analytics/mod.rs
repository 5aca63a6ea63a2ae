//! Cohort selection, averaging, grouping, rankings and cross-explainer agreement.

mod export;
mod ranking;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use export::{read_ranking_csv, read_summaries_csv, write_ranking_csv, write_summaries_csv};
pub use ranking::{
    explainer_agreement, importance_curves, rank_features, spearman_rho, Agreement, Direction, FeatureRanking,
    RankEntry, DEFAULT_AGREEMENT_K,
};

use crate::data::{CalendarGroup, Season, Window, WindowedSample};
use crate::explain::{Attribution, ExplainerKind};
use crate::linalg::CompensatedSum;
use crate::predict::{predict_samples, predicted_label, Predictor};
use crate::{Error, Result};

pub const CORRECT_POSITIVES: &str = "label=1,p>=0.5";

/// Ids of samples with label 1 that the model predicts as positive, in split order.
pub fn select_correct_positives(split: &[WindowedSample], probabilities: &[f64]) -> Result<Vec<u64>> {
    if split.len() != probabilities.len() {
        return Err(Error::Mismatch(format!(
            "{} samples but {} probabilities",
            split.len(),
            probabilities.len()
        )));
    }
    let ids: Vec<u64> = split
        .iter()
        .zip(probabilities)
        .filter(|(s, &p)| s.label == 1 && predicted_label(p) == 1)
        .map(|(s, _)| s.sample_id)
        .collect();
    if ids.is_empty() {
        let positives = split.iter().filter(|s| s.label == 1).count();
        let predicted = probabilities.iter().filter(|&&p| predicted_label(p) == 1).count();
        return Err(Error::EmptyCohort(format!(
            "no correctly predicted positives among {} samples ({positives} labelled positive, {predicted} predicted positive)",
            split.len()
        )));
    }
    Ok(ids)
}

pub fn select_explained_samples(predictor: &dyn Predictor, split: &[WindowedSample]) -> Result<Vec<u64>> {
    let p = predict_samples(predictor, split)?;
    select_correct_positives(split, &p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GroupKey {
    All,
    Month(u32),
    Season(Season),
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::All => f.write_str("all"),
            GroupKey::Month(m) => write!(f, "month:{m}"),
            GroupKey::Season(s) => write!(f, "season:{s}"),
        }
    }
}

impl FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(GroupKey::All);
        }
        if let Some(m) = s.strip_prefix("month:") {
            return match m.parse::<u32>() {
                Ok(m @ 1..=12) => Ok(GroupKey::Month(m)),
                _ => Err(Error::InvalidArgument(format!("bad month in group key `{s}`"))),
            };
        }
        if let Some(season) = s.strip_prefix("season:") {
            return Ok(GroupKey::Season(season.parse()?));
        }
        Err(Error::InvalidArgument(format!("unknown group key `{s}` (all|month:M|season:S)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Month,
    Season,
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "month" => Ok(Grouping::Month),
            "season" => Ok(Grouping::Season),
            _ => Err(Error::InvalidArgument(format!("unknown grouping `{s}` (month|season)"))),
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grouping::Month => "month",
            Grouping::Season => "season",
        })
    }
}

impl Grouping {
    fn key(self, c: CalendarGroup) -> GroupKey {
        match self {
            Grouping::Month => GroupKey::Month(c.month),
            Grouping::Season => GroupKey::Season(c.season),
        }
    }

    fn all_keys(self) -> Vec<GroupKey> {
        match self {
            Grouping::Month => (1..=12).map(GroupKey::Month).collect(),
            Grouping::Season => Season::ALL.into_iter().map(GroupKey::Season).collect(),
        }
    }
}

/// Mean attribution over a cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionSummary {
    pub explainer: ExplainerKind,
    pub group_key: GroupKey,
    pub count: usize,
    /// Description of the sample filter that produced the cohort.
    pub selection: String,
    pub base_value: f64,
    /// Mean signed value per cell.
    pub values: Window,
    /// Mean of `|value|` per cell.
    pub mean_abs: Window,
}

pub fn average_attributions(attributions: &[&Attribution], selection: &str) -> Result<AttributionSummary> {
    let first = attributions
        .first()
        .ok_or_else(|| Error::EmptyInput("no attributions to average".into()))?;
    let (n, l) = first.values.shape();
    for a in attributions {
        if a.explainer != first.explainer {
            return Err(Error::Mismatch(format!(
                "cannot average {} with {} attributions",
                first.explainer, a.explainer
            )));
        }
        if a.values.shape() != (n, l) {
            return Err(Error::ShapeMismatch {
                expected_features: n,
                expected_days: l,
                actual_features: a.values.n_features(),
                actual_days: a.values.window_length(),
            });
        }
    }
    let count = attributions.len();
    let mut signed = vec![CompensatedSum::default(); n * l];
    let mut abs = vec![CompensatedSum::default(); n * l];
    let mut base = CompensatedSum::default();
    for a in attributions {
        base.add(a.base_value);
        for (c, &v) in a.values.as_slice().iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("sample {} has a non-finite attribution", a.sample_id)));
            }
            signed[c].add(v);
            abs[c].add(v.abs());
        }
    }
    let mean = |acc: &[CompensatedSum]| {
        Window::new(n, l, acc.iter().map(|s| s.value() / count as f64).collect()).expect("shape")
    };
    Ok(AttributionSummary {
        explainer: first.explainer,
        group_key: GroupKey::All,
        count,
        selection: selection.to_string(),
        base_value: base.value() / count as f64,
        values: mean(&signed),
        mean_abs: mean(&abs),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSummaries {
    pub summaries: BTreeMap<GroupKey, AttributionSummary>,
    /// Calendar groups without any sample.
    pub empty: Vec<GroupKey>,
}

pub fn group_summaries(
    attributions: &[&Attribution],
    calendar: &BTreeMap<u64, CalendarGroup>,
    grouping: Grouping,
    selection: &str,
) -> Result<GroupedSummaries> {
    let missing: Vec<u64> = attributions
        .iter()
        .map(|a| a.sample_id)
        .filter(|id| !calendar.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEventDate(missing));
    }
    let mut buckets: BTreeMap<GroupKey, Vec<&Attribution>> = BTreeMap::new();
    for a in attributions {
        buckets.entry(grouping.key(calendar[&a.sample_id])).or_default().push(a);
    }
    let mut summaries = BTreeMap::new();
    for (key, members) in &buckets {
        let mut s = average_attributions(members, selection)?;
        s.group_key = *key;
        summaries.insert(*key, s);
    }
    let empty = grouping.all_keys().into_iter().filter(|k| !buckets.contains_key(k)).collect();
    Ok(GroupedSummaries { summaries, empty })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::Diagnostics;

    fn attribution(id: u64, values: Vec<f64>) -> Attribution {
        Attribution {
            explainer: ExplainerKind::KernelShap,
            sample_id: id,
            seed: 0,
            base_value: 0.5,
            prediction: 0.5,
            values: Window::new(1, values.len(), values).unwrap(),
            diagnostics: Diagnostics::default(),
        }
    }

    fn sample(id: u64, label: u8) -> WindowedSample {
        WindowedSample::new(id, label, None, Window::filled(1, 1, 0.0))
    }

    #[test]
    fn cohort_is_true_positives() {
        let split: Vec<_> = [(1, 1), (2, 0), (3, 1), (4, 1), (5, 0), (6, 0)].map(|(i, y)| sample(i, y)).to_vec();
        let p = [0.9, 0.8, 0.4, 0.5, 0.1, 0.2];
        assert_eq!(select_correct_positives(&split, &p).unwrap(), vec![1, 4]);
        let err = select_correct_positives(&split, &[0.0; 6]).unwrap_err();
        assert_eq!(err.kind(), "empty-cohort");
    }

    #[test]
    fn single_and_cancelling_means() {
        let a = attribution(1, vec![0.1, -0.3, 0.7]);
        let s = average_attributions(&[&a], CORRECT_POSITIVES).unwrap();
        assert_eq!(s.values, a.values);
        let b = attribution(2, vec![-0.1, 0.3, -0.7]);
        let s = average_attributions(&[&a, &b], CORRECT_POSITIVES).unwrap();
        assert!(s.values.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(s.mean_abs.as_slice(), &[0.1, 0.3, 0.7]);
        let mut lime = b.clone();
        lime.explainer = ExplainerKind::Lime;
        assert!(matches!(average_attributions(&[&a, &lime], ""), Err(Error::Mismatch(_))));
        assert!(average_attributions(&[], "").is_err());
    }

    #[test]
    fn group_keys_parse_back() {
        for k in [GroupKey::All, GroupKey::Month(7), GroupKey::Season(Season::Summer)] {
            assert_eq!(k.to_string().parse::<GroupKey>().unwrap(), k);
        }
        assert!("month:13".parse::<GroupKey>().is_err());
    }
}
