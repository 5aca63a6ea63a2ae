use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AttributionSummary;
use crate::linalg::compensated_sum;
use crate::{Error, Result};

pub const DEFAULT_AGREEMENT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Most,
    Least,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Most => "most",
            Direction::Least => "least",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "most" => Ok(Direction::Most),
            "least" => Ok(Direction::Least),
            _ => Err(Error::InvalidArgument(format!("unknown direction `{s}` (most|least)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub feature: String,
    pub score: f64,
    /// Mean signed value over days, used for sign comparisons.
    pub mean_signed: f64,
}

/// Features ordered by descending score, ties broken by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    entries: Vec<RankEntry>,
}

impl FeatureRanking {
    pub fn from_scores(names: &[String], scores: &[f64], signed: &[f64]) -> Result<Self> {
        if names.len() != scores.len() || names.len() != signed.len() {
            return Err(Error::Mismatch("names, scores and signed values differ in length".into()));
        }
        let mut entries: Vec<RankEntry> = names
            .iter()
            .zip(scores)
            .zip(signed)
            .map(|((n, &score), &mean_signed)| RankEntry { feature: n.clone(), score, mean_signed })
            .collect();
        if let Some(e) = entries.iter().find(|e| !e.score.is_finite()) {
            return Err(Error::NonFinite(format!("score of `{}` is {}", e.feature, e.score)));
        }
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.feature.cmp(&b.feature)));
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[RankEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.feature.clone()).collect()
    }

    /// The `k` most important features (descending), or the `k` least
    /// important ones starting from the least.
    pub fn top(&self, k: usize, direction: Direction) -> Result<Vec<&RankEntry>> {
        if k > self.entries.len() {
            return Err(Error::InvalidArgument(format!(
                "k = {k} exceeds the {} ranked features",
                self.entries.len()
            )));
        }
        Ok(match direction {
            Direction::Most => self.entries[..k].iter().collect(),
            Direction::Least => self.entries.iter().rev().take(k).collect(),
        })
    }

    /// Keeps features scoring at least `min_score`, preserving order.
    pub fn filter_min_score(&self, min_score: f64) -> Self {
        Self { entries: self.entries.iter().filter(|e| e.score >= min_score).cloned().collect() }
    }

    fn positions(&self) -> HashMap<&str, usize> {
        self.entries.iter().enumerate().map(|(i, e)| (e.feature.as_str(), i)).collect()
    }
}

/// Ranks features by the mean over days of the cohort-mean `|value|`.
pub fn rank_features(summary: &AttributionSummary, names: &[String]) -> Result<FeatureRanking> {
    let (n, l) = summary.values.shape();
    if names.len() != n {
        return Err(Error::Mismatch(format!("{} names for {n} features", names.len())));
    }
    let scores: Vec<f64> = (0..n)
        .map(|i| compensated_sum(summary.mean_abs.row(i).iter().copied()) / l as f64)
        .collect();
    let signed: Vec<f64> = (0..n)
        .map(|i| compensated_sum(summary.values.row(i).iter().copied()) / l as f64)
        .collect();
    FeatureRanking::from_scores(names, &scores, &signed)
}

/// Day-indexed mean values (the summary's rows) for the requested features.
pub fn importance_curves(
    summary: &AttributionSummary,
    names: &[String],
    features: &[String],
) -> Result<Vec<(String, Vec<f64>)>> {
    features
        .iter()
        .map(|f| {
            let i = names
                .iter()
                .position(|n| n == f)
                .ok_or_else(|| Error::UnknownFeature(f.clone()))?;
            Ok((f.clone(), summary.values.row(i).to_vec()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub spearman_rho: f64,
    pub sign_match_rate: f64,
    pub k: usize,
}

/// Spearman correlation of two strict orders given as positions.
pub fn spearman_rho(rank_a: &[usize], rank_b: &[usize]) -> f64 {
    let n = rank_a.len();
    if n <= 1 {
        return 1.0;
    }
    let d2: f64 = rank_a
        .iter()
        .zip(rank_b)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    let n = n as f64;
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Rank correlation over the full rankings and sign agreement on the top `k` of `a`.
pub fn explainer_agreement(a: &FeatureRanking, b: &FeatureRanking, k: usize) -> Result<Agreement> {
    let pos_b = b.positions();
    if a.len() != b.len() || a.entries.iter().any(|e| !pos_b.contains_key(e.feature.as_str())) {
        return Err(Error::Mismatch("rankings cover different feature sets".into()));
    }
    if k == 0 || k > a.len() {
        return Err(Error::InvalidArgument(format!("k must be in 1..={}, got {k}", a.len())));
    }
    let ra: Vec<usize> = (0..a.len()).collect();
    let rb: Vec<usize> = a.entries.iter().map(|e| pos_b[e.feature.as_str()]).collect();
    let matches = a.entries[..k]
        .iter()
        .filter(|e| sign(e.mean_signed) == sign(b.entries[pos_b[e.feature.as_str()]].mean_signed))
        .count();
    Ok(Agreement {
        spearman_rho: spearman_rho(&ra, &rb),
        sign_match_rate: matches as f64 / k as f64,
        k,
    })
}
