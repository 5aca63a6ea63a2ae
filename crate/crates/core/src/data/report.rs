use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{WindowSchema, WindowedSample};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessRow {
    pub feature: String,
    pub missing_cells: u64,
    pub total_cells: u64,
}

impl MissingnessRow {
    pub fn observed(&self) -> u64 {
        self.total_cells - self.missing_cells
    }

    pub fn percent(&self) -> f64 {
        if self.total_cells == 0 {
            0.0
        } else {
            100.0 * self.missing_cells as f64 / self.total_cells as f64
        }
    }

    /// Percentage rounded half-up to two decimals, computed on the exact ratio.
    pub fn percent_display(&self) -> String {
        if self.total_cells == 0 {
            return "0.00".into();
        }
        let scaled = (self.missing_cells as u128) * 10_000;
        let total = self.total_cells as u128;
        let hundredths = (2 * scaled + total) / (2 * total);
        format!("{}.{:02}", hundredths / 100, hundredths % 100)
    }
}

/// Per-feature missing-cell table, sorted by descending missing fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessReport {
    pub rows: Vec<MissingnessRow>,
}

impl MissingnessReport {
    pub fn row(&self, feature: &str) -> Option<&MissingnessRow> {
        self.rows.iter().find(|r| r.feature == feature)
    }

    pub fn restrict(&self, schema: &WindowSchema) -> Self {
        Self {
            rows: self
                .rows
                .iter()
                .filter(|r| schema.feature_index(&r.feature).is_some())
                .cloned()
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,missing_percent,observed,missing,total\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.feature,
                r.percent_display(),
                r.observed(),
                r.missing_cells,
                r.total_cells
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.feature.len()).max().unwrap_or(0).max(7);
        let mut out = format!("{:<width$}  {:>9}  {:>12}\n", "feature", "missing %", "observed");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9}  {:>12}",
                r.feature,
                r.percent_display(),
                r.observed()
            );
        }
        out
    }
}

pub fn missingness_report(samples: &[WindowedSample], schema: &WindowSchema) -> Result<MissingnessReport> {
    let refs: Vec<&WindowedSample> = samples.iter().collect();
    missingness_report_refs(&refs, schema)
}

pub(crate) fn missingness_report_refs(
    samples: &[&WindowedSample],
    schema: &WindowSchema,
) -> Result<MissingnessReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("missingness report over an empty sample set".into()));
    }
    let l = schema.window_length() as u64;
    let mut rows: Vec<MissingnessRow> = schema
        .features()
        .iter()
        .enumerate()
        .map(|(i, f)| MissingnessRow {
            feature: f.name.clone(),
            missing_cells: samples
                .iter()
                .map(|s| s.values.row(i).iter().filter(|v| v.is_nan()).count() as u64)
                .sum(),
            total_cells: samples.len() as u64 * l,
        })
        .collect();
    // exact rational comparison; stable sort keeps schema order on ties
    rows.sort_by(|a, b| {
        let lhs = b.missing_cells as u128 * a.total_cells as u128;
        let rhs = a.missing_cells as u128 * b.total_cells as u128;
        lhs.cmp(&rhs)
    });
    Ok(MissingnessReport { rows })
}
