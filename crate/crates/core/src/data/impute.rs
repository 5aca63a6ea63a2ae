use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{FeatureKind, WindowSchema, WindowedSample};
use crate::linalg::CompensatedSum;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImputation {
    pub name: String,
    /// Mean over observed training cells.
    pub mean: f64,
    pub missing_cells: u64,
    pub total_cells: u64,
}

impl FeatureImputation {
    pub fn missing_fraction(&self) -> f64 {
        if self.total_cells == 0 {
            0.0
        } else {
            self.missing_cells as f64 / self.total_cells as f64
        }
    }
}

/// Most frequent fully observed one-hot pattern of a group in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMode {
    pub group: String,
    pub members: Vec<String>,
    pub pattern: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationStats {
    pub features: Vec<FeatureImputation>,
    pub group_modes: Vec<GroupMode>,
}

impl ImputationStats {
    pub fn mean(&self, feature: usize) -> f64 {
        self.features[feature].mean
    }

    pub fn restrict(&self, keep: &[usize]) -> Self {
        let features: Vec<FeatureImputation> =
            keep.iter().map(|&i| self.features[i].clone()).collect();
        let kept = |n: &String| features.iter().any(|f| &f.name == n);
        let group_modes = self
            .group_modes
            .iter()
            .filter_map(|g| {
                let (members, pattern): (Vec<String>, Vec<f64>) = g
                    .members
                    .iter()
                    .zip(&g.pattern)
                    .filter(|(m, _)| kept(m))
                    .map(|(m, p)| (m.clone(), *p))
                    .unzip();
                (!members.is_empty()).then(|| GroupMode {
                    group: g.group.clone(),
                    members,
                    pattern,
                })
            })
            .collect();
        Self {
            features,
            group_modes,
        }
    }
}

/// Per-feature means and missing fractions from the training split only.
pub fn fit_imputer(train: &[WindowedSample], schema: &WindowSchema) -> Result<ImputationStats> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training split is empty".into()));
    }
    let l = schema.window_length();
    let mut features = Vec::with_capacity(schema.n_features());
    for (i, spec) in schema.features().iter().enumerate() {
        let mut sum = CompensatedSum::default();
        let mut observed = 0u64;
        let mut missing = 0u64;
        for s in train {
            for &v in s.values.row(i) {
                if v.is_nan() {
                    missing += 1;
                } else {
                    sum.add(v);
                    observed += 1;
                }
            }
        }
        if observed == 0 {
            return Err(Error::UnimputableFeature(spec.name.clone()));
        }
        features.push(FeatureImputation {
            name: spec.name.clone(),
            mean: sum.value() / observed as f64,
            missing_cells: missing,
            total_cells: (train.len() * l) as u64,
        });
    }

    let mut group_modes = Vec::new();
    for (group, members) in schema.groups() {
        let mut counts: HashMap<Vec<u64>, (usize, usize)> = HashMap::new();
        let mut seen = 0usize;
        for s in train {
            for t in 0..l {
                let pattern: Vec<f64> = members.iter().map(|&m| s.values.get(m, t)).collect();
                if pattern.iter().any(|v| v.is_nan()) {
                    continue;
                }
                let key = pattern.iter().map(|v| v.to_bits()).collect();
                counts.entry(key).or_insert((0, seen)).0 += 1;
                seen += 1;
            }
        }
        // highest count wins; ties go to the pattern seen first
        let pattern = match counts
            .into_iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        {
            Some((key, _)) => key.into_iter().map(f64::from_bits).collect(),
            None => {
                let hot = members
                    .iter()
                    .enumerate()
                    .max_by(|a, b| features[*a.1].mean.total_cmp(&features[*b.1].mean).then(b.0.cmp(&a.0)))
                    .map(|(k, _)| k)
                    .unwrap_or(0);
                (0..members.len()).map(|k| if k == hot { 1.0 } else { 0.0 }).collect()
            }
        };
        group_modes.push(GroupMode {
            group,
            members: members.iter().map(|&m| schema.features()[m].name.clone()).collect(),
            pattern,
        });
    }
    Ok(ImputationStats {
        features,
        group_modes,
    })
}

/// Fills every missing cell; observed cells are left untouched.
///
/// Order of precedence: derived features recomputed from observed parents,
/// one-hot groups completed (or set to the training mode), static features
/// copied from the window's observed value, then the training mean.
pub fn apply_imputation(
    samples: &[WindowedSample],
    stats: &ImputationStats,
    schema: &WindowSchema,
) -> Result<Vec<WindowedSample>> {
    let names = schema.feature_names();
    if stats.features.len() != names.len()
        || stats.features.iter().zip(&names).any(|(f, n)| &f.name != n)
    {
        return Err(Error::Mismatch(
            "imputation statistics were fitted on a different schema".into(),
        ));
    }
    let shape = (schema.n_features(), schema.window_length());
    let l = schema.window_length();
    let groups = schema.groups();
    let derived: Vec<(usize, &super::Derivation, usize, usize)> = schema
        .features()
        .iter()
        .enumerate()
        .filter_map(|(i, f)| {
            let d = f.derived.as_ref()?;
            let [a, b] = d.parents();
            Some((i, d, schema.feature_index(a)?, schema.feature_index(b)?))
        })
        .collect();

    samples
        .iter()
        .map(|s| {
            if s.values.shape() != shape {
                return Err(Error::ShapeMismatch {
                    expected_features: shape.0,
                    expected_days: shape.1,
                    actual_features: s.values.n_features(),
                    actual_days: s.values.window_length(),
                });
            }
            if s.values.missing_cells() == 0 {
                return Ok(s.clone());
            }
            let raw = &s.values;
            let mut out = raw.clone();

            for &(i, d, a, b) in &derived {
                for t in 0..l {
                    let (pa, pb) = (raw.get(a, t), raw.get(b, t));
                    if raw.get(i, t).is_nan() && !pa.is_nan() && !pb.is_nan() {
                        let v = d.apply(pa, pb);
                        if v.is_finite() {
                            out.set(i, t, v);
                        }
                    }
                }
            }

            for (group, members) in &groups {
                let mode = stats.group_modes.iter().find(|g| &g.group == group);
                for t in 0..l {
                    if members.iter().all(|&m| !raw.get(m, t).is_nan()) {
                        continue;
                    }
                    let hot_observed = members.iter().any(|&m| raw.get(m, t) == 1.0);
                    for (k, &m) in members.iter().enumerate() {
                        if !raw.get(m, t).is_nan() {
                            continue;
                        }
                        let v = if hot_observed {
                            0.0
                        } else {
                            mode.map_or(0.0, |g| g.pattern[k])
                        };
                        out.set(m, t, v);
                    }
                }
                // a mode pattern may conflict with an observed hot member on
                // the same day; the observed value wins
                for t in 0..l {
                    let hot = members.iter().filter(|&&m| out.get(m, t) == 1.0).count();
                    if hot > 1 {
                        for &m in members {
                            if raw.get(m, t).is_nan() {
                                out.set(m, t, 0.0);
                            }
                        }
                    }
                }
            }

            for (i, f) in schema.features().iter().enumerate() {
                if f.kind == FeatureKind::Static && f.group.is_none() {
                    if let Some(&v) = raw.row(i).iter().find(|v| !v.is_nan()) {
                        for t in 0..l {
                            if out.get(i, t).is_nan() {
                                out.set(i, t, v);
                            }
                        }
                    }
                }
                for t in 0..l {
                    if out.get(i, t).is_nan() {
                        out.set(i, t, stats.mean(i));
                    }
                }
            }
            Ok(WindowedSample {
                values: out,
                ..s.clone()
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Derivation, FeatureSpec, Window};

    fn sample(id: u64, n: usize, l: usize, values: Vec<f64>) -> WindowedSample {
        WindowedSample::new(id, 0, None, Window::new(n, l, values).unwrap())
    }

    fn one_feature() -> WindowSchema {
        WindowSchema::new(vec![FeatureSpec::new("lst_day", FeatureKind::Dynamic)], 3).unwrap()
    }

    #[test]
    fn mean_over_observed_cells() {
        let s = vec![sample(1, 1, 3, vec![2.0, f64::NAN, 4.0])];
        let stats = fit_imputer(&s, &one_feature()).unwrap();
        assert_eq!(stats.features[0].mean, 3.0);
        assert!((stats.features[0].missing_fraction() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fully_observed_feature_has_zero_missing() {
        let s = vec![sample(1, 1, 3, vec![1.0, 2.0, 6.0])];
        let stats = fit_imputer(&s, &one_feature()).unwrap();
        assert_eq!(stats.features[0].missing_fraction(), 0.0);
        assert_eq!(stats.features[0].mean, 3.0);
        let out = apply_imputation(&s, &stats, &one_feature()).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn fully_missing_feature_is_unimputable() {
        let s = vec![sample(1, 1, 3, vec![f64::NAN; 3])];
        assert!(matches!(
            fit_imputer(&s, &one_feature()),
            Err(Error::UnimputableFeature(name)) if name == "lst_day"
        ));
        assert!(matches!(fit_imputer(&[], &one_feature()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn single_missing_cell_takes_mean() {
        let stats = ImputationStats {
            features: vec![FeatureImputation {
                name: "lst_day".into(),
                mean: 290.0,
                missing_cells: 0,
                total_cells: 3,
            }],
            group_modes: vec![],
        };
        let s = vec![sample(4, 1, 3, vec![300.5, f64::NAN, 280.25])];
        let out = apply_imputation(&s, &stats, &one_feature()).unwrap();
        assert_eq!(out[0].values.as_slice(), &[300.5, 290.0, 280.25]);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let s = vec![sample(1, 1, 3, vec![1.0, 2.0, 3.0])];
        let stats = fit_imputer(&s, &one_feature()).unwrap();
        let other =
            WindowSchema::new(vec![FeatureSpec::new("ndvi", FeatureKind::Dynamic)], 3).unwrap();
        assert!(matches!(apply_imputation(&s, &stats, &other), Err(Error::Mismatch(_))));
    }

    #[test]
    fn one_hot_group_takes_mode_not_mean() {
        let schema = WindowSchema::new(
            vec![
                FeatureSpec::new("season_winter", FeatureKind::Static).in_group("season"),
                FeatureSpec::new("season_summer", FeatureKind::Static).in_group("season"),
            ],
            1,
        )
        .unwrap();
        let train = vec![
            sample(1, 2, 1, vec![0.0, 1.0]),
            sample(2, 2, 1, vec![0.0, 1.0]),
            sample(3, 2, 1, vec![1.0, 0.0]),
        ];
        let stats = fit_imputer(&train, &schema).unwrap();
        assert_eq!(stats.group_modes[0].pattern, vec![0.0, 1.0]);
        let gaps = vec![
            sample(4, 2, 1, vec![f64::NAN, f64::NAN]),
            sample(5, 2, 1, vec![1.0, f64::NAN]),
        ];
        let out = apply_imputation(&gaps, &stats, &schema).unwrap();
        assert_eq!(out[0].values.as_slice(), &[0.0, 1.0]);
        assert_eq!(out[1].values.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn derived_feature_recomputed_from_parents() {
        let schema = WindowSchema::new(
            vec![
                FeatureSpec::new("max_temp", FeatureKind::Dynamic),
                FeatureSpec::new("min_temp", FeatureKind::Dynamic),
                FeatureSpec::new("temp_range", FeatureKind::Dynamic).derived_from(
                    Derivation::Difference {
                        minuend: "max_temp".into(),
                        subtrahend: "min_temp".into(),
                    },
                ),
            ],
            2,
        )
        .unwrap();
        let train = vec![sample(1, 3, 2, vec![30.0, 32.0, 10.0, 12.0, 20.0, 20.0])];
        let stats = fit_imputer(&train, &schema).unwrap();
        // day 1: parents present -> recompute; day 2: parent missing -> mean
        let s = vec![sample(2, 3, 2, vec![25.0, f64::NAN, 5.0, 6.0, f64::NAN, f64::NAN])];
        let out = apply_imputation(&s, &stats, &schema).unwrap();
        assert_eq!(out[0].values.get(2, 0), 20.0);
        assert_eq!(out[0].values.get(2, 1), 20.0);
        assert_eq!(out[0].values.get(0, 1), 31.0);
    }

    #[test]
    fn static_feature_stays_constant() {
        let schema = WindowSchema::new(vec![FeatureSpec::new("dem", FeatureKind::Static)], 3).unwrap();
        let train = vec![sample(1, 1, 3, vec![100.0; 3])];
        let stats = fit_imputer(&train, &schema).unwrap();
        let s = vec![sample(2, 1, 3, vec![7.0, f64::NAN, 7.0])];
        let out = apply_imputation(&s, &stats, &schema).unwrap();
        assert_eq!(out[0].values.as_slice(), &[7.0, 7.0, 7.0]);
    }
}
