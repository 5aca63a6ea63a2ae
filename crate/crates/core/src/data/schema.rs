use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Constant across the window (elevation, land cover).
    Static,
    /// May change from day to day.
    Dynamic,
}

/// How a derived feature is recomputed from its parents on the same day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Derivation {
    Difference { minuend: String, subtrahend: String },
    Ratio { numerator: String, denominator: String },
}

impl Derivation {
    pub fn parents(&self) -> [&str; 2] {
        match self {
            Derivation::Difference {
                minuend,
                subtrahend,
            } => [minuend, subtrahend],
            Derivation::Ratio {
                numerator,
                denominator,
            } => [numerator, denominator],
        }
    }

    pub fn apply(&self, a: f64, b: f64) -> f64 {
        match self {
            Derivation::Difference { .. } => a - b,
            Derivation::Ratio { .. } => a / b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// One-hot group this indicator belongs to, e.g. `season`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived: Option<Derivation>,
}

impl FeatureSpec {
    pub fn new(name: impl Into<String>, kind: FeatureKind) -> Self {
        Self {
            name: name.into(),
            kind,
            group: None,
            derived: None,
        }
    }

    pub fn in_group(mut self, group: impl Into<String>) -> Self {
        self.group = Some(group.into());
        self
    }

    pub fn derived_from(mut self, derivation: Derivation) -> Self {
        self.derived = Some(derivation);
        self
    }
}

/// Ordered feature list plus window length. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct WindowSchema {
    features: Vec<FeatureSpec>,
    window_length: usize,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    window_length: usize,
    features: Vec<FeatureSpec>,
}

impl TryFrom<RawSchema> for WindowSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        WindowSchema::new(raw.features, raw.window_length)
    }
}

impl From<WindowSchema> for RawSchema {
    fn from(s: WindowSchema) -> Self {
        RawSchema {
            window_length: s.window_length,
            features: s.features,
        }
    }
}

impl WindowSchema {
    pub const POSITIVE_LABEL_MEANING: &'static str = "event occurs on day L+1";

    pub fn new(features: Vec<FeatureSpec>, window_length: usize) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Schema("schema needs at least one feature".into()));
        }
        if window_length == 0 {
            return Err(Error::Schema("window_length must be at least 1".into()));
        }
        let mut seen = HashSet::new();
        for f in &features {
            if f.name.is_empty() || f.name.contains(['@', ',']) {
                return Err(Error::Schema(format!("invalid feature name `{}`", f.name)));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature `{}`", f.name)));
            }
        }
        let mut group_kind: BTreeMap<&str, FeatureKind> = BTreeMap::new();
        for f in &features {
            if let Some(g) = &f.group {
                if f.derived.is_some() {
                    return Err(Error::Schema(format!(
                        "one-hot member `{}` cannot be derived",
                        f.name
                    )));
                }
                match group_kind.insert(g, f.kind) {
                    Some(k) if k != f.kind => {
                        return Err(Error::Schema(format!(
                            "group `{g}` mixes static and dynamic members"
                        )))
                    }
                    _ => {}
                }
            }
            if let Some(d) = &f.derived {
                for p in d.parents() {
                    if p == f.name || !seen.contains(p) {
                        return Err(Error::Schema(format!(
                            "derived feature `{}` has invalid parent `{p}`",
                            f.name
                        )));
                    }
                }
            }
        }
        Ok(Self {
            features,
            window_length,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawSchema =
            toml::from_str(text).map_err(|e| Error::Schema(format!("schema file: {e}")))?;
        raw.try_into()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&RawSchema::from(self.clone())).expect("schema serializes")
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// One-hot groups in first-member order, as feature indices.
    pub fn groups(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, f) in self.features.iter().enumerate() {
            if let Some(g) = &f.group {
                match out.iter_mut().find(|(name, _)| name == g) {
                    Some((_, members)) => members.push(i),
                    None => out.push((g.clone(), vec![i])),
                }
            }
        }
        out
    }

    /// Flattened column name for feature `i` on 1-based `day`.
    pub fn column_name(&self, feature: usize, day: usize) -> String {
        format!("{}@{}", self.features[feature].name, day)
    }

    /// Schema keeping only the listed features, in the given order.
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        let kept: HashSet<&str> = keep
            .iter()
            .map(|&i| self.features[i].name.as_str())
            .collect();
        let features = keep
            .iter()
            .map(|&i| {
                let mut f = self.features[i].clone();
                // a derivation whose parent was dropped can no longer be recomputed
                if let Some(d) = &f.derived {
                    if d.parents().iter().any(|p| !kept.contains(p)) {
                        f.derived = None;
                    }
                }
                f
            })
            .collect();
        Self::new(features, self.window_length)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_toml_schema() {
        let s = WindowSchema::from_toml_str(
            r#"
window_length = 11
[[features]]
name = "max_temp"
kind = "dynamic"
[[features]]
name = "min_temp"
kind = "dynamic"
[[features]]
name = "temp_range"
kind = "dynamic"
derived = { op = "difference", minuend = "max_temp", subtrahend = "min_temp" }
[[features]]
name = "season_winter"
kind = "static"
group = "season"
[[features]]
name = "season_summer"
kind = "static"
group = "season"
"#,
        )
        .unwrap();
        assert_eq!(s.n_features(), 5);
        assert_eq!(s.window_length(), 11);
        assert_eq!(s.groups(), vec![("season".to_string(), vec![3, 4])]);
        assert_eq!(s.column_name(0, 3), "max_temp@3");
        let back = WindowSchema::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_bad_schemas() {
        let f = |n: &str| FeatureSpec::new(n, FeatureKind::Dynamic);
        assert!(WindowSchema::new(vec![], 3).is_err());
        assert!(WindowSchema::new(vec![f("a")], 0).is_err());
        assert!(WindowSchema::new(vec![f("a"), f("a")], 3).is_err());
        let mixed = vec![
            FeatureSpec::new("x", FeatureKind::Static).in_group("g"),
            FeatureSpec::new("y", FeatureKind::Dynamic).in_group("g"),
        ];
        assert!(matches!(WindowSchema::new(mixed, 2), Err(Error::Schema(_))));
        let orphan = vec![f("a").derived_from(Derivation::Ratio {
            numerator: "a".into(),
            denominator: "b".into(),
        })];
        assert!(WindowSchema::new(orphan, 2).is_err());
    }
}
