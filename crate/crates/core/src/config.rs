//! Line-oriented run configuration: `section.key = value`.
//!
//! Every key has a default; unknown keys are rejected. The resolved
//! configuration is echoed verbatim into each run manifest, so a manifest is
//! itself a valid config file.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Text,
    Int,
    Float,
    Bool,
    /// Integer or `auto`.
    OptInt,
    /// Real or `auto`.
    OptFloat,
}

const KEYS: &[(&str, Kind, &str)] = &[
    ("run.command", Kind::Text, ""),
    ("run.seed", Kind::Int, "0"),
    ("run.threads", Kind::Int, "0"),
    ("run.dataset_hash", Kind::Text, ""),
    ("dataset.path", Kind::Text, ""),
    ("dataset.schema", Kind::Text, ""),
    ("dataset.layout", Kind::Text, "long"),
    ("dataset.train", Kind::Text, ""),
    ("dataset.val", Kind::Text, ""),
    ("dataset.test", Kind::Text, ""),
    ("dataset.split", Kind::Text, "test"),
    ("model.kind", Kind::Text, "random_forest"),
    ("model.path", Kind::Text, ""),
    ("model.command", Kind::Text, ""),
    ("model.num_trees", Kind::Int, "100"),
    ("model.min_split", Kind::Int, "2"),
    ("model.max_depth", Kind::OptInt, "auto"),
    ("model.learning_rate", Kind::Float, "0.3"),
    ("model.l2", Kind::Float, "0.001"),
    ("model.epochs", Kind::Int, "300"),
    ("model.step", Kind::Float, "0.5"),
    ("model.batch_size", Kind::OptInt, "auto"),
    ("explainer.method", Kind::Text, "kernel_shap"),
    ("explainer.granularity", Kind::Text, "cell"),
    ("explainer.fuse_groups", Kind::Bool, "true"),
    ("explainer.background", Kind::Text, "sampled"),
    ("explainer.background_size", Kind::Int, "100"),
    ("explainer.num_coalitions", Kind::OptInt, "auto"),
    ("explainer.num_perturbations", Kind::OptInt, "auto"),
    ("explainer.kernel_width", Kind::OptFloat, "auto"),
    ("explainer.top_k", Kind::OptInt, "auto"),
    ("explainer.max_samples", Kind::OptInt, "auto"),
    ("explainer.attributions", Kind::Text, ""),
    ("explainer.compare", Kind::Text, ""),
    ("explainer.group_by", Kind::Text, "all"),
    ("explainer.agreement_k", Kind::Int, "5"),
    ("explainer.repeats", Kind::Int, "10"),
    ("render.summary", Kind::Text, ""),
    ("render.group", Kind::Text, "all"),
    ("render.vmax", Kind::OptFloat, "auto"),
    ("render.r_min", Kind::Float, "1"),
    ("render.r_max", Kind::Float, "9"),
    ("render.cell", Kind::Float, "22"),
    ("render.min_score", Kind::OptFloat, "auto"),
    ("render.curves", Kind::Int, "5"),
    ("render.histogram_features", Kind::Text, ""),
    ("render.bins", Kind::Int, "20"),
    ("study.mode", Kind::Text, "feature_selection"),
    ("study.ranking", Kind::Text, ""),
    ("study.ks", Kind::Text, ""),
    ("study.directions", Kind::Text, "most,least"),
    ("study.models", Kind::Text, "random_forest,gradient_boosting,logistic"),
    ("study.timing_runs", Kind::Int, "3"),
];

fn lookup(key: &str) -> Result<(&'static str, Kind)> {
    KEYS.iter()
        .find(|(k, _, _)| *k == key)
        .map(|&(k, kind, _)| (k, kind))
        .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))
}

fn check(key: &str, kind: Kind, value: &str) -> Result<()> {
    let ok = match kind {
        Kind::Text => !value.contains('\n'),
        Kind::Int => value.parse::<u64>().is_ok(),
        Kind::Float => value.parse::<f64>().is_ok_and(f64::is_finite),
        Kind::Bool => matches!(value, "true" | "false"),
        Kind::OptInt => value == "auto" || value.parse::<u64>().is_ok(),
        Kind::OptFloat => value == "auto" || value.parse::<f64>().is_ok_and(f64::is_finite),
    };
    if ok {
        Ok(())
    } else {
        let expected = match kind {
            Kind::Text => "single-line text",
            Kind::Int => "a non-negative integer",
            Kind::Float => "a finite number",
            Kind::Bool => "true or false",
            Kind::OptInt => "a non-negative integer or `auto`",
            Kind::OptFloat => "a finite number or `auto`",
        };
        Err(Error::Config(format!("`{key}` must be {expected}, got `{value}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|&(k, _, d)| (k, d.to_string())).collect(),
        }
    }
}

/// Parses `section.key = value` lines; `#` starts a comment line.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `section.key = value`", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(Error::Config(format!("line {}: `{k}` is set twice", i + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        KEYS.iter().map(|(k, _, _)| *k)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (k, kind) = lookup(key)?;
        let value = value.trim();
        check(k, kind, value)?;
        self.values.insert(k, value.to_string());
        Ok(())
    }

    /// Parses `key=value` as given to `--set`.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("`{assignment}` is not key=value")))?;
        self.set(k.trim(), v)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_pairs(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unknown config key {key}"))
    }

    pub fn is_default(&self, key: &str) -> bool {
        KEYS.iter().any(|&(k, _, d)| k == key && self.get(key) == d)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)
            .parse()
            .map_err(|_| Error::Config(format!("`{key}` has invalid value `{}`", self.get(key))))
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.parse(key)
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.parse(key)
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.parse(key)
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        self.parse(key)
    }

    /// `None` for `auto`.
    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>> {
        if self.get(key) == "auto" {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        if self.get(key) == "auto" {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    /// `None` for an empty value.
    pub fn text(&self, key: &str) -> Option<&str> {
        Some(self.get(key)).filter(|v| !v.is_empty())
    }

    /// Comma-separated items, blanks dropped.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    }

    pub fn seed(&self) -> u64 {
        self.u64("run.seed").unwrap_or(0)
    }

    /// Resolved configuration in key order; parseable by [`apply_text`](Self::apply_text).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for &(k, _, _) in KEYS {
            let s = k.split('.').next().unwrap_or("");
            if s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = s;
            }
            out.push_str(&format!("{k} = {}\n", self.get(k)));
        }
        out
    }

    /// Digest of the keys in the given sections.
    pub fn section_hash(&self, sections: &[&str]) -> String {
        let mut h = Sha256::new();
        for &(k, _, _) in KEYS {
            if sections.iter().any(|s| k.starts_with(&format!("{s}."))) {
                h.update(k.as_bytes());
                h.update(b"=");
                h.update(self.get(k).as_bytes());
                h.update(b"\n");
            }
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_fatal() {
        let mut c = RunConfig::default();
        assert!(matches!(c.set("model.trees", "5"), Err(Error::Config(_))));
        assert!(c.apply_text("render.colour = red\n").is_err());
    }

    #[test]
    fn values_are_type_checked() {
        let mut c = RunConfig::default();
        assert!(c.set("model.num_trees", "ten").is_err());
        assert!(c.set("explainer.fuse_groups", "yes").is_err());
        c.set("model.max_depth", "4").unwrap();
        assert_eq!(c.opt_usize("model.max_depth").unwrap(), Some(4));
        assert_eq!(c.opt_usize("explainer.top_k").unwrap(), None);
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.set("run.seed", "42").unwrap();
        c.set("study.ks", "5,10").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.list("study.ks"), vec!["5", "10"]);
    }

    #[test]
    fn duplicates_and_malformed_lines() {
        assert!(parse_pairs("a.b = 1\na.b = 2\n").is_err());
        assert!(parse_pairs("just words\n").is_err());
        assert_eq!(parse_pairs("# note\n\n run.seed=3 \n").unwrap(), vec![("run.seed".into(), "3".into())]);
    }
}
