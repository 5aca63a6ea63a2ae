use std::io::{Read, Write};

use super::{AttributionSummary, FeatureRanking, GroupKey};
use crate::data::{Window, WindowSchema};
use crate::{Error, Result};

const SUMMARY_HEADER: [&str; 8] = ["group_key", "count", "explainer", "base_value", "feature", "day", "value", "mean_abs"];

fn fmt_err(e: impl std::fmt::Display) -> Error {
    Error::Format(e.to_string())
}

/// One row per (summary, feature, day).
pub fn write_summaries_csv(out: impl Write, summaries: &[&AttributionSummary], schema: &WindowSchema) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(fmt_err)?;
    for s in summaries {
        for (i, f) in schema.features().iter().enumerate() {
            for t in 0..schema.window_length() {
                w.write_record([
                    s.group_key.to_string(),
                    s.count.to_string(),
                    s.explainer.to_string(),
                    s.base_value.to_string(),
                    f.name.clone(),
                    (t + 1).to_string(),
                    s.values.get(i, t).to_string(),
                    s.mean_abs.get(i, t).to_string(),
                ])
                .map_err(fmt_err)?;
            }
        }
    }
    w.flush().map_err(fmt_err)
}

/// Reads summaries written by [`write_summaries_csv`]; the selection text is not stored.
pub fn read_summaries_csv(input: impl Read, schema: &WindowSchema) -> Result<Vec<AttributionSummary>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(fmt_err)?.clone();
    if header.iter().collect::<Vec<_>>() != SUMMARY_HEADER {
        return Err(Error::Format(format!("summary header must be {}", SUMMARY_HEADER.join(","))));
    }
    let (n, l) = (schema.n_features(), schema.window_length());
    let mut out: Vec<(AttributionSummary, usize)> = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(fmt_err)?;
        let line = row + 2;
        let num = |col: usize, name: &str| -> Result<f64> {
            rec[col].parse().map_err(|e| Error::Parse { row: line, column: name.into(), message: format!("{e}") })
        };
        let key: GroupKey = rec[0].parse()?;
        let count: usize = rec[1]
            .parse()
            .map_err(|e| Error::Parse { row: line, column: "count".into(), message: format!("{e}") })?;
        let explainer = rec[2].parse()?;
        let base = num(3, "base_value")?;
        let feature = schema.feature_index(&rec[4]).ok_or_else(|| Error::UnknownFeature(rec[4].to_string()))?;
        let day = num(5, "day")? as usize;
        if day == 0 || day > l {
            return Err(Error::Parse { row: line, column: "day".into(), message: format!("day {day} outside 1..={l}") });
        }
        let (value, mean_abs) = (num(6, "value")?, num(7, "mean_abs")?);
        if out.last().is_none_or(|(s, _)| s.group_key != key) {
            if out.iter().any(|(s, _)| s.group_key == key) {
                return Err(Error::Validation(format!("group `{key}` appears in two separate blocks")));
            }
            out.push((
                AttributionSummary {
                    explainer,
                    group_key: key,
                    count,
                    selection: String::new(),
                    base_value: base,
                    values: Window::filled(n, l, f64::NAN),
                    mean_abs: Window::filled(n, l, f64::NAN),
                },
                0,
            ));
        }
        let (s, filled) = out.last_mut().expect("pushed");
        if !s.values.get(feature, day - 1).is_nan() {
            return Err(Error::Validation(format!("group `{key}`: duplicate cell {}@{day}", &rec[4])));
        }
        s.values.set(feature, day - 1, value);
        s.mean_abs.set(feature, day - 1, mean_abs);
        *filled += 1;
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("summary file has no rows".into()));
    }
    out.into_iter()
        .map(|(s, filled)| {
            if filled == n * l {
                Ok(s)
            } else {
                Err(Error::Validation(format!("group `{}`: {filled} of {} cells present", s.group_key, n * l)))
            }
        })
        .collect()
}

/// `rank,feature,score` with 1-based ranks.
pub fn write_ranking_csv(out: impl Write, ranking: &FeatureRanking) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "feature", "score"]).map_err(fmt_err)?;
    for (i, e) in ranking.entries().iter().enumerate() {
        w.write_record([(i + 1).to_string(), e.feature.clone(), e.score.to_string()]).map_err(fmt_err)?;
    }
    w.flush().map_err(fmt_err)
}

/// Reads a ranking written by [`write_ranking_csv`]. Signed means are not
/// stored, so the score stands in for them.
pub fn read_ranking_csv(input: impl Read) -> Result<FeatureRanking> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers().map_err(fmt_err)?.iter().map(str::to_string).collect();
    if header != ["rank", "feature", "score"] {
        return Err(Error::Format(format!("ranking header must be rank,feature,score, got {}", header.join(","))));
    }
    let mut names = Vec::new();
    let mut scores = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(fmt_err)?;
        let row = i + 2;
        let parse_err = |column: &str, message: String| Error::Parse { row, column: column.into(), message };
        let rank: usize = rec[0].parse().map_err(|e| parse_err("rank", format!("{e}")))?;
        if rank != i + 1 {
            return Err(parse_err("rank", format!("expected {}, got {rank}", i + 1)));
        }
        let score: f64 = rec[2].parse().map_err(|e| parse_err("score", format!("{e}")))?;
        names.push(rec[1].to_string());
        scores.push(score);
    }
    if names.is_empty() {
        return Err(Error::EmptyInput("ranking has no rows".into()));
    }
    FeatureRanking::from_scores(&names, &scores, &scores)
}
