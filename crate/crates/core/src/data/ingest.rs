use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{FeatureKind, Window, WindowSchema, WindowedSample};
use crate::{Error, Result};

/// CSV arrangement of windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One row per `(sample_id, day)`; canonical.
    Long,
    /// One row per sample with `feature@day` columns.
    Wide,
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "long" => Ok(Layout::Long),
            "wide" => Ok(Layout::Wide),
            other => Err(Error::InvalidArgument(format!("unknown layout `{other}`"))),
        }
    }
}

impl std::fmt::Display for Layout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Layout::Long => "long",
            Layout::Wide => "wide",
        })
    }
}

pub fn ingest_csv(path: &Path, schema: &WindowSchema, layout: Layout) -> Result<Vec<WindowedSample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file, schema, layout)
}

/// Parses windows, marking missing cells (empty or `NaN`) as `NaN`.
pub fn parse_csv<R: Read>(reader: R, schema: &WindowSchema, layout: Layout) -> Result<Vec<WindowedSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Format(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let samples = match layout {
        Layout::Long => parse_long(&mut rdr, &header, schema)?,
        Layout::Wide => parse_wide(&mut rdr, &header, schema)?,
    };
    for s in &samples {
        check_static(s, schema)?;
    }
    Ok(samples)
}

struct Columns {
    sample_id: usize,
    label: usize,
    event_date: usize,
    day: Option<usize>,
}

fn fixed_columns(header: &[String], with_day: bool) -> Result<Columns> {
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing required column `{name}`")))
    };
    Ok(Columns {
        sample_id: find("sample_id")?,
        label: find("label")?,
        event_date: find("event_date")?,
        day: if with_day { Some(find("day")?) } else { None },
    })
}

fn field<'r>(record: &'r csv::StringRecord, idx: usize, row: usize, column: &str) -> Result<&'r str> {
    record.get(idx).ok_or_else(|| Error::Parse {
        row,
        column: column.to_string(),
        message: "missing field".into(),
    })
}

fn parse_value(raw: &str, row: usize, column: &str) -> Result<f64> {
    if raw.is_empty() || raw.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("`{raw}` is not a finite number"),
        }),
    }
}

fn parse_meta(record: &csv::StringRecord, cols: &Columns, row: usize) -> Result<(u64, u8, Option<NaiveDate>)> {
    let raw_id = field(record, cols.sample_id, row, "sample_id")?;
    let id = raw_id.parse::<u64>().map_err(|_| Error::Parse {
        row,
        column: "sample_id".into(),
        message: format!("`{raw_id}` is not a non-negative integer"),
    })?;
    let raw_label = field(record, cols.label, row, "label")?;
    let label = match raw_label {
        "0" => 0,
        "1" => 1,
        other => {
            return Err(Error::Parse {
                row,
                column: "label".into(),
                message: format!("`{other}` is not 0 or 1"),
            })
        }
    };
    let raw_date = field(record, cols.event_date, row, "event_date")?;
    let date = if raw_date.is_empty() {
        None
    } else {
        Some(NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| Error::Parse {
            row,
            column: "event_date".into(),
            message: format!("`{raw_date}` is not a YYYY-MM-DD date"),
        })?)
    };
    Ok((id, label, date))
}

fn row_number(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn read_record(rdr: &mut csv::Reader<impl Read>, record: &mut csv::StringRecord) -> Result<bool> {
    rdr.read_record(record).map_err(|e| {
        let row = e.position().map_or(0, |p| p.line() as usize);
        Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        }
    })
}

fn parse_long(
    rdr: &mut csv::Reader<impl Read>,
    header: &[String],
    schema: &WindowSchema,
) -> Result<Vec<WindowedSample>> {
    let cols = fixed_columns(header, true)?;
    let feature_cols = map_feature_columns(header, schema, |name| {
        schema.feature_index(name).map(|i| (i, 0))
    }, &["sample_id", "day", "label", "event_date"])?;
    let n = schema.n_features();
    let l = schema.window_length();

    struct Partial {
        row: usize,
        label: u8,
        date: Option<NaiveDate>,
        values: Vec<f64>,
        seen: Vec<bool>,
    }
    let mut order: Vec<u64> = Vec::new();
    let mut partial: HashMap<u64, Partial> = HashMap::new();
    let mut record = csv::StringRecord::new();
    while read_record(rdr, &mut record)? {
        let row = row_number(&record);
        let (id, label, date) = parse_meta(&record, &cols, row)?;
        let day_idx = cols.day.expect("long layout has a day column");
        let raw_day = field(&record, day_idx, row, "day")?;
        let day = raw_day
            .parse::<usize>()
            .ok()
            .filter(|d| (1..=l).contains(d))
            .ok_or_else(|| Error::Parse {
                row,
                column: "day".into(),
                message: format!("`{raw_day}` is not a day in 1..={l}"),
            })?;
        let entry = partial.entry(id).or_insert_with(|| {
            order.push(id);
            Partial {
                row,
                label,
                date,
                values: vec![f64::NAN; n * l],
                seen: vec![false; l],
            }
        });
        if entry.label != label || entry.date != date {
            return Err(Error::Validation(format!(
                "sample_id {id}: label/event_date at row {row} disagree with row {}",
                entry.row
            )));
        }
        if std::mem::replace(&mut entry.seen[day - 1], true) {
            return Err(Error::Validation(format!(
                "sample_id {id}: day {day} appears twice (row {row})"
            )));
        }
        for &(col, (feature, _)) in &feature_cols {
            let raw = field(&record, col, row, &header[col])?;
            entry.values[feature * l + day - 1] = parse_value(raw, row, &header[col])?;
        }
    }
    order
        .into_iter()
        .map(|id| {
            let p = partial.remove(&id).expect("every ordered id has a partial");
            if let Some(day) = p.seen.iter().position(|s| !s) {
                return Err(Error::Validation(format!(
                    "sample_id {id}: day {} is missing",
                    day + 1
                )));
            }
            Ok(WindowedSample::new(id, p.label, p.date, Window::new(n, l, p.values)?))
        })
        .collect()
}

fn parse_wide(
    rdr: &mut csv::Reader<impl Read>,
    header: &[String],
    schema: &WindowSchema,
) -> Result<Vec<WindowedSample>> {
    let cols = fixed_columns(header, false)?;
    let l = schema.window_length();
    let n = schema.n_features();
    let feature_cols = map_feature_columns(header, schema, |name| {
        let (feat, day) = name.rsplit_once('@')?;
        let day = day.parse::<usize>().ok().filter(|d| (1..=l).contains(d))?;
        schema.feature_index(feat).map(|i| (i, day))
    }, &["sample_id", "label", "event_date"])?;
    if feature_cols.len() != n * l {
        return Err(Error::Schema(format!(
            "wide layout needs {} feature@day columns, found {}",
            n * l,
            feature_cols.len()
        )));
    }
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    while read_record(rdr, &mut record)? {
        let row = row_number(&record);
        let (id, label, date) = parse_meta(&record, &cols, row)?;
        let mut values = vec![f64::NAN; n * l];
        for &(col, (feature, day)) in &feature_cols {
            let raw = field(&record, col, row, &header[col])?;
            values[feature * l + day - 1] = parse_value(raw, row, &header[col])?;
        }
        out.push(WindowedSample::new(id, label, date, Window::new(n, l, values)?));
    }
    Ok(out)
}

/// Maps header columns to `(feature, day)`; rejects unknown and missing names.
fn map_feature_columns(
    header: &[String],
    schema: &WindowSchema,
    resolve: impl Fn(&str) -> Option<(usize, usize)>,
    fixed: &[&str],
) -> Result<Vec<(usize, (usize, usize))>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (col, name) in header.iter().enumerate() {
        if fixed.contains(&name.as_str()) {
            continue;
        }
        let key = resolve(name).ok_or_else(|| Error::Schema(format!("unknown column `{name}`")))?;
        if !seen.insert(key) {
            return Err(Error::Schema(format!("duplicate column `{name}`")));
        }
        out.push((col, key));
    }
    for (i, f) in schema.features().iter().enumerate() {
        if !seen.iter().any(|&(fi, _)| fi == i) {
            return Err(Error::Schema(format!("missing column for feature `{}`", f.name)));
        }
    }
    Ok(out)
}

fn check_static(sample: &WindowedSample, schema: &WindowSchema) -> Result<()> {
    for (i, f) in schema.features().iter().enumerate() {
        if f.kind != FeatureKind::Static {
            continue;
        }
        let mut observed = sample.values.row(i).iter().filter(|v| !v.is_nan());
        if let Some(first) = observed.next() {
            if observed.any(|v| v != first) {
                return Err(Error::Validation(format!(
                    "sample_id {}: static feature `{}` varies within the window",
                    sample.sample_id, f.name
                )));
            }
        }
    }
    Ok(())
}

/// Writes samples in long layout; missing cells become empty fields.
pub fn write_long_csv<W: Write>(writer: W, samples: &[WindowedSample], schema: &WindowSchema) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["sample_id".to_string(), "day".into(), "label".into(), "event_date".into()];
    header.extend(schema.feature_names());
    let csv_err = |e: csv::Error| Error::Format(format!("csv write: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    let l = schema.window_length();
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for s in samples {
        let date = s.event_date.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default();
        for day in 0..l {
            record.clear();
            record.push(s.sample_id.to_string());
            record.push((day + 1).to_string());
            record.push(s.label.to_string());
            record.push(date.clone());
            for f in 0..schema.n_features() {
                let v = s.values.get(f, day);
                record.push(if v.is_nan() { String::new() } else { v.to_string() });
            }
            w.write_record(&record).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Format(format!("csv write: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSpec;

    fn schema() -> WindowSchema {
        WindowSchema::new(
            vec![
                FeatureSpec::new("t2m", FeatureKind::Dynamic),
                FeatureSpec::new("dem", FeatureKind::Static),
            ],
            2,
        )
        .unwrap()
    }

    const LONG: &str = "sample_id,day,label,event_date,t2m,dem
1,1,1,2020-07-15,290.5,12
1,2,1,2020-07-15,291.25,12
2,1,0,2020-12-01,280,3
2,2,0,2020-12-01,,3
3,2,1,,300,NaN
3,1,1,,299,7
";

    #[test]
    fn long_layout_echoes_values() {
        let s = parse_csv(LONG.as_bytes(), &schema(), Layout::Long).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].sample_id, 1);
        assert_eq!(s[0].values.as_slice(), &[290.5, 291.25, 12.0, 12.0]);
        assert_eq!(s[0].event_date, NaiveDate::from_ymd_opt(2020, 7, 15));
        assert_eq!(s[1].label, 0);
        assert!(s[1].values.get(0, 1).is_nan());
        assert_eq!(s[2].values.get(0, 0), 299.0);
        assert_eq!(s[2].values.get(0, 1), 300.0);
        assert!(s[2].values.get(1, 1).is_nan());
        assert_eq!(s[2].event_date, None);
    }

    #[test]
    fn unknown_column_is_named() {
        let csv = "sample_id,day,label,event_date,t2m,dem,wind\n1,1,0,,1,1,1\n";
        match parse_csv(csv.as_bytes(), &schema(), Layout::Long) {
            Err(Error::Schema(m)) => assert!(m.contains("`wind`"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_row_and_column() {
        let csv = "sample_id,day,label,event_date,t2m,dem\n1,1,0,,1,1\n1,2,0,,hot,1\n";
        match parse_csv(csv.as_bytes(), &schema(), Layout::Long) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "t2m");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn varying_static_feature_is_rejected() {
        let csv = "sample_id,day,label,event_date,t2m,dem\n9,1,0,,1,1\n9,2,0,,1,2\n";
        match parse_csv(csv.as_bytes(), &schema(), Layout::Long) {
            Err(Error::Validation(m)) => assert!(m.contains("sample_id 9"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn incomplete_or_inconsistent_windows_are_rejected() {
        let missing_day = "sample_id,day,label,event_date,t2m,dem\n1,1,0,,1,1\n";
        assert!(matches!(
            parse_csv(missing_day.as_bytes(), &schema(), Layout::Long),
            Err(Error::Validation(_))
        ));
        let label_flip = "sample_id,day,label,event_date,t2m,dem\n1,1,0,,1,1\n1,2,1,,1,1\n";
        assert!(matches!(
            parse_csv(label_flip.as_bytes(), &schema(), Layout::Long),
            Err(Error::Validation(_))
        ));
        let bad_day = "sample_id,day,label,event_date,t2m,dem\n1,3,0,,1,1\n";
        assert!(matches!(
            parse_csv(bad_day.as_bytes(), &schema(), Layout::Long),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn wide_layout_matches_long() {
        let wide = "sample_id,label,event_date,t2m@1,t2m@2,dem@1,dem@2
1,1,2020-07-15,290.5,291.25,12,12
2,0,2020-12-01,280,,3,3
3,1,,299,300,7,
";
        let w = parse_csv(wide.as_bytes(), &schema(), Layout::Wide).unwrap();
        let l = parse_csv(LONG.as_bytes(), &schema(), Layout::Long).unwrap();
        assert_eq!(w.len(), l.len());
        for (a, b) in w.iter().zip(&l) {
            assert_eq!(a.sample_id, b.sample_id);
            for (x, y) in a.values.as_slice().iter().zip(b.values.as_slice()) {
                assert!(x == y || (x.is_nan() && y.is_nan()));
            }
        }
    }

    #[test]
    fn long_round_trip_preserves_values() {
        let s = parse_csv(LONG.as_bytes(), &schema(), Layout::Long).unwrap();
        let mut buf = Vec::new();
        write_long_csv(&mut buf, &s, &schema()).unwrap();
        let back = parse_csv(buf.as_slice(), &schema(), Layout::Long).unwrap();
        for (a, b) in s.iter().zip(&back) {
            assert_eq!(a.sample_id, b.sample_id);
            assert_eq!(a.event_date, b.event_date);
            for (x, y) in a.values.as_slice().iter().zip(b.values.as_slice()) {
                assert!(x == y || (x.is_nan() && y.is_nan()));
            }
        }
    }
}
