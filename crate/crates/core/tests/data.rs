use proptest::prelude::*;
use tsattr_core::data::*;

fn schema() -> WindowSchema {
    WindowSchema::new(
        vec![
            FeatureSpec::new("lst_day", FeatureKind::Dynamic),
            FeatureSpec::new("ndvi", FeatureKind::Dynamic),
            FeatureSpec::new("elevation", FeatureKind::Static),
        ],
        4,
    )
    .unwrap()
}

fn cell() -> impl Strategy<Value = f64> {
    prop_oneof![3 => -50.0f64..50.0, 1 => Just(f64::NAN)]
}

fn samples(first: u64, count: usize) -> impl Strategy<Value = Vec<WindowedSample>> {
    prop::collection::vec((prop::collection::vec(cell(), 12), 0u8..2), count).prop_map(move |rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (mut v, y))| {
                for f in 0..3 {
                    if v[f * 4].is_nan() {
                        v[f * 4] = 0.5;
                    }
                }
                let elevation = v[8];
                for d in 9..12 {
                    if !v[d].is_nan() {
                        v[d] = elevation;
                    }
                }
                WindowedSample::new(first + i as u64, y, None, Window::new(3, 4, v).unwrap())
            })
            .collect()
    })
}

fn provenance() -> Provenance {
    Provenance { sources: vec!["mem".into()], ingested_at: "2026-01-01T00:00:00Z".into() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn imputation_is_idempotent_and_keeps_observed_cells(train in samples(0, 6)) {
        let schema = schema();
        let stats = fit_imputer(&train, &schema).unwrap();
        let once = apply_imputation(&train, &stats, &schema).unwrap();
        let twice = apply_imputation(&once, &stats, &schema).unwrap();
        prop_assert_eq!(&once, &twice);
        for (a, b) in train.iter().zip(&once) {
            prop_assert_eq!(b.values.missing_cells(), 0);
            for (x, y) in a.values.as_slice().iter().zip(b.values.as_slice()) {
                if !x.is_nan() {
                    prop_assert_eq!(x, y);
                }
            }
        }
    }

    #[test]
    fn test_values_never_reach_imputation_statistics(train in samples(0, 5), test_a in samples(100, 3), test_b in samples(100, 3)) {
        let a = Dataset::build(schema(), train.clone(), None, test_a, provenance()).unwrap();
        let b = Dataset::build(schema(), train, None, test_b, provenance()).unwrap();
        prop_assert_eq!(a.imputation(), b.imputation());
        prop_assert_eq!(a.train(), b.train());
    }

    #[test]
    fn long_and_wide_csv_agree(train in samples(0, 4)) {
        let schema = schema();
        let mut long = Vec::new();
        write_long_csv(&mut long, &train, &schema).unwrap();
        let back = parse_csv(long.as_slice(), &schema, Layout::Long).unwrap();
        prop_assert_eq!(back.len(), train.len());
        let mut wide = String::from("sample_id,label,event_date");
        for f in schema.feature_names() {
            for d in 1..=4 {
                wide.push_str(&format!(",{f}@{d}"));
            }
        }
        wide.push('\n');
        for s in &train {
            wide.push_str(&format!("{},{},", s.sample_id, s.label));
            for v in s.values.as_slice() {
                if v.is_nan() { wide.push(','); } else { wide.push_str(&format!(",{v}")); }
            }
            wide.push('\n');
        }
        let from_wide = parse_csv(wide.as_bytes(), &schema, Layout::Wide).unwrap();
        for ((a, b), c) in train.iter().zip(&back).zip(&from_wide) {
            prop_assert_eq!(a.sample_id, b.sample_id);
            prop_assert_eq!(b.sample_id, c.sample_id);
            for ((x, y), z) in a.values.as_slice().iter().zip(b.values.as_slice()).zip(c.values.as_slice()) {
                prop_assert!(x.is_nan() && y.is_nan() && z.is_nan() || x == y && y == z);
            }
        }
    }
}

#[test]
fn archive_round_trip_preserves_digest() {
    let data = tsattr_core::synthetic::separable(40, 2, 3, 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    data.save(dir.path()).unwrap();
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back.digest(), data.digest());
    assert_eq!(back.train(), data.train());
    assert_eq!(back.test(), data.test());
}

#[test]
fn shared_sample_ids_across_splits_are_rejected() {
    let w = Window::filled(3, 4, 1.0);
    let train = vec![WindowedSample::new(1, 0, None, w.clone())];
    let test = vec![WindowedSample::new(1, 1, None, w)];
    assert!(Dataset::build(schema(), train, None, test, provenance()).is_err());
}
