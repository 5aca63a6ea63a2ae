use chrono::NaiveDate;
use tsattr_core::analytics::{Direction, FeatureRanking};
use tsattr_core::data::*;
use tsattr_core::explain::permutation_importance;
use tsattr_core::predict::*;
use tsattr_core::study::*;
use tsattr_core::synthetic::{informative_noise, separable};

fn forest(num_trees: usize, seed: u64) -> ModelSpec {
    ModelSpec::RandomForest(TreeEnsembleConfig { num_trees, seed, ..TreeEnsembleConfig::random_forest() })
}

fn permutation_ranking(dataset: &Dataset, spec: &ModelSpec) -> FeatureRanking {
    let h = spec.train(dataset).unwrap();
    let scores = permutation_importance(&h, dataset.test(), 5, 1).unwrap();
    let s: Vec<f64> = scores.iter().map(|p| p.score).collect();
    FeatureRanking::from_scores(&dataset.schema().feature_names(), &s, &s).unwrap()
}

#[test]
fn full_width_rows_equal_the_baseline() {
    let data = separable(120, 3, 4, 2).unwrap();
    let spec = forest(20, 5);
    let ranking = permutation_ranking(&data, &spec);
    let report = run_feature_selection_study(&data, &ranking, &[3], &[Direction::Most, Direction::Least], &spec, 1).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert_eq!(report.rows[0].configuration, "baseline-3");
    for r in &report.rows[1..] {
        assert_eq!(r.accuracy_pct, report.rows[0].accuracy_pct);
        assert_eq!(r.features, 3);
    }
}

#[test]
fn row_count_is_ks_times_directions_plus_one() {
    let (data, _) = informative_noise(200, 3, 17, 3, 4).unwrap();
    let spec = forest(10, 1);
    let ranking = permutation_ranking(&data, &spec);
    let report = run_feature_selection_study(&data, &ranking, &[5, 10, 20], &[Direction::Most, Direction::Least], &spec, 1).unwrap();
    let names: Vec<&str> = report.rows.iter().map(|r| r.configuration.as_str()).collect();
    assert_eq!(names, ["baseline-20", "most-5", "least-5", "most-10", "least-10", "most-20", "least-20"]);
    assert!(report.rows.iter().all(|r| r.accuracy_pct.is_some_and(|a| (0.0..=100.0).contains(&a))));
    assert_eq!(report.to_csv().lines().count(), 8);
}

#[test]
fn oversized_k_fails_before_training() {
    let data = separable(60, 2, 2, 3).unwrap();
    let ranking = FeatureRanking::from_scores(&data.schema().feature_names(), &[1.0, 0.5], &[1.0, 0.5]).unwrap();
    let spec = ModelSpec::External { command: vec!["/nonexistent/never-run".into()] };
    assert!(run_feature_selection_study(&data, &ranking, &[1, 3], &[Direction::Most], &spec, 1).is_err());
}

#[test]
fn informative_features_beat_noise() {
    let (data, informative) = informative_noise(1000, 3, 7, 5, 11).unwrap();
    let spec = forest(50, 3);
    let ranking = permutation_ranking(&data, &spec);
    let top = select_features(&data, &ranking, 3, Direction::Most).unwrap();
    assert_eq!(top, informative);
    let report = run_feature_selection_study(&data, &ranking, &[3], &[Direction::Most, Direction::Least], &spec, 1).unwrap();
    let acc = |c: &str| report.rows.iter().find(|r| r.configuration == c).unwrap().accuracy_pct.unwrap();
    assert!(acc("most-3") - acc("least-3") >= 10.0, "{}", report.to_text());
}

#[test]
fn comparison_rows_are_reproducible() {
    let data = separable(200, 3, 5, 6).unwrap();
    let specs = [
        forest(100, 7),
        forest(100, 7),
        ModelSpec::GradientBoosting(TreeEnsembleConfig::gradient_boosting()),
        ModelSpec::Logistic(LogisticConfig::default()),
        ModelSpec::External { command: vec!["/nonexistent/model-server".into()] },
    ];
    let report = run_model_comparison(&data, &specs, 1).unwrap();
    assert_eq!(report.rows.len(), 5);
    let last = report.rows.last().unwrap();
    assert!(last.error.is_some() && last.model == ModelKind::External && !last.reproducible);
    let forests: Vec<&StudyRow> = report.rows.iter().filter(|r| r.model == ModelKind::RandomForest).collect();
    assert_eq!(forests[0].accuracy_pct, forests[1].accuracy_pct);
    assert_eq!(forests[0].config_hash, forests[1].config_hash);
    for r in report.rows.iter().filter(|r| r.error.is_none()) {
        assert!(r.accuracy_pct.unwrap() >= 95.0, "{}", report.to_text());
    }
    assert!(report.rows.windows(2).all(|w| w[0].accuracy_pct.unwrap_or(-1.0) >= w[1].accuracy_pct.unwrap_or(-1.0)));
}

fn toy_dataset() -> Dataset {
    let schema = WindowSchema::new(
        vec![FeatureSpec::new("t2m", FeatureKind::Dynamic), FeatureSpec::new("rh", FeatureKind::Dynamic)],
        3,
    )
    .unwrap();
    let make = |id: u64, label: u8| {
        let s = if label == 1 { 1.0 } else { -1.0 };
        let v = vec![s * (0.5 + id as f64 * 0.01), s, 0.2 * s, -0.3, 0.1 * id as f64, 0.4];
        let date = NaiveDate::from_ymd_opt(2021, 1 + (id % 12) as u32, 10);
        WindowedSample::new(id, label, date, Window::new(2, 3, v).unwrap())
    };
    let train = (0..20).map(|i| make(i, (i % 2) as u8)).collect();
    let test = (100..125).map(|i| make(i, u8::from(i < 110))).collect();
    Dataset::build(schema, train, None, test, Provenance { sources: vec!["toy".into()], ingested_at: String::new() }).unwrap()
}

fn perfect() -> FnPredictor<impl Fn(&[f64]) -> f64 + Send + Sync> {
    FnPredictor::new(InputShape::new(2, 3), |x: &[f64]| sigmoid(4.0 * x[1]))
}

#[test]
fn pipeline_explains_every_true_positive() {
    let data = toy_dataset();
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig { background_size: 8, ..PipelineConfig::default() };
    let out = run_explanation_pipeline(&data, &perfect(), "toy", &cfg, dir.path()).unwrap();
    assert_eq!(out.cohort, (100..110).collect::<Vec<u64>>());
    assert_eq!(out.attributions.attributions.len(), 10);
    assert_eq!(out.summary.count, 10);
    for name in ["attributions.csv", "attributions.json", "summary.csv", "ranking.csv", "scatter.svg", "curves.svg"] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    for a in &out.attributions.attributions {
        assert!((a.base_value + a.total() - a.prediction).abs() < 1e-6);
    }
    let again = tempfile::tempdir().unwrap();
    run_explanation_pipeline(&data, &perfect(), "toy", &cfg, again.path()).unwrap();
    for f in &out.files {
        let name = f.file_name().unwrap();
        assert_eq!(std::fs::read(f).unwrap(), std::fs::read(again.path().join(name)).unwrap(), "{name:?}");
    }
}

#[test]
fn pipeline_groups_by_month() {
    let data = toy_dataset();
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        background_size: 8,
        group_by: Some(tsattr_core::analytics::Grouping::Month),
        ..PipelineConfig::default()
    };
    let out = run_explanation_pipeline(&data, &perfect(), "toy", &cfg, dir.path()).unwrap();
    let g = out.grouped.unwrap();
    assert_eq!(g.summaries.values().map(|s| s.count).sum::<usize>(), 10);
    assert!(dir.path().join("scatter_month_5.svg").is_file());
}

#[test]
fn pipeline_reports_an_empty_cohort() {
    let data = toy_dataset();
    let dir = tempfile::tempdir().unwrap();
    let never = FnPredictor::new(InputShape::new(2, 3), |_: &[f64]| 0.0);
    let err = run_explanation_pipeline(&data, &never, "toy", &PipelineConfig::default(), dir.path()).unwrap_err();
    assert!(matches!(err, tsattr_core::Error::EmptyCohort(_)), "{err}");
}
