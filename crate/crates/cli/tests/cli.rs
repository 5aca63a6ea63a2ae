use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tsattr_core::data::{write_long_csv, Dataset, WindowedSample};
use tsattr_core::synthetic::informative_noise;

fn tsattr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsattr"))
        .args(args)
        .env_remove("TSATTR_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tsattr(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn last_stderr_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or_default().to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_csv(path: &Path, samples: &[WindowedSample], data: &Dataset) {
    let file = fs::File::create(path).unwrap();
    write_long_csv(file, samples, data.schema()).unwrap();
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    csv: PathBuf,
    schema: PathBuf,
}

/// 20 features (3 informative) over 3 days, one long CSV plus its schema.
fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let (data, _) = informative_noise(240, 3, 17, 3, 5).unwrap();
    let all: Vec<WindowedSample> = data.all_samples().cloned().collect();
    let csv = root.join("windows.csv");
    write_csv(&csv, &all, &data);
    let schema = root.join("schema.toml");
    fs::write(&schema, data.schema().to_toml_string()).unwrap();
    Fixture { _dir: dir, root, csv, schema }
}

impl Fixture {
    fn out(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn ingest(&self) -> PathBuf {
        let out = self.out("ingest");
        ok(&["ingest", "--data", p(&self.csv), "--schema", p(&self.schema), "--out", p(&out), "--seed", "3"]);
        out.join("dataset")
    }

    fn train(&self, data: &Path) -> PathBuf {
        let out = self.out("train");
        ok(&["train", "--data", p(data), "--num-trees", "30", "--seed", "1", "--out", p(&out)]);
        out.join("model.json")
    }
}

#[test]
fn ingest_writes_an_archive_and_rejects_schema_mismatch() {
    let f = fixture();
    let data = f.ingest();
    assert!(data.join("dataset.json").is_file());
    assert!(f.out("ingest").join("manifest.txt").is_file());
    let loaded = Dataset::load(&data).unwrap();
    assert_eq!(loaded.train().len() + loaded.test().len(), 240);

    let bad = f.root.join("bad.toml");
    let text = fs::read_to_string(&f.schema).unwrap().replace("f07", "humidity");
    fs::write(&bad, text).unwrap();
    let out = tsattr(&["ingest", "--data", p(&f.csv), "--schema", p(&bad), "--out", p(&f.out("bad"))]);
    assert_eq!(out.status.code(), Some(2));
    let line = last_stderr_line(&out);
    assert!(line.starts_with("error[schema]:") && line.contains("`f07`"), "{line}");
}

#[test]
fn usage_errors_exit_two() {
    let f = fixture();
    let out = tsattr(&["train", "--out", p(&f.out("x")), "--set", "model.trees=3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(last_stderr_line(&out).starts_with("error[config]:"));

    let out = tsattr(&["train", "--out", p(&f.out("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(last_stderr_line(&out).contains("dataset.path"));

    let out = tsattr(&["train", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(last_stderr_line(&out).starts_with("error[usage]:"));

    let data = f.ingest();
    let cfg = f.root.join("pinned.cfg");
    fs::write(&cfg, "run.dataset_hash = 0000\n").unwrap();
    let out = tsattr(&["report", "--data", p(&data), "--config", p(&cfg), "--out", p(&f.out("r"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(last_stderr_line(&out).starts_with("error[validation]:"));
}

#[test]
fn flags_and_config_give_identical_runs() {
    let f = fixture();
    let data = f.ingest();
    let a = f.out("flags");
    ok(&["train", "--data", p(&data), "--model-kind", "gradient_boosting", "--num-trees", "12", "--seed", "9", "--out", p(&a)]);
    let cfg = f.root.join("train.cfg");
    fs::write(
        &cfg,
        format!("dataset.path = {}\nmodel.kind = gradient_boosting\nmodel.num_trees = 12\nrun.seed = 9\n", p(&data)),
    )
    .unwrap();
    let b = f.out("config");
    ok(&["train", "--config", p(&cfg), "--out", p(&b)]);
    let c = f.out("set");
    ok(&["train", "--data", p(&data), "--set", "model.kind=gradient_boosting", "--set", "model.num_trees=12", "--set", "run.seed=9", "--out", p(&c)]);
    for name in ["manifest.txt", "model.json"] {
        let x = fs::read(a.join(name)).unwrap();
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name}");
        assert_eq!(x, fs::read(c.join(name)).unwrap(), "{name}");
    }
    // --set wins over flags, flags over the config file
    let d = f.out("precedence");
    ok(&["train", "--config", p(&cfg), "--num-trees", "5", "--set", "model.num_trees=7", "--out", p(&d)]);
    assert!(fs::read_to_string(d.join("manifest.txt")).unwrap().contains("model.num_trees = 7\n"));
}

#[test]
fn end_to_end_explanation_is_reproducible() {
    let f = fixture();
    let data = f.ingest();
    let model = f.train(&data);
    let eval = ok(&["eval", "--data", p(&data), "--model", p(&model), "--out", p(&f.out("eval"))]);
    assert!(eval.contains("accuracy_pct"));

    let explain = |name: &str, threads: &str| {
        let out = f.out(name);
        ok(&[
            "explain", "--data", p(&data), "--model", p(&model), "--granularity", "feature", "--background-size", "10",
            "--max-samples", "4", "--seed", "2", "--threads", threads, "--out", p(&out),
        ]);
        out
    };
    let e1 = explain("explain1", "1");
    let e2 = explain("explain2", "3");
    for name in ["attributions.csv", "attributions.json"] {
        assert_eq!(fs::read(e1.join(name)).unwrap(), fs::read(e2.join(name)).unwrap(), "{name}");
    }
    let e3 = f.out("explain3");
    ok(&["explain", "--config", p(&e1.join("manifest.txt")), "--out", p(&e3)]);
    assert_eq!(fs::read(e1.join("attributions.csv")).unwrap(), fs::read(e3.join("attributions.csv")).unwrap());

    let agg = f.out("aggregate");
    ok(&["aggregate", "--data", p(&data), "--attributions", p(&e1), "--group-by", "month", "--out", p(&agg)]);
    assert!(agg.join("summary.csv").is_file() && agg.join("ranking.csv").is_file());

    let render = |name: &str| {
        let out = f.out(name);
        ok(&["render", "--data", p(&data), "--summary", p(&agg.join("summary.csv")), "--histogram-features", "f00", "--out", p(&out)]);
        out
    };
    let r1 = render("render1");
    let r2 = render("render2");
    for name in ["scatter.svg", "curves.svg", "histogram_f00.svg"] {
        assert_eq!(fs::read(r1.join(name)).unwrap(), fs::read(r2.join(name)).unwrap(), "{name}");
    }

    let study = f.out("study");
    ok(&[
        "study", "--data", p(&data), "--ranking", p(&agg.join("ranking.csv")), "--ks", "5,10,20",
        "--directions", "most,least", "--timing-runs", "1", "--set", "model.num_trees=10", "--out", p(&study),
    ]);
    let csv = fs::read_to_string(study.join("study.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8, "{csv}");
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let acc = |cfg: &str| rows.iter().find(|r| r[0] == cfg).unwrap()[3];
    assert_eq!(acc("most-20"), acc("baseline-20"));
    assert_eq!(acc("least-20"), acc("baseline-20"));
}

#[test]
fn lime_comparison_and_permutation() {
    let f = fixture();
    let data = f.ingest();
    let model = f.train(&data);
    let run = |name: &str, extra: &[&str]| {
        let out = f.out(name);
        let mut args = vec!["explain", "--data", p(&data), "--model", p(&model), "--granularity", "feature", "--background-size", "10", "--max-samples", "4", "--out", p(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    };
    let shap = run("shap", &[]);
    let lime = run("lime", &["--method", "lime"]);
    let perm = run("perm", &["--method", "permutation", "--repeats", "3"]);
    assert!(perm.join("permutation.csv").is_file() && perm.join("ranking.csv").is_file());
    let agg = f.out("agree");
    let text = ok(&["aggregate", "--data", p(&data), "--attributions", p(&shap), "--compare", p(&lime), "--out", p(&agg)]);
    assert!(text.contains("spearman_rho"));
    assert!(fs::read_to_string(agg.join("agreement.txt")).unwrap().contains("explainer_b = lime"));
}

#[test]
fn empty_cohort_exits_one_with_token() {
    let f = fixture();
    let (data, _) = informative_noise(240, 3, 17, 3, 5).unwrap();
    let train = f.root.join("train.csv");
    let test = f.root.join("test.csv");
    write_csv(&train, data.train(), &data);
    let negatives: Vec<WindowedSample> = data.test().iter().filter(|s| s.label == 0).cloned().collect();
    write_csv(&test, &negatives, &data);
    let ingest = f.out("split-ingest");
    ok(&["ingest", "--train", p(&train), "--test", p(&test), "--schema", p(&f.schema), "--out", p(&ingest)]);
    let archive = ingest.join("dataset");
    let model = f.train(&archive);
    let out = tsattr(&["explain", "--data", p(&archive), "--model", p(&model), "--out", p(&f.out("empty"))]);
    assert_eq!(out.status.code(), Some(1));
    let line = last_stderr_line(&out);
    assert!(line.starts_with("error[empty-cohort]:"), "{line}");
}

#[test]
fn explanation_study_mode_writes_figures() {
    let f = fixture();
    let data = f.ingest();
    let model = f.train(&data);
    let out = f.out("pipeline");
    ok(&[
        "study", "--mode", "explanation", "--data", p(&data), "--model", p(&model), "--set", "explainer.granularity=feature",
        "--set", "explainer.background_size=8", "--set", "explainer.max_samples=3", "--out", p(&out),
    ]);
    for name in ["attributions.csv", "summary.csv", "ranking.csv", "scatter.svg", "curves.svg", "manifest.txt"] {
        assert!(out.join(name).is_file(), "{name}");
    }
}

#[test]
fn report_lists_splits_and_missingness() {
    let f = fixture();
    let data = f.ingest();
    let out = f.out("report");
    let text = ok(&["report", "--data", p(&data), "--out", p(&out)]);
    assert!(text.contains("train: 192 samples"), "{text}");
    assert!(out.join("missingness.csv").is_file());
}
