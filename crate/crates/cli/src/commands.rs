use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::seq::SliceRandom;
use tsattr_core::analytics::{
    explainer_agreement, read_ranking_csv, read_summaries_csv, write_ranking_csv, Direction, FeatureRanking,
    GroupKey, Grouping,
};
use tsattr_core::config::RunConfig;
use tsattr_core::data::{
    ingest_csv, Dataset, Layout, Provenance, SplitName, WindowSchema, WindowedSample,
};
use tsattr_core::explain::{permutation_importance, AttributionSet, BackgroundMode, Granularity, LimeConfig, Method};
use tsattr_core::predict::protocol::serve;
use tsattr_core::predict::{
    evaluate_accuracy, predicted_label, LogisticConfig, ModelKind, Predictor, PredictorHandle, TreeEnsembleConfig,
};
use tsattr_core::render::{render_histogram, PlotStyle};
use tsattr_core::rng::stream_rng;
use tsattr_core::study::{
    render_summary, run_explanation_pipeline, run_feature_selection_study, run_model_comparison, summarize,
    write_summary_files, ModelSpec, PipelineConfig, StudyReport,
};
use tsattr_core::Error;

pub const MANIFEST: &str = "manifest.txt";
pub const DATASET_DIR: &str = "dataset";
pub const MODEL_FILE: &str = "model.json";

pub fn init_threads(cfg: &RunConfig) -> Result<()> {
    let n = cfg.usize("run.threads")?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the worker pool")?;
    }
    Ok(())
}

pub fn run(command: &str, mut cfg: RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    match command {
        "ingest" => ingest(&mut cfg, out)?,
        "train" => train(&mut cfg, out)?,
        "eval" => eval(&mut cfg, out)?,
        "explain" => explain(&mut cfg, out)?,
        "aggregate" => aggregate(&mut cfg, out)?,
        "render" => render(&mut cfg, out)?,
        "study" => study(&mut cfg, out)?,
        "report" => report(&mut cfg, out)?,
        other => unreachable!("unknown command {other}"),
    }
    let path = out.join(MANIFEST);
    let text = format!("# tsattr run manifest\n{}", cfg.to_text());
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn serve_model(path: &Path) -> Result<()> {
    let handle = PredictorHandle::load(path)?;
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    serve(&handle, stdin.lock(), BufWriter::new(stdout.lock()))?;
    Ok(())
}

fn required<'a>(cfg: &'a RunConfig, key: &str) -> tsattr_core::Result<&'a str> {
    cfg.text(key)
        .ok_or_else(|| Error::InvalidArgument(format!("`{key}` is required (flag or config)")))
}

fn write(path: PathBuf, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Loads the archive and pins or checks `run.dataset_hash`.
fn load_dataset(cfg: &mut RunConfig) -> Result<Dataset> {
    let dir = required(cfg, "dataset.path")?;
    let dataset = Dataset::load(Path::new(dir))?;
    pin_hash(cfg, &dataset)?;
    Ok(dataset)
}

fn pin_hash(cfg: &mut RunConfig, dataset: &Dataset) -> Result<()> {
    let digest = dataset.digest();
    if let Some(expected) = cfg.text("run.dataset_hash") {
        if expected != digest {
            return Err(Error::Validation(format!(
                "dataset hash {digest} does not match the configured {expected}"
            ))
            .into());
        }
    }
    cfg.set("run.dataset_hash", &digest)?;
    Ok(())
}

fn load_model(cfg: &RunConfig, dataset: &Dataset) -> Result<PredictorHandle> {
    let path = required(cfg, "model.path")?;
    let handle = PredictorHandle::load(Path::new(path)).with_context(|| format!("loading model {path}"))?;
    let schema = dataset.schema();
    let shape = handle.input_shape();
    if (shape.n_features, shape.window_length) != (schema.n_features(), schema.window_length()) {
        return Err(Error::ShapeMismatch {
            expected_features: schema.n_features(),
            expected_days: schema.window_length(),
            actual_features: shape.n_features,
            actual_days: shape.window_length,
        }
        .into());
    }
    Ok(handle)
}

fn split_name(cfg: &RunConfig) -> tsattr_core::Result<SplitName> {
    cfg.get("dataset.split").parse()
}

fn seeded_split(samples: Vec<WindowedSample>, seed: u64) -> (Vec<WindowedSample>, Vec<WindowedSample>) {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut stream_rng(seed, "ingest/split", 0));
    let cut = samples.len() * 4 / 5;
    let mut in_train = vec![false; samples.len()];
    for &i in &order[..cut] {
        in_train[i] = true;
    }
    samples.into_iter().zip(in_train).fold((Vec::new(), Vec::new()), |(mut tr, mut te), (s, t)| {
        if t {
            tr.push(s);
        } else {
            te.push(s);
        }
        (tr, te)
    })
}

fn ingest(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let schema = WindowSchema::load(Path::new(required(cfg, "dataset.schema")?))?;
    let layout: Layout = cfg.get("dataset.layout").parse()?;
    let read = |key: &str| -> Result<Option<Vec<WindowedSample>>> {
        match cfg.text(key) {
            Some(p) => Ok(Some(ingest_csv(Path::new(p), &schema, layout).with_context(|| format!("reading {p}"))?)),
            None => Ok(None),
        }
    };
    let (train, val, test, sources) = match (cfg.text("dataset.path"), cfg.text("dataset.train")) {
        (Some(p), None) => {
            let all = read("dataset.path")?.expect("path is set");
            let (train, test) = seeded_split(all, cfg.seed());
            (train, None, test, vec![p.to_string()])
        }
        (None, Some(_)) => {
            let train = read("dataset.train")?.expect("train is set");
            let test = read("dataset.test")?
                .ok_or_else(|| Error::InvalidArgument("`dataset.test` is required with `dataset.train`".into()))?;
            let sources = ["dataset.train", "dataset.val", "dataset.test"]
                .iter()
                .filter_map(|k| cfg.text(k).map(String::from))
                .collect();
            (train, read("dataset.val")?, test, sources)
        }
        _ => {
            return Err(Error::InvalidArgument(
                "give either `dataset.path` or `dataset.train` with `dataset.test`".into(),
            )
            .into())
        }
    };
    let provenance = Provenance {
        sources,
        ingested_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    let dataset = Dataset::build(schema, train, val, test, provenance)?;
    dataset.save(&out.join(DATASET_DIR))?;
    let report = dataset.missingness();
    write(out.join("missingness.csv"), report.to_csv())?;
    print!("{}", report.to_text());
    println!(
        "dataset {} written to {} ({} train, {} test)",
        dataset.digest(),
        out.join(DATASET_DIR).display(),
        dataset.train().len(),
        dataset.test().len()
    );
    pin_hash(cfg, &dataset)
}

pub fn model_spec(cfg: &RunConfig, kind: &str) -> Result<ModelSpec> {
    let seed = cfg.seed();
    let kind: ModelKind = kind.parse()?;
    Ok(match kind {
        ModelKind::RandomForest | ModelKind::GradientBoosting => {
            let base = if kind == ModelKind::RandomForest {
                TreeEnsembleConfig::random_forest()
            } else {
                TreeEnsembleConfig::gradient_boosting()
            };
            let t = TreeEnsembleConfig {
                num_trees: cfg.usize("model.num_trees")?,
                min_split: cfg.usize("model.min_split")?,
                max_depth: cfg.opt_usize("model.max_depth")?.or(base.max_depth),
                learning_rate: cfg.f64("model.learning_rate")?,
                seed,
            };
            t.validate()?;
            if kind == ModelKind::RandomForest {
                ModelSpec::RandomForest(t)
            } else {
                ModelSpec::GradientBoosting(t)
            }
        }
        ModelKind::Logistic => ModelSpec::Logistic(LogisticConfig {
            l2: cfg.f64("model.l2")?,
            epochs: cfg.usize("model.epochs")?,
            step: cfg.f64("model.step")?,
            batch_size: cfg.opt_usize("model.batch_size")?,
            seed,
        }),
        ModelKind::External => {
            let command: Vec<String> = required(cfg, "model.command")?.split_whitespace().map(String::from).collect();
            ModelSpec::External { command }
        }
    })
}

fn train(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let spec = model_spec(cfg, cfg.get("model.kind"))?;
    let handle = spec.train(&dataset)?;
    let path = out.join(MODEL_FILE);
    handle.save(&path)?;
    println!("model {} ({}) written to {}", handle.id(), handle.kind(), path.display());
    Ok(())
}

fn eval(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let handle = load_model(cfg, &dataset)?;
    let name = split_name(cfg)?;
    let split = dataset.split(name)?;
    let e = evaluate_accuracy(&handle, split)?;
    let mut csv = String::from("sample_id,label,probability,predicted\n");
    for (s, p) in split.iter().zip(&e.probabilities) {
        let _ = writeln!(csv, "{},{},{},{}", s.sample_id, s.label, p, predicted_label(*p));
    }
    write(out.join("predictions.csv"), csv)?;
    let text = format!(
        "model = {}\nsplit = {name}\nsamples = {}\ncorrect = {}\naccuracy_pct = {:.2}\n",
        handle.id(),
        split.len(),
        e.correct.iter().filter(|&&c| c).count(),
        100.0 * e.accuracy
    );
    write(out.join("evaluation.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn pipeline_config(cfg: &RunConfig) -> Result<PipelineConfig> {
    let seed = cfg.seed();
    let method = match cfg.get("explainer.method") {
        "exact_shapley" => Method::Exact,
        "kernel_shap" => Method::Kernel { num_coalitions: cfg.opt_usize("explainer.num_coalitions")? },
        "lime" => Method::Lime(LimeConfig {
            num_perturbations: cfg.opt_usize("explainer.num_perturbations")?,
            kernel_width: cfg.opt_f64("explainer.kernel_width")?,
            top_k: cfg.opt_usize("explainer.top_k")?,
            seed,
        }),
        other => {
            return Err(Error::InvalidArgument(format!(
                "`{other}` does not produce attributions (exact_shapley|kernel_shap|lime)"
            ))
            .into())
        }
    };
    Ok(PipelineConfig {
        split: split_name(cfg)?,
        method,
        granularity: cfg.get("explainer.granularity").parse::<Granularity>()?,
        fuse_groups: cfg.bool("explainer.fuse_groups")?,
        background: cfg.get("explainer.background").parse::<BackgroundMode>()?,
        background_size: cfg.usize("explainer.background_size")?,
        seed,
        max_samples: cfg.opt_usize("explainer.max_samples")?,
        group_by: grouping(cfg)?,
        style: plot_style(cfg)?,
        curves: cfg.usize("render.curves")?,
    })
}

fn grouping(cfg: &RunConfig) -> tsattr_core::Result<Option<Grouping>> {
    match cfg.get("explainer.group_by") {
        "all" => Ok(None),
        g => g.parse().map(Some),
    }
}

fn plot_style(cfg: &RunConfig) -> tsattr_core::Result<PlotStyle> {
    let style = PlotStyle {
        r_min: cfg.f64("render.r_min")?,
        r_max: cfg.f64("render.r_max")?,
        vmax: cfg.opt_f64("render.vmax")?,
        cell: cfg.f64("render.cell")?,
        min_score: cfg.opt_f64("render.min_score")?,
        ..PlotStyle::default()
    };
    style.validate()?;
    Ok(style)
}

fn explain(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let handle = load_model(cfg, &dataset)?;
    if cfg.get("explainer.method") == "permutation" {
        let split = dataset.split(split_name(cfg)?)?;
        let scores = permutation_importance(&handle, split, cfg.usize("explainer.repeats")?, cfg.seed())?;
        let names = dataset.schema().feature_names();
        let mut csv = String::from("feature,score,std\n");
        for s in &scores {
            let _ = writeln!(csv, "{},{},{}", names[s.feature], s.score, s.std);
        }
        write(out.join("permutation.csv"), csv)?;
        let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
        let ranking = FeatureRanking::from_scores(&names, &values, &values)?;
        write_ranking(out, &ranking)?;
        print_ranking(&ranking);
        return Ok(());
    }
    let pc = pipeline_config(cfg)?;
    let set = tsattr_core::study::explain_cohort(&dataset, &handle, handle.id(), &pc)?;
    set.save(out, dataset.schema())?;
    println!(
        "{} attributions ({}) for model {} written to {}",
        set.attributions.len(),
        set.manifest.explainer,
        handle.id(),
        out.display()
    );
    Ok(())
}

fn write_ranking(out: &Path, ranking: &FeatureRanking) -> Result<()> {
    let path = out.join("ranking.csv");
    let file = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    write_ranking_csv(BufWriter::new(file), ranking)?;
    Ok(())
}

fn print_ranking(ranking: &FeatureRanking) {
    for (i, e) in ranking.entries().iter().take(10).enumerate() {
        println!("{:>3}  {:<24} {:.6}", i + 1, e.feature, e.score);
    }
}

fn load_attributions(dataset: &Dataset, dir: &str) -> Result<AttributionSet> {
    let set = AttributionSet::load(Path::new(dir), dataset.schema()).with_context(|| format!("reading {dir}"))?;
    if set.manifest.dataset_digest != dataset.digest() {
        return Err(Error::Validation(format!(
            "attributions in {dir} were computed on dataset {}, not {}",
            set.manifest.dataset_digest,
            dataset.digest()
        ))
        .into());
    }
    Ok(set)
}

fn aggregate(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let set = load_attributions(&dataset, required(cfg, "explainer.attributions")?)?;
    let (summary, grouped) = summarize(&dataset, &set, grouping(cfg)?)?;
    let (ranking, _) = write_summary_files(out, dataset.schema(), &summary, grouped.as_ref())?;
    if let Some(g) = &grouped {
        if !g.empty.is_empty() {
            let keys: Vec<String> = g.empty.iter().map(GroupKey::to_string).collect();
            println!("empty groups: {}", keys.join(", "));
        }
    }
    if let Some(other) = cfg.text("explainer.compare") {
        let other = load_attributions(&dataset, other)?;
        let (other_summary, _) = summarize(&dataset, &other, None)?;
        let other_ranking = tsattr_core::analytics::rank_features(&other_summary, &dataset.schema().feature_names())?;
        let a = explainer_agreement(&ranking, &other_ranking, cfg.usize("explainer.agreement_k")?)?;
        let text = format!(
            "explainer_a = {}\nexplainer_b = {}\nspearman_rho = {:.6}\nsign_match_rate = {:.6}\nk = {}\n",
            summary.explainer, other_summary.explainer, a.spearman_rho, a.sign_match_rate, a.k
        );
        write(out.join("agreement.txt"), &text)?;
        print!("{text}");
    }
    println!("{} attributions averaged ({})", summary.count, summary.explainer);
    print_ranking(&ranking);
    Ok(())
}

fn render(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let schema = dataset.schema();
    let style = plot_style(cfg)?;
    if let Some(path) = cfg.text("render.summary") {
        let file = fs::File::open(path).with_context(|| format!("cannot open {path}"))?;
        let summaries = read_summaries_csv(file, schema)?;
        let key: GroupKey = cfg.get("render.group").parse()?;
        let summary = summaries.iter().find(|s| s.group_key == key).ok_or_else(|| {
            let have: Vec<String> = summaries.iter().map(|s| s.group_key.to_string()).collect();
            Error::InvalidArgument(format!("no summary for group `{key}` in {path} (have {})", have.join(", ")))
        })?;
        let suffix = if key == GroupKey::All { String::new() } else { format!("_{}", key.to_string().replace(':', "_")) };
        for f in render_summary(out, schema, summary, &style, cfg.usize("render.curves")?, &suffix)? {
            println!("{}", f.display());
        }
    }
    let bins = cfg.usize("render.bins")?;
    for name in cfg.list("render.histogram_features") {
        let i = schema.feature_index(&name).ok_or_else(|| Error::UnknownFeature(name.clone()))?;
        let values: Vec<f64> = dataset.train().iter().flat_map(|s| s.values.row(i).to_vec()).collect();
        let doc = render_histogram(&values, bins, &name, &style)?;
        let path = out.join(format!("histogram_{name}.svg"));
        write(path.clone(), doc)?;
        println!("{}", path.display());
    }
    if cfg.text("render.summary").is_none() && cfg.list("render.histogram_features").is_empty() {
        return Err(Error::InvalidArgument("nothing to render: give `render.summary` or `render.histogram_features`".into()).into());
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(cfg: &RunConfig, key: &str) -> tsattr_core::Result<Vec<T>> {
    cfg.list(key)
        .iter()
        .map(|s| s.parse().map_err(|_| Error::Config(format!("`{key}` has invalid item `{s}`"))))
        .collect()
}

fn write_report(out: &Path, report: &StudyReport) -> Result<()> {
    write(out.join("study.csv"), report.to_csv())?;
    let text = report.to_text();
    write(out.join("study.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn study(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let timing_runs = cfg.usize("study.timing_runs")?;
    match cfg.get("study.mode") {
        "comparison" => {
            let specs = cfg
                .list("study.models")
                .iter()
                .map(|k| model_spec(cfg, k))
                .collect::<Result<Vec<_>>>()?;
            write_report(out, &run_model_comparison(&dataset, &specs, timing_runs)?)
        }
        "feature_selection" => {
            let path = required(cfg, "study.ranking")?;
            let file = fs::File::open(path).with_context(|| format!("cannot open {path}"))?;
            let ranking = read_ranking_csv(file)?;
            let ks: Vec<usize> = parse_list(cfg, "study.ks")?;
            let directions: Vec<Direction> = parse_list(cfg, "study.directions")?;
            let spec = model_spec(cfg, cfg.get("model.kind"))?;
            write_report(out, &run_feature_selection_study(&dataset, &ranking, &ks, &directions, &spec, timing_runs)?)
        }
        "explanation" => {
            let handle = load_model(cfg, &dataset)?;
            let pc = pipeline_config(cfg)?;
            let outputs = run_explanation_pipeline(&dataset, &handle, handle.id(), &pc, out)?;
            println!("{} samples explained; files:", outputs.cohort.len());
            for f in &outputs.files {
                println!("  {}", f.display());
            }
            print_ranking(&outputs.ranking);
            Ok(())
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown study mode `{other}` (comparison|feature_selection|explanation)"
        ))
        .into()),
    }
}

fn report(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let schema = dataset.schema();
    let mut text = format!(
        "dataset {}\nfeatures {} x days {}\n",
        dataset.digest(),
        schema.n_features(),
        schema.window_length()
    );
    for name in [SplitName::Train, SplitName::Val, SplitName::Test] {
        if let Ok(split) = dataset.split(name) {
            let pos = split.iter().filter(|s| s.label == 1).count();
            let _ = writeln!(text, "{name}: {} samples, {pos} positive", split.len());
        }
    }
    text.push('\n');
    text.push_str(&dataset.missingness().to_text());
    write(out.join("missingness.csv"), dataset.missingness().to_csv())?;
    write(out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}
