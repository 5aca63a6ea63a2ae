mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tsattr_core::config::RunConfig;

#[derive(Parser)]
#[command(name = "tsattr", version, about = "Temporal feature attribution for windowed time-series classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub(crate) struct Common {
    /// Config file of `section.key = value` lines; a run manifest works too.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one key after everything else, e.g. `--set model.num_trees=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Directory receiving every output of the run.
    #[arg(long, env = "TSATTR_OUT", value_name = "DIR")]
    pub(crate) out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Read CSV windows, impute, and write a dataset archive.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Single CSV, split 80/20 into train/test with the run seed.
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        train: Option<String>,
        #[arg(long)]
        val: Option<String>,
        #[arg(long)]
        test: Option<String>,
        /// Schema TOML.
        #[arg(long)]
        schema: Option<String>,
        /// `long` or `wide`.
        #[arg(long)]
        layout: Option<String>,
    },
    /// Train a native model, or register an external one.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset archive directory.
        #[arg(long)]
        data: Option<String>,
        /// random_forest, gradient_boosting, logistic or external.
        #[arg(long = "model-kind")]
        model_kind: Option<String>,
        #[arg(long = "num-trees")]
        num_trees: Option<String>,
        /// Integer or `auto`.
        #[arg(long = "max-depth")]
        max_depth: Option<String>,
        #[arg(long = "learning-rate")]
        learning_rate: Option<String>,
        /// Launch command of an external predictor.
        #[arg(long = "model-command")]
        model_command: Option<String>,
    },
    /// Accuracy and per-sample probabilities on one split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<String>,
        /// Model file written by `train`.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        split: Option<String>,
    },
    /// Attributions for the correctly predicted positives, or permutation importance.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        split: Option<String>,
        /// exact_shapley, kernel_shap, lime or permutation.
        #[arg(long)]
        method: Option<String>,
        /// `cell` or `feature`.
        #[arg(long)]
        granularity: Option<String>,
        /// `sampled` or `mean`.
        #[arg(long)]
        background: Option<String>,
        #[arg(long = "background-size")]
        background_size: Option<String>,
        #[arg(long = "num-coalitions")]
        num_coalitions: Option<String>,
        #[arg(long = "num-perturbations")]
        num_perturbations: Option<String>,
        #[arg(long = "kernel-width")]
        kernel_width: Option<String>,
        #[arg(long = "top-k")]
        top_k: Option<String>,
        #[arg(long = "max-samples")]
        max_samples: Option<String>,
        #[arg(long)]
        repeats: Option<String>,
    },
    /// Average attributions into summaries and rankings.
    Aggregate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<String>,
        /// Directory written by `explain`.
        #[arg(long)]
        attributions: Option<String>,
        /// `all`, `month` or `season`.
        #[arg(long = "group-by")]
        group_by: Option<String>,
        /// Second attribution directory to score agreement against.
        #[arg(long)]
        compare: Option<String>,
        #[arg(long = "agreement-k")]
        agreement_k: Option<String>,
    },
    /// Scatter, curves and histograms as SVG.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<String>,
        /// summary.csv written by `aggregate`.
        #[arg(long)]
        summary: Option<String>,
        /// Group key such as `all`, `month:7` or `season:summer`.
        #[arg(long)]
        group: Option<String>,
        #[arg(long)]
        vmax: Option<String>,
        #[arg(long = "min-score")]
        min_score: Option<String>,
        #[arg(long)]
        curves: Option<String>,
        /// Comma-separated features to draw histograms for.
        #[arg(long = "histogram-features")]
        histogram_features: Option<String>,
        #[arg(long)]
        bins: Option<String>,
    },
    /// Model comparison, feature-selection study or the full explanation pipeline.
    Study {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<String>,
        /// comparison, feature_selection or explanation.
        #[arg(long)]
        mode: Option<String>,
        /// ranking.csv used to select features.
        #[arg(long)]
        ranking: Option<String>,
        #[arg(long)]
        ks: Option<String>,
        #[arg(long)]
        directions: Option<String>,
        /// Model kinds compared in comparison mode.
        #[arg(long)]
        models: Option<String>,
        #[arg(long = "timing-runs")]
        timing_runs: Option<String>,
        #[arg(long = "model-kind")]
        model_kind: Option<String>,
        /// Trained model for explanation mode.
        #[arg(long)]
        model: Option<String>,
    },
    /// Dataset sizes, class balance and missingness.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<String>,
    },
    /// Serve a saved model over the batch protocol on stdin/stdout.
    ServeModel {
        #[arg(long)]
        model: PathBuf,
    },
}

type Overrides = Vec<(&'static str, Option<String>)>;

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Explain { .. } => "explain",
            Command::Aggregate { .. } => "aggregate",
            Command::Render { .. } => "render",
            Command::Study { .. } => "study",
            Command::Report { .. } => "report",
            Command::ServeModel { .. } => "serve-model",
        }
    }

    fn split(self) -> Option<(Common, Overrides)> {
        let o = |k, v: Option<String>| (k, v);
        Some(match self {
            Command::Ingest { common, data, train, val, test, schema, layout } => (
                common,
                vec![
                    o("dataset.path", data),
                    o("dataset.train", train),
                    o("dataset.val", val),
                    o("dataset.test", test),
                    o("dataset.schema", schema),
                    o("dataset.layout", layout),
                ],
            ),
            Command::Train { common, data, model_kind, num_trees, max_depth, learning_rate, model_command } => (
                common,
                vec![
                    o("dataset.path", data),
                    o("model.kind", model_kind),
                    o("model.num_trees", num_trees),
                    o("model.max_depth", max_depth),
                    o("model.learning_rate", learning_rate),
                    o("model.command", model_command),
                ],
            ),
            Command::Eval { common, data, model, split } => (
                common,
                vec![o("dataset.path", data), o("model.path", model), o("dataset.split", split)],
            ),
            Command::Explain {
                common,
                data,
                model,
                split,
                method,
                granularity,
                background,
                background_size,
                num_coalitions,
                num_perturbations,
                kernel_width,
                top_k,
                max_samples,
                repeats,
            } => (
                common,
                vec![
                    o("dataset.path", data),
                    o("model.path", model),
                    o("dataset.split", split),
                    o("explainer.method", method),
                    o("explainer.granularity", granularity),
                    o("explainer.background", background),
                    o("explainer.background_size", background_size),
                    o("explainer.num_coalitions", num_coalitions),
                    o("explainer.num_perturbations", num_perturbations),
                    o("explainer.kernel_width", kernel_width),
                    o("explainer.top_k", top_k),
                    o("explainer.max_samples", max_samples),
                    o("explainer.repeats", repeats),
                ],
            ),
            Command::Aggregate { common, data, attributions, group_by, compare, agreement_k } => (
                common,
                vec![
                    o("dataset.path", data),
                    o("explainer.attributions", attributions),
                    o("explainer.group_by", group_by),
                    o("explainer.compare", compare),
                    o("explainer.agreement_k", agreement_k),
                ],
            ),
            Command::Render { common, data, summary, group, vmax, min_score, curves, histogram_features, bins } => (
                common,
                vec![
                    o("dataset.path", data),
                    o("render.summary", summary),
                    o("render.group", group),
                    o("render.vmax", vmax),
                    o("render.min_score", min_score),
                    o("render.curves", curves),
                    o("render.histogram_features", histogram_features),
                    o("render.bins", bins),
                ],
            ),
            Command::Study { common, data, mode, ranking, ks, directions, models, timing_runs, model_kind, model } => (
                common,
                vec![
                    o("dataset.path", data),
                    o("study.mode", mode),
                    o("study.ranking", ranking),
                    o("study.ks", ks),
                    o("study.directions", directions),
                    o("study.models", models),
                    o("study.timing_runs", timing_runs),
                    o("model.kind", model_kind),
                    o("model.path", model),
                ],
            ),
            Command::Report { common, data } => (common, vec![o("dataset.path", data)]),
            Command::ServeModel { .. } => return None,
        })
    }
}

/// Defaults, then `--config`, then flags, then `--set`.
fn resolve(command: &str, common: &Common, overrides: Overrides) -> tsattr_core::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    if let Some(prev) = cfg.text("run.command") {
        if prev != command {
            return Err(tsattr_core::Error::Config(format!(
                "config was written for `{prev}`, not `{command}`"
            )));
        }
    }
    if let Some(seed) = common.seed {
        cfg.set("run.seed", &seed.to_string())?;
    }
    if let Some(threads) = common.threads {
        cfg.set("run.threads", &threads.to_string())?;
    }
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for s in &common.set {
        cfg.set_assignment(s)?;
    }
    cfg.set("run.command", command)?;
    Ok(cfg)
}

fn report(err: &anyhow::Error) -> ExitCode {
    let core = err.chain().find_map(|e| e.downcast_ref::<tsattr_core::Error>());
    let (kind, usage) = match core {
        Some(e) => (e.kind(), e.is_usage()),
        None => ("runtime", false),
    };
    eprintln!("error[{kind}]: {err:#}");
    ExitCode::from(if usage { 2 } else { 1 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            eprintln!("error[usage]: invalid command line");
            return ExitCode::from(2);
        }
    };
    let name = cli.command.name();
    let result = match cli.command {
        Command::ServeModel { model } => commands::serve_model(&model),
        other => match other.split() {
            Some((common, overrides)) => resolve(name, &common, overrides)
                .map_err(anyhow::Error::from)
                .and_then(|cfg| {
                    commands::init_threads(&cfg)?;
                    commands::run(name, cfg, &common.out)
                }),
            None => unreachable!("only serve-model lacks common options"),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
