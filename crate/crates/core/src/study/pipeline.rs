use std::fs;
use std::path::{Path, PathBuf};

use crate::analytics::{
    average_attributions, group_summaries, importance_curves, rank_features, select_explained_samples,
    write_ranking_csv, write_summaries_csv, AttributionSummary, FeatureRanking, GroupedSummaries, Grouping,
    CORRECT_POSITIVES,
};
use crate::data::{derive_calendar_groups, Dataset, SplitName, WindowSchema, WindowedSample};
use crate::explain::{
    explain_samples, AttributionSet, BackgroundMode, BackgroundSet, ExplainRequest, Granularity, Method, PlayerScheme,
    DEFAULT_BACKGROUND_SIZE,
};
use crate::predict::Predictor;
use crate::render::{render_curves, render_temporal_scatter, PlotStyle};
use crate::{Error, Result};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const RANKING_FILE: &str = "ranking.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub split: SplitName,
    pub method: Method,
    pub granularity: Granularity,
    pub fuse_groups: bool,
    pub background: BackgroundMode,
    pub background_size: usize,
    pub seed: u64,
    /// Explain only the first `n` cohort samples (in split order).
    pub max_samples: Option<usize>,
    pub group_by: Option<Grouping>,
    pub style: PlotStyle,
    /// Number of top features drawn as curves.
    pub curves: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            split: SplitName::Test,
            method: Method::Kernel { num_coalitions: None },
            granularity: Granularity::Cell,
            fuse_groups: true,
            background: BackgroundMode::Sampled,
            background_size: DEFAULT_BACKGROUND_SIZE,
            seed: 0,
            max_samples: None,
            group_by: None,
            style: PlotStyle::default(),
            curves: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutputs {
    pub cohort: Vec<u64>,
    pub attributions: AttributionSet,
    pub summary: AttributionSummary,
    pub ranking: FeatureRanking,
    pub grouped: Option<GroupedSummaries>,
    pub files: Vec<PathBuf>,
}

/// Explains the correctly predicted positives of the configured split.
pub fn explain_cohort(
    dataset: &Dataset,
    predictor: &dyn Predictor,
    model_id: &str,
    cfg: &PipelineConfig,
) -> Result<AttributionSet> {
    let split = dataset.split(cfg.split)?;
    let ids = select_explained_samples(predictor, split)?;
    let mut cohort: Vec<&WindowedSample> = split.iter().filter(|s| ids.contains(&s.sample_id)).collect();
    if let Some(n) = cfg.max_samples {
        cohort.truncate(n.max(1));
    }
    let background = match cfg.background {
        BackgroundMode::Sampled => BackgroundSet::sample(dataset.train(), cfg.background_size, cfg.seed)?,
        BackgroundMode::Mean => BackgroundSet::mean(dataset.train())?,
    };
    let scheme = PlayerScheme::from_schema(dataset.schema(), cfg.granularity, cfg.fuse_groups);
    let digest = dataset.digest();
    let req = ExplainRequest {
        model_id,
        dataset_digest: &digest,
        background: &background,
        scheme: &scheme,
        method: &cfg.method,
        seed: cfg.seed,
    };
    explain_samples(predictor, &cohort, &req)
}

/// Cohort mean plus optional calendar groups.
pub fn summarize(
    dataset: &Dataset,
    set: &AttributionSet,
    group_by: Option<Grouping>,
) -> Result<(AttributionSummary, Option<GroupedSummaries>)> {
    let refs: Vec<_> = set.attributions.iter().collect();
    if refs.is_empty() {
        return Err(Error::EmptyCohort("attribution set is empty".into()));
    }
    let summary = average_attributions(&refs, CORRECT_POSITIVES)?;
    let grouped = match group_by {
        None => None,
        Some(g) => {
            let ids: Vec<u64> = refs.iter().map(|a| a.sample_id).collect();
            let calendar = derive_calendar_groups(dataset.all_samples().filter(|s| ids.contains(&s.sample_id)))?;
            Some(group_summaries(&refs, &calendar, g, CORRECT_POSITIVES)?)
        }
    };
    Ok((summary, grouped))
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    fs::File::create(path).map(std::io::BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes `summary.csv` (overall first, then groups) and `ranking.csv`.
pub fn write_summary_files(
    dir: &Path,
    schema: &WindowSchema,
    summary: &AttributionSummary,
    grouped: Option<&GroupedSummaries>,
) -> Result<(FeatureRanking, Vec<PathBuf>)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut all = vec![summary];
    if let Some(g) = grouped {
        all.extend(g.summaries.values());
    }
    let summary_path = dir.join(SUMMARY_FILE);
    write_summaries_csv(create(&summary_path)?, &all, schema)?;
    let ranking = rank_features(summary, &schema.feature_names())?;
    let ranking_path = dir.join(RANKING_FILE);
    write_ranking_csv(create(&ranking_path)?, &ranking)?;
    Ok((ranking, vec![summary_path, ranking_path]))
}

/// Scatter and top-feature curves for one summary; file names carry `suffix`.
pub fn render_summary(
    dir: &Path,
    schema: &WindowSchema,
    summary: &AttributionSummary,
    style: &PlotStyle,
    curves: usize,
    suffix: &str,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names = schema.feature_names();
    let ranking = rank_features(summary, &names)?;
    let scatter = render_temporal_scatter(summary, &names, &ranking, style)?;
    let scatter_path = dir.join(format!("scatter{suffix}.svg"));
    fs::write(&scatter_path, scatter).map_err(|e| Error::io(&scatter_path, e))?;
    let mut files = vec![scatter_path];
    let k = curves.min(ranking.len());
    if k > 0 {
        let top: Vec<String> = ranking.names().into_iter().take(k).collect();
        let series = importance_curves(summary, &names, &top)?;
        let title = format!("Mean attribution over the window, top {k} features ({})", summary.group_key);
        let doc = render_curves(&series, &title, style)?;
        let path = dir.join(format!("curves{suffix}.svg"));
        fs::write(&path, doc).map_err(|e| Error::io(&path, e))?;
        files.push(path);
    }
    Ok(files)
}

pub(crate) fn group_suffix(key: &crate::analytics::GroupKey) -> String {
    format!("_{}", key.to_string().replace(':', "_"))
}

/// Cohort selection, explanation, aggregation, ranking and figures under `out_dir`.
pub fn run_explanation_pipeline(
    dataset: &Dataset,
    predictor: &dyn Predictor,
    model_id: &str,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<PipelineOutputs> {
    let set = explain_cohort(dataset, predictor, model_id, cfg)?;
    let schema = dataset.schema();
    set.save(out_dir, schema)?;
    let mut files = vec![
        out_dir.join(crate::explain::ATTRIBUTIONS_FILE),
        out_dir.join(crate::explain::MANIFEST_FILE),
    ];
    let (summary, grouped) = summarize(dataset, &set, cfg.group_by)?;
    let (ranking, written) = write_summary_files(out_dir, schema, &summary, grouped.as_ref())?;
    files.extend(written);
    files.extend(render_summary(out_dir, schema, &summary, &cfg.style, cfg.curves, "")?);
    if let Some(g) = &grouped {
        for (key, s) in &g.summaries {
            files.extend(render_summary(out_dir, schema, s, &cfg.style, cfg.curves, &group_suffix(key))?);
        }
    }
    Ok(PipelineOutputs {
        cohort: set.attributions.iter().map(|a| a.sample_id).collect(),
        attributions: set,
        summary,
        ranking,
        grouped,
        files,
    })
}
