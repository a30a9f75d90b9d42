//! Command implementations behind the binary: preprocess, select, cluster,
//! necessity, and the full run. Each wraps library operations and writes its
//! artifacts into the configured output directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifacts;
use crate::clustering::ClusterAssignment;
use crate::dataset::{Dataset, LoadOptions, Schema};
use crate::dissimilarity::{balanced_weights, gower_matrix};
use crate::error::{Error, Result};
use crate::pipeline::{
    cv_feature_selection, make_folds, run_full_pipeline, shuffle_necessity_test, NecessityReport,
    PipelineConfig, PipelineResult, SelectionResult,
};
use crate::stats::profile_clusters;

#[allow(clippy::ptr_arg)] // signature fixed by serde's skip_serializing_if
fn path_is_empty(p: &PathBuf) -> bool {
    p.as_os_str().is_empty()
}

/// Full run configuration: file locations plus every pipeline knob. Loadable
/// from TOML; command-line flags override individual fields. The output
/// directory is never echoed back into artifacts, so reruns into different
/// directories stay byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub schema: PathBuf,
    #[serde(default, skip_serializing_if = "path_is_empty")]
    pub output: PathBuf,
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("cannot parse config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }
}

/// Load a preprocessed (numeric/binary, complete) dataset and finalize it.
pub fn load_finalized(input: &Path, schema_path: &Path) -> Result<Dataset> {
    let schema = Schema::from_path(schema_path)?;
    let ds = Dataset::load_csv(input, &schema)?;
    if ds.missing_mask().iter().any(|&b| b) {
        return Err(Error::Type(
            "input has missing cells; run the preprocess command first".into(),
        ));
    }
    ds.finalize()
}

/// Run the ingestion chain (consolidate, dummy code, drop incomplete rows,
/// finalize) and write the finalized CSV, its schema, a per-column report,
/// and the warning log.
pub fn cmd_preprocess(
    input: &Path,
    schema_path: &Path,
    output: &Path,
    max_categories: usize,
    average_duplicates: bool,
) -> Result<Dataset> {
    let schema = Schema::from_path(schema_path)?;
    let opts = LoadOptions { average_duplicates };
    let ds = Dataset::load_csv_with(input, &schema, &opts)?
        .consolidate_all_categories(max_categories)?
        .dummy_encode()?
        .drop_incomplete_rows()?
        .finalize()?;
    for w in ds.warnings() {
        log::warn!("{w}");
    }
    std::fs::create_dir_all(output)?;
    ds.write_csv(&output.join("finalized.csv"))?;
    std::fs::write(output.join("finalized.schema.toml"), ds.schema_toml())?;
    artifacts::write_column_report(&output.join("columns.csv"), &ds)?;
    artifacts::write_warnings(&output.join("warnings.txt"), ds.warnings())?;
    Ok(ds)
}

/// Cross-validated feature selection; writes `selection.json`.
pub fn cmd_select(config: &RunConfig) -> Result<SelectionResult> {
    let data = load_finalized(&config.input, &config.schema)?;
    let folds = make_folds(data.n_rows(), config.pipeline.n_folds, config.pipeline.seed)?;
    let selection = cv_feature_selection(&data, &folds, &config.pipeline.sweep_params())?;
    std::fs::create_dir_all(&config.output)?;
    artifacts::write_selection_json(&config.output.join("selection.json"), &selection)?;
    echo_config(config)?;
    Ok(selection)
}

/// Resolve feature tokens (indices or column names) against a dataset.
pub fn resolve_features(data: &Dataset, tokens: &[String]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(tokens.len());
    for t in tokens {
        let idx = match t.parse::<usize>() {
            Ok(i) if i < data.n_cols() => i,
            Ok(i) => {
                return Err(Error::Parameter(format!(
                    "feature index {i} out of range for {} columns",
                    data.n_cols()
                )))
            }
            Err(_) => data
                .column_index(t)
                .ok_or_else(|| Error::Parameter(format!("no column named `{t}`")))?,
        };
        out.push(idx);
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(Error::Parameter("no features given".into()));
    }
    Ok(out)
}

/// Cluster the full dataset on the given features and emit labels, the
/// dissimilarity matrix, and cluster profiles. An external grouping CSV
/// (row_id, label) swaps in as the profiled labeling when provided.
pub fn cmd_cluster(
    config: &RunConfig,
    feature_tokens: &[String],
    group_labels: Option<&Path>,
) -> Result<ClusterAssignment> {
    let data = load_finalized(&config.input, &config.schema)?;
    let features = resolve_features(&data, feature_tokens)?;
    let weights = balanced_weights(&data, &features)?;
    let matrix = gower_matrix(&data, &features, &weights)?;
    let n_max = config.pipeline.n_max.min(data.n_rows());
    let assignment =
        crate::clustering::best_clustering(&matrix, config.pipeline.n_min, n_max)?;

    std::fs::create_dir_all(&config.output)?;
    artifacts::write_labels_csv(&config.output.join("labels.csv"), data.row_ids(), &assignment)?;
    matrix.write_text(&config.output.join("dissimilarity.txt"))?;

    let profile = profile_clusters(&data, &assignment.labels, &features, config.pipeline.alpha)?;
    artifacts::write_profiles_csv(&config.output.join("profiles.csv"), &profile)?;
    artifacts::write_posthoc_csv(&config.output.join("posthoc.csv"), &profile)?;

    if let Some(path) = group_labels {
        let labels = read_labels_for(&data, path)?;
        let external =
            profile_clusters(&data, &labels.0, &features, config.pipeline.alpha)?;
        artifacts::write_profiles_csv(&config.output.join("profiles_external.csv"), &external)?;
        artifacts::write_posthoc_csv(&config.output.join("posthoc_external.csv"), &external)?;
    }
    echo_config(config)?;
    Ok(assignment)
}

/// Shuffle-based necessity test against a previously written labels CSV.
pub fn cmd_necessity(
    config: &RunConfig,
    feature_tokens: &[String],
    labels_path: &Path,
) -> Result<NecessityReport> {
    let data = load_finalized(&config.input, &config.schema)?;
    let features = resolve_features(&data, feature_tokens)?;
    let (labels, medoids) = read_labels_for(&data, labels_path)?;
    let n_clusters = labels.iter().max().map_or(0, |&l| l + 1);
    let baseline = ClusterAssignment {
        labels,
        medoids,
        n_clusters,
        silhouette: f64::NAN,
        cost: f64::NAN,
    };
    let report = shuffle_necessity_test(
        &data,
        &features,
        &baseline,
        config.pipeline.repeats,
        config.pipeline.necessity_threshold,
        config.pipeline.seed,
    )?;
    std::fs::create_dir_all(&config.output)?;
    artifacts::write_necessity_csv(&config.output.join("necessity.csv"), &report)?;
    artifacts::write_necessity_flags_csv(&config.output.join("necessity_flags.csv"), &report)?;
    echo_config(config)?;
    Ok(report)
}

/// The whole workflow end to end.
pub fn cmd_run_all(config: &RunConfig) -> Result<PipelineResult> {
    let data = load_finalized(&config.input, &config.schema)?;
    std::fs::create_dir_all(&config.output)?;
    echo_config(config)?;
    run_full_pipeline(&data, &config.pipeline, &config.output)
}

/// Echo the resolved configuration into the output directory, minus the
/// directory's own location.
fn echo_config(config: &RunConfig) -> Result<()> {
    let mut echoed = config.clone();
    echoed.output = PathBuf::new();
    std::fs::write(config.output.join("config.toml"), echoed.to_toml()?)?;
    Ok(())
}

/// Read a labels CSV (row_id, cluster_label, is_medoid) and align it to the
/// dataset's row order.
fn read_labels_for(data: &Dataset, path: &Path) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut by_id: HashMap<String, (usize, bool)> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let id = record
            .get(0)
            .ok_or_else(|| Error::Parameter("labels file missing row_id column".into()))?
            .to_string();
        let label: usize = record
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parameter(format!("bad cluster label for row `{id}`")))?;
        let is_medoid = record.get(2).map(|s| s == "1").unwrap_or(false);
        by_id.insert(id, (label, is_medoid));
    }
    let mut labels = Vec::with_capacity(data.n_rows());
    let mut medoids = Vec::new();
    for (i, id) in data.row_ids().iter().enumerate() {
        match by_id.get(id) {
            Some(&(label, is_medoid)) => {
                labels.push(label);
                if is_medoid {
                    medoids.push(i);
                }
            }
            None => {
                return Err(Error::Parameter(format!(
                    "labels file has no entry for row `{id}`"
                )))
            }
        }
    }
    Ok((labels, medoids))
}
