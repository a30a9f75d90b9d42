//! The two-stage workflow: K-fold cross-validated regularization sweep for
//! feature selection, full-dataset clustering, shuffle-based feature
//! necessity testing, and fold-vs-full stability.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{best_clustering, pam, ClusterAssignment};
use crate::dataset::Dataset;
use crate::dissimilarity::{balanced_weights, gower_matrix};
use crate::error::{Error, Result};
use crate::glrm::{fit_glrm, fit_glrm_from, FitOptions};
use crate::stats::{median, profile_clusters, ClusterProfile};

/// Deterministic assignment of rows to cross-validation folds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldSpec {
    pub n_folds: usize,
    /// Fold index per row, in `[0, n_folds)`.
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldSpec {
    pub fn rows_in_fold(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn rows_outside_fold(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }
}

/// Deal a seeded uniform permutation of rows round-robin into `n_folds`
/// folds, so fold sizes differ by at most one.
pub fn make_folds(m: usize, n_folds: usize, seed: u64) -> Result<FoldSpec> {
    if n_folds < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 folds, got {n_folds}"
        )));
    }
    if n_folds > m {
        return Err(Error::Parameter(format!(
            "{n_folds} folds for only {m} rows"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut assignment = vec![0usize; m];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % n_folds;
    }
    Ok(FoldSpec {
        n_folds,
        assignment,
        seed,
    })
}

/// Parameters of one regularization sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepParams {
    pub gamma0: f64,
    /// Step between successive gamma values; when absent it defaults to the
    /// initial objective value divided by `10 n`.
    pub gamma_step: Option<f64>,
    pub n_min: usize,
    pub n_max: usize,
    /// Low-rank model rank.
    pub rank: usize,
    pub fit: FitOptions,
}

impl SweepParams {
    fn validate(&self) -> Result<()> {
        if self.gamma0 < 0.0 {
            return Err(Error::Parameter("gamma0 must be nonnegative".into()));
        }
        if let Some(step) = self.gamma_step {
            if step.is_nan() || step <= 0.0 {
                return Err(Error::Parameter("gamma_step must be positive".into()));
            }
        }
        if self.n_min < 2 || self.n_min > self.n_max {
            return Err(Error::Parameter(format!(
                "cluster range [{}, {}] invalid",
                self.n_min, self.n_max
            )));
        }
        Ok(())
    }
}

/// Best record of a sweep: the gamma, silhouette, cluster count, feature
/// set, and labels of the strongest clustering seen.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub best_gamma: f64,
    pub best_score: f64,
    pub best_n_c: usize,
    pub features: BTreeSet<usize>,
    pub labels: Vec<usize>,
    /// Gamma values at which a model was fitted, in visit order.
    pub gammas_visited: Vec<f64>,
    /// The resolved step between gammas (either the configured one or the
    /// default derived from the initial objective).
    pub gamma_step_used: f64,
}

const ZERO_COLUMN_TOL: f64 = 1e-8;
const MAX_SWEEP_STEPS: usize = 1000;

/// Sweep gamma upward from `gamma0`. At each step, fit the low-rank model
/// (warm-started from the previous gamma so the solution follows the
/// regularization path), take its surviving features, cluster the rows for
/// every candidate count, and score by silhouette. The sweep continues while
/// some count improves on the best score so far, and stops at the first
/// gamma with no improvement or with fewer than two surviving features.
pub fn gamma_sweep(train: &Dataset, params: &SweepParams) -> Result<SweepOutcome> {
    params.validate()?;
    let m = train.n_rows();
    let n = train.n_cols();
    let n_max = params.n_max.min(m);

    // Resolve the step from an unpenalized fit, then ramp the solution up to
    // gamma0 along the path; a cold start at a large gamma0 would zero the
    // feature factor outright.
    let base = fit_glrm(train, params.rank, 0.0, &params.fit)?;
    let step = params
        .gamma_step
        .unwrap_or(base.objective_trace[0] / (10.0 * n as f64));
    if step.is_nan() || step <= 0.0 {
        return Err(Error::Sweep("resolved gamma step is not positive".into()));
    }
    let mut warm = (base.x, base.y);
    for ramp in ramp_schedule(params.gamma0, step) {
        let model = fit_glrm_from(train, params.rank, ramp, &params.fit, Some((&warm.0, &warm.1)))?;
        warm = (model.x, model.y);
    }

    let mut gamma = params.gamma0;
    let mut best: Option<SweepOutcome> = None;
    let mut best_score = -1.0;
    let mut gammas_visited = Vec::new();

    for _ in 0..MAX_SWEEP_STEPS {
        let model = fit_glrm_from(train, params.rank, gamma, &params.fit, Some((&warm.0, &warm.1)))?;
        gammas_visited.push(gamma);
        let features: Vec<usize> = model
            .selected_features(ZERO_COLUMN_TOL)
            .into_iter()
            .collect();
        warm = (model.x, model.y);
        if features.len() < 2 {
            break;
        }

        let weights = balanced_weights(train, &features)?;
        let matrix = gower_matrix(train, &features, &weights)?;
        let mut improved = false;
        for n_c in params.n_min..=n_max {
            let assignment = pam(&matrix, n_c)?;
            if assignment.silhouette > best_score {
                best_score = assignment.silhouette;
                improved = true;
                best = Some(SweepOutcome {
                    best_gamma: gamma,
                    best_score,
                    best_n_c: n_c,
                    features: features.iter().copied().collect(),
                    labels: assignment.labels,
                    gammas_visited: Vec::new(),
                    gamma_step_used: step,
                });
            }
        }
        if !improved {
            break;
        }
        gamma += step;
    }

    match best {
        Some(mut outcome) => {
            outcome.gammas_visited = gammas_visited;
            Ok(outcome)
        }
        None => Err(Error::Sweep(
            "fewer than two features selected at gamma0; lower gamma0".into(),
        )),
    }
}

/// Intermediate gammas for a warm-started climb from zero to `target`,
/// preferring the given step but capped at a bounded number of stages.
fn ramp_schedule(target: f64, step: f64) -> Vec<f64> {
    const MAX_STAGES: f64 = 64.0;
    if target <= 0.0 {
        return Vec::new();
    }
    let stages = (target / step).ceil().clamp(1.0, MAX_STAGES);
    let increment = target / stages;
    (1..=stages as usize).map(|i| increment * i as f64).collect()
}

/// Feature selection at a target gamma by following the regularization path
/// up from zero with warm starts, mirroring how the sweep reached it.
fn selection_at_gamma(
    data: &Dataset,
    params: &SweepParams,
    target: f64,
    step: f64,
) -> Result<crate::glrm::GlrmModel> {
    let mut model = fit_glrm(data, params.rank, 0.0, &params.fit)?;
    for gamma in ramp_schedule(target, step) {
        model = fit_glrm_from(
            data,
            params.rank,
            gamma,
            &params.fit,
            Some((&model.x, &model.y)),
        )?;
    }
    Ok(model)
}

/// One fold's record: the training sweep's best and the feature set the
/// trained gamma selects on the held-out fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub best_gamma: f64,
    pub best_score: f64,
    pub best_n_c: usize,
    /// Feature indices into the full dataset.
    pub train_features: BTreeSet<usize>,
    pub validation_features: BTreeSet<usize>,
    pub validation_score: f64,
    pub validation_n_c: usize,
    pub train_rows: Vec<usize>,
    pub train_labels: Vec<usize>,
    pub validation_rows: Vec<usize>,
    pub validation_labels: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    pub per_fold: Vec<FoldRecord>,
    /// Intersection of the per-fold validation feature sets.
    pub final_features: BTreeSet<usize>,
}

/// Subset rows and refinalize, mapping the surviving columns back to the
/// parent dataset by name (a fold-constant column disappears in the fold).
fn fold_dataset(data: &Dataset, rows: &[usize]) -> Result<(Dataset, Vec<usize>)> {
    let subset = data.subset_rows(rows)?.finalize()?;
    let col_map = subset
        .columns()
        .iter()
        .map(|c| {
            data.column_index(&c.name)
                .expect("subset column exists in parent")
        })
        .collect();
    Ok((subset, col_map))
}

fn map_features(local: &BTreeSet<usize>, col_map: &[usize]) -> BTreeSet<usize> {
    local.iter().map(|&f| col_map[f]).collect()
}

/// K-fold cross-validated feature selection: sweep gamma on each training
/// split, select features on the held-out fold at the trained gamma, cluster
/// the held-out fold with them, and intersect the per-fold validation
/// feature sets.
pub fn cv_feature_selection(
    data: &Dataset,
    folds: &FoldSpec,
    params: &SweepParams,
) -> Result<SelectionResult> {
    params.validate()?;
    if folds.assignment.len() != data.n_rows() {
        return Err(Error::Parameter(format!(
            "fold assignment covers {} rows, dataset has {}",
            folds.assignment.len(),
            data.n_rows()
        )));
    }

    let per_fold: Vec<FoldRecord> = (0..folds.n_folds)
        .into_par_iter()
        .map(|fold| -> Result<FoldRecord> {
            let train_rows = folds.rows_outside_fold(fold);
            let validation_rows = folds.rows_in_fold(fold);
            let (train_ds, train_map) = fold_dataset(data, &train_rows)?;
            let sweep = gamma_sweep(&train_ds, params)?;
            let train_features = map_features(&sweep.features, &train_map);

            let (val_ds, val_map) = fold_dataset(data, &validation_rows)?;
            // The data-fit term grows with the row count while the penalty
            // does not, so the trained gamma is rescaled to the fold size to
            // keep the regularization strength it was tuned at.
            let size_ratio = validation_rows.len() as f64 / train_rows.len() as f64;
            let val_model = selection_at_gamma(
                &val_ds,
                params,
                sweep.best_gamma * size_ratio,
                sweep.gamma_step_used * size_ratio,
            )?;
            let val_local: Vec<usize> = val_model
                .selected_features(ZERO_COLUMN_TOL)
                .into_iter()
                .collect();
            let validation_features: BTreeSet<usize> =
                val_local.iter().map(|&f| val_map[f]).collect();

            let (validation_score, validation_n_c, validation_labels) = if val_local.is_empty() {
                (f64::NEG_INFINITY, 0, Vec::new())
            } else {
                let weights = balanced_weights(&val_ds, &val_local)?;
                let matrix = gower_matrix(&val_ds, &val_local, &weights)?;
                let n_max = params.n_max.min(val_ds.n_rows());
                let assignment = best_clustering(&matrix, params.n_min.min(n_max), n_max)?;
                (assignment.silhouette, assignment.n_clusters, assignment.labels)
            };

            Ok(FoldRecord {
                fold,
                best_gamma: sweep.best_gamma,
                best_score: sweep.best_score,
                best_n_c: sweep.best_n_c,
                train_features,
                validation_features,
                validation_score,
                validation_n_c,
                train_rows,
                train_labels: sweep.labels,
                validation_rows,
                validation_labels,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut final_features: Option<BTreeSet<usize>> = None;
    for record in &per_fold {
        final_features = Some(match final_features {
            None => record.validation_features.clone(),
            Some(acc) => acc
                .intersection(&record.validation_features)
                .copied()
                .collect(),
        });
    }
    let final_features = final_features.unwrap_or_default();
    if final_features.is_empty() {
        return Err(Error::EmptyIntersection(
            "no feature was selected on every validation fold; try a smaller gamma0 or gamma_step"
                .into(),
        ));
    }
    Ok(SelectionResult {
        per_fold,
        final_features,
    })
}

fn check_label_pair(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Parameter(format!(
            "labelings have different lengths ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Parameter("need at least 2 rows".into()));
    }
    Ok(())
}

/// Fraction of all unordered row pairs co-clustered in both labelings.
pub fn pairwise_similarity_index(a: &[usize], b: &[usize]) -> Result<f64> {
    check_label_pair(a, b)?;
    let m = a.len();
    let mut both = 0u64;
    for i in 0..m {
        for j in (i + 1)..m {
            if a[i] == a[j] && b[i] == b[j] {
                both += 1;
            }
        }
    }
    let total = (m * (m - 1) / 2) as u64;
    Ok(both as f64 / total as f64)
}

/// Jaccard similarity of the co-clustered pair sets of two labelings; 1 when
/// both sets are empty.
pub fn jaccard_coclustering(a: &[usize], b: &[usize]) -> Result<f64> {
    check_label_pair(a, b)?;
    let m = a.len();
    let mut both = 0u64;
    let mut in_a = 0u64;
    let mut in_b = 0u64;
    for i in 0..m {
        for j in (i + 1)..m {
            let ca = a[i] == a[j];
            let cb = b[i] == b[j];
            in_a += ca as u64;
            in_b += cb as u64;
            both += (ca && cb) as u64;
        }
    }
    let union = in_a + in_b - both;
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(both as f64 / union as f64)
    }
}

/// Fold-vs-full stability: the pairwise similarity index of a fold's
/// clustering against the full-dataset clustering restricted to the fold's
/// rows (both labelings must cover the same rows in the same order).
pub fn stability(fold_labels: &[usize], full_labels_restricted: &[usize]) -> Result<f64> {
    pairwise_similarity_index(fold_labels, full_labels_restricted)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureNecessity {
    pub feature: usize,
    pub name: String,
    pub jaccard_samples: Vec<f64>,
    pub psi_samples: Vec<f64>,
    pub median_jaccard: f64,
    pub median_psi: f64,
    pub necessary: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NecessityReport {
    pub repeats: usize,
    pub threshold: f64,
    /// The baseline clustering's own pairwise similarity index, the ceiling
    /// any shuffled run can approach.
    pub baseline_self_psi: f64,
    pub per_feature: Vec<FeatureNecessity>,
}

fn permutation_seed(seed: u64, feature: usize, repeat: usize) -> u64 {
    let a = crate::synth::splitmix64(seed ^ (feature as u64).wrapping_mul(0xa076_1d64_78bd_642f));
    crate::synth::splitmix64(a ^ (repeat as u64).wrapping_mul(0xe703_7ed1_a0b4_28db))
}

/// Shuffle one feature at a time and measure how much the clustering moves.
/// For each feature and repeat, the column is permuted by a seeded
/// permutation derived from `(seed, feature, repeat)`, the weights, Gower
/// matrix, and PAM clustering are recomputed at the baseline cluster count,
/// and the Jaccard and pairwise similarity index against the baseline are
/// recorded. A feature is flagged unnecessary when its median similarity
/// stays at or above `threshold` times the baseline's self-similarity.
pub fn shuffle_necessity_test(
    data: &Dataset,
    features: &[usize],
    baseline: &ClusterAssignment,
    repeats: usize,
    threshold: f64,
    seed: u64,
) -> Result<NecessityReport> {
    if repeats < 1 {
        return Err(Error::Parameter("repeats must be at least 1".into()));
    }
    if repeats == 1 {
        log::warn!("necessity test with a single repeat; medians are single samples");
    }
    if features.is_empty() {
        return Err(Error::Parameter("empty feature set".into()));
    }
    if baseline.labels.len() != data.n_rows() {
        return Err(Error::Parameter(
            "baseline labels do not cover the dataset".into(),
        ));
    }
    let mut feats: Vec<usize> = features.to_vec();
    feats.sort_unstable();
    feats.dedup();

    let m = data.n_rows();
    let baseline_self_psi = pairwise_similarity_index(&baseline.labels, &baseline.labels)?;

    let mut per_feature = Vec::with_capacity(feats.len());
    for &f in &feats {
        if f >= data.n_cols() {
            return Err(Error::Parameter(format!("feature {f} out of range")));
        }
        let samples: Vec<(f64, f64)> = (0..repeats)
            .into_par_iter()
            .map(|r| -> Result<(f64, f64)> {
                let mut perm: Vec<usize> = (0..m).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(permutation_seed(seed, f, r));
                perm.shuffle(&mut rng);
                let shuffled = data.with_permuted_column(f, &perm)?;
                let weights = balanced_weights(&shuffled, &feats)?;
                let matrix = gower_matrix(&shuffled, &feats, &weights)?;
                let assignment = pam(&matrix, baseline.n_clusters)?;
                Ok((
                    jaccard_coclustering(&assignment.labels, &baseline.labels)?,
                    pairwise_similarity_index(&assignment.labels, &baseline.labels)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let jaccard_samples: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let psi_samples: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let median_jaccard = median(&jaccard_samples);
        let median_psi = median(&psi_samples);
        let unnecessary = median_psi >= threshold * baseline_self_psi;
        per_feature.push(FeatureNecessity {
            feature: f,
            name: data.columns()[f].name.clone(),
            jaccard_samples,
            psi_samples,
            median_jaccard,
            median_psi,
            necessary: !unnecessary,
        });
    }
    Ok(NecessityReport {
        repeats,
        threshold,
        baseline_self_psi,
        per_feature,
    })
}

/// All tunable knobs of the full two-stage run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_n_folds")]
    pub n_folds: usize,
    #[serde(default)]
    pub gamma0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_step: Option<f64>,
    #[serde(default = "default_n_min")]
    pub n_min: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_necessity_threshold")]
    pub necessity_threshold: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_step_init")]
    pub step_init: f64,
}

fn default_n_folds() -> usize {
    5
}
fn default_n_min() -> usize {
    2
}
fn default_n_max() -> usize {
    8
}
fn default_rank() -> usize {
    2
}
fn default_repeats() -> usize {
    500
}
fn default_necessity_threshold() -> f64 {
    0.9
}
fn default_alpha() -> f64 {
    0.05
}
fn default_max_iters() -> usize {
    500
}
fn default_rel_tol() -> f64 {
    1e-8
}
fn default_step_init() -> f64 {
    1.0
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_folds: default_n_folds(),
            gamma0: 0.0,
            gamma_step: None,
            n_min: default_n_min(),
            n_max: default_n_max(),
            rank: default_rank(),
            repeats: default_repeats(),
            necessity_threshold: default_necessity_threshold(),
            alpha: default_alpha(),
            seed: 0,
            max_iters: default_max_iters(),
            rel_tol: default_rel_tol(),
            step_init: default_step_init(),
        }
    }
}

impl PipelineConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            step_init: self.step_init,
            seed: self.seed,
        }
    }

    pub fn sweep_params(&self) -> SweepParams {
        SweepParams {
            gamma0: self.gamma0,
            gamma_step: self.gamma_step,
            n_min: self.n_min,
            n_max: self.n_max,
            rank: self.rank,
            fit: self.fit_options(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldStability {
    pub fold: usize,
    pub train_psi: f64,
    pub validation_psi: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub selection: SelectionResult,
    /// Clustering of the full dataset on the selected features, used as the
    /// necessity-test baseline.
    pub baseline: ClusterAssignment,
    pub necessity: NecessityReport,
    /// Selected features that survived the necessity test.
    pub surviving_features: BTreeSet<usize>,
    /// Clustering of the full dataset on the surviving features.
    pub final_assignment: ClusterAssignment,
    /// Dissimilarities behind the final clustering, exported for external
    /// projection tools.
    pub final_dissimilarity: crate::dissimilarity::DissimilarityMatrix,
    pub stability: Vec<FoldStability>,
    pub profile: ClusterProfile,
}

fn restrict(labels: &[usize], rows: &[usize]) -> Vec<usize> {
    rows.iter().map(|&r| labels[r]).collect()
}

fn cluster_on(
    data: &Dataset,
    features: &[usize],
    n_min: usize,
    n_max: usize,
) -> Result<(ClusterAssignment, crate::dissimilarity::DissimilarityMatrix)> {
    let weights = balanced_weights(data, features)?;
    let matrix = gower_matrix(data, features, &weights)?;
    let assignment = best_clustering(&matrix, n_min, n_max.min(data.n_rows()))?;
    Ok((assignment, matrix))
}

/// Run the whole workflow: cross-validated selection, necessity testing on
/// the selected features, removal of unnecessary ones, final clustering, and
/// fold stability. Artifacts land in `outdir` (created if needed); reruns
/// with the same data, config, and seed produce byte-identical files.
pub fn run_full_pipeline(
    data: &Dataset,
    config: &PipelineConfig,
    outdir: &Path,
) -> Result<PipelineResult> {
    let t0 = std::time::Instant::now();
    std::fs::create_dir_all(outdir)?;

    let folds = make_folds(data.n_rows(), config.n_folds, config.seed)?;
    let selection = cv_feature_selection(data, &folds, &config.sweep_params())?;
    log::info!(
        "stage=select elapsed_ms={} features={}",
        t0.elapsed().as_millis(),
        selection.final_features.len()
    );

    let final_vec: Vec<usize> = selection.final_features.iter().copied().collect();
    let (baseline, _) = cluster_on(data, &final_vec, config.n_min, config.n_max)?;

    let t1 = std::time::Instant::now();
    let necessity = shuffle_necessity_test(
        data,
        &final_vec,
        &baseline,
        config.repeats,
        config.necessity_threshold,
        config.seed,
    )?;
    log::info!("stage=necessity elapsed_ms={}", t1.elapsed().as_millis());

    let surviving_features: BTreeSet<usize> = necessity
        .per_feature
        .iter()
        .filter(|f| f.necessary)
        .map(|f| f.feature)
        .collect();
    // a fully unnecessary feature set keeps the pre-necessity selection
    let surviving_features = if surviving_features.is_empty() {
        log::warn!("necessity test flagged every feature; keeping the selected set");
        selection.final_features.clone()
    } else {
        surviving_features
    };

    let surviving_vec: Vec<usize> = surviving_features.iter().copied().collect();
    let (final_assignment, final_dissimilarity) =
        cluster_on(data, &surviving_vec, config.n_min, config.n_max)?;

    let stability = selection
        .per_fold
        .iter()
        .map(|record| -> Result<FoldStability> {
            let train_full = restrict(&final_assignment.labels, &record.train_rows);
            let val_full = restrict(&final_assignment.labels, &record.validation_rows);
            Ok(FoldStability {
                fold: record.fold,
                train_psi: stability(&record.train_labels, &train_full)?,
                validation_psi: stability(&record.validation_labels, &val_full)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let profile = profile_clusters(data, &final_assignment.labels, &surviving_vec, config.alpha)?;

    let result = PipelineResult {
        selection,
        baseline,
        necessity,
        surviving_features,
        final_assignment,
        final_dissimilarity,
        stability,
        profile,
    };
    crate::artifacts::write_run_artifacts(data, config, &result, outdir)?;
    log::info!("stage=total elapsed_ms={}", t0.elapsed().as_millis());
    Ok(result)
}
