//! Python bindings for the core types and operations: dataset ingestion and
//! preprocessing, low-rank fitting and feature selection, Gower/PAM
//! clustering, the cross-validated pipeline, and the nonparametric tests.
//!
//! Structured results (selection, necessity, profiles) come back as JSON
//! strings so Python can `json.loads` them without extra conversion glue.

use std::collections::BTreeSet;
use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use phenoclust::clustering::{self, ClusterAssignment};
use phenoclust::dataset::{Dataset, LoadOptions, Schema};
use phenoclust::dissimilarity::{self, DissimilarityMatrix, FeatureWeights};
use phenoclust::glrm::{self, FitOptions, GlrmModel};
use phenoclust::pipeline::{self, PipelineConfig, SweepParams};
use phenoclust::stats;
use phenoclust::synth::{self, PlantSpec};

fn err(e: phenoclust::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Dataset", from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Load a CSV against a TOML schema file.
    #[staticmethod]
    #[pyo3(signature = (csv_path, schema_path, average_duplicates = false))]
    fn load_csv(csv_path: PathBuf, schema_path: PathBuf, average_duplicates: bool) -> PyResult<Self> {
        let schema = Schema::from_path(&schema_path).map_err(err)?;
        let opts = LoadOptions { average_duplicates };
        Ok(PyDataset {
            inner: Dataset::load_csv_with(&csv_path, &schema, &opts).map_err(err)?,
        })
    }

    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    fn n_cols(&self) -> usize {
        self.inner.n_cols()
    }

    fn row_ids(&self) -> Vec<String> {
        self.inner.row_ids().to_vec()
    }

    fn column_names(&self) -> Vec<String> {
        self.inner.columns().iter().map(|c| c.name.clone()).collect()
    }

    fn column_kinds(&self) -> Vec<String> {
        self.inner
            .columns()
            .iter()
            .map(|c| c.kind.as_str().to_string())
            .collect()
    }

    fn column_index(&self, name: &str) -> Option<usize> {
        self.inner.column_index(name)
    }

    /// Row-major copy of the value matrix.
    fn values(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n_rows())
            .map(|i| self.inner.row(i).to_vec())
            .collect()
    }

    fn consolidate_categories(&self, column: &str, max_categories: usize) -> PyResult<Self> {
        Ok(PyDataset {
            inner: self
                .inner
                .consolidate_categories(column, max_categories)
                .map_err(err)?,
        })
    }

    fn consolidate_all_categories(&self, max_categories: usize) -> PyResult<Self> {
        Ok(PyDataset {
            inner: self
                .inner
                .consolidate_all_categories(max_categories)
                .map_err(err)?,
        })
    }

    fn dummy_encode(&self) -> PyResult<Self> {
        Ok(PyDataset {
            inner: self.inner.dummy_encode().map_err(err)?,
        })
    }

    fn drop_incomplete_rows(&self) -> PyResult<Self> {
        Ok(PyDataset {
            inner: self.inner.drop_incomplete_rows().map_err(err)?,
        })
    }

    fn finalize(&self) -> PyResult<Self> {
        Ok(PyDataset {
            inner: self.inner.finalize().map_err(err)?,
        })
    }

    fn warnings(&self) -> Vec<String> {
        self.inner.warnings().to_vec()
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_csv(&path).map_err(err)
    }

    fn schema_toml(&self) -> String {
        self.inner.schema_toml()
    }
}

#[pyclass(name = "GlrmModel")]
struct PyGlrmModel {
    inner: GlrmModel,
}

#[pymethods]
impl PyGlrmModel {
    fn objective(&self, data: &PyDataset) -> PyResult<f64> {
        self.inner.objective(&data.inner).map_err(err)
    }

    #[pyo3(signature = (tol = 1e-8))]
    fn selected_features(&self, tol: f64) -> Vec<usize> {
        self.inner.selected_features(tol).into_iter().collect()
    }

    fn objective_trace(&self) -> Vec<f64> {
        self.inner.objective_trace.clone()
    }

    fn x(&self) -> Vec<Vec<f64>> {
        self.inner.x.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    fn y(&self) -> Vec<Vec<f64>> {
        self.inner.y.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyGlrmModel {
            inner: GlrmModel::from_json(text).map_err(err)?,
        })
    }
}

#[pyclass(name = "ClusterAssignment", from_py_object)]
#[derive(Clone)]
struct PyClusterAssignment {
    inner: ClusterAssignment,
}

#[pymethods]
impl PyClusterAssignment {
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    fn medoids(&self) -> Vec<usize> {
        self.inner.medoids.clone()
    }

    fn n_clusters(&self) -> usize {
        self.inner.n_clusters
    }

    fn silhouette(&self) -> f64 {
        self.inner.silhouette
    }

    fn cost(&self) -> f64 {
        self.inner.cost
    }
}

#[pyfunction]
#[pyo3(signature = (data, k, gamma, max_iters = 500, rel_tol = 1e-8, step_init = 1.0, seed = 0))]
fn fit_glrm(
    data: &PyDataset,
    k: usize,
    gamma: f64,
    max_iters: usize,
    rel_tol: f64,
    step_init: f64,
    seed: u64,
) -> PyResult<PyGlrmModel> {
    let opts = FitOptions {
        max_iters,
        rel_tol,
        step_init,
        seed,
    };
    Ok(PyGlrmModel {
        inner: glrm::fit_glrm(&data.inner, k, gamma, &opts).map_err(err)?,
    })
}

#[pyfunction]
fn prox_l1(values: Vec<f64>, threshold: f64) -> PyResult<Vec<f64>> {
    if threshold < 0.0 {
        return Err(PyValueError::new_err("threshold must be nonnegative"));
    }
    Ok(glrm::prox_l1(&values, threshold))
}

#[pyfunction]
fn balanced_weights(data: &PyDataset, features: Vec<usize>) -> PyResult<Vec<(usize, f64)>> {
    let w = dissimilarity::balanced_weights(&data.inner, &features).map_err(err)?;
    Ok(w.features().iter().copied().zip(w.weights().iter().copied()).collect())
}

fn weights_from(
    data: &PyDataset,
    features: &[usize],
    weights: Option<Vec<(usize, f64)>>,
) -> PyResult<FeatureWeights> {
    match weights {
        Some(entries) => FeatureWeights::new(entries).map_err(err),
        None => dissimilarity::balanced_weights(&data.inner, features).map_err(err),
    }
}

#[pyfunction]
#[pyo3(signature = (data, features, weights = None))]
fn gower_matrix(
    data: &PyDataset,
    features: Vec<usize>,
    weights: Option<Vec<(usize, f64)>>,
) -> PyResult<Vec<Vec<f64>>> {
    let w = weights_from(data, &features, weights)?;
    let d = dissimilarity::gower_matrix(&data.inner, &features, &w).map_err(err)?;
    Ok((0..d.size())
        .map(|i| d.values().row(i).to_vec())
        .collect())
}

fn matrix_from(values: Vec<Vec<f64>>) -> PyResult<DissimilarityMatrix> {
    let m = values.len();
    if values.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("dissimilarity matrix must be square"));
    }
    let array = Array2::from_shape_fn((m, m), |(i, j)| values[i][j]);
    DissimilarityMatrix::from_matrix(array).map_err(err)
}

#[pyfunction]
fn pam(matrix: Vec<Vec<f64>>, n_clusters: usize) -> PyResult<PyClusterAssignment> {
    Ok(PyClusterAssignment {
        inner: clustering::pam(&matrix_from(matrix)?, n_clusters).map_err(err)?,
    })
}

#[pyfunction]
fn silhouette(matrix: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
    clustering::silhouette(&matrix_from(matrix)?, &labels).map_err(err)
}

#[pyfunction]
fn best_clustering(matrix: Vec<Vec<f64>>, n_min: usize, n_max: usize) -> PyResult<PyClusterAssignment> {
    Ok(PyClusterAssignment {
        inner: clustering::best_clustering(&matrix_from(matrix)?, n_min, n_max).map_err(err)?,
    })
}

#[pyfunction]
fn make_folds(m: usize, n_folds: usize, seed: u64) -> PyResult<Vec<usize>> {
    Ok(pipeline::make_folds(m, n_folds, seed).map_err(err)?.assignment)
}

#[pyfunction]
fn pairwise_similarity_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    pipeline::pairwise_similarity_index(&a, &b).map_err(err)
}

#[pyfunction]
fn jaccard_coclustering(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    pipeline::jaccard_coclustering(&a, &b).map_err(err)
}

#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (data, n_folds, gamma0 = 0.0, gamma_step = None, n_min = 2, n_max = 8,
                    rank = 2, max_iters = 500, rel_tol = 1e-8, seed = 0))]
fn cv_feature_selection(
    data: &PyDataset,
    n_folds: usize,
    gamma0: f64,
    gamma_step: Option<f64>,
    n_min: usize,
    n_max: usize,
    rank: usize,
    max_iters: usize,
    rel_tol: f64,
    seed: u64,
) -> PyResult<String> {
    let params = SweepParams {
        gamma0,
        gamma_step,
        n_min,
        n_max,
        rank,
        fit: FitOptions {
            max_iters,
            rel_tol,
            step_init: 1.0,
            seed,
        },
    };
    let folds = pipeline::make_folds(data.inner.n_rows(), n_folds, seed).map_err(err)?;
    let selection = pipeline::cv_feature_selection(&data.inner, &folds, &params).map_err(err)?;
    serde_json::to_string(&selection).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
#[pyo3(signature = (data, features, baseline, repeats = 500, threshold = 0.9, seed = 0))]
fn shuffle_necessity_test(
    data: &PyDataset,
    features: Vec<usize>,
    baseline: &PyClusterAssignment,
    repeats: usize,
    threshold: f64,
    seed: u64,
) -> PyResult<String> {
    let report = pipeline::shuffle_necessity_test(
        &data.inner,
        &features,
        &baseline.inner,
        repeats,
        threshold,
        seed,
    )
    .map_err(err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (data, outdir, seed, n_folds = 5, gamma0 = 0.0, gamma_step = None,
                    n_min = 2, n_max = 8, rank = 2, repeats = 500,
                    necessity_threshold = 0.9, alpha = 0.05, max_iters = 500))]
fn run_full_pipeline(
    data: &PyDataset,
    outdir: PathBuf,
    seed: u64,
    n_folds: usize,
    gamma0: f64,
    gamma_step: Option<f64>,
    n_min: usize,
    n_max: usize,
    rank: usize,
    repeats: usize,
    necessity_threshold: f64,
    alpha: f64,
    max_iters: usize,
) -> PyResult<(Vec<usize>, Vec<usize>, usize)> {
    let config = PipelineConfig {
        n_folds,
        gamma0,
        gamma_step,
        n_min,
        n_max,
        rank,
        repeats,
        necessity_threshold,
        alpha,
        seed,
        max_iters,
        ..PipelineConfig::default()
    };
    let result = pipeline::run_full_pipeline(&data.inner, &config, &outdir).map_err(err)?;
    let surviving: Vec<usize> = result.surviving_features.iter().copied().collect();
    Ok((
        result.final_assignment.labels.clone(),
        surviving,
        result.final_assignment.n_clusters,
    ))
}

#[pyfunction]
fn kruskal_wallis(groups: Vec<Vec<f64>>) -> PyResult<(f64, f64, f64)> {
    let r = stats::kruskal_wallis(&groups).map_err(err)?;
    Ok((r.statistic, r.df, r.p_value))
}

#[pyfunction]
fn mann_whitney_u(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = stats::mann_whitney_u(&a, &b).map_err(err)?;
    Ok((r.statistic, r.p_value))
}

#[pyfunction]
fn pearson_chi_squared(table: Vec<Vec<u64>>) -> PyResult<(f64, f64, f64)> {
    let r = stats::pearson_chi_squared(&table).map_err(err)?;
    Ok((r.statistic, r.df, r.p_value))
}

#[pyfunction]
fn holm_adjust(p_values: Vec<f64>) -> PyResult<Vec<f64>> {
    stats::holm_adjust(&p_values).map_err(err)
}

#[pyfunction]
fn chi_squared_cdf_complement(x: f64, df: f64) -> PyResult<f64> {
    if x < 0.0 || df <= 0.0 {
        return Err(PyValueError::new_err("x must be >= 0 and df > 0"));
    }
    Ok(stats::chi_squared_cdf_complement(x, df))
}

#[pyfunction]
fn profile_clusters(
    data: &PyDataset,
    labels: Vec<usize>,
    features: Vec<usize>,
    alpha: f64,
) -> PyResult<String> {
    let profile = stats::profile_clusters(&data.inner, &labels, &features, alpha).map_err(err)?;
    // flatten to a JSON-friendly shape
    let features_json: Vec<serde_json::Value> = profile
        .features
        .iter()
        .map(|fp| {
            let test = fp.test();
            serde_json::json!({
                "feature": fp.feature(),
                "name": fp.name(),
                "statistic": test.statistic,
                "p_value": test.p_value,
            })
        })
        .collect();
    serde_json::to_string(&serde_json::json!({
        "n_clusters": profile.n_clusters,
        "cluster_sizes": profile.cluster_sizes,
        "features": features_json,
    }))
    .map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
#[pyo3(signature = (m, n_informative, n_noise, n_clusters, separation, binary_fraction, seed))]
fn generate_planted(
    m: usize,
    n_informative: usize,
    n_noise: usize,
    n_clusters: usize,
    separation: f64,
    binary_fraction: f64,
    seed: u64,
) -> PyResult<(PyDataset, Vec<usize>, Vec<usize>)> {
    let planted = synth::generate_planted(&PlantSpec {
        m,
        n_informative,
        n_noise,
        n_clusters,
        separation,
        binary_fraction,
        seed,
    })
    .map_err(err)?;
    let informative: Vec<usize> = planted
        .informative_features
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok((
        PyDataset {
            inner: planted.dataset,
        },
        planted.true_labels,
        informative,
    ))
}

#[pymodule]
fn phenoclust_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyGlrmModel>()?;
    m.add_class::<PyClusterAssignment>()?;
    m.add_function(wrap_pyfunction!(fit_glrm, m)?)?;
    m.add_function(wrap_pyfunction!(prox_l1, m)?)?;
    m.add_function(wrap_pyfunction!(balanced_weights, m)?)?;
    m.add_function(wrap_pyfunction!(gower_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(pam, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette, m)?)?;
    m.add_function(wrap_pyfunction!(best_clustering, m)?)?;
    m.add_function(wrap_pyfunction!(make_folds, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_similarity_index, m)?)?;
    m.add_function(wrap_pyfunction!(jaccard_coclustering, m)?)?;
    m.add_function(wrap_pyfunction!(cv_feature_selection, m)?)?;
    m.add_function(wrap_pyfunction!(shuffle_necessity_test, m)?)?;
    m.add_function(wrap_pyfunction!(run_full_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(kruskal_wallis, m)?)?;
    m.add_function(wrap_pyfunction!(mann_whitney_u, m)?)?;
    m.add_function(wrap_pyfunction!(pearson_chi_squared, m)?)?;
    m.add_function(wrap_pyfunction!(holm_adjust, m)?)?;
    m.add_function(wrap_pyfunction!(chi_squared_cdf_complement, m)?)?;
    m.add_function(wrap_pyfunction!(profile_clusters, m)?)?;
    m.add_function(wrap_pyfunction!(generate_planted, m)?)?;
    Ok(())
}
