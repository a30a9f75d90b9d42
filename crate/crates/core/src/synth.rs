//! Synthetic datasets with planted cluster structure and known
//! informative/noise features, used to verify the selection and clustering
//! pipeline end to end.
//!
//! Cell values derive from a counter-based hash of `(seed, row, column)`, so
//! generation is reproducible cell by cell regardless of evaluation order.

use std::collections::BTreeSet;

use ndarray::Array2;

use crate::dataset::{ColumnKind, ColumnMeta, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct PlantSpec {
    pub m: usize,
    pub n_informative: usize,
    pub n_noise: usize,
    pub n_clusters: usize,
    /// Distance between per-feature cluster centers, in within-cluster
    /// standard deviations.
    pub separation: f64,
    /// Fraction of each feature block generated as binary.
    pub binary_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Planted {
    pub dataset: Dataset,
    pub true_labels: Vec<usize>,
    pub informative_features: BTreeSet<usize>,
}

#[inline]
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic word for one (seed, row, column, salt) cell.
#[inline]
fn cell_word(seed: u64, row: u64, col: u64, salt: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed ^ salt.wrapping_mul(0xd6e8feb86659fd93)) ^ row) ^ col)
}

#[inline]
fn unit_f64(word: u64) -> f64 {
    // top 53 bits -> [0, 1)
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal from two counter-derived uniforms (Box-Muller).
fn cell_normal(seed: u64, row: u64, col: u64) -> f64 {
    let u1 = unit_f64(cell_word(seed, row, col, 1)).max(f64::MIN_POSITIVE);
    let u2 = unit_f64(cell_word(seed, row, col, 2));
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn cell_bernoulli(seed: u64, row: u64, col: u64, rate: f64) -> f64 {
    if unit_f64(cell_word(seed, row, col, 3)) < rate {
        1.0
    } else {
        0.0
    }
}

/// Cluster coordinates on a centered two-dimensional grid with half-unit
/// extent per axis, e.g. the four corners `(+-1/2, +-1/2)` for four
/// clusters. Two dimensions keep the planted structure within reach of a
/// rank-2 model.
fn cluster_position(cluster: usize, n_clusters: usize) -> (f64, f64) {
    let cols = (n_clusters as f64).sqrt().ceil() as usize;
    let rows = n_clusters.div_ceil(cols);
    let axis = |idx: usize, len: usize| {
        if len <= 1 {
            0.0
        } else {
            (idx as f64 - (len as f64 - 1.0) / 2.0) / (len as f64 - 1.0)
        }
    };
    (axis(cluster % cols, cols), axis(cluster / cols, rows))
}

/// Loading direction of the `index`-th of `count` informative numeric
/// features, spread symmetrically over the first quadrant so both latent
/// axes get equal aggregate support and no feature is collinear with
/// another.
fn feature_direction(index: usize, count: usize) -> (f64, f64) {
    let theta = std::f64::consts::FRAC_PI_2 * (index as f64 + 0.5) / count.max(1) as f64;
    (theta.cos(), theta.sin())
}

/// Planted center of one (cluster, numeric informative feature) pair at unit
/// separation.
pub(crate) fn planted_center(
    cluster: usize,
    feature_index: usize,
    feature_count: usize,
    n_clusters: usize,
) -> f64 {
    let (zx, zy) = cluster_position(cluster, n_clusters);
    let (vx, vy) = feature_direction(feature_index, feature_count);
    zx * vx + zy * vy
}

/// Scale that brings an informative numeric feature to unit total variance,
/// so emitted columns are unitless scores. Separation is a ratio of center
/// spacing to within-cluster spread and is unchanged by this.
pub(crate) fn unit_variance_scale(
    feature_index: usize,
    feature_count: usize,
    n_clusters: usize,
    separation: f64,
) -> f64 {
    let centers: Vec<f64> = (0..n_clusters)
        .map(|c| planted_center(c, feature_index, feature_count, n_clusters))
        .collect();
    let mean = centers.iter().sum::<f64>() / n_clusters as f64;
    let var = centers.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n_clusters as f64;
    1.0 / (1.0 + separation * separation * var).sqrt()
}

/// Generate a finalized dataset with planted structure. Clusters sit on a
/// two-dimensional latent grid; each informative numeric feature projects
/// that layout onto its own direction, scaled so centers sit `separation`
/// within-cluster standard deviations apart. Informative binary features use
/// per-cluster Bernoulli rates spread across [0.1, 0.9] along the same
/// projections; noise features are cluster-independent. Rows take cluster
/// `i % n_clusters`.
pub fn generate_planted(spec: &PlantSpec) -> Result<Planted> {
    if spec.n_informative < 1 {
        return Err(Error::Parameter("n_informative must be at least 1".into()));
    }
    if spec.n_clusters < 1 || spec.m < spec.n_clusters.max(2) {
        return Err(Error::Parameter(format!(
            "m = {} too small for {} clusters",
            spec.m, spec.n_clusters
        )));
    }
    if spec.separation < 0.0 {
        return Err(Error::Parameter("separation must be nonnegative".into()));
    }
    if !(0.0..=1.0).contains(&spec.binary_fraction) {
        return Err(Error::Parameter("binary_fraction must be in [0, 1]".into()));
    }

    let n_bin_informative = (spec.binary_fraction * spec.n_informative as f64).round() as usize;
    let n_num_informative = spec.n_informative - n_bin_informative;
    let n_bin_noise = (spec.binary_fraction * spec.n_noise as f64).round() as usize;
    let n_num_noise = spec.n_noise - n_bin_noise;

    #[derive(Clone, Copy)]
    enum Role {
        /// Gaussian around the cluster's projection onto direction `index`.
        InformativeNumeric { index: usize },
        /// Bernoulli dichotomy along grid `axis` (0 or 1) at rates 0.1/0.9.
        InformativeBinary { axis: usize },
        NoiseNumeric,
        NoiseBinary,
    }

    let mut columns: Vec<ColumnMeta> = Vec::new();
    let mut roles: Vec<Role> = Vec::new();
    for t in 0..n_num_informative {
        columns.push(plain_meta(&format!("inf_num_{t}"), ColumnKind::Numeric));
        roles.push(Role::InformativeNumeric { index: t });
    }
    for t in 0..n_bin_informative {
        columns.push(plain_meta(&format!("inf_bin_{t}"), ColumnKind::Binary));
        roles.push(Role::InformativeBinary { axis: t % 2 });
    }
    for t in 0..n_num_noise {
        columns.push(plain_meta(&format!("noise_num_{t}"), ColumnKind::Numeric));
        roles.push(Role::NoiseNumeric);
    }
    for t in 0..n_bin_noise {
        columns.push(plain_meta(&format!("noise_bin_{t}"), ColumnKind::Binary));
        roles.push(Role::NoiseBinary);
    }

    let n = columns.len();
    let true_labels: Vec<usize> = (0..spec.m).map(|i| i % spec.n_clusters).collect();

    let values = Array2::from_shape_fn((spec.m, n), |(i, j)| {
        let cluster = true_labels[i];
        match roles[j] {
            Role::InformativeNumeric { index } => {
                let scale =
                    unit_variance_scale(index, n_num_informative, spec.n_clusters, spec.separation);
                (spec.separation
                    * planted_center(cluster, index, n_num_informative, spec.n_clusters)
                    + cell_normal(spec.seed, i as u64, j as u64))
                    * scale
            }
            Role::InformativeBinary { axis } => {
                // dichotomy along one grid axis with rates at the ends of
                // [0.1, 0.9]; separation 0 collapses both sides to 0.5
                let position = cluster_position(cluster, spec.n_clusters);
                let coord = if axis == 0 { position.0 } else { position.1 };
                let side = if coord > 0.0 { 1.0 } else { -1.0 };
                let rate = 0.5 + 0.4 * side * spec.separation.min(1.0);
                cell_bernoulli(spec.seed, i as u64, j as u64, rate)
            }
            Role::NoiseNumeric => cell_normal(spec.seed, i as u64, j as u64),
            Role::NoiseBinary => cell_bernoulli(spec.seed, i as u64, j as u64, 0.5),
        }
    });

    let row_ids = (0..spec.m).map(|i| i.to_string()).collect();
    let mask = Array2::from_elem((spec.m, n), false);
    let raw = Dataset::from_parts(row_ids, columns, values, mask)?;
    let dataset = raw.finalize()?;

    // Constant columns (possible for extreme Bernoulli draws) get dropped by
    // finalize, so informative indices are recovered by name.
    let informative_features = dataset
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.name.starts_with("inf_"))
        .map(|(idx, _)| idx)
        .collect();

    Ok(Planted {
        dataset,
        true_labels,
        informative_features,
    })
}

fn plain_meta(name: &str, kind: ColumnKind) -> ColumnMeta {
    ColumnMeta {
        name: name.to_string(),
        kind,
        origin: name.to_string(),
        levels: Vec::new(),
        mean: f64::NAN,
        variance: f64::NAN,
        min: f64::NAN,
        max: f64::NAN,
        range: f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::best_clustering;
    use crate::dissimilarity::{balanced_weights, gower_matrix};
    use crate::pipeline::jaccard_coclustering;

    fn spec(seed: u64) -> PlantSpec {
        PlantSpec {
            m: 80,
            n_informative: 3,
            n_noise: 0,
            n_clusters: 4,
            separation: 10.0,
            binary_fraction: 0.0,
            seed,
        }
    }

    #[test]
    fn strong_separation_recovers_planted_labels() {
        let planted = generate_planted(&spec(11)).unwrap();
        let feats: Vec<usize> = (0..planted.dataset.n_cols()).collect();
        let w = balanced_weights(&planted.dataset, &feats).unwrap();
        let d = gower_matrix(&planted.dataset, &feats, &w).unwrap();
        let a = best_clustering(&d, 2, 6).unwrap();
        assert_eq!(a.n_clusters, 4);
        let agreement = jaccard_coclustering(&a.labels, &planted.true_labels).unwrap();
        assert!(agreement >= 0.99, "co-clustering agreement {agreement}");
    }

    #[test]
    fn zero_separation_has_no_structure() {
        let mut s = spec(5);
        s.separation = 0.0;
        let planted = generate_planted(&s).unwrap();
        let feats: Vec<usize> = (0..planted.dataset.n_cols()).collect();
        let w = balanced_weights(&planted.dataset, &feats).unwrap();
        let d = gower_matrix(&planted.dataset, &feats, &w).unwrap();
        let s = crate::clustering::silhouette(&d, &planted.true_labels).unwrap();
        assert!(s.abs() < 0.1, "silhouette of exchangeable labels was {s}");
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = generate_planted(&spec(9)).unwrap();
        let b = generate_planted(&spec(9)).unwrap();
        assert_eq!(a.dataset.values(), b.dataset.values());
        assert_eq!(a.true_labels, b.true_labels);
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_planted(&spec(1)).unwrap();
        let b = generate_planted(&spec(2)).unwrap();
        assert_ne!(a.dataset.values(), b.dataset.values());
    }

    #[test]
    fn within_cluster_means_near_planted_centers() {
        let s = PlantSpec {
            m: 400,
            n_informative: 2,
            n_noise: 0,
            n_clusters: 4,
            separation: 6.0,
            binary_fraction: 0.0,
            seed: 31,
        };
        let planted = generate_planted(&s).unwrap();
        for (j, _) in planted.dataset.columns().iter().enumerate() {
            for cluster in 0..4 {
                let vals: Vec<f64> = planted
                    .true_labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| l == cluster)
                    .map(|(i, _)| planted.dataset.value(i, j))
                    .collect();
                let scale = unit_variance_scale(j, 2, 4, s.separation);
                let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
                let center = s.separation * planted_center(cluster, j, 2, 4) * scale;
                let bound = 4.0 * scale / (vals.len() as f64).sqrt();
                assert!(
                    (mean - center).abs() <= bound,
                    "feature {j} cluster {cluster}: mean {mean} vs center {center}"
                );
            }
        }
    }

    #[test]
    fn binary_fraction_controls_column_kinds() {
        let s = PlantSpec {
            m: 60,
            n_informative: 5,
            n_noise: 20,
            n_clusters: 4,
            separation: 6.0,
            binary_fraction: 0.3,
            seed: 3,
        };
        let planted = generate_planted(&s).unwrap();
        let binary = planted
            .dataset
            .columns()
            .iter()
            .filter(|c| c.kind == ColumnKind::Binary)
            .count();
        // round(0.3 * 5) + round(0.3 * 20) = 2 + 6
        assert_eq!(binary, 8);
        assert_eq!(planted.informative_features.len(), 5);
    }
}
