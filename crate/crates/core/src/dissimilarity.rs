//! Weighted Gower dissimilarity over a feature subset, with automatic
//! balancing of binary against numeric feature contributions.

use std::path::Path;

use ndarray::Array2;

use crate::dataset::{ColumnKind, Dataset};
use crate::error::{Error, Result};

/// Symmetric pairwise dissimilarities with zero diagonal, entries in [0, 1].
#[derive(Debug, Clone)]
pub struct DissimilarityMatrix {
    values: Array2<f64>,
}

impl DissimilarityMatrix {
    /// Wrap an existing matrix, validating symmetry, the zero diagonal, and
    /// the [0, 1] entry range.
    pub fn from_matrix(values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c {
            return Err(Error::Shape(format!("matrix is {r}x{c}, not square")));
        }
        for i in 0..r {
            if values[(i, i)] != 0.0 {
                return Err(Error::Parameter(format!("nonzero diagonal at {i}")));
            }
            for j in (i + 1)..r {
                let v = values[(i, j)];
                if v != values[(j, i)] {
                    return Err(Error::Parameter(format!("asymmetry at ({i}, {j})")));
                }
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Parameter(format!(
                        "entry {v} at ({i}, {j}) outside [0, 1]"
                    )));
                }
            }
        }
        Ok(DissimilarityMatrix { values })
    }

    pub(crate) fn from_matrix_unchecked(values: Array2<f64>) -> Self {
        DissimilarityMatrix { values }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Contiguous row slice; rows are stored row-major.
    #[inline]
    pub(crate) fn row_slice(&self, i: usize) -> &[f64] {
        self.values.row(i).to_slice().expect("row-major layout")
    }

    /// Dense text export: size line, then rows of entries at 17 significant
    /// digits.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let m = self.size();
        writeln!(out, "{m}")?;
        for i in 0..m {
            let row: Vec<String> = (0..m).map(|j| format!("{:.16e}", self.get(i, j))).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Positive per-feature weights over a feature subset (kept sorted by
/// feature index so summation order is canonical).
#[derive(Debug, Clone)]
pub struct FeatureWeights {
    features: Vec<usize>,
    weights: Vec<f64>,
}

impl FeatureWeights {
    pub fn new(mut entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Parameter("empty feature weight set".into()));
        }
        entries.sort_by_key(|&(f, _)| f);
        entries.dedup_by_key(|&mut (f, _)| f);
        if let Some(&(f, w)) = entries.iter().find(|&&(_, w)| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Parameter(format!(
                "weight {w} for feature {f} must be finite and positive"
            )));
        }
        let (features, weights) = entries.into_iter().unzip();
        Ok(FeatureWeights { features, weights })
    }

    /// Unit weight for every feature in the subset.
    pub fn uniform(features: &[usize]) -> Result<Self> {
        Self::new(features.iter().map(|&f| (f, 1.0)).collect())
    }

    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_for(&self, feature: usize) -> Option<f64> {
        self.features
            .binary_search(&feature)
            .ok()
            .map(|i| self.weights[i])
    }
}

/// Per-feature contribution of one row pair: `|a - b| / range` for numeric
/// features, mismatch indicator for binary ones.
#[inline]
fn feature_distance(kind: ColumnKind, range: f64, a: f64, b: f64) -> f64 {
    match kind {
        ColumnKind::Numeric => (a - b).abs() / range,
        _ => {
            if a != b {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Weighted Gower dissimilarity between two complete rows over the weighted
/// feature subset: `sum(w_f * d_f) / sum(w_f)`.
pub fn gower_pair(
    row_a: &[f64],
    row_b: &[f64],
    metas: &[crate::dataset::ColumnMeta],
    weights: &FeatureWeights,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&f, &w) in weights.features.iter().zip(&weights.weights) {
        if f >= metas.len() || f >= row_a.len() || f >= row_b.len() {
            return Err(Error::Parameter(format!("feature {f} out of range")));
        }
        let meta = &metas[f];
        if meta.kind == ColumnKind::Numeric && (meta.range.is_nan() || meta.range <= 0.0) {
            return Err(Error::Config(format!(
                "numeric feature `{}` has zero range; constant columns should have been dropped",
                meta.name
            )));
        }
        num += w * feature_distance(meta.kind, meta.range, row_a[f], row_b[f]);
        den += w;
    }
    Ok(num / den)
}

/// Balance binary features against numeric ones: numeric features keep
/// weight 1 and every binary feature gets `mean numeric contribution /
/// mean binary contribution`, both means taken over all unordered row pairs
/// and the features of the block. Feature sets that are all-numeric or
/// all-binary get unit weights, as does a degenerate all-agreeing binary
/// block.
pub fn balanced_weights(data: &Dataset, features: &[usize]) -> Result<FeatureWeights> {
    if features.is_empty() {
        return Err(Error::Parameter("empty feature set".into()));
    }
    let mut feats: Vec<usize> = features.to_vec();
    feats.sort_unstable();
    feats.dedup();
    for &f in &feats {
        if f >= data.n_cols() {
            return Err(Error::Parameter(format!("feature {f} out of range")));
        }
    }

    let numeric: Vec<usize> = feats
        .iter()
        .copied()
        .filter(|&f| data.columns()[f].kind == ColumnKind::Numeric)
        .collect();
    let binary: Vec<usize> = feats
        .iter()
        .copied()
        .filter(|&f| data.columns()[f].kind != ColumnKind::Numeric)
        .collect();
    if numeric.is_empty() || binary.is_empty() {
        return FeatureWeights::uniform(&feats);
    }

    let m = data.n_rows();
    let n_pairs = (m * (m - 1) / 2) as f64;
    let values = data.values();

    let mut numeric_sum = 0.0;
    for &f in &numeric {
        let range = data.columns()[f].range;
        if range.is_nan() || range <= 0.0 {
            return Err(Error::Config(format!(
                "numeric feature `{}` has zero range",
                data.columns()[f].name
            )));
        }
        let col = values.column(f);
        for i in 0..m {
            let vi = col[i];
            for j in (i + 1)..m {
                numeric_sum += (vi - col[j]).abs() / range;
            }
        }
    }
    let mut binary_sum = 0.0;
    for &f in &binary {
        let col = values.column(f);
        for i in 0..m {
            let vi = col[i];
            for j in (i + 1)..m {
                if vi != col[j] {
                    binary_sum += 1.0;
                }
            }
        }
    }

    let mean_numeric = numeric_sum / (n_pairs * numeric.len() as f64);
    let mean_binary = binary_sum / (n_pairs * binary.len() as f64);
    let w_binary = if mean_binary == 0.0 {
        1.0
    } else {
        mean_numeric / mean_binary
    };
    // A binary block with no numeric variation to mirror keeps unit weight.
    let w_binary = if w_binary > 0.0 && w_binary.is_finite() {
        w_binary
    } else {
        1.0
    };

    let entries = feats
        .iter()
        .map(|&f| {
            if data.columns()[f].kind == ColumnKind::Numeric {
                (f, 1.0)
            } else {
                (f, w_binary)
            }
        })
        .collect();
    FeatureWeights::new(entries)
}

/// Full pairwise Gower matrix over the weighted feature subset. Each
/// unordered pair is computed once and mirrored, so the result is symmetric
/// by construction.
pub fn gower_matrix(
    data: &Dataset,
    features: &[usize],
    weights: &FeatureWeights,
) -> Result<DissimilarityMatrix> {
    let m = data.n_rows();
    if m < 2 {
        return Err(Error::Parameter("need at least 2 rows".into()));
    }
    if features.is_empty() {
        return Err(Error::Config("empty feature set".into()));
    }
    let mut feats: Vec<usize> = features.to_vec();
    feats.sort_unstable();
    feats.dedup();
    if feats != weights.features {
        return Err(Error::Parameter(
            "weights do not cover exactly the requested features".into(),
        ));
    }

    // Precompute per-feature plan so the pair loop touches plain slices.
    struct Plan {
        col: usize,
        binary: bool,
        inv_range: f64,
        weight: f64,
    }
    let mut plan = Vec::with_capacity(feats.len());
    let mut weight_total = 0.0;
    for (&f, &w) in weights.features.iter().zip(&weights.weights) {
        if f >= data.n_cols() {
            return Err(Error::Parameter(format!("feature {f} out of range")));
        }
        let meta = &data.columns()[f];
        let binary = meta.kind != ColumnKind::Numeric;
        if !binary && (meta.range.is_nan() || meta.range <= 0.0) {
            return Err(Error::Config(format!(
                "numeric feature `{}` has zero range",
                meta.name
            )));
        }
        plan.push(Plan {
            col: f,
            binary,
            inv_range: if binary { 0.0 } else { 1.0 / meta.range },
            weight: w,
        });
        weight_total += w;
    }

    let values = data.values();
    let rows: Vec<&[f64]> = (0..m)
        .map(|i| values.row(i).to_slice().expect("row-major layout"))
        .collect();

    let mut out = Array2::zeros((m, m));
    for i in 0..m {
        let ri = rows[i];
        for j in (i + 1)..m {
            let rj = rows[j];
            let mut acc = 0.0;
            for p in &plan {
                let a = ri[p.col];
                let b = rj[p.col];
                if p.binary {
                    if a != b {
                        acc += p.weight;
                    }
                } else {
                    acc += p.weight * (a - b).abs() * p.inv_range;
                }
            }
            let d = (acc / weight_total).min(1.0);
            out[(i, j)] = d;
            out[(j, i)] = d;
        }
    }
    Ok(DissimilarityMatrix::from_matrix_unchecked(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnMeta, Dataset};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn mixed_dataset(numeric: Vec<Vec<f64>>, binary: Vec<Vec<f64>>) -> Dataset {
        let m = numeric.first().map_or_else(|| binary[0].len(), Vec::len);
        let n = numeric.len() + binary.len();
        let mut columns = Vec::new();
        let mut data = Array2::zeros((m, n));
        for (j, col) in numeric.iter().enumerate() {
            columns.push(test_meta(&format!("n{j}"), ColumnKind::Numeric));
            for i in 0..m {
                data[(i, j)] = col[i];
            }
        }
        for (j, col) in binary.iter().enumerate() {
            columns.push(test_meta(&format!("b{j}"), ColumnKind::Binary));
            for i in 0..m {
                data[(i, numeric.len() + j)] = col[i];
            }
        }
        let ids = (0..m).map(|i| i.to_string()).collect();
        let mask = Array2::from_elem((m, n), false);
        Dataset::from_parts(ids, columns, data, mask)
            .unwrap()
            .finalize()
            .unwrap()
    }

    fn test_meta(name: &str, kind: ColumnKind) -> ColumnMeta {
        ColumnMeta {
            name: name.into(),
            kind,
            origin: name.into(),
            levels: Vec::new(),
            mean: f64::NAN,
            variance: f64::NAN,
            min: f64::NAN,
            max: f64::NAN,
            range: f64::NAN,
        }
    }

    #[test]
    fn identical_rows_have_zero_distance() {
        let ds = mixed_dataset(vec![vec![3.0, 3.0, 7.0]], vec![vec![1.0, 1.0, 0.0]]);
        let w = FeatureWeights::uniform(&[0, 1]).unwrap();
        let d = gower_pair(
            ds.row(0).to_slice().unwrap(),
            ds.row(1).to_slice().unwrap(),
            ds.columns(),
            &w,
        )
        .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn numeric_extremes_have_unit_distance() {
        let ds = mixed_dataset(vec![vec![0.0, 10.0, 5.0]], vec![]);
        let w = FeatureWeights::uniform(&[0]).unwrap();
        let d = gower_pair(
            ds.row(0).to_slice().unwrap(),
            ds.row(1).to_slice().unwrap(),
            ds.columns(),
            &w,
        )
        .unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn weighted_pair_hand_computed() {
        // numeric: range 10, |diff| 5, weight 1; binary mismatch, weight 3
        let ds = mixed_dataset(vec![vec![0.0, 5.0, 10.0]], vec![vec![0.0, 1.0, 0.0]]);
        let w = FeatureWeights::new(vec![(0, 1.0), (1, 3.0)]).unwrap();
        let d = gower_pair(
            ds.row(0).to_slice().unwrap(),
            ds.row(1).to_slice().unwrap(),
            ds.columns(),
            &w,
        )
        .unwrap();
        assert_abs_diff_eq!(d, 0.875, epsilon = 1e-15);
    }

    #[test]
    fn balanced_weights_numeric_only() {
        let ds = mixed_dataset(vec![vec![0.0, 1.0, 2.0], vec![5.0, 2.0, 0.0]], vec![]);
        let w = balanced_weights(&ds, &[0, 1]).unwrap();
        assert_eq!(w.weights(), &[1.0, 1.0]);
    }

    #[test]
    fn balanced_weights_match_ratio_oracle() {
        let ds = mixed_dataset(
            vec![vec![0.0, 4.0, 4.0, 8.0], vec![1.0, 1.5, 3.0, 0.5]],
            vec![vec![0.0, 1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0, 0.0]],
        );
        let w = balanced_weights(&ds, &[0, 1, 2, 3]).unwrap();

        // brute-force block means
        let m = ds.n_rows();
        let mut dn = 0.0;
        let mut db = 0.0;
        let mut pairs = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                pairs += 1.0;
                for f in 0..2 {
                    dn += (ds.value(i, f) - ds.value(j, f)).abs() / ds.columns()[f].range;
                }
                for f in 2..4 {
                    if ds.value(i, f) != ds.value(j, f) {
                        db += 1.0;
                    }
                }
            }
        }
        let expected = (dn / (2.0 * pairs)) / (db / (2.0 * pairs));
        assert_abs_diff_eq!(w.weight_for(2).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(w.weight_for(3).unwrap(), expected, epsilon = 1e-12);
        assert_eq!(w.weight_for(0).unwrap(), 1.0);

        // after weighting, mean per-feature contributions of the blocks agree
        let wn = dn / (2.0 * pairs);
        let wb = expected * db / (2.0 * pairs);
        assert_abs_diff_eq!(wn, wb, epsilon = 1e-12 * wn.abs().max(1.0));
    }

    #[test]
    fn balanced_weights_guard_constant_binary() {
        // built unfinalized so a constant binary column can exist at all
        let values = array![[1.0, 1.0], [2.0, 1.0], [4.0, 1.0]];
        let mut nmeta = test_meta("n", ColumnKind::Numeric);
        nmeta.range = 3.0;
        nmeta.variance = 1.0;
        let mut bmeta = test_meta("b", ColumnKind::Binary);
        bmeta.range = 0.0;
        bmeta.variance = 0.0;
        let ds = Dataset::from_parts(
            vec!["0".into(), "1".into(), "2".into()],
            vec![nmeta, bmeta],
            values,
            Array2::from_elem((3, 2), false),
        )
        .unwrap();
        let w = balanced_weights(&ds, &[0, 1]).unwrap();
        assert_eq!(w.weight_for(1).unwrap(), 1.0);
    }

    #[test]
    fn matrix_three_numeric_rows() {
        let ds = mixed_dataset(vec![vec![0.0, 5.0, 10.0]], vec![]);
        let w = FeatureWeights::uniform(&[0]).unwrap();
        let d = gower_matrix(&ds, &[0], &w).unwrap();
        assert_eq!(d.get(0, 1), 0.5);
        assert_eq!(d.get(0, 2), 1.0);
        assert_eq!(d.get(1, 2), 0.5);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn matrix_identical_rows() {
        let ds = mixed_dataset(vec![vec![1.0, 1.0, 2.0]], vec![vec![1.0, 1.0, 0.0]]);
        let w = FeatureWeights::uniform(&[0, 1]).unwrap();
        let d = gower_matrix(&ds, &[0, 1], &w).unwrap();
        assert_eq!(d.get(0, 1), 0.0);
    }

    #[test]
    fn empty_feature_set_is_config_error() {
        let ds = mixed_dataset(vec![vec![0.0, 1.0]], vec![]);
        let w = FeatureWeights::uniform(&[0]).unwrap();
        assert!(matches!(
            gower_matrix(&ds, &[], &w),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn feature_order_does_not_matter() {
        let ds = mixed_dataset(
            vec![vec![0.0, 2.0, 5.0], vec![1.0, 0.0, 3.0]],
            vec![vec![0.0, 1.0, 1.0]],
        );
        let w = balanced_weights(&ds, &[0, 1, 2]).unwrap();
        let a = gower_matrix(&ds, &[0, 1, 2], &w).unwrap();
        let b = gower_matrix(&ds, &[2, 0, 1], &w).unwrap();
        assert_eq!(a.values(), b.values());
    }

    proptest! {
        #[test]
        fn matrix_is_symmetric_bounded_zero_diagonal(
            seed in 0u64..500,
            m in 3usize..12,
        ) {
            let numeric: Vec<Vec<f64>> = (0..2)
                .map(|c| {
                    (0..m)
                        .map(|i| (((seed + i as u64 * 31 + c * 97) % 1000) as f64) / 50.0)
                        .collect()
                })
                .collect();
            let binary: Vec<Vec<f64>> = (0..2)
                .map(|c| {
                    (0..m)
                        .map(|i| ((seed * 7 + i as u64 * 13 + c * 3) % 2) as f64)
                        .collect()
                })
                .collect();
            // guard against constant columns, which finalize would drop
            prop_assume!(numeric.iter().all(|c| c.iter().any(|&v| v != c[0])));
            prop_assume!(binary.iter().all(|c| c.iter().any(|&v| v != c[0])));
            let ds = mixed_dataset(numeric, binary);
            let feats: Vec<usize> = (0..ds.n_cols()).collect();
            let w = balanced_weights(&ds, &feats).unwrap();
            let d = gower_matrix(&ds, &feats, &w).unwrap();
            for i in 0..m {
                prop_assert_eq!(d.get(i, i), 0.0);
                for j in 0..m {
                    prop_assert_eq!(d.get(i, j), d.get(j, i));
                    prop_assert!((0.0..=1.0).contains(&d.get(i, j)));
                }
            }
        }
    }
}
