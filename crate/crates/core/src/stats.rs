//! Nonparametric comparison of clusters: Kruskal-Wallis, Mann-Whitney U,
//! Holm step-down adjustment, Pearson chi-squared, and per-cluster feature
//! profiles (median/IQR for numeric features, percent/count for binary).

use crate::dataset::{ColumnKind, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMethod {
    KruskalWallis,
    ChiSquared,
    MannWhitney,
}

#[derive(Debug, Clone)]
pub struct StatResult {
    pub statistic: f64,
    /// Degrees of freedom; NaN where the test has none (Mann-Whitney).
    pub df: f64,
    pub p_value: f64,
    pub method: TestMethod,
}

// ---------------------------------------------------------------------------
// Gamma machinery: regularized incomplete gamma via series / continued
// fraction, which also supplies erfc and the normal CDF.
// ---------------------------------------------------------------------------

/// ln Gamma(x) for x > 0, Lanczos approximation (g = 7, 9 coefficients).
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = 0.999_999_999_999_809_9;
    for (i, &c) in COEFFS.iter().enumerate() {
        a += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const GAMMA_EPS: f64 = 3e-16;
const GAMMA_MAX_ITER: usize = 800;

/// Regularized lower incomplete gamma P(a, x) by its power series.
fn gamma_series(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma Q(a, x) by Lentz's continued fraction.
fn gamma_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_continued_fraction(a, x)
    }
}

/// Survival function of the chi-squared distribution:
/// `1 - P(df/2, x/2)`, series for small x, continued fraction otherwise.
pub fn chi_squared_cdf_complement(x: f64, df: f64) -> f64 {
    assert!(x >= 0.0, "x must be nonnegative");
    assert!(df > 0.0, "df must be positive");
    regularized_gamma_q(df / 2.0, x / 2.0)
}

/// Complementary error function via erfc(x) = Q(1/2, x^2) for x >= 0.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        2.0 - erfc(-x)
    } else {
        regularized_gamma_q(0.5, x * x)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

// ---------------------------------------------------------------------------
// Ranking
// ---------------------------------------------------------------------------

/// Mid-ranks (1-based, ties averaged). Also returns `sum(t^3 - t)` over tie
/// groups for tie corrections.
fn mid_ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut tie_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0; // mean of ranks i+1..=j
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        let t = (j - i) as f64;
        tie_sum += t * t * t - t;
        i = j;
    }
    (ranks, tie_sum)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

/// Kruskal-Wallis rank test across two or more groups, with tie correction
/// `H' = H / (1 - sum(t^3 - t) / (N^3 - N))`. All-tied data yields H = 0 and
/// p = 1. The p-value uses the chi-squared approximation with `g - 1` degrees
/// of freedom.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<StatResult> {
    if groups.len() < 2 {
        return Err(Error::Parameter(format!(
            "kruskal_wallis needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    if let Some(i) = groups.iter().position(|g| g.is_empty()) {
        return Err(Error::Parameter(format!("group {i} is empty")));
    }
    let n_total: usize = groups.iter().map(|g| g.len()).sum();
    if n_total < 3 {
        return Err(Error::Parameter(format!(
            "kruskal_wallis needs at least 3 observations, got {n_total}"
        )));
    }

    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let (ranks, tie_sum) = mid_ranks(&pooled);

    let n = n_total as f64;
    let mut h = 0.0;
    let mut offset = 0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        h += r * r / g.len() as f64;
        offset += g.len();
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);

    let correction = 1.0 - tie_sum / (n * n * n - n);
    let h = if correction <= 0.0 {
        // every observation tied
        0.0
    } else {
        h / correction
    };
    let df = (groups.len() - 1) as f64;
    let p = if h <= 0.0 {
        1.0
    } else {
        chi_squared_cdf_complement(h, df)
    };
    Ok(StatResult {
        statistic: h.max(0.0),
        df,
        p_value: p,
        method: TestMethod::KruskalWallis,
    })
}

/// Pearson chi-squared test of independence on a contingency table of counts
/// (no continuity correction). Expected cell counts below 5 produce a log
/// warning, not an error.
pub fn pearson_chi_squared(table: &[Vec<u64>]) -> Result<StatResult> {
    let r = table.len();
    if r < 2 {
        return Err(Error::Parameter(
            "contingency table needs at least 2 rows".into(),
        ));
    }
    let c = table[0].len();
    if c < 2 {
        return Err(Error::Parameter(
            "contingency table needs at least 2 columns".into(),
        ));
    }
    if table.iter().any(|row| row.len() != c) {
        return Err(Error::Parameter("ragged contingency table".into()));
    }

    let row_totals: Vec<f64> = table.iter().map(|row| row.iter().sum::<u64>() as f64).collect();
    let col_totals: Vec<f64> = (0..c)
        .map(|j| table.iter().map(|row| row[j]).sum::<u64>() as f64)
        .collect();
    if row_totals.contains(&0.0) || col_totals.contains(&0.0) {
        return Err(Error::Parameter(
            "contingency table has a zero row or column margin".into(),
        ));
    }
    let total: f64 = row_totals.iter().sum();

    let mut x2 = 0.0;
    let mut low_expected = false;
    for i in 0..r {
        for j in 0..c {
            let expected = row_totals[i] * col_totals[j] / total;
            if expected < 5.0 {
                low_expected = true;
            }
            let diff = table[i][j] as f64 - expected;
            x2 += diff * diff / expected;
        }
    }
    if low_expected {
        log::warn!("chi-squared table has expected cell counts below 5");
    }
    let df = ((r - 1) * (c - 1)) as f64;
    Ok(StatResult {
        statistic: x2,
        df,
        p_value: chi_squared_cdf_complement(x2, df),
        method: TestMethod::ChiSquared,
    })
}

/// Mann-Whitney U (first-sample U from mid-ranks), two-sided p-value from the
/// normal approximation with tie-corrected variance and continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<StatResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Parameter("both samples must be nonempty".into()));
    }
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let n = na + nb;

    let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let (ranks, tie_sum) = mid_ranks(&pooled);
    let ra: f64 = ranks[..a.len()].iter().sum();
    let u = ra - na * (na + 1.0) / 2.0;

    let mean = na * nb / 2.0;
    let variance = na * nb / 12.0 * ((n + 1.0) - tie_sum / (n * (n - 1.0)));
    let p = if variance <= 0.0 {
        1.0
    } else {
        let diff = u - mean;
        let cc = if diff > 0.0 {
            -0.5
        } else if diff < 0.0 {
            0.5
        } else {
            0.0
        };
        let z = (diff + cc) / variance.sqrt();
        (2.0 * normal_cdf(-z.abs())).min(1.0)
    };
    Ok(StatResult {
        statistic: u,
        df: f64::NAN,
        p_value: p,
        method: TestMethod::MannWhitney,
    })
}

/// Holm step-down adjustment. Returns adjusted p-values in the original
/// order; monotone nondecreasing in sorted order and capped at 1.
pub fn holm_adjust(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Parameter(format!(
            "p-value {bad} outside [0, 1]"
        )));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].partial_cmp(&p_values[b]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (i, &idx) in order.iter().enumerate() {
        let scaled = ((m - i) as f64 * p_values[idx]).min(1.0);
        running = running.max(scaled);
        adjusted[idx] = running;
    }
    Ok(adjusted)
}

// ---------------------------------------------------------------------------
// Cluster profiles
// ---------------------------------------------------------------------------

/// Type-7 quantile: linear interpolation between order statistics.
fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_type7(&v, 0.5)
}

/// Interquartile range with interpolated (type-7) quartiles.
pub fn iqr(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_type7(&v, 0.75) - quantile_type7(&v, 0.25)
}

#[derive(Debug, Clone)]
pub struct PairwiseTest {
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub p_raw: f64,
    pub p_adjusted: f64,
}

#[derive(Debug, Clone)]
pub struct NumericCell {
    pub median: f64,
    pub iqr: f64,
}

#[derive(Debug, Clone)]
pub struct BinaryCell {
    pub percent: f64,
    pub count: u64,
}

#[derive(Debug, Clone)]
pub enum FeatureProfile {
    Numeric {
        feature: usize,
        name: String,
        per_cluster: Vec<NumericCell>,
        test: StatResult,
        /// Pairwise Mann-Whitney tests, Holm-adjusted; present only when the
        /// omnibus test is significant at `alpha`.
        posthoc: Option<Vec<PairwiseTest>>,
    },
    Binary {
        feature: usize,
        name: String,
        per_cluster: Vec<BinaryCell>,
        test: StatResult,
    },
}

impl FeatureProfile {
    pub fn feature(&self) -> usize {
        match self {
            FeatureProfile::Numeric { feature, .. } | FeatureProfile::Binary { feature, .. } => {
                *feature
            }
        }
    }

    pub fn name(&self) -> &str {
        match self {
            FeatureProfile::Numeric { name, .. } | FeatureProfile::Binary { name, .. } => name,
        }
    }

    pub fn test(&self) -> &StatResult {
        match self {
            FeatureProfile::Numeric { test, .. } | FeatureProfile::Binary { test, .. } => test,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusterProfile {
    pub n_clusters: usize,
    pub cluster_sizes: Vec<usize>,
    pub alpha: f64,
    pub features: Vec<FeatureProfile>,
}

/// Profile each selected feature across clusters: median/IQR plus Kruskal-
/// Wallis (with Holm-adjusted pairwise Mann-Whitney follow-up when
/// significant) for numeric features, percent/count plus Pearson chi-squared
/// for binary ones.
pub fn profile_clusters(
    data: &Dataset,
    labels: &[usize],
    features: &[usize],
    alpha: f64,
) -> Result<ClusterProfile> {
    if labels.len() != data.n_rows() {
        return Err(Error::Parameter(format!(
            "{} labels for {} rows",
            labels.len(),
            data.n_rows()
        )));
    }
    let n_clusters = labels.iter().max().map_or(0, |&c| c + 1);
    if n_clusters < 2 {
        return Err(Error::Parameter("need at least 2 clusters".into()));
    }
    let mut cluster_sizes = vec![0usize; n_clusters];
    for &l in labels {
        cluster_sizes[l] += 1;
    }
    if cluster_sizes.contains(&0) {
        return Err(Error::Parameter("empty cluster label".into()));
    }

    let mut profiles = Vec::new();
    for &f in features {
        if f >= data.n_cols() {
            return Err(Error::Parameter(format!("feature {f} out of range")));
        }
        let meta = &data.columns()[f];
        let mut by_cluster: Vec<Vec<f64>> = vec![Vec::new(); n_clusters];
        for (i, &l) in labels.iter().enumerate() {
            by_cluster[l].push(data.value(i, f));
        }
        match meta.kind {
            ColumnKind::Numeric => {
                let per_cluster: Vec<NumericCell> = by_cluster
                    .iter()
                    .map(|vals| NumericCell {
                        median: median(vals),
                        iqr: iqr(vals),
                    })
                    .collect();
                let test = kruskal_wallis(&by_cluster)?;
                let posthoc = if test.p_value < alpha {
                    let mut pairs = Vec::new();
                    let mut raw = Vec::new();
                    for a in 0..n_clusters {
                        for b in (a + 1)..n_clusters {
                            let r = mann_whitney_u(&by_cluster[a], &by_cluster[b])?;
                            pairs.push((a, b));
                            raw.push(r.p_value);
                        }
                    }
                    let adjusted = holm_adjust(&raw)?;
                    Some(
                        pairs
                            .into_iter()
                            .zip(raw.iter().zip(&adjusted))
                            .map(|((a, b), (&p_raw, &p_adjusted))| PairwiseTest {
                                cluster_a: a,
                                cluster_b: b,
                                p_raw,
                                p_adjusted,
                            })
                            .collect(),
                    )
                } else {
                    None
                };
                profiles.push(FeatureProfile::Numeric {
                    feature: f,
                    name: meta.name.clone(),
                    per_cluster,
                    test,
                    posthoc,
                });
            }
            ColumnKind::Binary => {
                let per_cluster: Vec<BinaryCell> = by_cluster
                    .iter()
                    .map(|vals| {
                        let count = vals.iter().filter(|&&v| v == 1.0).count() as u64;
                        BinaryCell {
                            percent: 100.0 * count as f64 / vals.len() as f64,
                            count,
                        }
                    })
                    .collect();
                let table: Vec<Vec<u64>> = per_cluster
                    .iter()
                    .zip(&cluster_sizes)
                    .map(|(cell, &size)| vec![cell.count, size as u64 - cell.count])
                    .collect();
                let test = pearson_chi_squared(&table)?;
                profiles.push(FeatureProfile::Binary {
                    feature: f,
                    name: meta.name.clone(),
                    per_cluster,
                    test,
                });
            }
            ColumnKind::Categorical => {
                return Err(Error::Type(format!(
                    "column `{}` is categorical; profile a finalized dataset",
                    meta.name
                )));
            }
        }
    }
    Ok(ClusterProfile {
        n_clusters,
        cluster_sizes,
        alpha,
        features: profiles,
    })
}
