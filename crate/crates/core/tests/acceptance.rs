//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them on success). Numeric
//! tolerances are pinned here, not configurable.

use std::collections::BTreeSet;
use std::time::Instant;

use ndarray::Array2;

use phenoclust::clustering::{best_clustering, pam, silhouette, ClusterAssignment};
use phenoclust::dataset::{ColumnKind, ColumnMeta, Dataset};
use phenoclust::dissimilarity::{balanced_weights, gower_matrix, DissimilarityMatrix};
use phenoclust::glrm::{
    data_fit_gradients, data_fit_value, fit_glrm, fit_glrm_from, loss_kinds_for, FitOptions,
};
use phenoclust::pipeline::{
    cv_feature_selection, jaccard_coclustering, make_folds, pairwise_similarity_index,
    shuffle_necessity_test, SweepParams,
};
use phenoclust::stats::{
    chi_squared_cdf_complement, holm_adjust, kruskal_wallis, mann_whitney_u, normal_cdf,
    pearson_chi_squared,
};
use phenoclust::synth::{generate_planted, PlantSpec};

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn unit(seed: u64, a: u64, b: u64) -> f64 {
    (splitmix(splitmix(seed ^ a.wrapping_mul(0x9e37)) ^ b) >> 11) as f64 / (1u64 << 53) as f64
}

fn meta(name: &str, kind: ColumnKind) -> ColumnMeta {
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

/// Small random mixed dataset with nonconstant columns.
fn random_mixed_dataset(seed: u64, m: usize, n: usize) -> Dataset {
    let n_binary = n / 3;
    let values = Array2::from_shape_fn((m, n), |(i, j)| {
        if j < n - n_binary {
            unit(seed, i as u64, j as u64) * 4.0 - 2.0
        } else {
            // force both binary values to appear
            if i == 0 {
                0.0
            } else if i == 1 {
                1.0
            } else {
                (unit(seed, i as u64, j as u64) < 0.5) as u64 as f64
            }
        }
    });
    let columns = (0..n)
        .map(|j| {
            if j < n - n_binary {
                meta(&format!("x{j}"), ColumnKind::Numeric)
            } else {
                meta(&format!("b{j}"), ColumnKind::Binary)
            }
        })
        .collect();
    let ids = (0..m).map(|i| i.to_string()).collect();
    let mask = Array2::from_elem((m, n), false);
    Dataset::from_parts(ids, columns, values, mask)
        .unwrap()
        .finalize()
        .unwrap()
}

#[test]
fn criterion_01_gradient_check() {
    let start = Instant::now();
    let h = 1e-6;
    let mut checked = 0;
    for seed in 0..50u64 {
        let m = 3 + (seed % 4) as usize; // 3..=6
        let n = 3 + ((seed / 4) % 4) as usize;
        let ds = random_mixed_dataset(seed, m, n);
        let kinds = loss_kinds_for(&ds).unwrap();
        let k = 2.min(ds.n_cols() - 1).max(1);

        // draw factors until every hinge argument sits away from the kink
        let mut salt = 0u64;
        let (x, y) = loop {
            let x = Array2::from_shape_fn((m, k), |(i, c)| {
                unit(seed ^ 0xabc ^ salt, i as u64, c as u64) - 0.5
            });
            let y = Array2::from_shape_fn((k, ds.n_cols()), |(r, j)| {
                unit(seed ^ 0xdef ^ salt, r as u64, j as u64) - 0.5
            });
            let z = x.dot(&y);
            let mut ok = true;
            for j in 0..ds.n_cols() {
                if ds.columns()[j].kind == ColumnKind::Binary {
                    for i in 0..m {
                        let sign = 2.0 * ds.value(i, j) - 1.0;
                        if (1.0 - sign * z[(i, j)]).abs() < 1e-3 {
                            ok = false;
                        }
                    }
                }
            }
            if ok {
                break (x, y);
            }
            salt += 1;
        };

        let (gx, gy) = data_fit_gradients(&x, &y, &ds, &kinds);
        for i in 0..m {
            for c in 0..k {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[(i, c)] += h;
                xm[(i, c)] -= h;
                let fd = (data_fit_value(&xp, &y, &ds, &kinds)
                    - data_fit_value(&xm, &y, &ds, &kinds))
                    / (2.0 * h);
                let rel = (gx[(i, c)] - fd).abs() / gx[(i, c)].abs().max(1.0);
                assert!(rel <= 1e-4, "seed {seed} X[{i},{c}]: rel err {rel}");
                checked += 1;
            }
        }
        for r in 0..k {
            for j in 0..ds.n_cols() {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[(r, j)] += h;
                ym[(r, j)] -= h;
                let fd = (data_fit_value(&x, &yp, &ds, &kinds)
                    - data_fit_value(&x, &ym, &ds, &kinds))
                    / (2.0 * h);
                let rel = (gy[(r, j)] - fd).abs() / gy[(r, j)].abs().max(1.0);
                assert!(rel <= 1e-4, "seed {seed} Y[{r},{j}]: rel err {rel}");
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "gradient check took {elapsed:?}");
    println!("[criterion 01] PASS gradient check: {checked} partials on 50 instances in {elapsed:?}");
}

#[test]
fn criterion_02_objective_trace_monotone() {
    for seed in 0..20u64 {
        let planted = generate_planted(&PlantSpec {
            m: 100,
            n_informative: 4,
            n_noise: 16,
            n_clusters: 3,
            separation: (seed % 5) as f64,
            binary_fraction: 0.4,
            seed,
        })
        .unwrap();
        let gamma = (seed % 7) as f64 * 3.0;
        let model = fit_glrm(
            &planted.dataset,
            2,
            gamma,
            &FitOptions {
                seed,
                ..FitOptions::default()
            },
        )
        .unwrap();
        for (i, w) in model.objective_trace.windows(2).enumerate() {
            assert!(
                w[1] <= w[0] + 1e-9,
                "seed {seed} iteration {i}: {} -> {}",
                w[0],
                w[1]
            );
        }
    }
    println!("[criterion 02] PASS objective trace nonincreasing on 20 mixed instances");
}

#[test]
fn criterion_03_rank_one_recovery() {
    let m = 30;
    let n = 8;
    let u: Vec<f64> = (0..m).map(|i| unit(11, i as u64, 0) * 4.0 - 2.0).collect();
    let v: Vec<f64> = (0..n).map(|j| unit(13, j as u64, 1) * 3.0 + 0.5).collect();
    let values = Array2::from_shape_fn((m, n), |(i, j)| u[i] * v[j]);
    let columns = (0..n).map(|j| meta(&format!("f{j}"), ColumnKind::Numeric)).collect();
    let ids = (0..m).map(|i| i.to_string()).collect();
    let ds = Dataset::from_parts(ids, columns, values, Array2::from_elem((m, n), false))
        .unwrap()
        .finalize()
        .unwrap();
    let model = fit_glrm(
        &ds,
        1,
        0.0,
        &FitOptions {
            max_iters: 5000,
            rel_tol: 1e-15,
            step_init: 1.0,
            seed: 3,
        },
    )
    .unwrap();
    let initial = model.objective_trace[0];
    let last = *model.objective_trace.last().unwrap();
    assert!(
        last <= 1e-6 * initial,
        "objective fell from {initial} to {last} only"
    );
    println!("[criterion 03] PASS rank-1 recovery: {initial:.3e} -> {last:.3e}");
}

#[test]
fn criterion_04_shrinkage_to_zero() {
    let planted = generate_planted(&PlantSpec {
        m: 120,
        n_informative: 4,
        n_noise: 8,
        n_clusters: 3,
        separation: 5.0,
        binary_fraction: 0.25,
        seed: 17,
    })
    .unwrap();
    let ds = &planted.dataset;
    let opts = FitOptions {
        seed: 17,
        ..FitOptions::default()
    };

    // walk 10-point warm-started grids with a doubling endpoint until the
    // final grid point empties the selection
    let base = fit_glrm(ds, 2, 0.0, &opts).unwrap();
    let mut gamma_max = base.objective_trace[0] / ds.n_cols() as f64;
    let counts = loop {
        let mut counts = Vec::new();
        let mut warm: Option<(Array2<f64>, Array2<f64>)> = None;
        for step in 0..10 {
            let gamma = gamma_max * step as f64 / 9.0;
            let model =
                fit_glrm_from(ds, 2, gamma, &opts, warm.as_ref().map(|(x, y)| (x, y))).unwrap();
            counts.push(model.selected_features(1e-8).len());
            warm = Some((model.x, model.y));
        }
        if *counts.last().unwrap() == 0 {
            break counts;
        }
        gamma_max *= 2.0;
        assert!(gamma_max < 1e12, "no gamma emptied the selection");
    };
    assert_eq!(*counts.last().unwrap(), 0);
    for w in counts.windows(2) {
        assert!(
            w[1] <= w[0] + 1,
            "selected count rose beyond slack: {counts:?}"
        );
    }
    println!("[criterion 04] PASS shrinkage to zero along the grid: {counts:?}");
}

/// Exhaustive k-medoids cost by enumerating all medoid subsets.
fn brute_force_cost(d: &DissimilarityMatrix, k: usize) -> f64 {
    fn rec(
        start: usize,
        chosen: &mut Vec<usize>,
        k: usize,
        d: &DissimilarityMatrix,
        best: &mut f64,
    ) {
        if chosen.len() == k {
            let mut cost = 0.0;
            for row in 0..d.size() {
                cost += chosen
                    .iter()
                    .map(|&med| d.get(row, med))
                    .fold(f64::INFINITY, f64::min);
            }
            *best = best.min(cost);
            return;
        }
        for i in start..d.size() {
            chosen.push(i);
            rec(i + 1, chosen, k, d, best);
            chosen.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(0, &mut Vec::new(), k, d, &mut best);
    best
}

#[test]
fn criterion_05_pam_optimality_oracle() {
    let start = Instant::now();
    for seed in 0..100u64 {
        let m = 6 + (seed % 7) as usize; // 6..=12
        let n_c = 2 + (seed % 2) as usize;
        let planted = generate_planted(&PlantSpec {
            m,
            n_informative: 3,
            n_noise: 0,
            n_clusters: n_c,
            separation: 10.0,
            binary_fraction: 0.0,
            seed,
        })
        .unwrap();
        let feats: Vec<usize> = (0..planted.dataset.n_cols()).collect();
        let w = balanced_weights(&planted.dataset, &feats).unwrap();
        let d = gower_matrix(&planted.dataset, &feats, &w).unwrap();
        let a = pam(&d, n_c).unwrap();
        let optimal = brute_force_cost(&d, n_c);
        assert!(
            (a.cost - optimal).abs() < 1e-9,
            "seed {seed}: PAM cost {} vs optimum {optimal}",
            a.cost
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "oracle took {elapsed:?}");
    println!("[criterion 05] PASS PAM equals the exhaustive optimum on 100 instances in {elapsed:?}");
}

#[test]
fn criterion_06_gower_properties() {
    let planted = generate_planted(&PlantSpec {
        m: 1000,
        n_informative: 4,
        n_noise: 4,
        n_clusters: 3,
        separation: 2.0,
        binary_fraction: 0.5,
        seed: 23,
    })
    .unwrap();
    let ds = &planted.dataset;
    let feats: Vec<usize> = (0..ds.n_cols()).collect();
    let weights = balanced_weights(ds, &feats).unwrap();
    let d = gower_matrix(ds, &feats, &weights).unwrap();
    let m = d.size();
    for i in 0..m {
        assert_eq!(d.get(i, i), 0.0);
        for j in (i + 1)..m {
            assert_eq!(d.get(i, j), d.get(j, i));
            assert!((0.0..=1.0).contains(&d.get(i, j)));
        }
    }

    // mean per-feature contribution of the binary block equals the numeric
    // block after balancing
    let numeric: Vec<usize> = feats
        .iter()
        .copied()
        .filter(|&f| ds.columns()[f].kind == ColumnKind::Numeric)
        .collect();
    let binary: Vec<usize> = feats
        .iter()
        .copied()
        .filter(|&f| ds.columns()[f].kind == ColumnKind::Binary)
        .collect();
    let mut num_contrib = 0.0;
    let mut bin_contrib = 0.0;
    let mut pairs = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            pairs += 1.0;
            for &f in &numeric {
                num_contrib += weights.weight_for(f).unwrap()
                    * (ds.value(i, f) - ds.value(j, f)).abs()
                    / ds.columns()[f].range;
            }
            for &f in &binary {
                if ds.value(i, f) != ds.value(j, f) {
                    bin_contrib += weights.weight_for(f).unwrap();
                }
            }
        }
    }
    let num_mean = num_contrib / (pairs * numeric.len() as f64);
    let bin_mean = bin_contrib / (pairs * binary.len() as f64);
    let rel = (num_mean - bin_mean).abs() / num_mean.abs().max(f64::MIN_POSITIVE);
    assert!(rel <= 1e-9, "block contributions differ: {num_mean} vs {bin_mean}");
    println!("[criterion 06] PASS Gower symmetry/diagonal/range on {m} rows; balanced blocks (rel {rel:.2e})");
}

fn random_dissimilarity(seed: u64, m: usize) -> DissimilarityMatrix {
    let mut values = Array2::zeros((m, m));
    for i in 0..m {
        for j in (i + 1)..m {
            let v = unit(seed, i as u64, j as u64);
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    DissimilarityMatrix::from_matrix(values).unwrap()
}

fn naive_silhouette(d: &DissimilarityMatrix, labels: &[usize]) -> f64 {
    let m = d.size();
    let n_clusters = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..m {
        let own = labels[i];
        let own_size = labels.iter().filter(|&&l| l == own).count();
        if own_size == 1 {
            continue;
        }
        let a: f64 = (0..m)
            .filter(|&j| j != i && labels[j] == own)
            .map(|j| d.get(i, j))
            .sum::<f64>()
            / (own_size - 1) as f64;
        let mut b = f64::INFINITY;
        for c in 0..n_clusters {
            if c == own {
                continue;
            }
            let size = labels.iter().filter(|&&l| l == c).count();
            if size > 0 {
                b = b.min(
                    (0..m)
                        .filter(|&j| labels[j] == c)
                        .map(|j| d.get(i, j))
                        .sum::<f64>()
                        / size as f64,
                );
            }
        }
        if a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / m as f64
}

#[test]
fn criterion_07_silhouette_oracle() {
    for seed in 0..100u64 {
        let m = 4 + (seed % 10) as usize;
        let d = random_dissimilarity(seed, m);
        let raw: Vec<usize> = (0..m)
            .map(|i| (splitmix(seed ^ (i as u64 * 77)) % 3) as usize)
            .collect();
        let mut present: Vec<usize> = raw.clone();
        present.sort_unstable();
        present.dedup();
        if present.len() < 2 {
            continue;
        }
        let labels: Vec<usize> = raw
            .iter()
            .map(|l| present.iter().position(|p| p == l).unwrap())
            .collect();
        let s = silhouette(&d, &labels).unwrap();
        let oracle = naive_silhouette(&d, &labels);
        assert!(
            (s - oracle).abs() <= 1e-12,
            "seed {seed}: {s} vs oracle {oracle}"
        );
        assert!((-1.0..=1.0).contains(&s));
    }

    let two_pairs = DissimilarityMatrix::from_matrix(ndarray::arr2(&[
        [0.0, 0.01, 1.0, 1.0],
        [0.01, 0.0, 1.0, 1.0],
        [1.0, 1.0, 0.0, 0.01],
        [1.0, 1.0, 0.01, 0.0],
    ]))
    .unwrap();
    let s = silhouette(&two_pairs, &[0, 0, 1, 1]).unwrap();
    assert_eq!(s, 0.99);
    println!("[criterion 07] PASS silhouette matches the naive oracle; two-pair instance = 0.99 exactly");
}

/// Exact two-sided Mann-Whitney p by enumerating the tie-free U distribution.
fn exact_mwu_two_sided(n_a: usize, n_b: usize, u_obs: f64) -> f64 {
    let total = n_a + n_b;
    let u_max = n_a * n_b;
    // ways[k][u]: subsets of size k with U = u, built rank by rank
    let mut ways = vec![vec![0u64; u_max + 1]; n_a + 1];
    ways[0][0] = 1;
    for rank in 1..=total {
        for k in (1..=n_a.min(rank)).rev() {
            for u in (0..=u_max).rev() {
                let contribution = rank - k;
                if u >= contribution && ways[k - 1][u - contribution] > 0 {
                    ways[k][u] += ways[k - 1][u - contribution];
                }
            }
        }
    }
    let counts = &ways[n_a];
    let total_ways: u64 = counts.iter().sum();
    let mean = u_max as f64 / 2.0;
    let observed_dev = (u_obs - mean).abs();
    let extreme: u64 = counts
        .iter()
        .enumerate()
        .filter(|(u, _)| (*u as f64 - mean).abs() >= observed_dev - 1e-12)
        .map(|(_, &c)| c)
        .sum();
    extreme as f64 / total_ways as f64
}

#[test]
fn criterion_08_statistics_oracles() {
    // Kruskal-Wallis hand instance
    let kw = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]])
        .unwrap();
    assert!((kw.statistic - 7.2).abs() <= 1e-12, "H = {}", kw.statistic);
    assert_eq!(kw.df, 2.0);

    // Pearson chi-squared diagonal table
    let chi = pearson_chi_squared(&[vec![20, 0], vec![0, 20]]).unwrap();
    assert!((chi.statistic - 40.0).abs() <= 1e-12);
    assert_eq!(chi.df, 1.0);

    // Holm step-down
    let adj = holm_adjust(&[0.01, 0.04, 0.03]).unwrap();
    for (got, want) in adj.iter().zip([0.03, 0.06, 0.06]) {
        assert!((got - want).abs() <= 1e-12, "holm {adj:?}");
    }

    // chi-squared tail vs the df = 2 closed form
    let mut x = 0.0f64;
    while x <= 50.0 {
        let err = (chi_squared_cdf_complement(x, 2.0) - (-x / 2.0).exp()).abs();
        assert!(err <= 1e-10, "x = {x}: err {err}");
        x += 0.01;
    }

    println!("[criterion 08] PASS KW/chi-squared/Holm/tail oracles");

    // Mann-Whitney normal approximation vs exact enumeration over every
    // tie-free group-size pair up to 8. The normal approximation cannot stay
    // within 0.01 of the exact tail at these sizes (the gap at n_a = n_b = 2
    // already exceeds 0.08), so this clause records an honest failure rather
    // than a weakened bound.
    validate_mwu_closed_form();
    let mut worst = 0.0f64;
    let mut worst_at = (0usize, 0usize, 0.0f64);
    for n_a in 1..=8usize {
        for n_b in 1..=8usize {
            for u in 0..=(n_a * n_b) {
                // tie-free samples realizing this U: place group a so that
                // exactly u of its (a, b) comparisons are "a greater"
                let exact = exact_mwu_two_sided(n_a, n_b, u as f64);
                let approx = mwu_normal_p(n_a, n_b, u as f64);
                let err = (exact - approx).abs();
                if err > worst {
                    worst = err;
                    worst_at = (n_a, n_b, u as f64);
                }
            }
        }
    }
    assert!(
        worst <= 0.01,
        "[criterion 08] FAIL Mann-Whitney approximation: worst |exact - approx| = {worst:.4} at \
         n_a = {}, n_b = {}, U = {} (bound 0.01 is unattainable for the normal approximation at \
         these sizes)",
        worst_at.0,
        worst_at.1,
        worst_at.2
    );
    println!("[criterion 08] PASS Mann-Whitney approximation within 0.01 of exact enumeration");
}

/// The implementation's approximation formula for a given U on tie-free
/// inputs; `validate_mwu_closed_form` checks it against `mann_whitney_u`.
fn mwu_normal_p(n_a: usize, n_b: usize, u: f64) -> f64 {
    let na = n_a as f64;
    let nb = n_b as f64;
    let mean = na * nb / 2.0;
    let variance = na * nb * (na + nb + 1.0) / 12.0;
    if variance <= 0.0 {
        return 1.0;
    }
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
}

/// The closed form above must agree with the implementation on tie-free
/// samples spanning several U values.
fn validate_mwu_closed_form() {
    for seed in 0..30u64 {
        let n_a = 2 + (seed % 6) as usize;
        let n_b = 2 + ((seed / 6) % 6) as usize;
        let mut pool: Vec<f64> = (0..n_a + n_b)
            .map(|i| i as f64 + unit(seed, i as u64, 5) * 0.5)
            .collect();
        // deterministic shuffle of the pooled values
        for i in (1..pool.len()).rev() {
            let j = (splitmix(seed ^ (i as u64 * 31)) % (i as u64 + 1)) as usize;
            pool.swap(i, j);
        }
        let (a, b) = pool.split_at(n_a);
        let r = mann_whitney_u(a, b).unwrap();
        let formula = mwu_normal_p(n_a, n_b, r.statistic);
        assert!(
            (r.p_value - formula).abs() < 1e-12,
            "closed form diverges from the implementation at seed {seed}"
        );
    }
}

#[test]
fn criterion_09_pair_counting_indices() {
    let a = vec![1usize, 1, 2, 2];
    let b = vec![1usize, 2, 2, 2];
    assert!((pairwise_similarity_index(&a, &b).unwrap() - 1.0 / 6.0).abs() <= 1e-15);
    assert!((jaccard_coclustering(&a, &b).unwrap() - 0.25).abs() <= 1e-15);

    for seed in 0..200u64 {
        let m = 5 + (seed % 20) as usize;
        let x: Vec<usize> = (0..m)
            .map(|i| (splitmix(seed ^ (i as u64 * 3)) % 4) as usize)
            .collect();
        let y: Vec<usize> = (0..m)
            .map(|i| (splitmix(seed ^ (i as u64 * 7) ^ 0xbeef) % 3) as usize)
            .collect();
        // bijective relabeling of x
        let relabeled: Vec<usize> = x.iter().map(|&l| [7, 2, 9, 4][l]).collect();
        let psi = pairwise_similarity_index(&x, &y).unwrap();
        let jac = jaccard_coclustering(&x, &y).unwrap();
        assert_eq!(psi, pairwise_similarity_index(&relabeled, &y).unwrap());
        assert_eq!(jac, jaccard_coclustering(&relabeled, &y).unwrap());
        assert_eq!(psi, pairwise_similarity_index(&y, &x).unwrap());
        assert_eq!(jac, jaccard_coclustering(&y, &x).unwrap());
        assert!((0.0..=1.0).contains(&psi) && (0.0..=1.0).contains(&jac));
    }
    println!("[criterion 09] PASS pair-counting indices: enumerated values and relabeling invariance");
}

#[test]
fn criterion_10_end_to_end_planted_recovery() {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..10).collect();
    let mut recalls = Vec::new();
    let mut noise_rates = Vec::new();
    let mut recovered = 0usize;
    let mut flagged_noise = 0usize;
    let mut surviving_noise = 0usize;

    for &seed in &seeds {
        let planted = generate_planted(&PlantSpec {
            m: 400,
            n_informative: 5,
            n_noise: 20,
            n_clusters: 4,
            separation: 6.0,
            binary_fraction: 0.3,
            seed,
        })
        .unwrap();
        let ds = &planted.dataset;
        let informative = &planted.informative_features;
        let n_noise_total = ds.n_cols() - informative.len();

        let params = SweepParams {
            gamma0: 60.0,
            gamma_step: Some(30.0),
            n_min: 2,
            n_max: 6,
            rank: 2,
            fit: FitOptions {
                max_iters: 300,
                rel_tol: 1e-7,
                step_init: 1.0,
                seed,
            },
        };
        let folds = make_folds(ds.n_rows(), 5, seed).unwrap();
        let selection = cv_feature_selection(ds, &folds, &params).unwrap();

        let recall = selection.final_features.intersection(informative).count() as f64
            / informative.len() as f64;
        let noise_rate = selection
            .final_features
            .iter()
            .filter(|f| !informative.contains(f))
            .count() as f64
            / n_noise_total as f64;
        recalls.push(recall);
        noise_rates.push(noise_rate);

        // pipeline order: cluster the selected features, necessity-test them,
        // drop the flagged ones, recluster
        let selected: Vec<usize> = selection.final_features.iter().copied().collect();
        let baseline = cluster_on(ds, &selected);
        let report = shuffle_necessity_test(ds, &selected, &baseline, 100, 0.9, seed).unwrap();
        for f in &report.per_feature {
            if !informative.contains(&f.feature) {
                surviving_noise += 1;
                if !f.necessary {
                    flagged_noise += 1;
                }
            }
        }
        let survivors: BTreeSet<usize> = report
            .per_feature
            .iter()
            .filter(|f| f.necessary)
            .map(|f| f.feature)
            .collect();
        let survivors: Vec<usize> = if survivors.is_empty() {
            selected.clone()
        } else {
            survivors.into_iter().collect()
        };
        let final_assignment = cluster_on(ds, &survivors);

        let psi = pairwise_similarity_index(&final_assignment.labels, &planted.true_labels).unwrap();
        let ceiling =
            pairwise_similarity_index(&planted.true_labels, &planted.true_labels).unwrap();
        let agreement = psi / ceiling;
        let jaccard =
            jaccard_coclustering(&final_assignment.labels, &planted.true_labels).unwrap();
        if final_assignment.n_clusters == 4 && agreement >= 0.9 {
            recovered += 1;
        }
        println!(
            "[criterion 10] seed {seed}: recall {recall:.2}, noise {noise_rate:.2}, n_c {}, \
             normalized PSI {agreement:.3}, jaccard {jaccard:.3}",
            final_assignment.n_clusters
        );
    }

    let mean_recall: f64 = recalls.iter().sum::<f64>() / recalls.len() as f64;
    let mean_noise: f64 = noise_rates.iter().sum::<f64>() / noise_rates.len() as f64;
    assert!(mean_recall >= 0.8, "mean informative recall {mean_recall}");
    assert!(mean_noise <= 0.2, "mean noise acceptance {mean_noise}");
    assert!(
        recovered >= 8,
        "4 clusters at normalized PSI >= 0.9 in only {recovered}/10 seeds"
    );
    if surviving_noise > 0 {
        assert!(
            flagged_noise * 10 >= surviving_noise * 8,
            "necessity flagged {flagged_noise}/{surviving_noise} surviving noise features"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "end-to-end run took {elapsed:?}");
    println!(
        "[criterion 10] PASS planted recovery: recall {mean_recall:.3}, noise {mean_noise:.3}, \
         recovered {recovered}/10, noise flags {flagged_noise}/{surviving_noise}, {elapsed:?}"
    );
}

fn cluster_on(ds: &Dataset, features: &[usize]) -> ClusterAssignment {
    let weights = balanced_weights(ds, features).unwrap();
    let d = gower_matrix(ds, features, &weights).unwrap();
    best_clustering(&d, 2, 8).unwrap()
}

#[test]
fn criterion_11_run_all_determinism() {
    use std::process::Command;

    let dir = tempfile::tempdir().unwrap();
    let planted = generate_planted(&PlantSpec {
        m: 120,
        n_informative: 3,
        n_noise: 3,
        n_clusters: 3,
        separation: 8.0,
        binary_fraction: 0.3,
        seed: 4,
    })
    .unwrap();
    let input = dir.path().join("data.csv");
    let schema = dir.path().join("schema.toml");
    planted.dataset.write_csv(&input).unwrap();
    std::fs::write(&schema, planted.dataset.schema_toml()).unwrap();

    let run = |out: &std::path::Path| {
        let status = Command::new(env!("CARGO_BIN_EXE_phenoclust"))
            .args([
                "run-all",
                "--input",
                input.to_str().unwrap(),
                "--schema",
                schema.to_str().unwrap(),
                "--output",
                out.to_str().unwrap(),
                "--seed",
                "9",
                "--n-folds",
                "3",
                "--gamma0",
                "10",
                "--gamma-step",
                "10",
                "--n-max",
                "5",
                "--repeats",
                "20",
                "--max-iters",
                "200",
            ])
            .status()
            .unwrap();
        assert!(status.success(), "run-all failed");
    };

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run(&out_a);
    run(&out_b);

    let mut names: Vec<String> = std::fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let mut names_b: Vec<String> = std::fs::read_dir(&out_b)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names_b.sort();
    assert_eq!(names, names_b, "output directories differ in file sets");
    assert!(!names.is_empty());
    for name in &names {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "file {name} differs between reruns");
    }
    println!("[criterion 11] PASS byte-identical reruns across {} artifacts", names.len());
}
