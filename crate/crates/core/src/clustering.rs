//! Partitioning around medoids on a precomputed dissimilarity matrix, with
//! silhouette scoring and cluster-count selection.
//!
//! The PAM implementation is the classic deterministic BUILD + SWAP variant:
//! BUILD greedily seeds medoids to minimize total cost, SWAP repeatedly
//! applies the single best cost-reducing (medoid, non-medoid) exchange until
//! none exists. All ties break toward the lowest index.

use crate::dissimilarity::DissimilarityMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ClusterAssignment {
    /// Cluster index per row.
    pub labels: Vec<usize>,
    /// Medoid row index per cluster; sorted ascending, so cluster `c` is the
    /// cluster of `medoids[c]`.
    pub medoids: Vec<usize>,
    pub n_clusters: usize,
    pub silhouette: f64,
    /// Sum of dissimilarities from each row to its assigned medoid.
    pub cost: f64,
}

/// Nearest and second-nearest medoid bookkeeping for one row.
#[derive(Clone, Copy)]
struct Nearest {
    medoid_pos: usize,
    dist: f64,
    second_dist: f64,
}

fn recompute_nearest(d: &DissimilarityMatrix, medoids: &[usize], out: &mut Vec<Nearest>) {
    let m = d.size();
    out.clear();
    for row in 0..m {
        let slice = d.row_slice(row);
        let mut best_pos = 0;
        let mut best = f64::INFINITY;
        let mut second = f64::INFINITY;
        for (pos, &med) in medoids.iter().enumerate() {
            let dist = slice[med];
            if dist < best {
                second = best;
                best = dist;
                best_pos = pos;
            } else if dist < second {
                second = dist;
            }
        }
        out.push(Nearest {
            medoid_pos: best_pos,
            dist: best,
            second_dist: second,
        });
    }
}

/// Classic PAM. Deterministic: BUILD and SWAP break ties by lowest index and
/// SWAP applies the best strictly improving exchange each round.
#[allow(clippy::needless_range_loop)] // candidate scans index several arrays in lockstep
pub fn pam(d: &DissimilarityMatrix, n_clusters: usize) -> Result<ClusterAssignment> {
    let m = d.size();
    if n_clusters < 2 {
        return Err(Error::Parameter(format!(
            "n_clusters must be at least 2, got {n_clusters}"
        )));
    }
    if n_clusters > m {
        return Err(Error::Parameter(format!(
            "n_clusters = {n_clusters} exceeds the {m} rows"
        )));
    }

    // BUILD: first medoid minimizes total dissimilarity, later ones greedily
    // minimize the resulting assignment cost.
    let mut medoids: Vec<usize> = Vec::with_capacity(n_clusters);
    let mut is_medoid = vec![false; m];
    {
        let mut best = usize::MAX;
        let mut best_cost = f64::INFINITY;
        for cand in 0..m {
            let cost: f64 = d.row_slice(cand).iter().sum();
            if cost < best_cost {
                best_cost = cost;
                best = cand;
            }
        }
        medoids.push(best);
        is_medoid[best] = true;
    }
    let mut near: Vec<f64> = (0..m).map(|row| d.get(row, medoids[0])).collect();
    while medoids.len() < n_clusters {
        let mut best = usize::MAX;
        let mut best_cost = f64::INFINITY;
        for cand in 0..m {
            if is_medoid[cand] {
                continue;
            }
            let slice = d.row_slice(cand);
            let mut cost = 0.0;
            for (row, &n) in near.iter().enumerate() {
                cost += n.min(slice[row]);
            }
            if cost < best_cost {
                best_cost = cost;
                best = cand;
            }
        }
        let slice = d.row_slice(best);
        for (row, n) in near.iter_mut().enumerate() {
            if slice[row] < *n {
                *n = slice[row];
            }
        }
        medoids.push(best);
        is_medoid[best] = true;
    }

    // SWAP: best-improvement local search on (medoid, candidate) exchanges.
    let mut nearest: Vec<Nearest> = Vec::with_capacity(m);
    recompute_nearest(d, &medoids, &mut nearest);
    loop {
        let mut best_delta = 0.0;
        let mut best_swap: Option<(usize, usize)> = None;
        for pos in 0..medoids.len() {
            for cand in 0..m {
                if is_medoid[cand] {
                    continue;
                }
                let slice = d.row_slice(cand);
                let mut delta = 0.0;
                for (row, nr) in nearest.iter().enumerate() {
                    let d_cand = slice[row];
                    let new_dist = if nr.medoid_pos == pos {
                        d_cand.min(nr.second_dist)
                    } else {
                        d_cand.min(nr.dist)
                    };
                    delta += new_dist - nr.dist;
                }
                if delta < best_delta {
                    best_delta = delta;
                    best_swap = Some((pos, cand));
                }
            }
        }
        match best_swap {
            Some((pos, cand)) => {
                is_medoid[medoids[pos]] = false;
                is_medoid[cand] = true;
                medoids[pos] = cand;
                recompute_nearest(d, &medoids, &mut nearest);
            }
            None => break,
        }
    }

    medoids.sort_unstable();
    let mut labels = vec![0usize; m];
    let mut cost = 0.0;
    for row in 0..m {
        let slice = d.row_slice(row);
        // medoids label themselves; other rows take the closest medoid,
        // ties to the lowest medoid row index
        let cluster = match medoids.iter().position(|&med| med == row) {
            Some(pos) => pos,
            None => {
                let mut best_pos = 0;
                let mut best = f64::INFINITY;
                for (pos, &med) in medoids.iter().enumerate() {
                    if slice[med] < best {
                        best = slice[med];
                        best_pos = pos;
                    }
                }
                best_pos
            }
        };
        labels[row] = cluster;
        cost += slice[medoids[cluster]];
    }

    let silhouette = silhouette(d, &labels)?;
    Ok(ClusterAssignment {
        labels,
        medoids,
        n_clusters,
        silhouette,
        cost,
    })
}

/// Mean silhouette: per row, `(b - a) / max(a, b)` where `a` is the mean
/// dissimilarity to the row's own cluster (excluding itself) and `b` the
/// smallest mean dissimilarity to another cluster. Rows in singleton
/// clusters score 0.
pub fn silhouette(d: &DissimilarityMatrix, labels: &[usize]) -> Result<f64> {
    let m = d.size();
    if labels.len() != m {
        return Err(Error::Parameter(format!(
            "{} labels for {m} rows",
            labels.len()
        )));
    }
    let n_clusters = labels.iter().max().map_or(0, |&c| c + 1);
    if n_clusters < 2 {
        return Err(Error::Parameter(
            "silhouette needs at least 2 clusters".into(),
        ));
    }
    let mut sizes = vec![0usize; n_clusters];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.contains(&0) {
        return Err(Error::Parameter("empty cluster label".into()));
    }

    let mut total = 0.0;
    let mut sums = vec![0.0; n_clusters];
    for row in 0..m {
        if sizes[labels[row]] == 1 {
            continue; // singleton convention: s = 0
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        let slice = d.row_slice(row);
        for (other, &l) in labels.iter().enumerate() {
            sums[l] += slice[other];
        }
        let own = labels[row];
        let a = sums[own] / (sizes[own] - 1) as f64;
        let mut b = f64::INFINITY;
        for c in 0..n_clusters {
            if c != own {
                b = b.min(sums[c] / sizes[c] as f64);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / m as f64)
}

/// Run PAM for every cluster count in `n_min..=n_max` and keep the
/// assignment with the highest silhouette; ties go to the smallest count.
pub fn best_clustering(
    d: &DissimilarityMatrix,
    n_min: usize,
    n_max: usize,
) -> Result<ClusterAssignment> {
    if n_min < 2 || n_min > n_max || n_max > d.size() {
        return Err(Error::Parameter(format!(
            "cluster range [{n_min}, {n_max}] invalid for {} rows",
            d.size()
        )));
    }
    let mut best: Option<ClusterAssignment> = None;
    for n_c in n_min..=n_max {
        let assignment = pam(d, n_c)?;
        let better = match &best {
            None => true,
            Some(b) => assignment.silhouette > b.silhouette,
        };
        if better {
            best = Some(assignment);
        }
    }
    Ok(best.expect("nonempty range"))
}
