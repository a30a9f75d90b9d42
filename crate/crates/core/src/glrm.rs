//! Rank-k generalized low-rank model with per-column losses and an L1
//! column penalty on the feature factor.
//!
//! The model approximates the data matrix `A` by `X * Y` (`X` is m-by-k,
//! `Y` is k-by-n). Numeric columns pay a quadratic loss scaled by the
//! column's inverse variance; binary columns pay a hinge loss on values
//! recoded to -1/+1. The penalty `gamma * sum_j ||Y_j||_1` drives
//! uninformative columns of `Y` to exact zero, and the surviving column
//! indices are the selected features.
//!
//! Fitting alternates a gradient step on `X` with a proximal (soft
//! threshold) gradient step on `Y`, each guarded by a backtracking line
//! search that halves the step until the objective does not increase, so
//! the recorded objective trace never rises.

use ndarray::Array2;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Quadratic,
    Hinge,
}

/// Fitted low-rank model.
#[derive(Debug, Clone)]
pub struct GlrmModel {
    /// Row representations, m-by-k.
    pub x: Array2<f64>,
    /// Feature factor, k-by-n; zero columns mark unselected features.
    pub y: Array2<f64>,
    pub k: usize,
    pub gamma: f64,
    pub loss_kinds: Vec<LossKind>,
    /// Objective value at initialization and after every iteration;
    /// nonincreasing by line-search construction.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iters: usize,
    /// Relative objective decrease below which the fit stops.
    pub rel_tol: f64,
    /// Initial step size for both factor updates.
    pub step_init: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 500,
            rel_tol: 1e-8,
            step_init: 1.0,
            seed: 0,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Parameter("max_iters must be at least 1".into()));
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return Err(Error::Parameter("rel_tol must be positive".into()));
        }
        if self.step_init.is_nan() || self.step_init <= 0.0 {
            return Err(Error::Parameter("step_init must be positive".into()));
        }
        Ok(())
    }
}

/// Loss assignment for a dataset's columns: quadratic for numeric, hinge for
/// binary.
pub fn loss_kinds_for(data: &Dataset) -> Result<Vec<LossKind>> {
    data.columns()
        .iter()
        .map(|c| match c.kind {
            ColumnKind::Numeric => Ok(LossKind::Quadratic),
            ColumnKind::Binary => Ok(LossKind::Hinge),
            ColumnKind::Categorical => Err(Error::Type(format!(
                "categorical column `{}` has no loss; dummy code first",
                c.name
            ))),
        })
        .collect()
}

/// Elementwise soft threshold: `sign(v) * max(|v| - threshold, 0)`.
pub fn prox_l1(v: &[f64], threshold: f64) -> Vec<f64> {
    assert!(threshold >= 0.0, "threshold must be nonnegative");
    v.iter().map(|&x| soft_threshold(x, threshold)).collect()
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Full objective: inverse-variance quadratic loss on numeric columns, hinge
/// loss on -1/+1 recoded binary columns, plus `gamma * ||Y||_1`.
pub fn objective_value(
    x: &Array2<f64>,
    y: &Array2<f64>,
    data: &Dataset,
    gamma: f64,
    loss_kinds: &[LossKind],
) -> Result<f64> {
    let (m, n) = (data.n_rows(), data.n_cols());
    if x.nrows() != m || x.ncols() != y.nrows() || y.ncols() != n {
        return Err(Error::Shape(format!(
            "X is {}x{}, Y is {}x{}, data is {m}x{n}",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    if loss_kinds.len() != n {
        return Err(Error::Shape("one loss kind per column required".into()));
    }
    let z = x.dot(y);
    Ok(data_fit(&z, data, loss_kinds) + gamma * l1_norm(y))
}

impl GlrmModel {
    /// Objective of this model on `data` (shape-checked).
    pub fn objective(&self, data: &Dataset) -> Result<f64> {
        objective_value(&self.x, &self.y, data, self.gamma, &self.loss_kinds)
    }

    /// Indices of columns with at least one entry of `Y` above `tol` in
    /// absolute value. Soft thresholding produces exact zeros, so the
    /// default `1e-8` is a safety margin rather than a tuning knob.
    pub fn selected_features(&self, tol: f64) -> std::collections::BTreeSet<usize> {
        let mut out = std::collections::BTreeSet::new();
        for j in 0..self.y.ncols() {
            if self.y.column(j).iter().any(|v| v.abs() > tol) {
                out.insert(j);
            }
        }
        out
    }

    /// Structured text export; floats round-trip exactly.
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            k: self.k,
            gamma: self.gamma,
            loss_kinds: self.loss_kinds.clone(),
            x_rows: self.x.nrows(),
            x: self.x.iter().copied().collect(),
            y_rows: self.y.nrows(),
            y: self.y.iter().copied().collect(),
            objective_trace: self.objective_trace.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        if doc.x_rows == 0 || doc.y_rows == 0 {
            return Err(Error::Shape("empty factor in model document".into()));
        }
        if !doc.x.len().is_multiple_of(doc.x_rows) || !doc.y.len().is_multiple_of(doc.y_rows) {
            return Err(Error::Shape("factor length not divisible by rows".into()));
        }
        let x = Array2::from_shape_vec((doc.x_rows, doc.x.len() / doc.x_rows), doc.x)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let y = Array2::from_shape_vec((doc.y_rows, doc.y.len() / doc.y_rows), doc.y)
            .map_err(|e| Error::Shape(e.to_string()))?;
        if x.ncols() != doc.k || y.nrows() != doc.k {
            return Err(Error::Shape("rank does not match factor shapes".into()));
        }
        Ok(GlrmModel {
            x,
            y,
            k: doc.k,
            gamma: doc.gamma,
            loss_kinds: doc.loss_kinds,
            objective_trace: doc.objective_trace,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    k: usize,
    gamma: f64,
    loss_kinds: Vec<LossKind>,
    x_rows: usize,
    x: Vec<f64>,
    y_rows: usize,
    y: Vec<f64>,
    objective_trace: Vec<f64>,
}

fn l1_norm(y: &Array2<f64>) -> f64 {
    y.iter().map(|v| v.abs()).sum()
}

fn data_fit(z: &Array2<f64>, data: &Dataset, loss_kinds: &[LossKind]) -> f64 {
    let (m, n) = z.dim();
    let values = data.values();
    let mut total = 0.0;
    for j in 0..n {
        match loss_kinds[j] {
            LossKind::Quadratic => {
                let inv_var = 1.0 / data.columns()[j].variance;
                let mut s = 0.0;
                for i in 0..m {
                    let r = values[(i, j)] - z[(i, j)];
                    s += r * r;
                }
                total += inv_var * s;
            }
            LossKind::Hinge => {
                let mut s = 0.0;
                for i in 0..m {
                    let sign = 2.0 * values[(i, j)] - 1.0; // {0,1} -> {-1,+1}
                    let margin = 1.0 - sign * z[(i, j)];
                    if margin > 0.0 {
                        s += margin;
                    }
                }
                total += s;
            }
        }
    }
    total
}

/// Gradient of the data-fit term with respect to `Z = X * Y`, one entry per
/// cell. The hinge uses subgradient 0 at the kink.
fn data_fit_grad_z(z: &Array2<f64>, data: &Dataset, loss_kinds: &[LossKind]) -> Array2<f64> {
    let (m, n) = z.dim();
    let values = data.values();
    let mut g = Array2::zeros((m, n));
    for j in 0..n {
        match loss_kinds[j] {
            LossKind::Quadratic => {
                let scale = 2.0 / data.columns()[j].variance;
                for i in 0..m {
                    g[(i, j)] = scale * (z[(i, j)] - values[(i, j)]);
                }
            }
            LossKind::Hinge => {
                for i in 0..m {
                    let sign = 2.0 * values[(i, j)] - 1.0;
                    if sign * z[(i, j)] < 1.0 {
                        g[(i, j)] = -sign;
                    }
                }
            }
        }
    }
    g
}

/// Analytic (sub)gradients of the data-fit term with respect to `X` and `Y`.
pub fn data_fit_gradients(
    x: &Array2<f64>,
    y: &Array2<f64>,
    data: &Dataset,
    loss_kinds: &[LossKind],
) -> (Array2<f64>, Array2<f64>) {
    let z = x.dot(y);
    let g = data_fit_grad_z(&z, data, loss_kinds);
    (g.dot(&y.t()), x.t().dot(&g))
}

/// Smooth (data-fit) part of the objective, exposed for gradient checks.
pub fn data_fit_value(
    x: &Array2<f64>,
    y: &Array2<f64>,
    data: &Dataset,
    loss_kinds: &[LossKind],
) -> f64 {
    data_fit(&x.dot(y), data, loss_kinds)
}

fn seeded_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on two ChaCha uniforms.
    use rand::Rng;
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

const MIN_STEP: f64 = 1e-30;
const STEP_GROWTH: f64 = 1.25;
const MAX_HALVINGS: usize = 80;

/// Rescale any column of `X` whose norm exceeds `sqrt(m)` back onto that
/// bound. The product `X * Y` can always move the scale into `Y`, and keeping
/// the row factor bounded makes the column penalty on `Y` meaningful: without
/// it the optimizer migrates all magnitude into `X`, every entry of `Y`
/// shrinks toward zero together, and zero columns stop marking uninformative
/// features.
fn project_x_scale(x: &mut Array2<f64>) {
    let cap = (x.nrows() as f64).sqrt();
    for mut col in x.columns_mut() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > cap {
            let scale = cap / norm;
            col.mapv_inplace(|v| v * scale);
        }
    }
}

/// Fit by proximal alternating minimization. `X` and `Y` start from seeded
/// standard normal entries scaled by `1/sqrt(k)`; each iteration takes a
/// line-searched projected gradient step on `X` (columns kept at bounded
/// norm) and a line-searched proximal gradient step on `Y` with threshold
/// `gamma * step`, then records the objective. Stops when the relative
/// objective decrease falls below `rel_tol` or after `max_iters` iterations.
pub fn fit_glrm(data: &Dataset, k: usize, gamma: f64, opts: &FitOptions) -> Result<GlrmModel> {
    fit_glrm_from(data, k, gamma, opts, None)
}

/// `fit_glrm` with an optional warm start, used by the regularization sweep
/// to follow the solution path instead of re-randomizing at every gamma.
pub fn fit_glrm_from(
    data: &Dataset,
    k: usize,
    gamma: f64,
    opts: &FitOptions,
    warm: Option<(&Array2<f64>, &Array2<f64>)>,
) -> Result<GlrmModel> {
    opts.validate()?;
    let (m, n) = (data.n_rows(), data.n_cols());
    if k < 1 {
        return Err(Error::Parameter("rank k must be at least 1".into()));
    }
    if k >= n {
        return Err(Error::Parameter(format!(
            "rank k = {k} must be below the column count {n}"
        )));
    }
    if gamma < 0.0 {
        return Err(Error::Parameter("gamma must be nonnegative".into()));
    }
    if !data.is_finalized() {
        return Err(Error::Type(
            "dataset must be finalized before fitting".into(),
        ));
    }
    let loss_kinds = loss_kinds_for(data)?;

    let (mut x, mut y) = match warm {
        Some((wx, wy)) => {
            if wx.dim() != (m, k) || wy.dim() != (k, n) {
                return Err(Error::Shape("warm start factors have wrong shape".into()));
            }
            (wx.clone(), wy.clone())
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let scale = 1.0 / (k as f64).sqrt();
            let x = Array2::from_shape_fn((m, k), |_| seeded_normal(&mut rng) * scale);
            let y = Array2::from_shape_fn((k, n), |_| seeded_normal(&mut rng) * scale);
            (x, y)
        }
    };
    project_x_scale(&mut x);

    let mut current = objective_value(&x, &y, data, gamma, &loss_kinds)?;
    if !current.is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }
    let mut trace = vec![current];
    let mut step_x = opts.step_init;
    let mut step_y = opts.step_init;

    for iteration in 1..=opts.max_iters {
        // X update: plain gradient step on the data-fit term.
        let (gx, _) = data_fit_gradients(&x, &y, data, &loss_kinds);
        if gx.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration });
        }
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let mut candidate = &x - &(&gx * step_x);
            project_x_scale(&mut candidate);
            let obj = objective_value(&candidate, &y, data, gamma, &loss_kinds)?;
            if obj.is_finite() && obj <= current {
                x = candidate;
                current = obj;
                step_x *= STEP_GROWTH;
                accepted = true;
                break;
            }
            step_x *= 0.5;
            if step_x < MIN_STEP {
                break;
            }
        }
        if !accepted {
            step_x = step_x.max(MIN_STEP);
        }

        // Y update: proximal gradient step; the soft threshold pairs with
        // the step size so the penalty is minimized exactly per entry.
        let (_, gy) = data_fit_gradients(&x, &y, data, &loss_kinds);
        if gy.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration });
        }
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let threshold = gamma * step_y;
            let candidate = {
                let mut c = &y - &(&gy * step_y);
                c.mapv_inplace(|v| soft_threshold(v, threshold));
                c
            };
            let obj = objective_value(&x, &candidate, data, gamma, &loss_kinds)?;
            if obj.is_finite() && obj <= current {
                y = candidate;
                current = obj;
                step_y *= STEP_GROWTH;
                accepted = true;
                break;
            }
            step_y *= 0.5;
            if step_y < MIN_STEP {
                break;
            }
        }
        if !accepted {
            step_y = step_y.max(MIN_STEP);
        }

        let previous = *trace.last().unwrap();
        trace.push(current);
        if !current.is_finite() {
            return Err(Error::Divergence { iteration });
        }
        let denom = previous.abs().max(f64::MIN_POSITIVE);
        if (previous - current) / denom < opts.rel_tol {
            break;
        }
    }

    Ok(GlrmModel {
        x,
        y,
        k,
        gamma,
        loss_kinds,
        objective_trace: trace,
    })
}
