//! L2-regularized linear classifiers trained by seeded SGD, with stratified
//! k-fold grid search.
//!
//! The objective for labels `y ∈ {-1, +1}` is
//!
//! ```text
//! J(w, b) = (1/n) Σ ℓ(y_i (w·x_i + b)) + (λ/2) ‖w‖²,   λ = 1 / (C n)
//! ```
//!
//! with `ℓ(z) = ln(1 + e^-z)` (logistic) or `max(0, 1 - z)` (hinge), so `C`
//! plays the usual inverse-regularization role. Each epoch visits the rows in
//! a seeded random order with step `lr / (1 + epoch)` and applies the L2 term
//! as a proximal shrink. Training stops once the epoch objective changes by
//! less than `tol` relative to its size.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{metrics, ConfusionMatrix, MetricSet};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{} values do not fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::WidthMismatch {
                expected: cols,
                found: r.len(),
            });
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_cols(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(cols.iter().map(|&c| r[c]));
        }
        Matrix {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Hinge,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Hinge => "hinge",
        }
    }

    /// Loss at margin `z = y f`.
    pub fn loss(self, z: f64) -> f64 {
        match self {
            // ln(1 + e^-z) without overflow.
            ModelKind::Logistic => {
                if z > 0.0 {
                    (-z).exp().ln_1p()
                } else {
                    -z + z.exp().ln_1p()
                }
            }
            ModelKind::Hinge => (1.0 - z).max(0.0),
        }
    }

    /// d loss / d z.
    pub fn dloss(self, z: f64) -> f64 {
        match self {
            ModelKind::Logistic => -sigmoid(-z),
            ModelKind::Hinge => {
                if z < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "logistic" | "lr" => Ok(ModelKind::Logistic),
            "hinge" | "svm" => Ok(ModelKind::Hinge),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Inverse regularization strength.
    pub c: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            c: 1.0,
            learning_rate: 0.1,
            epochs: 200,
            tol: 1e-6,
            seed: 0,
        }
    }
}

pub const DEFAULT_C_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

/// Default grid with the given seed.
pub fn default_grid(seed: u64) -> Vec<Hyperparameters> {
    DEFAULT_C_GRID
        .iter()
        .map(|&c| Hyperparameters {
            c,
            seed,
            ..Hyperparameters::default()
        })
        .collect()
}

fn sign(y: bool) -> f64 {
    if y {
        1.0
    } else {
        -1.0
    }
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// `J(w, b)` over all rows of `x`.
pub fn objective(kind: ModelKind, w: &[f64], b: f64, x: &Matrix, y: &[bool], lambda: f64) -> f64 {
    let n = x.rows as f64;
    let data: f64 = (0..x.rows)
        .map(|i| kind.loss(sign(y[i]) * (dot(w, x.row(i)) + b)))
        .sum::<f64>()
        / n;
    data + 0.5 * lambda * dot(w, w)
}

/// Analytic gradient of [`objective`]; the bias gradient is last.
pub fn gradient(kind: ModelKind, w: &[f64], b: f64, x: &Matrix, y: &[bool], lambda: f64) -> Vec<f64> {
    let n = x.rows as f64;
    let mut g: Vec<f64> = w.iter().map(|wj| lambda * wj).collect();
    g.push(0.0);
    for i in 0..x.rows {
        let s = sign(y[i]);
        let d = kind.dloss(s * (dot(w, x.row(i)) + b)) * s / n;
        for (gj, xj) in g.iter_mut().zip(x.row(i)) {
            *gj += d * xj;
        }
        g[x.cols] += d;
    }
    g
}

/// Sigmoid link `p = 1 / (1 + exp(-(a f + b)))` on decision values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub a: f64,
    pub b: f64,
}

impl Calibration {
    pub fn apply(&self, f: f64) -> f64 {
        sigmoid(self.a * f + self.b)
    }

    /// Platt's fit with smoothed targets, by Newton's method with a
    /// backtracking line search.
    pub fn fit(decision: &[f64], y: &[bool]) -> Calibration {
        let n_pos = y.iter().filter(|&&v| v).count() as f64;
        let n_neg = y.len() as f64 - n_pos;
        let t_pos = (n_pos + 1.0) / (n_pos + 2.0);
        let t_neg = 1.0 / (n_neg + 2.0);
        let t: Vec<f64> = y.iter().map(|&v| if v { t_pos } else { t_neg }).collect();
        let nll = |a: f64, b: f64| -> f64 {
            decision
                .iter()
                .zip(&t)
                .map(|(&f, &ti)| {
                    let z = a * f + b;
                    // -(t ln p + (1 - t) ln(1 - p)) with p = sigmoid(z)
                    ti * ModelKind::Logistic.loss(z) + (1.0 - ti) * ModelKind::Logistic.loss(-z)
                })
                .sum()
        };
        let (mut a, mut b) = (1.0, -((n_neg + 1.0) / (n_pos + 1.0)).ln());
        let mut f_cur = nll(a, b);
        for _ in 0..100 {
            let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 1e-12, 0.0, 1e-12);
            for (&f, &ti) in decision.iter().zip(&t) {
                let p = sigmoid(a * f + b);
                let r = p - ti;
                let w = p * (1.0 - p);
                ga += r * f;
                gb += r;
                haa += w * f * f;
                hab += w * f;
                hbb += w;
            }
            if ga.abs() < 1e-10 && gb.abs() < 1e-10 {
                break;
            }
            let det = haa * hbb - hab * hab;
            let (da, db) = if det.abs() > 1e-300 {
                ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det)
            } else {
                (ga, gb)
            };
            let mut step = 1.0;
            let mut improved = false;
            while step > 1e-10 {
                let (na, nb) = (a - step * da, b - step * db);
                let f_new = nll(na, nb);
                if f_new < f_cur {
                    a = na;
                    b = nb;
                    improved = f_cur - f_new > 1e-14 * f_cur.abs().max(1.0);
                    f_cur = f_new;
                    break;
                }
                step /= 2.0;
            }
            if !improved {
                break;
            }
        }
        Calibration { a, b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: ModelKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub columns: Vec<String>,
    /// Present for hinge models.
    pub calibration: Option<Calibration>,
    pub hyperparameters: Hyperparameters,
    pub epochs_run: usize,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols != self.weights.len() {
            return Err(Error::WidthMismatch {
                expected: self.weights.len(),
                found: x.cols,
            });
        }
        if x.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("prediction rows contain missing or non-finite values".into()));
        }
        Ok(())
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok((0..x.rows)
            .map(|i| {
                let f = self.decision(x.row(i));
                match (self.kind, self.calibration) {
                    (ModelKind::Hinge, Some(c)) => c.apply(f),
                    _ => sigmoid(f),
                }
            })
            .collect())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<bool>> {
        Ok(self.predict_proba(x)?.into_iter().map(|p| p >= 0.5).collect())
    }
}

/// Trains one model on all rows of `x`.
pub fn fit(
    x: &Matrix,
    y: &[bool],
    kind: ModelKind,
    hp: &Hyperparameters,
    columns: &[String],
) -> Result<LinearModel> {
    if x.rows == 0 || x.rows != y.len() {
        return Err(Error::InvalidArgument(format!("{} rows and {} labels", x.rows, y.len())));
    }
    if !columns.is_empty() && columns.len() != x.cols {
        return Err(Error::WidthMismatch {
            expected: columns.len(),
            found: x.cols,
        });
    }
    if !(hp.c > 0.0 && hp.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("C and the learning rate must be positive".into()));
    }
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("training rows contain missing or non-finite values".into()));
    }
    let n = x.rows;
    let lambda = 1.0 / (hp.c * n as f64);
    let mut w = vec![0.0; x.cols];
    let mut b = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut prev = objective(kind, &w, b, x, y, lambda);
    let mut epochs_run = 0;
    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let eta = hp.learning_rate / (1.0 + epoch as f64);
        let shrink = 1.0 / (1.0 + eta * lambda);
        for &i in &order {
            let xi = x.row(i);
            let s = sign(y[i]);
            let g = kind.dloss(s * (dot(&w, xi) + b)) * s;
            if g != 0.0 {
                for (wj, xj) in w.iter_mut().zip(xi) {
                    *wj = (*wj - eta * g * xj) * shrink;
                }
            } else {
                for wj in w.iter_mut() {
                    *wj *= shrink;
                }
            }
            b -= eta * g;
        }
        epochs_run = epoch + 1;
        let obj = objective(kind, &w, b, x, y, lambda);
        if !obj.is_finite() || w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        if (prev - obj).abs() < hp.tol * prev.abs().max(1.0) {
            break;
        }
        prev = obj;
    }
    let calibration = match kind {
        ModelKind::Hinge => {
            let f: Vec<f64> = (0..n).map(|i| dot(&w, x.row(i)) + b).collect();
            Some(Calibration::fit(&f, y))
        }
        ModelKind::Logistic => None,
    };
    Ok(LinearModel {
        kind,
        weights: w,
        bias: b,
        columns: columns.to_vec(),
        calibration,
        hyperparameters: *hp,
        epochs_run,
    })
}

/// Stratified fold assignment: each class is shuffled with `seed` and dealt
/// round-robin into `k` folds.
pub fn stratified_folds(y: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument("cross-validation needs k >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; y.len()];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold[i] = pos % k;
        }
    }
    for f in 0..k {
        let test: Vec<bool> = (0..y.len()).filter(|&i| fold[i] == f).map(|i| y[i]).collect();
        if !(test.contains(&true) && test.contains(&false)) {
            return Err(Error::FoldMissingClass { fold: f });
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointResult {
    pub hyperparameters: Hyperparameters,
    pub folds: Vec<MetricSet>,
    pub mean: MetricSet,
    pub sd: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub kind: ModelKind,
    pub k: usize,
    pub grid: Vec<GridPointResult>,
    pub best: usize,
    pub chosen: Hyperparameters,
}

fn summarize(folds: &[MetricSet]) -> (MetricSet, MetricSet) {
    let n = folds.len() as f64;
    let pick: [fn(&MetricSet) -> f64; 6] = [|m| m.acc, |m| m.pre, |m| m.rec, |m| m.f1, |m| m.spe, |m| m.mcc];
    let mut mean = [0.0; 6];
    let mut sd = [0.0; 6];
    for (j, f) in pick.iter().enumerate() {
        let m = folds.iter().map(f).sum::<f64>() / n;
        mean[j] = m;
        sd[j] = (folds.iter().map(|x| (f(x) - m).powi(2)).sum::<f64>() / n).sqrt();
    }
    let mk = |v: [f64; 6]| MetricSet {
        acc: v[0],
        pre: v[1],
        rec: v[2],
        f1: v[3],
        spe: v[4],
        mcc: v[5],
        auc: None,
    };
    (mk(mean), mk(sd))
}

/// Grid search by stratified k-fold CV, then a refit of the best point on
/// all rows. The best point has the highest mean MCC, then mean accuracy,
/// then comes first in the grid.
pub fn cross_validate(
    x: &Matrix,
    y: &[bool],
    kind: ModelKind,
    grid: &[Hyperparameters],
    k: usize,
    seed: u64,
    columns: &[String],
) -> Result<(CvResult, LinearModel)> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
    }
    let fold = stratified_folds(y, k, seed)?;
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..k).map(move |f| (g, f))).collect();
    let results: Vec<Result<MetricSet>> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let train: Vec<usize> = (0..y.len()).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| fold[i] == f).collect();
            let ytr: Vec<bool> = train.iter().map(|&i| y[i]).collect();
            let yte: Vec<bool> = test.iter().map(|&i| y[i]).collect();
            let model = fit(&x.select_rows(&train), &ytr, kind, &grid[g], columns)?;
            let pred = model.predict(&x.select_rows(&test))?;
            metrics(&ConfusionMatrix::from_predictions(&yte, &pred)?)
        })
        .collect();
    let mut per_point: Vec<Vec<MetricSet>> = vec![Vec::with_capacity(k); grid.len()];
    for (&(g, _), r) in jobs.iter().zip(results) {
        per_point[g].push(r?);
    }
    let points: Vec<GridPointResult> = per_point
        .into_iter()
        .zip(grid)
        .map(|(folds, hp)| {
            let (mean, sd) = summarize(&folds);
            GridPointResult {
                hyperparameters: *hp,
                folds,
                mean,
                sd,
            }
        })
        .collect();
    let mut best = 0;
    for (i, p) in points.iter().enumerate().skip(1) {
        let b = &points[best].mean;
        if p.mean.mcc > b.mcc || (p.mean.mcc == b.mcc && p.mean.acc > b.acc) {
            best = i;
        }
    }
    let chosen = grid[best];
    let model = fit(x, y, kind, &chosen, columns)?;
    Ok((
        CvResult {
            kind,
            k,
            grid: points,
            best,
            chosen,
        },
        model,
    ))
}
