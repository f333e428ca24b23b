//! Train-fitted preprocessing: missingness-driven undersampling, median/mode
//! imputation, standardization and two feature selectors (RFE and a Lasso
//! ranking).
//!
//! Every statistic is fitted on the training rows only and stored in a
//! [`FittedPipeline`], which then transforms any split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::models::{fit, stratified_folds, Hyperparameters, Matrix, ModelKind};

/// Median with the mean-of-middle convention for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// Most frequent value; ties go to the smaller value.
pub fn mode(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut best: Option<(f64, usize)> = None;
    let mut i = 0;
    while i < v.len() {
        let j = v[i..].iter().take_while(|&&x| x == v[i]).count();
        if best.is_none_or(|(_, c)| j > c) {
            best = Some((v[i], j));
        }
        i += j;
    }
    best.map(|(x, _)| x)
}

/// Per-column fill values fitted on a set of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    pub columns: Vec<String>,
    pub fill: Vec<f64>,
}

impl Imputer {
    /// Numeric columns take the median, the others the mode.
    pub fn fit(ds: &Dataset, rows: &[usize]) -> Result<Imputer> {
        let mut fill = Vec::with_capacity(ds.schema.len());
        for (j, col) in ds.schema.columns().iter().enumerate() {
            let observed: Vec<f64> = rows.iter().filter_map(|&i| ds.rows[i].cells[j]).collect();
            let v = if col.kind.is_numeric() { median(&observed) } else { mode(&observed) };
            fill.push(v.ok_or_else(|| Error::AllMissingColumn(col.name.clone()))?);
        }
        Ok(Imputer {
            columns: ds.schema.names().map(str::to_string).collect(),
            fill,
        })
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        check_columns(&self.columns, ds)?;
        let mut out = ds.clone();
        for row in &mut out.rows {
            for (c, f) in row.cells.iter_mut().zip(&self.fill) {
                c.get_or_insert(*f);
            }
        }
        Ok(out)
    }
}

/// Train-split medians/modes applied to every row of `ds`.
pub fn impute_median(ds: &Dataset, train: &[usize]) -> Result<(Dataset, Imputer)> {
    let imp = Imputer::fit(ds, train)?;
    Ok((imp.apply(ds)?, imp))
}

/// Mean and population sd per numeric column; `None` for the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub columns: Vec<String>,
    pub stats: Vec<Option<(f64, f64)>>,
}

impl Scaler {
    pub fn fit(ds: &Dataset, rows: &[usize]) -> Result<Scaler> {
        let mut stats = Vec::with_capacity(ds.schema.len());
        for (j, col) in ds.schema.columns().iter().enumerate() {
            if !col.kind.is_numeric() {
                stats.push(None);
                continue;
            }
            let v: Vec<f64> = rows
                .iter()
                .map(|&i| {
                    ds.rows[i].cells[j].ok_or_else(|| {
                        Error::InvalidArgument(format!("column `{}` must be imputed before scaling", col.name))
                    })
                })
                .collect::<Result<_>>()?;
            if v.is_empty() {
                return Err(Error::InvalidArgument("cannot fit a scaler on zero rows".into()));
            }
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            stats.push(Some((mean, sd)));
        }
        Ok(Scaler {
            columns: ds.schema.names().map(str::to_string).collect(),
            stats,
        })
    }

    pub fn transform_value(&self, j: usize, x: f64) -> f64 {
        match self.stats[j] {
            Some((_, sd)) if sd == 0.0 => 0.0,
            Some((mean, sd)) => (x - mean) / sd,
            None => x,
        }
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        check_columns(&self.columns, ds)?;
        let mut out = ds.clone();
        for row in &mut out.rows {
            for (j, c) in row.cells.iter_mut().enumerate() {
                if let Some(x) = c {
                    *x = self.transform_value(j, *x);
                }
            }
        }
        Ok(out)
    }
}

/// Train-fitted standardization of numeric columns.
pub fn standardize(ds: &Dataset, train: &[usize]) -> Result<(Dataset, Scaler)> {
    let s = Scaler::fit(ds, train)?;
    Ok((s.apply(ds)?, s))
}

fn check_columns(expected: &[String], ds: &Dataset) -> Result<()> {
    if expected.iter().map(String::as_str).ne(ds.schema.names()) {
        return Err(Error::SchemaMismatch(
            "dataset columns differ from the fitted columns".into(),
        ));
    }
    Ok(())
}

/// Balances the classes among `rows` by dropping majority rows with the most
/// missing cells first; ties drop the later row. Returns the kept rows in
/// their original order.
pub fn undersample(ds: &Dataset, rows: &[usize]) -> Result<Vec<usize>> {
    let pos: Vec<usize> = rows.iter().copied().filter(|&i| ds.labels[i]).collect();
    let neg: Vec<usize> = rows.iter().copied().filter(|&i| !ds.labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidArgument("undersampling needs both classes".into()));
    }
    let (mut major, minor_len) = if pos.len() > neg.len() { (pos, neg.len()) } else { (neg, pos.len()) };
    let excess = major.len() - minor_len;
    major.sort_by(|&a, &b| {
        ds.rows[b]
            .missing_count()
            .cmp(&ds.rows[a].missing_count())
            .then(b.cmp(&a))
    });
    let dropped: std::collections::HashSet<usize> = major[..excess].iter().copied().collect();
    Ok(rows.iter().copied().filter(|i| !dropped.contains(i)).collect())
}

/// Recursive feature elimination with a hinge model: refit, then drop the
/// `step` columns with the smallest |weight| (ties drop the later column)
/// until `target` remain. Returns column indices in their original order.
pub fn rfe_select(x: &Matrix, y: &[bool], target: usize, step: usize, hp: &Hyperparameters) -> Result<Vec<usize>> {
    if target == 0 || target > x.cols {
        return Err(Error::InvalidArgument(format!(
            "RFE target {target} must be between 1 and {}",
            x.cols
        )));
    }
    if step == 0 {
        return Err(Error::InvalidArgument("RFE step must be at least 1".into()));
    }
    let mut active: Vec<usize> = (0..x.cols).collect();
    while active.len() > target {
        let model = fit(&x.select_cols(&active), y, ModelKind::Hinge, hp, &[])?;
        let mut order: Vec<usize> = (0..active.len()).collect();
        order.sort_by(|&a, &b| {
            model.weights[a]
                .abs()
                .total_cmp(&model.weights[b].abs())
                .then(b.cmp(&a))
        });
        let n_drop = step.min(active.len() - target);
        let mut drop: Vec<usize> = order[..n_drop].to_vec();
        drop.sort_unstable_by(|a, b| b.cmp(a));
        for d in drop {
            active.remove(d);
        }
    }
    Ok(active)
}

pub const LASSO_ALPHAS: [f64; 5] = [0.001, 0.01, 0.1, 1.0, 10.0];
pub const LSFM_FOLDS: usize = 5;

/// Coordinate-descent Lasso on centered columns and a centered target,
/// minimizing `(1/2n)‖y − Xw‖² + α‖w‖₁`.
pub fn lasso(x: &Matrix, y: &[f64], alpha: f64) -> Vec<f64> {
    let n = x.rows as f64;
    let means: Vec<f64> = (0..x.cols).map(|j| x.column(j).iter().sum::<f64>() / n).collect();
    let ym = y.iter().sum::<f64>() / n;
    let xc: Vec<Vec<f64>> = (0..x.cols)
        .map(|j| x.column(j).iter().map(|v| v - means[j]).collect())
        .collect();
    let z: Vec<f64> = xc.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / n).collect();
    let mut r: Vec<f64> = y.iter().map(|v| v - ym).collect();
    let mut w = vec![0.0; x.cols];
    for _ in 0..1000 {
        let mut max_delta: f64 = 0.0;
        for j in 0..x.cols {
            if z[j] == 0.0 {
                continue;
            }
            let rho = xc[j].iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n + z[j] * w[j];
            let new = soft_threshold(rho, alpha) / z[j];
            let delta = new - w[j];
            if delta != 0.0 {
                for (ri, xi) in r.iter_mut().zip(&xc[j]) {
                    *ri -= delta * xi;
                }
                w[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < 1e-8 {
            break;
        }
    }
    w
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsfmSelection {
    pub columns: Vec<usize>,
    pub alpha: f64,
    pub coefficients: Vec<f64>,
    pub warning: Option<String>,
}

pub fn keep_count(d: usize, keep_fraction: f64) -> usize {
    ((keep_fraction * d as f64).ceil() as usize).clamp(1, d.max(1))
}

/// Lasso-based selection: α by k-fold CV on held-out squared error (ties go
/// to the earlier α), then the `ceil(keep_fraction · d)` columns with the
/// largest |coefficient| (ties keep the earlier column).
pub fn lsfm_select(x: &Matrix, y: &[bool], keep_fraction: f64, seed: u64) -> Result<LsfmSelection> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidArgument("keep fraction must lie in (0, 1]".into()));
    }
    if x.rows < LSFM_FOLDS || x.rows != y.len() {
        return Err(Error::InvalidArgument("too few rows for Lasso cross-validation".into()));
    }
    let t: Vec<f64> = y.iter().map(|&v| f64::from(u8::from(v))).collect();
    let fold = stratified_folds(y, LSFM_FOLDS, seed).or_else(|_| {
        let mut idx: Vec<usize> = (0..y.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut f = vec![0; y.len()];
        for (p, i) in idx.into_iter().enumerate() {
            f[i] = p % LSFM_FOLDS;
        }
        Ok::<_, Error>(f)
    })?;
    let mut best = (f64::INFINITY, LASSO_ALPHAS[0]);
    for &alpha in &LASSO_ALPHAS {
        let mut sse = 0.0;
        for k in 0..LSFM_FOLDS {
            let tr: Vec<usize> = (0..y.len()).filter(|&i| fold[i] != k).collect();
            let te: Vec<usize> = (0..y.len()).filter(|&i| fold[i] == k).collect();
            let xtr = x.select_rows(&tr);
            let ttr: Vec<f64> = tr.iter().map(|&i| t[i]).collect();
            let w = lasso(&xtr, &ttr, alpha);
            let n = tr.len() as f64;
            let tm = ttr.iter().sum::<f64>() / n;
            let means: Vec<f64> = (0..x.cols).map(|j| xtr.column(j).iter().sum::<f64>() / n).collect();
            for &i in &te {
                let pred = tm + x.row(i).iter().zip(&means).zip(&w).map(|((v, m), wj)| (v - m) * wj).sum::<f64>();
                sse += (t[i] - pred).powi(2);
            }
        }
        if sse < best.0 {
            best = (sse, alpha);
        }
    }
    let alpha = best.1;
    let coefficients = lasso(x, &t, alpha);
    let k = keep_count(x.cols, keep_fraction);
    let mut warning = None;
    let mut columns: Vec<usize> = if coefficients.iter().all(|&c| c == 0.0) {
        warning = Some(format!("all Lasso coefficients are zero at alpha {alpha}; keeping the first {k} columns"));
        (0..k).collect()
    } else {
        let mut order: Vec<usize> = (0..x.cols).collect();
        order.sort_by(|&a, &b| coefficients[b].abs().total_cmp(&coefficients[a].abs()).then(a.cmp(&b)));
        order.truncate(k);
        order
    };
    columns.sort_unstable();
    Ok(LsfmSelection {
        columns,
        alpha,
        coefficients,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Selection {
    None,
    /// `target` defaults to `ceil(0.25 d)`.
    Rfe { target: Option<usize>, step: usize },
    Lsfm { keep_fraction: f64 },
}

impl std::str::FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Selection::None),
            "rfe" => Ok(Selection::Rfe { target: None, step: 1 }),
            "lsfm" => Ok(Selection::Lsfm { keep_fraction: 0.25 }),
            other => Err(Error::Config(format!("unknown feature selection `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub undersample: bool,
    pub selection: Selection,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            undersample: true,
            selection: Selection::None,
            seed: 0,
        }
    }
}

/// All train-fitted parameters needed to transform a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub config: PipelineConfig,
    pub input_columns: Vec<String>,
    /// Columns with no observed training value, removed before imputation.
    pub dropped_columns: Vec<String>,
    pub imputer: Imputer,
    pub scaler: Scaler,
    /// Indices into the imputer's columns.
    pub selected: Vec<usize>,
    pub selected_columns: Vec<String>,
    pub train_rows_kept: usize,
    pub warnings: Vec<String>,
}

impl FittedPipeline {
    /// Fits on `train` (indices into `ds`) and returns the fitted pipeline
    /// together with the training rows kept after undersampling.
    pub fn fit(ds: &Dataset, train: &[usize], config: &PipelineConfig) -> Result<(FittedPipeline, Vec<usize>)> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("empty training split".into()));
        }
        let rows = if config.undersample { undersample(ds, train)? } else { train.to_vec() };
        let keep: Vec<usize> = (0..ds.schema.len())
            .filter(|&j| rows.iter().any(|&i| ds.rows[i].cells[j].is_some()))
            .collect();
        let dropped_columns: Vec<String> = (0..ds.schema.len())
            .filter(|j| !keep.contains(j))
            .map(|j| ds.schema.column(j).name.clone())
            .collect();
        let projected = ds.project(&keep)?;
        let (imputed, imputer) = impute_median(&projected, &rows)?;
        let (scaled, scaler) = standardize(&imputed, &rows)?;
        let x = Matrix::from_rows(&scaled.dense(&rows))?;
        let y = scaled.labels_of(&rows);
        let mut warnings = Vec::new();
        let selected = match &config.selection {
            Selection::None => (0..keep.len()).collect(),
            Selection::Rfe { target, step } => {
                let target = target.unwrap_or_else(|| keep_count(keep.len(), 0.25)).min(keep.len());
                let hp = Hyperparameters {
                    seed: config.seed,
                    ..Hyperparameters::default()
                };
                rfe_select(&x, &y, target, *step, &hp)?
            }
            Selection::Lsfm { keep_fraction } => {
                let s = lsfm_select(&x, &y, *keep_fraction, config.seed)?;
                warnings.extend(s.warning);
                s.columns
            }
        };
        let selected_columns = selected.iter().map(|&j| imputer.columns[j].clone()).collect();
        Ok((
            FittedPipeline {
                config: config.clone(),
                input_columns: ds.schema.names().map(str::to_string).collect(),
                dropped_columns,
                imputer,
                scaler,
                selected,
                selected_columns,
                train_rows_kept: rows.len(),
                warnings,
            },
            rows,
        ))
    }

    /// Imputed, standardized, selected dense matrix for the given rows.
    pub fn transform(&self, ds: &Dataset, rows: &[usize]) -> Result<Matrix> {
        check_columns(&self.input_columns, ds)?;
        let keep: Vec<usize> = self
            .imputer
            .columns
            .iter()
            .map(|c| ds.schema.require(c))
            .collect::<Result<_>>()?;
        let sub = ds.subset_rows(rows).project(&keep)?;
        let out = self.scaler.apply(&self.imputer.apply(&sub)?)?;
        Matrix::from_rows(&out.dense(&(0..out.len()).collect::<Vec<_>>())).map(|m| m.select_cols(&self.selected))
    }
}

/// Kinds that standardization leaves untouched.
pub fn is_passthrough(kind: ColumnKind) -> bool {
    !kind.is_numeric()
}
