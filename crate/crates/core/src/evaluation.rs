//! Classification metrics, significance tests and subgroup reports.
//!
//! Degenerate ratios are 0: precision, recall, specificity and F1 with a zero
//! denominator, and MCC whenever any factor under its square root is zero.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data_model::{FeatureSchema, FeatureVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn from_predictions(labels: &[bool], predictions: &[bool]) -> Result<Self> {
        check_len(labels.len(), predictions.len())?;
        let mut cm = ConfusionMatrix::default();
        for (&y, &p) in labels.iter().zip(predictions) {
            match (y, p) {
                (true, true) => cm.tp += 1,
                (false, true) => cm.fp += 1,
                (false, false) => cm.tn += 1,
                (true, false) => cm.fn_ += 1,
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidArgument(format!("{a} labels but {b} predictions")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub acc: f64,
    pub pre: f64,
    pub rec: f64,
    pub f1: f64,
    pub spe: f64,
    pub mcc: f64,
    pub auc: Option<f64>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricSet> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::Undefined("metrics of an empty confusion matrix".into()));
    }
    let pre = ratio(cm.tp, cm.tp + cm.fp);
    let rec = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = if pre + rec == 0.0 { 0.0 } else { 2.0 * pre * rec / (pre + rec) };
    Ok(MetricSet {
        acc: ratio(cm.tp + cm.tn, n),
        pre,
        rec,
        f1,
        spe: ratio(cm.tn, cm.tn + cm.fp),
        mcc: mcc(cm),
        auc: None,
    })
}

pub fn mcc(cm: &ConfusionMatrix) -> f64 {
    let factors = [cm.tp + cm.fp, cm.tp + cm.fn_, cm.tn + cm.fp, cm.tn + cm.fn_];
    if factors.contains(&0) {
        return 0.0;
    }
    let num = cm.tp as f64 * cm.tn as f64 - cm.fp as f64 * cm.fn_ as f64;
    let den = factors.iter().map(|&f| f as f64).product::<f64>().sqrt();
    num / den
}

/// Rank-based (Mann–Whitney) AUC; tied scores share their average rank.
pub fn roc_auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    check_len(labels.len(), scores.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("AUC scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j averaged.
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum_pos += avg * order[i..j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j;
    }
    let np = n_pos as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Acc,
    Pre,
    Rec,
    F1,
    Spe,
    Mcc,
}

impl Metric {
    pub fn of(self, m: &MetricSet) -> f64 {
        match self {
            Metric::Acc => m.acc,
            Metric::Pre => m.pre,
            Metric::Rec => m.rec,
            Metric::F1 => m.f1,
            Metric::Spe => m.spe,
            Metric::Mcc => m.mcc,
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "acc" => Ok(Metric::Acc),
            "pre" => Ok(Metric::Pre),
            "rec" => Ok(Metric::Rec),
            "f1" => Ok(Metric::F1),
            "spe" => Ok(Metric::Spe),
            "mcc" => Ok(Metric::Mcc),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

pub const MIN_BOOTSTRAP: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Metric of A minus metric of B on the full test set.
    pub diff: f64,
    /// Standard deviation of the resampled differences.
    pub se: f64,
    pub t: f64,
    pub p_value: f64,
    pub resamples: usize,
}

fn metric_on(labels: &[bool], preds: &[bool], idx: &[usize], metric: Metric) -> f64 {
    let mut cm = ConfusionMatrix::default();
    for &i in idx {
        match (labels[i], preds[i]) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fn_ += 1,
        }
    }
    metrics(&cm).map_or(0.0, |m| metric.of(&m))
}

/// Paired bootstrap-t test of `metric(A) - metric(B)`.
///
/// Rows are resampled with replacement `b` times, each resample with its own
/// stream of a seeded generator. `t` is the observed difference over the
/// standard deviation of the resampled differences and the two-sided p value
/// comes from Student's t with `n - 1` degrees of freedom.
pub fn paired_bootstrap_test(
    labels: &[bool],
    preds_a: &[bool],
    preds_b: &[bool],
    metric: Metric,
    b: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if b < MIN_BOOTSTRAP {
        return Err(Error::InvalidArgument(format!("bootstrap needs at least {MIN_BOOTSTRAP} resamples, got {b}")));
    }
    check_len(labels.len(), preds_a.len())?;
    check_len(labels.len(), preds_b.len())?;
    let n = labels.len();
    if n < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least two rows".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let diff = metric_on(labels, preds_a, &all, metric) - metric_on(labels, preds_b, &all, metric);
    let diffs: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            metric_on(labels, preds_a, &idx, metric) - metric_on(labels, preds_b, &idx, metric)
        })
        .collect();
    let mean = diffs.iter().sum::<f64>() / b as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    let se = var.sqrt();
    let (t, p_value) = if se == 0.0 {
        if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(diff), 0.0)
        }
    } else {
        let t = diff / se;
        (t, two_sided_p(t, (n - 1) as f64)?)
    };
    Ok(BootstrapResult {
        diff,
        se,
        t,
        p_value,
        resamples: b,
    })
}

fn two_sided_p(t: f64, df: f64) -> Result<f64> {
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Undefined(e.to_string()))?;
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Welch's unequal-variance t test with Welch–Satterthwaite degrees of
/// freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument("each sample needs at least two values".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 && vb == 0.0 {
        return Err(Error::Undefined("both samples have zero variance".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchResult {
        t,
        df,
        p_value: two_sided_p(t, df)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subgroup {
    General,
    Male,
    Female,
    AgeUnder75,
    Age75Plus,
}

impl Subgroup {
    pub const ALL: [Subgroup; 5] = [
        Subgroup::General,
        Subgroup::Male,
        Subgroup::Female,
        Subgroup::AgeUnder75,
        Subgroup::Age75Plus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subgroup::General => "general",
            Subgroup::Male => "male",
            Subgroup::Female => "female",
            Subgroup::AgeUnder75 => "age_lt_75",
            Subgroup::Age75Plus => "age_ge_75",
        }
    }

    /// Rows with the needed cell missing belong only to `General`.
    fn contains(self, gender: Option<f64>, age: Option<f64>) -> bool {
        match self {
            Subgroup::General => true,
            Subgroup::Male => gender == Some(0.0),
            Subgroup::Female => gender == Some(1.0),
            Subgroup::AgeUnder75 => age.is_some_and(|a| a < 75.0),
            Subgroup::Age75Plus => age.is_some_and(|a| a >= 75.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub system: String,
    pub subgroup: Subgroup,
    pub n: usize,
    pub confusion: Option<ConfusionMatrix>,
    /// `None` when the subgroup is empty.
    pub metrics: Option<MetricSet>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<SubgroupRow>,
    #[serde(default)]
    pub significance: Vec<SignificanceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub system_a: String,
    pub system_b: String,
    pub metric: Metric,
    /// Names the procedure, which substitutes for an unspecified paired test.
    pub method: String,
    pub result: BootstrapResult,
}

/// Predictions of one system over the evaluated rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemPredictions {
    pub name: String,
    pub predictions: Vec<bool>,
    pub probabilities: Option<Vec<f64>>,
}

/// Metrics overall and per gender and age subgroup, one row per system and
/// subgroup.
pub fn subgroup_report(
    rows: &[FeatureVector],
    schema: &FeatureSchema,
    labels: &[bool],
    systems: &[SystemPredictions],
) -> Result<EvalReport> {
    let gender = schema.require("gender")?;
    let age = schema.require("age")?;
    check_len(rows.len(), labels.len())?;
    let mut report = EvalReport::default();
    for sys in systems {
        check_len(labels.len(), sys.predictions.len())?;
        if let Some(p) = &sys.probabilities {
            check_len(labels.len(), p.len())?;
        }
        for sg in Subgroup::ALL {
            let idx: Vec<usize> = (0..rows.len())
                .filter(|&i| sg.contains(rows[i].cells[gender], rows[i].cells[age]))
                .collect();
            if idx.is_empty() {
                report.rows.push(SubgroupRow {
                    system: sys.name.clone(),
                    subgroup: sg,
                    n: 0,
                    confusion: None,
                    metrics: None,
                });
                continue;
            }
            let y: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
            let p: Vec<bool> = idx.iter().map(|&i| sys.predictions[i]).collect();
            let cm = ConfusionMatrix::from_predictions(&y, &p)?;
            let mut m = metrics(&cm)?;
            if let Some(probs) = &sys.probabilities {
                let s: Vec<f64> = idx.iter().map(|&i| probs[i]).collect();
                m.auc = roc_auc(&y, &s).ok();
            }
            report.rows.push(SubgroupRow {
                system: sys.name.clone(),
                subgroup: sg,
                n: idx.len(),
                confusion: Some(cm),
                metrics: Some(m),
            });
        }
    }
    Ok(report)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_default()
}

impl EvalReport {
    /// CSV with one row per system and subgroup.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let origin = std::path::Path::new("<eval report>");
        let err = |e: csv::Error| crate::data_model::io::csv_write_error(origin, e);
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["system", "subgroup", "n", "acc", "pre", "rec", "f1", "spe", "mcc", "auc"])
            .map_err(err)?;
        for r in &self.rows {
            let m = r.metrics;
            let mut rec = vec![r.system.clone(), r.subgroup.as_str().to_string(), r.n.to_string()];
            for f in [
                m.map(|m| m.acc),
                m.map(|m| m.pre),
                m.map(|m| m.rec),
                m.map(|m| m.f1),
                m.map(|m| m.spe),
                m.map(|m| m.mcc),
                m.and_then(|m| m.auc),
            ] {
                rec.push(f.map(crate::data_model::io::format_number).unwrap_or_default());
            }
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(origin, e))
    }

    /// Fixed-width table, systems by subgroups.
    pub fn text_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:<10} {:>5} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
            "system", "subgroup", "n", "ACC", "PRE", "REC", "F1", "SPE", "MCC", "AUC"
        );
        for r in &self.rows {
            match r.metrics {
                None => {
                    let _ = writeln!(s, "{:<16} {:<10} {:>5}   metrics omitted", r.system, r.subgroup.as_str(), 0);
                }
                Some(m) => {
                    let _ = writeln!(
                        s,
                        "{:<16} {:<10} {:>5} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7}",
                        r.system,
                        r.subgroup.as_str(),
                        r.n,
                        m.acc,
                        m.pre,
                        m.rec,
                        m.f1,
                        m.spe,
                        m.mcc,
                        fmt_opt(m.auc)
                    );
                }
            }
        }
        for sig in &self.significance {
            let _ = writeln!(
                s,
                "{} vs {} ({:?}, {}): diff {:.4}, t {:.3}, p {:.4}",
                sig.system_a, sig.system_b, sig.metric, sig.method, sig.result.diff, sig.result.t, sig.result.p_value
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mcc_worked_example() {
        let m = metrics(&ConfusionMatrix::new(50, 20, 30, 10)).unwrap();
        assert!((m.mcc - 1300.0 / (70.0f64 * 60.0 * 50.0 * 40.0).sqrt()).abs() < 1e-12);
        assert!((m.acc - 80.0 / 110.0).abs() < 1e-12);
    }

    #[test]
    fn auc_counts_half_for_ties() {
        let auc = roc_auc(&[true, false, true, false], &[0.9, 0.8, 0.4, 0.1]).unwrap();
        assert!((auc - 0.75).abs() < 1e-12);
        assert_eq!(roc_auc(&[true, false], &[0.3, 0.3]).unwrap(), 0.5);
        assert!(roc_auc(&[true, true], &[0.3, 0.2]).is_err());
    }

    #[test]
    fn bootstrap_rejects_few_resamples() {
        let y = [true, false, true];
        assert!(paired_bootstrap_test(&y, &y, &y, Metric::Acc, 29, 1).is_err());
        let r = paired_bootstrap_test(&y, &y, &y, Metric::Acc, 30, 1).unwrap();
        assert_eq!((r.diff, r.p_value), (0.0, 1.0));
    }
}
