//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion, nonzero exit
//! when any criterion fails. Oracles here are written independently of the
//! library code they check.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use afrec_core::clinical_scores::{bundled_scores, score_rows, Score};
use afrec_core::data_model::{
    af_type, ColumnKind, Dataset, DischargeReport, FeatureSchema, FeatureVector, RecurrenceLabel, Split, WindowClass,
};
use afrec_core::evaluation::{metrics, roc_auc, ConfusionMatrix};
use afrec_core::experiment::{default_systems, train_system, TrainConfig};
use afrec_core::models::{gradient, objective, Hyperparameters, Matrix, ModelKind};
use afrec_core::pipeline::{build_cohort, by_patient, structured_only_vector, Resources};
use afrec_core::preprocessing::{keep_count, lsfm_select, rfe_select};
use afrec_core::synthetic_corpus::{generate, GeneratorConfig};
use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// End-to-end oracle

fn end_to_end_oracle() -> Outcome {
    let res = Resources::bundled().unwrap();
    let start = Instant::now();
    let corpus = generate(&GeneratorConfig::new(500, 2024), &res.schema).unwrap();
    let build = build_cohort(&corpus.reports, &corpus.coded, &corpus.deaths, &res).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let n = corpus.truth.len();
    let (mut onset, mut excl, mut label) = (0, 0, 0);
    for (p, t) in build.patients.iter().zip(&corpus.truth) {
        assert_eq!(p.entry.patient_id, t.patient_id);
        onset += usize::from(p.entry.onset_date == t.onset_date && p.entry.onset_report_id == t.onset_report_id);
        excl += usize::from(p.entry.exclusion == t.exclusion);
        label += usize::from(p.entry.label == t.label);
    }
    let same_len = build.patients.len() == n;
    outcome(
        same_len && onset == n && excl == n && label == n && elapsed < 60.0,
        format!(
            "onset {onset}/{n}, exclusion {excl}/{n}, label {label}/{n}, generate+build {elapsed:.2}s (limit 60s)"
        ),
    )
}

// Dual-source recovery

fn dual_source_recovery() -> Outcome {
    let res = Resources::bundled().unwrap();
    let schema = &res.schema;
    let mut config = GeneratorConfig::new(500, 77);
    config.corruption_rate = 0.26;
    let corpus = generate(&config, schema).unwrap();
    let build = build_cohort(&corpus.reports, &corpus.coded, &corpus.deaths, &res).unwrap();
    let coded_by = by_patient(&corpus.coded, |r| r.patient_id.as_str());
    let counted: Vec<usize> = (0..schema.len())
        .filter(|&j| schema.column(j).window_class != WindowClass::AfFlag)
        .collect();
    let (mut lost, mut recovered) = (0usize, 0usize);
    let (mut miss_structured, mut miss_merged, mut cells) = (0usize, 0usize, 0usize);
    let (mut patients, mut dropped) = (0usize, 0usize);
    for (p, t) in build.patients.iter().zip(&corpus.truth) {
        if !t.in_dataset() {
            continue;
        }
        let Some(merged) = p.entry.merged.as_ref().filter(|_| p.entry.in_dataset()) else {
            dropped += 1;
            continue;
        };
        patients += 1;
        let onset = t.onset_date.unwrap();
        let coded = coded_by.get(t.patient_id.as_str()).cloned().unwrap_or_default();
        let structured = structured_only_vector(&t.patient_id, onset, &coded, &res).unwrap();
        for &j in &counted {
            cells += 1;
            miss_structured += usize::from(structured.cells[j].is_none());
            miss_merged += usize::from(merged.cells[j].is_none());
            let Some(planted) = t.cells[j] else { continue };
            if structured.cells[j] != Some(planted) {
                lost += 1;
                recovered += usize::from(merged.cells[j] == Some(planted));
            }
        }
    }
    let rate = recovered as f64 / lost.max(1) as f64;
    let fs = miss_structured as f64 / cells as f64;
    let fm = miss_merged as f64 / cells as f64;
    outcome(
        lost > 0 && rate >= 0.95 && fm < fs,
        format!(
            "recovered {recovered}/{lost} lost cells ({:.2}%, need >= 95%); missing fraction {fm:.4} merged vs {fs:.4} structured-only; {patients} patients ({dropped} lost their AF code to deletion)",
            100.0 * rate
        ),
    )
}

// Score oracle

fn ckd_epi(creatinine: f64, age: f64, female: bool) -> f64 {
    // CKD-EPI 2021 race-free equation.
    let (k, a, f) = if female { (0.7, -0.241, 1.012) } else { (0.9, -0.302, 1.0) };
    let r = creatinine / k;
    let low = if r < 1.0 { r.powf(a) } else { 1.0 };
    let high = if r > 1.0 { r.powf(-1.2) } else { 1.0 };
    142.0 * low * high * 0.9938f64.powf(age) * f
}

struct View<'a> {
    v: &'a FeatureVector,
    schema: &'a FeatureSchema,
}

impl View<'_> {
    fn get(&self, c: &str) -> Option<f64> {
        self.v.cells[self.schema.index_of(c).unwrap()]
    }
    fn yes(&self, c: &str) -> bool {
        self.get(c) == Some(1.0)
    }
    fn age(&self) -> Option<f64> {
        self.get("age")
    }
}

fn brute_chads2vasc(x: &View) -> u32 {
    let mut s = 0;
    s += u32::from(x.yes("heart_failure"));
    s += u32::from(x.yes("hypertension"));
    match x.age() {
        Some(a) if a >= 75.0 => s += 2,
        Some(a) if a >= 65.0 => s += 1,
        _ => {}
    }
    s += u32::from(x.yes("diabetes_type1") || x.yes("diabetes_type2"));
    s += 2 * u32::from(x.yes("stroke"));
    s += u32::from(x.yes("ischemic_cardiomyopathy") || x.yes("peripheral_arteriopathy"));
    s += u32::from(x.yes("gender"));
    s
}

fn brute_hatch(x: &View) -> u32 {
    u32::from(x.yes("hypertension"))
        + u32::from(x.age().is_some_and(|a| a > 75.0))
        + 2 * u32::from(x.yes("stroke"))
        + u32::from(x.yes("copd"))
        + 2 * u32::from(x.yes("heart_failure"))
}

fn brute_apple(x: &View) -> u32 {
    let egfr = match (x.get("creatinine"), x.age(), x.get("gender")) {
        (Some(c), Some(a), Some(g)) => Some(ckd_epi(c, a, g == 1.0)),
        _ => None,
    };
    let persistent = matches!(x.get("af_type"), Some(t) if t == f64::from(af_type::PERSISTENT) || t == f64::from(af_type::PERMANENT));
    u32::from(x.age().is_some_and(|a| a > 65.0))
        + u32::from(persistent)
        + u32::from(egfr.is_some_and(|e| e < 60.0))
        + u32::from(x.get("la_diameter").is_some_and(|d| d >= 43.0))
        + u32::from(x.get("lvef").is_some_and(|e| e < 50.0))
}

fn random_vector(schema: &FeatureSchema, rng: &mut ChaCha8Rng, i: usize) -> FeatureVector {
    let date = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let mut v = FeatureVector::missing(format!("R{i}"), None, date, schema.len());
    for (j, col) in schema.columns().iter().enumerate() {
        if rng.random_bool(0.1) {
            continue;
        }
        v.cells[j] = Some(match (col.name.as_str(), col.kind) {
            ("age", _) => {
                const EDGES: [f64; 6] = [64.9, 65.0, 65.5, 74.9, 75.0, 75.1];
                if rng.random_bool(0.3) {
                    EDGES[rng.random_range(0..EDGES.len())]
                } else {
                    f64::from(rng.random_range(18..=100))
                }
            }
            ("la_diameter", _) => [42.9, 43.0, 43.1][rng.random_range(0..3)] + f64::from(rng.random_range(-10..=10)),
            ("lvef", _) => [49.9, 50.0, 50.1][rng.random_range(0..3)] + f64::from(rng.random_range(-25..=20)),
            ("creatinine", _) => rng.random_range(0.4..3.5),
            (_, ColumnKind::Binary) => f64::from(u8::from(rng.random_bool(0.4))),
            (_, ColumnKind::Categorical(k)) => f64::from(rng.random_range(0..k)),
            (_, ColumnKind::Numeric) => rng.random_range(0.0..200.0),
        });
    }
    v
}

fn boundary_vector(schema: &FeatureSchema, set: &[(&str, f64)]) -> FeatureVector {
    let mut v = FeatureVector::missing("B", None, NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), schema.len());
    for (c, x) in set {
        v.cells[schema.index_of(c).unwrap()] = Some(*x);
    }
    v
}

fn score_oracle() -> Outcome {
    let res = Resources::bundled().unwrap();
    let schema = &res.schema;
    let scores = bundled_scores(schema).unwrap();
    let names: Vec<&str> = scores.iter().map(Score::name).collect();
    let brute: [fn(&View) -> u32; 3] = [brute_chads2vasc, brute_hatch, brute_apple];
    assert_eq!(names, ["chads2vasc", "hatch", "apple"]);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let rows: Vec<FeatureVector> = (0..10_000).map(|i| random_vector(schema, &mut rng, i)).collect();
    let got = score_rows(&rows, &scores);
    let mut mismatches = 0;
    for (v, r) in rows.iter().zip(&got) {
        let view = View { v, schema };
        for k in 0..3 {
            let want = brute[k](&view);
            if r.scores[k] != want || r.predictions[k] != (want >= 2) {
                mismatches += 1;
            }
        }
    }
    // Each score at exactly 1 and 2 points.
    let cases: [[&[(&str, f64)]; 2]; 3] = [
        [&[("hypertension", 1.0)], &[("hypertension", 1.0), ("gender", 1.0)]],
        [&[("copd", 1.0)], &[("stroke", 1.0)]],
        [&[("age", 70.0)], &[("age", 70.0), ("lvef", 40.0)]],
    ];
    let mut boundary_ok = true;
    for (k, [one, two]) in cases.iter().enumerate() {
        let r = score_rows(&[boundary_vector(schema, one), boundary_vector(schema, two)], &scores);
        boundary_ok &= r[0].scores[k] == 1 && !r[0].predictions[k] && !scores[k].classify(1);
        boundary_ok &= r[1].scores[k] == 2 && r[1].predictions[k] && scores[k].classify(2);
    }
    outcome(
        mismatches == 0 && boundary_ok,
        format!("{mismatches} mismatches over 3 x 10000 vectors; threshold boundary 1 -> negative, 2 -> positive: {boundary_ok}"),
    )
}

// Metric oracle

fn div0(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn brute_auc(labels: &[bool], scores: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi && !yj {
                pairs += 1.0;
                wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    wins / pairs
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=60);
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let p: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let s: Vec<f64> = (0..n).map(|_| (rng.random_range(0.0..1.0f64) * 10.0).round() / 10.0).collect();
        let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
        for (&a, &b) in y.iter().zip(&p) {
            match (a, b) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (false, false) => tn += 1.0,
                (true, false) => fn_ += 1.0,
            }
        }
        let pre = div0(tp, tp + fp);
        let rec = div0(tp, tp + fn_);
        let want = [
            (tp + tn) / n as f64,
            pre,
            rec,
            div0(2.0 * pre * rec, pre + rec),
            div0(tn, tn + fp),
            div0(tp * tn - fp * fn_, ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt()),
        ];
        let m = metrics(&ConfusionMatrix::from_predictions(&y, &p).unwrap()).unwrap();
        for (g, w) in [m.acc, m.pre, m.rec, m.f1, m.spe, m.mcc].iter().zip(want) {
            worst = worst.max((g - w).abs());
        }
        let both = y.iter().any(|&v| v) && y.iter().any(|&v| !v);
        match roc_auc(&y, &s) {
            Ok(a) if both => worst = worst.max((a - brute_auc(&y, &s)).abs()),
            Err(_) if !both => {}
            _ => failures += 1,
        }
    }
    let mut zero_factor_ok = true;
    let mut enumerated = 0;
    for tp in 0..=20u64 {
        for fp in 0..=20 - tp {
            for tn in 0..=20 - tp - fp {
                for fn_ in 0..=20 - tp - fp - tn {
                    enumerated += 1;
                    let cm = ConfusionMatrix::new(tp, fp, tn, fn_);
                    let m = afrec_core::evaluation::mcc(&cm);
                    let zero = [tp + fp, tp + fn_, tn + fp, tn + fn_].contains(&0);
                    if zero {
                        zero_factor_ok &= m == 0.0;
                    } else {
                        let (a, b, c, d) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
                        let w = (a * c - b * d) / ((a + b) * (a + d) * (c + b) * (c + d)).sqrt();
                        zero_factor_ok &= (m - w).abs() <= 1e-12 && m.abs() <= 1.0 + 1e-12;
                    }
                }
            }
        }
    }
    outcome(
        worst <= 1e-12 && failures == 0 && zero_factor_ok,
        format!(
            "max deviation {worst:.2e} over 10000 sets (tolerance 1e-12), {failures} AUC definedness errors; MCC conventions on {enumerated} matrices: {zero_factor_ok}"
        ),
    )
}

// Gradient check

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for draw in 0..100 {
        let kind = if draw % 2 == 0 { ModelKind::Logistic } else { ModelKind::Hinge };
        let n = rng.random_range(5..40);
        let d = rng.random_range(1..12);
        let x = Matrix::new(n, d, (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = rng.random_range(-1.0..1.0);
        let lambda = [0.0, 0.01, 0.1, 1.0][rng.random_range(0..4)];
        let analytic = gradient(kind, &w, b, &x, &y, lambda);
        let mut numeric = Vec::with_capacity(d + 1);
        for j in 0..=d {
            let (mut wp, mut wm, mut bp, mut bm) = (w.clone(), w.clone(), b, b);
            if j < d {
                wp[j] += h;
                wm[j] -= h;
            } else {
                bp += h;
                bm -= h;
            }
            numeric.push((objective(kind, &wp, bp, &x, &y, lambda) - objective(kind, &wm, bm, &x, &y, lambda)) / (2.0 * h));
        }
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = norm(&analytic).max(norm(&numeric));
        let rel = if scale == 0.0 { 0.0 } else { norm(&diff) / scale };
        worst = worst.max(rel);
    }
    outcome(
        worst <= 1e-5,
        format!("max relative error {worst:.2e} over 100 draws, logistic and hinge (tolerance 1e-5)"),
    )
}

// Feature-selection recovery

fn planted_problem(seed: u64) -> (Matrix, Vec<bool>, [usize; 3]) {
    const N: usize = 200;
    const D: usize = 86;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::StandardNormal;
    let data: Vec<f64> = (0..N * D).map(|_| rng.sample::<f64, _>(normal)).collect();
    let mut planted = [0; 3];
    let mut pool: Vec<usize> = (0..D).collect();
    for p in &mut planted {
        *p = pool.swap_remove(rng.random_range(0..pool.len()));
    }
    let y = (0..N)
        .map(|i| {
            let f: f64 = planted.iter().map(|&j| data[i * D + j]).sum::<f64>() + 0.3 * rng.sample::<f64, _>(normal);
            f > 0.0
        })
        .collect();
    (Matrix::new(N, D, data).unwrap(), y, planted)
}

fn feature_selection_recovery() -> Outcome {
    let keep = keep_count(86, 0.25);
    let hp = Hyperparameters::default();
    let (mut rfe_hits, mut lsfm_hits) = (0, 0);
    for seed in 0..100 {
        let (x, y, planted) = planted_problem(seed);
        let rfe = rfe_select(&x, &y, keep, 1, &Hyperparameters { seed, ..hp }).unwrap();
        rfe_hits += usize::from(planted.iter().all(|p| rfe.contains(p)));
        let lsfm = lsfm_select(&x, &y, 0.25, seed).unwrap();
        lsfm_hits += usize::from(planted.iter().all(|p| lsfm.columns.contains(p)));
    }
    outcome(
        rfe_hits >= 95 && lsfm_hits >= 95,
        format!("planted 3 of 86 columns recovered within the {keep} kept: RFE {rfe_hits}/100, LSFM {lsfm_hits}/100 (need 95)"),
    )
}

// Pipeline hygiene

fn poison(ds: &Dataset, seed: u64) -> Dataset {
    let mut out = ds.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in ds.indices(Split::Test) {
        out.labels[i] = !out.labels[i];
        for (j, col) in ds.schema.columns().iter().enumerate() {
            out.rows[i].cells[j] = if rng.random_bool(0.3) {
                None
            } else {
                Some(match col.kind {
                    ColumnKind::Binary => f64::from(u8::from(rng.random_bool(0.5))),
                    ColumnKind::Categorical(k) => f64::from(rng.random_range(0..k)),
                    ColumnKind::Numeric => rng.random_range(-1e6..1e6),
                })
            };
        }
    }
    out
}

fn pipeline_hygiene() -> Outcome {
    let res = Resources::bundled().unwrap();
    let corpus = generate(&GeneratorConfig::new(300, 31), &res.schema).unwrap();
    let build = build_cohort(&corpus.reports, &corpus.coded, &corpus.deaths, &res).unwrap();
    let ds = afrec_core::pipeline::build_dataset(&build.entries(), &res.schema, 0.2, 31).unwrap();
    let poisoned = poison(&ds, 5);
    let config = TrainConfig::new(31);
    let mut differing = Vec::new();
    let systems = default_systems();
    for spec in &systems {
        let clean = train_system(&ds, spec, &config).unwrap();
        let dirty = train_system(&poisoned, spec, &config).unwrap();
        let a = serde_json::to_string(&clean).unwrap();
        let b = serde_json::to_string(&dirty).unwrap();
        let bits = |s: &afrec_core::experiment::TrainedSystem| {
            let stats = s.pipeline.scaler.stats.iter().flatten().flat_map(|&(m, sd)| [m, sd]);
            s.pipeline
                .imputer
                .fill
                .iter()
                .copied()
                .chain(stats)
                .chain(s.model.weights.iter().copied())
                .chain([s.model.bias])
                .map(f64::to_bits)
                .collect::<Vec<_>>()
        };
        if a != b || bits(&clean) != bits(&dirty) || clean.pipeline.selected_columns != dirty.pipeline.selected_columns {
            differing.push(spec.name.clone());
        }
    }
    outcome(
        differing.is_empty(),
        format!(
            "{} systems refit on a poisoned test split; differing: {:?}",
            systems.len(),
            differing
        ),
    )
}

// Label-window boundaries

fn af_report(id: &str, date: NaiveDate) -> DischargeReport {
    DischargeReport {
        report_id: id.into(),
        patient_id: "W1".into(),
        date,
        body: "Antecedentes: HTA.\nDiagnóstico principal: Fibrilación auricular paroxística.\n".into(),
    }
}

fn label_window_boundaries() -> Outcome {
    let res = Resources::bundled().unwrap();
    let onset = NaiveDate::from_ymd_opt(2018, 3, 1).unwrap();
    let onset_report = res.annotate(&af_report("R0", onset));
    let mut lines = Vec::new();
    let mut ok = onset_report.onset.is_onset;
    for (offset, want_recurred) in [(30u64, false), (31, true), (730, true), (731, false)] {
        let follow = res.annotate(&af_report("R1", onset.checked_add_days(Days::new(offset)).unwrap()));
        let label = afrec_core::cohort_builder::label_recurrence(onset, &[&onset_report, &follow]);
        let pass = (label == RecurrenceLabel::Recurred) == want_recurred;
        ok &= pass;
        lines.push(format!("+{offset}d {}", label.as_str()));
    }
    outcome(ok, lines.join(", "))
}

// Prevalence plausibility

fn prevalence_plausibility() -> Outcome {
    let res = Resources::bundled().unwrap();
    let corpus = generate(&GeneratorConfig::new(2000, 42), &res.schema).unwrap();
    let build = build_cohort(&corpus.reports, &corpus.coded, &corpus.deaths, &res).unwrap();
    let recurred = build.count(RecurrenceLabel::Recurred);
    let total = recurred + build.count(RecurrenceLabel::NoRecurrence);
    let rate = recurred as f64 / total as f64;
    outcome(
        (rate - 0.63).abs() <= 0.02,
        format!("{recurred}/{total} recurred = {:.2}% (target 63% +/- 2%)", 100.0 * rate),
    )
}

// Determinism

fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.cfg");
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_afrec"))
            .args(["pipeline", "--config"])
            .arg(&cfg)
            .args(["--seed", "42", "--log-level", "warn", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        if !status.success() {
            return outcome(false, format!("pipeline run {run} exited with {status}"));
        }
        trees.push(read_tree(&out));
    }
    let differing: Vec<_> = trees[0]
        .keys()
        .chain(trees[1].keys())
        .filter(|k| trees[0].get(*k) != trees[1].get(*k))
        .collect();
    outcome(
        differing.is_empty() && !trees[0].is_empty(),
        format!("{} artifacts compared byte for byte; differing: {:?}", trees[0].len(), differing),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("end-to-end oracle", end_to_end_oracle),
        ("dual-source recovery", dual_source_recovery),
        ("score oracle", score_oracle),
        ("metric oracle", metric_oracle),
        ("gradient check", gradient_check),
        ("feature-selection recovery", feature_selection_recovery),
        ("pipeline hygiene", pipeline_hygiene),
        ("label-window boundaries", label_window_boundaries),
        ("prevalence plausibility", prevalence_plausibility),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "[{}] {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
