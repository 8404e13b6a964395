//! Acceptance gate: runs every acceptance criterion in sequence, prints one
//! PASS/FAIL line per criterion, and fails if any criterion fails.
//!
//! The criteria run inside a single test so that the timed ones are not
//! competing with each other for cores.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use integrity_core::eval::{class_metrics, stratified_split_indices, ConfusionMatrix};
use integrity_core::ingest::{clean_response, write_responses_csv, CsvOptions};
use integrity_core::model::{
    train_forest, train_gbt, train_tree, ForestConfig,
    GbtConfig, ModelKind, ModelSpec, TreeNode, TreeParams,
};
use integrity_core::pipeline::{prepare_data, run_training, PipelineConfig};
use integrity_core::report::render_confusion_svg;
use integrity_core::rng::Rng;
use integrity_core::rules::{check_contradictions, logic_score, RuleSet};
use integrity_core::schema::{AnswerValue, QuestionKind, QuestionSpec, RawResponse, SurveySchema};
use integrity_core::synth::{
    canonical_rules, example_schema, generate_dataset, generate_fake, generate_genuine,
    FakeBehavior, SynthConfig,
};
use integrity_core::Label;
use integrity_kit::load_validator;
use integrity_kit::serve::Service;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_integrity-kit")
}

fn run_cli(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`{}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

// 1. Metric arithmetic on two reference confusion matrices.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let rf = class_metrics(&ConfusionMatrix::new(21, 0, 2, 2)).map_err(|e| e.to_string())?;
    let lr = class_metrics(&ConfusionMatrix::new(20, 1, 2, 2)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let got = |m: &integrity_core::eval::ClassMetrics| {
        [m.accuracy, m.fake.precision, m.fake.recall, m.fake.f1].map(round2)
    };
    check(got(&rf) == [0.92, 1.00, 0.50, 0.67], format!("rf/xgb row {:?}", got(&rf)))?;
    check(got(&lr) == [0.88, 0.67, 0.50, 0.57], format!("logreg row {:?}", got(&lr)))?;
    check(elapsed < Duration::from_millis(1), format!("took {elapsed:?}"))?;
    Ok(format!("rows {:?} and {:?} in {elapsed:?}", got(&rf), got(&lr)))
}

// 2. Confusion SVGs are well-formed and carry the cell counts.
fn criterion_2() -> Outcome {
    for (cm, want) in [
        (ConfusionMatrix::new(21, 0, 2, 2), ["21", "0", "2", "2"]),
        (ConfusionMatrix::new(20, 1, 2, 2), ["20", "1", "2", "2"]),
    ] {
        let svg = render_confusion_svg(&cm, "Confusion Matrix").map_err(|e| e.to_string())?;
        let doc = roxmltree::Document::parse(&svg).map_err(|e| format!("not well-formed: {e}"))?;
        check(doc.root_element().has_tag_name("svg"), "root is not <svg>")?;
        let texts: Vec<&str> = doc
            .descendants()
            .filter(|n| n.has_tag_name("text"))
            .filter_map(|n| n.text())
            .collect();
        // Cell texts appear in tn, fp, fn, tp order right after the title.
        check(texts[1..5] == want, format!("cells {:?}", &texts[1..5]))?;
        for label in ["Genuine", "Fake"] {
            check(texts.iter().filter(|t| **t == label).count() == 2, format!("axis label {label}"))?;
        }
    }
    Ok("cells 21/0/2/2 and 20/1/2/2 with Genuine/Fake axes".into())
}

// 3. Synthetic end-to-end benchmark.
fn criterion_3() -> Outcome {
    let start = Instant::now();
    let schema = example_schema();
    check(schema.questions.len() == 25, "example schema size")?;
    let rules = canonical_rules();
    let (mut acc, mut rec) = (Vec::new(), Vec::new());
    for seed in 1..=10u64 {
        let cfg = SynthConfig {
            n: 500,
            fake_fraction: 0.15,
            seed,
            ..Default::default()
        };
        let data = generate_dataset(&schema, &cfg).map_err(|e| e.to_string())?;
        let forest = ForestConfig {
            seed,
            ..Default::default()
        };
        check(forest.n_trees == 100 && forest.max_depth == 5, "forest defaults")?;
        let config = PipelineConfig {
            model: ModelSpec::Forest(forest),
            test_fraction: 0.2,
            seed,
            ..Default::default()
        };
        let out = run_training(&schema, &data.responses, &data.labels, &rules, &config)
            .map_err(|e| e.to_string())?;
        acc.push(out.report.accuracy);
        rec.push(out.report.per_class.fake.recall);
    }
    let elapsed = start.elapsed();
    let (ma, mr) = (median(acc), median(rec));
    check(ma >= 0.90, format!("median accuracy {ma}"))?;
    check(mr >= 0.50, format!("median fake recall {mr}"))?;
    check(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"))?;
    Ok(format!("median accuracy {ma:.3}, median fake recall {mr:.3}, {elapsed:.2?}"))
}

fn blank_schema(fields: usize) -> SurveySchema {
    SurveySchema {
        version: "blank".into(),
        questions: (0..fields)
            .map(|i| {
                QuestionSpec::new(
                    &format!("q{i}"),
                    "",
                    QuestionKind::SingleChoice {
                        values: vec!["a".into(), "b".into()],
                    },
                )
            })
            .collect(),
    }
}

// 4. Rule-engine corpus and the blank-threshold boundary.
fn criterion_4() -> Outcome {
    let schema = example_schema();
    let rules = canonical_rules();
    let mut rng = Rng::seed_from_u64(2024);
    for i in 0..200 {
        let f = clean_response(&generate_fake(&schema, FakeBehavior::Contradictor, &mut rng), &schema, i);
        let fired = check_contradictions(&f, &rules).map_err(|e| e.to_string())?;
        check(!fired.is_empty(), format!("contradictor {i} fired nothing"))?;
    }
    for i in 0..200 {
        let g = clean_response(&generate_genuine(&schema, &mut rng), &schema, i);
        let fired = check_contradictions(&g, &rules).map_err(|e| e.to_string())?;
        check(fired.is_empty(), format!("genuine {i} fired {fired:?}"))?;
    }
    let ruleset = RuleSet::default();
    for fields in [2usize, 4, 10, 24] {
        let schema = blank_schema(fields);
        for answered in 0..=fields {
            let mut raw = RawResponse::new("r");
            for q in 0..answered {
                raw = raw.with(&format!("q{q}"), AnswerValue::choice("a"));
            }
            let report = logic_score(&clean_response(&raw, &schema, 0), &schema, &ruleset)
                .map_err(|e| e.to_string())?;
            let blank = fields - answered;
            // Exact integer form of `blank / fields > 0.5`.
            let expect = 2 * blank > fields;
            check(
                report.blank_flag == expect,
                format!("{blank}/{fields} blank: flag {}", report.blank_flag),
            )?;
            if 2 * blank == fields {
                check(report.blank_fraction == 0.5 && !report.blank_flag, "0.5 must not flag")?;
            }
            if 2 * blank == fields + 2 {
                check(report.blank_flag, "0.5 + 1/|fields| must flag")?;
            }
        }
    }
    Ok("200/200 contradictors fire, 0/200 genuine fire, boundary exact".into())
}

/// Exact Gini gain as a fraction (numerator, denominator) in integers.
fn exact_gain(n: i128, fakes: i128, nl: i128, fl: i128) -> (i128, i128) {
    // gini(m, f) * m^2 = m^2 - f^2 - (m - f)^2 = 2 f (m - f)
    let g2 = |m: i128, f: i128| 2 * f * (m - f);
    let nr = n - nl;
    let fr = fakes - fl;
    // parent - (nl/n) gini_l - (nr/n) gini_r
    //   = g2(n)/n^2 - g2(nl)/(n nl) - g2(nr)/(n nr)
    let den = n * n * nl * nr;
    let num = g2(n, fakes) * nl * nr - g2(nl, fl) * n * nr - g2(nr, fr) * n * nl;
    (num, den)
}

fn frac_gt(a: (i128, i128), b: (i128, i128)) -> bool {
    a.0 * b.1 > b.0 * a.1
}

/// Exhaustive root split: every feature (ascending), every midpoint between
/// consecutive distinct values (ascending); strictly better gain wins.
fn oracle_split(rows: &[Vec<f64>], labels: &[Label]) -> Option<(usize, f64, (i128, i128))> {
    let n = rows.len() as i128;
    let fakes = labels.iter().filter(|l| l.is_fake()).count() as i128;
    let d = rows[0].len();
    let mut best: Option<(usize, f64, (i128, i128))> = None;
    for f in 0..d {
        let mut values: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<usize> = (0..rows.len()).filter(|&i| rows[i][f] <= t).collect();
            let nl = left.len() as i128;
            let fl = left.iter().filter(|&&i| labels[i].is_fake()).count() as i128;
            let gain = exact_gain(n, fakes, nl, fl);
            if gain.0 <= 0 {
                continue;
            }
            if best.is_none_or(|b| frac_gt(gain, b.2)) {
                best = Some((f, t, gain));
            }
        }
    }
    best
}

// 5. Root split equals the exhaustive oracle.
fn criterion_5() -> Outcome {
    let mut rng = Rng::seed_from_u64(5);
    let mut splits = 0;
    for case in 0..100 {
        let n = rng.range_inclusive(2, 8) as usize;
        let d = rng.range_inclusive(1, 3) as usize;
        // Few distinct values so ties between thresholds and features occur.
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.range_inclusive(0, 4) as f64 * 0.5).collect())
            .collect();
        let labels: Vec<Label> = (0..n).map(|_| Label::from_bool(rng.bernoulli(0.5))).collect();
        let params = TreeParams::new(3, 2, d);
        let tree = train_tree(&rows, &labels, params, &mut Rng::seed_from_u64(case))
            .map_err(|e| e.to_string())?;
        match (oracle_split(&rows, &labels), tree.root()) {
            (None, TreeNode::Leaf { .. }) => {}
            (Some((f, t, g)), TreeNode::Internal { feature, threshold, gain, .. }) => {
                let exact = g.0 as f64 / g.1 as f64;
                check(
                    *feature == f && *threshold == t && (gain - exact).abs() < 1e-12,
                    format!(
                        "case {case}: tree ({feature}, {threshold}, {gain}) vs oracle ({f}, {t}, {exact})"
                    ),
                )?;
                splits += 1;
            }
            (o, r) => return Err(format!("case {case}: oracle {o:?} vs root {r:?}")),
        }
    }
    Ok(format!("100 instances agree ({splits} with a root split)"))
}

/// Independent objective: weighted mean cross-entropy + (l2/2)|w|^2.
fn reference_objective(xs: &[Vec<f64>], ys: &[f64], w: &[f64], b: f64, l2: f64) -> f64 {
    let n = xs.len() as f64;
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let z: f64 = b + x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let p = 1.0 / (1.0 + (-z).exp());
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    total / n + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

// 6. Logistic-regression gradient against central differences.
fn criterion_6() -> Outcome {
    const EPS: f64 = 1e-5;
    let mut rng = Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut worst_component: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.range_inclusive(1, 20) as usize;
        let d = rng.range_inclusive(1, 5) as usize;
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
        let ys: Vec<f64> = (0..n).map(|_| if rng.bernoulli(0.4) { 1.0 } else { 0.0 }).collect();
        let w: Vec<f64> = (0..d).map(|_| 0.5 * rng.normal()).collect();
        let b = 0.5 * rng.normal();
        let l2 = 0.01;
        let sw = vec![1.0; n];
        let (_, gw, gb) = integrity_core::model::logreg::objective_and_gradient(&xs, &ys, &sw, &w, b, l2);
        let mut analytic = gw.clone();
        analytic.push(gb);
        let mut numeric = Vec::with_capacity(d + 1);
        for j in 0..=d {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            let (mut bp, mut bm) = (b, b);
            if j < d {
                wp[j] += EPS;
                wm[j] -= EPS;
            } else {
                bp += EPS;
                bm -= EPS;
            }
            let fp = reference_objective(&xs, &ys, &wp, bp, l2);
            let fm = reference_objective(&xs, &ys, &wm, bm, l2);
            numeric.push((fp - fm) / (2.0 * EPS));
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, f)| (a - f).powi(2)).sum::<f64>().sqrt();
        let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nf: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = diff / (na + nf).max(1e-12);
        worst = worst.max(rel);
        // Per component, relative to the larger of the two magnitudes.
        for (a, f) in analytic.iter().zip(&numeric) {
            let scale = a.abs().max(f.abs());
            if scale > 0.0 {
                worst_component = worst_component.max((a - f).abs() / scale);
            }
        }
    }
    check(worst < 1e-5, format!("max norm-wise relative error {worst:e}"))?;
    check(worst_component < 1e-5, format!("max per-component relative error {worst_component:e}"))?;
    Ok(format!(
        "max relative error {worst:.2e} norm-wise, {worst_component:.2e} per component, over 50 instances"
    ))
}

// 7. Determinism of `train` and thread-count independence of forests.
fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = dir.path();
    run_cli(
        &["synth", "--n", "200", "--fake-frac", "0.15", "--seed", "42", "--out", "d.csv", "--emit-schema", "s.json", "--emit-rules", "r.json"],
        p,
    )?;
    for model in ["rf", "logreg", "gbt"] {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let m = format!("m{run}.json");
            let e = format!("e{run}.json");
            run_cli(
                &["train", "--schema", "s.json", "--data", "d.csv", "--rules", "r.json", "--model", model, "--seed", "42", "--test-frac", "0.2", "--out", &m, "--report", &e],
                p,
            )?;
            let read = |f: &str| std::fs::read(p.join(f)).map_err(|e| e.to_string());
            outputs.push((read(&m)?, read(&e)?));
        }
        check(outputs[0] == outputs[1], format!("{model}: reruns differ"))?;
    }

    let schema = example_schema();
    let data = generate_dataset(&schema, &SynthConfig { n: 300, fake_fraction: 0.15, seed: 3, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let prepared = prepare_data(&schema, &data.responses, &data.labels, &canonical_rules(), &PipelineConfig::default())
        .map_err(|e| e.to_string())?;
    let cfg = ForestConfig { seed: 11, ..Default::default() };
    let serialize = |threads: usize| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        let forest = pool.install(|| train_forest(&prepared.train, &cfg)).map_err(|e| e.to_string())?;
        serde_json::to_string(&forest).map_err(|e| e.to_string())
    };
    let single = serialize(1)?;
    for threads in [2, 3, 8] {
        check(serialize(threads)? == single, format!("{threads} threads differ from 1"))?;
    }
    Ok("byte-identical model and eval JSON for rf/logreg/gbt; forests equal at 1/2/3/8 threads".into())
}

/// Independent statement of the test-count rule.
fn expected_test_count(size: usize, f: f64) -> usize {
    let k = (f * size as f64).round() as usize;
    if size >= 2 && k == 0 {
        1
    } else {
        k
    }
}

// 8. Stratified split counts and partition exactness.
fn criterion_8() -> Outcome {
    let mut rng = Rng::seed_from_u64(8);
    for case in 0..1000 {
        let g = rng.range_inclusive(0, 150) as usize;
        let fk = rng.range_inclusive(0, 60) as usize;
        let f = 0.01 + 0.98 * rng.next_f64();
        let seed = rng.next_u64();
        let mut labels = [vec![Label::Genuine; g], vec![Label::Fake; fk]].concat();
        rng.shuffle(&mut labels);
        let (train, test) = stratified_split_indices(&labels, f, seed).map_err(|e| e.to_string())?;
        let count = |idx: &[usize], c: Label| idx.iter().filter(|&&i| labels[i] == c).count();
        check(
            count(&test, Label::Genuine) == expected_test_count(g, f)
                && count(&test, Label::Fake) == expected_test_count(fk, f),
            format!("case {case}: sizes ({g}, {fk}) fraction {f}"),
        )?;
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        check(all == (0..labels.len()).collect::<Vec<_>>(), format!("case {case}: not a partition"))?;
    }
    Ok("1000 random triples match the rounding rule and partition exactly".into())
}

// 9. Serve/filter parity on 100 responses.
fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = dir.path();
    run_cli(
        &["synth", "--n", "300", "--fake-frac", "0.15", "--seed", "9", "--out", "train.csv", "--emit-schema", "s.json", "--emit-rules", "r.json"],
        p,
    )?;
    run_cli(
        &["train", "--schema", "s.json", "--data", "train.csv", "--rules", "r.json", "--model", "rf", "--seed", "9", "--out", "m.json"],
        p,
    )?;
    let schema = example_schema();
    let data = generate_dataset(&schema, &SynthConfig { n: 100, fake_fraction: 0.3, seed: 99, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let csv = write_responses_csv(&schema, &data.responses, None, &CsvOptions::default()).map_err(|e| e.to_string())?;
    std::fs::write(p.join("raw.csv"), csv).map_err(|e| e.to_string())?;
    run_cli(
        &["filter", "--model", "m.json", "--schema", "s.json", "--rules", "r.json", "--data", "raw.csv", "--retained", "a.csv", "--flagged", "b.csv", "--drop-suspicious"],
        p,
    )?;

    let mut from_filter: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for file in ["a.csv", "b.csv"] {
        let mut rdr = csv::Reader::from_path(p.join(file)).map_err(|e| e.to_string())?;
        let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name).ok_or(format!("no {name} column"));
        let cols = [col("verdict")?, col("prob_fake")?, col("logic_score")?, col("reasons")?];
        let id = col("respondent_id")?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            from_filter.insert(rec[id].to_string(), cols.iter().map(|&c| rec[c].to_string()).collect());
        }
    }
    check(from_filter.len() == 100, format!("filter wrote {} rows", from_filter.len()))?;

    let validator = load_validator(&p.join("m.json"), &p.join("s.json"), &p.join("r.json"), true, None)
        .map_err(|e| e.to_string())?;
    let service = Service::new(validator);
    let mut flagged = 0;
    for raw in &data.responses {
        let body = serde_json::to_vec(&serde_json::json!({ "answers": raw.answers })).map_err(|e| e.to_string())?;
        let (status, v) = service.handle("POST", "/v1/validate", &body);
        check(status == 200, format!("{}: status {status}: {v}", raw.respondent_id))?;
        let reasons: Vec<String> = v["reasons"]
            .as_array()
            .ok_or("reasons is not a list")?
            .iter()
            .map(|r| r.as_str().unwrap_or_default().to_string())
            .collect();
        let served = vec![
            v["verdict"].as_str().unwrap_or_default().to_string(),
            v["prob_fake"].to_string(),
            v["logic_score"].to_string(),
            reasons.join(";"),
        ];
        let filtered = from_filter.get(&raw.respondent_id).ok_or("missing row")?;
        check(&served == filtered, format!("{}: serve {served:?} vs filter {filtered:?}", raw.respondent_id))?;
        if served[0] == "fake" {
            flagged += 1;
        }
    }
    Ok(format!("100/100 verdicts identical ({flagged} flagged)"))
}

// 10. Boosting never increases the training log-loss.
fn criterion_10() -> Outcome {
    let schema = example_schema();
    let rules = canonical_rules();
    let mut worst_step = f64::NEG_INFINITY;
    for seed in 1..=10u64 {
        let data = generate_dataset(&schema, &SynthConfig { n: 500, fake_fraction: 0.15, seed, ..Default::default() })
            .map_err(|e| e.to_string())?;
        let config = PipelineConfig {
            model: ModelSpec::default_for(ModelKind::Gbt, seed),
            seed,
            ..Default::default()
        };
        let prepared = prepare_data(&schema, &data.responses, &data.labels, &rules, &config).map_err(|e| e.to_string())?;
        let gbt_cfg = GbtConfig::default();
        check(gbt_cfg.rounds == 50, "default rounds")?;
        let model = train_gbt(&prepared.train, &gbt_cfg).map_err(|e| e.to_string())?;
        let curve = model.staged_log_loss(&prepared.train).map_err(|e| e.to_string())?;
        check(curve.len() == 51, "curve length")?;
        for (k, w) in curve.windows(2).enumerate() {
            check(w[1] <= w[0], format!("seed {seed}, round {}: {} -> {}", k + 1, w[0], w[1]))?;
            worst_step = worst_step.max(w[1] - w[0]);
        }
    }
    Ok(format!("non-increasing over 50 rounds for 10 seeds (largest step {worst_step:.3e})"))
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("metric arithmetic", criterion_1),
        ("confusion rendering", criterion_2),
        ("synthetic benchmark", criterion_3),
        ("rule-engine corpus", criterion_4),
        ("split-search oracle", criterion_5),
        ("gradient check", criterion_6),
        ("determinism", criterion_7),
        ("stratification", criterion_8),
        ("serve/filter parity", criterion_9),
        ("boosting log-loss", criterion_10),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
