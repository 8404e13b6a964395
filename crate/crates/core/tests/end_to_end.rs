use integrity_core::eval::gini_importance;
use integrity_core::ingest::{clean_response, fit_encoding, preprocess, Dataset};
use integrity_core::model::{train_forest, ForestConfig, ModelKind, ModelSpec};
use integrity_core::pipeline::{prepare_data, run_training, PipelineConfig};
use integrity_core::rng::Rng;
use integrity_core::rules::{blank_fraction, check_contradictions};
use integrity_core::synth::{
    canonical_rules, example_schema, generate_dataset, generate_fake, generate_genuine,
    FakeBehavior, SynthConfig,
};
use integrity_core::Label;

#[test]
fn synthetic_behaviors_over_many_seeds() {
    let schema = example_schema();
    let rules = canonical_rules();
    let mut blank_heavy = Vec::new();
    for seed in 0..1000u64 {
        let mut rng = Rng::seed_from_u64(seed);
        let g = clean_response(&generate_genuine(&schema, &mut rng), &schema, 0);
        assert!(check_contradictions(&g, &rules).unwrap().is_empty(), "seed {seed}");
        assert!(blank_fraction(&g, &schema) < 0.5, "seed {seed}");
        let c = clean_response(&generate_fake(&schema, FakeBehavior::Contradictor, &mut rng), &schema, 0);
        assert!(!check_contradictions(&c, &rules).unwrap().is_empty(), "seed {seed}");
        let b = clean_response(&generate_fake(&schema, FakeBehavior::BlankHeavy, &mut rng), &schema, 0);
        blank_heavy.push(blank_fraction(&b, &schema));
    }
    let mean = blank_heavy.iter().sum::<f64>() / blank_heavy.len() as f64;
    assert!((mean - 0.6).abs() <= 0.1, "blank-heavy mean {mean}");
}

#[test]
fn default_dataset_shape() {
    let schema = example_schema();
    let d = generate_dataset(&schema, &SynthConfig::default()).unwrap();
    assert_eq!(d.responses.len(), 99);
    assert_eq!(d.labels.iter().filter(|l| l.is_fake()).count(), 14);
    assert_eq!(d.behaviors.iter().flatten().count(), 14);
}

#[test]
fn train_all_models_and_repeat() {
    let schema = example_schema();
    let rules = canonical_rules();
    let data = generate_dataset(&schema, &SynthConfig { n: 500, fake_fraction: 0.15, seed: 42, ..Default::default() }).unwrap();
    for kind in [ModelKind::Forest, ModelKind::Logreg, ModelKind::Gbt] {
        let config = PipelineConfig { model: ModelSpec::default_for(kind, 42), seed: 42, ..Default::default() };
        let a = run_training(&schema, &data.responses, &data.labels, &rules, &config).unwrap();
        let b = run_training(&schema, &data.responses, &data.labels, &rules, &config).unwrap();
        assert_eq!(a.artifact.to_json().unwrap(), b.artifact.to_json().unwrap());
        assert_eq!(a.report, b.report);
        assert_eq!(a.report.n_train + a.report.n_test, 500);
        assert!(a.report.accuracy >= 0.85, "{kind:?}: {}", a.report.accuracy);
        let total: f64 = a.report.importances.iter().map(|i| i.value).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(a.scatter.len(), a.report.n_test);
    }
}

#[test]
fn encoding_is_fit_on_training_rows_only() {
    let schema = example_schema();
    let data = generate_dataset(&schema, &SynthConfig { n: 200, seed: 7, ..Default::default() }).unwrap();
    let prepared = prepare_data(&schema, &data.responses, &data.labels, &canonical_rules(), &PipelineConfig::default()).unwrap();
    let train_clean: Vec<_> = prepared.train_idx.iter().map(|&i| prepared.scored[i].clean.clone()).collect();
    assert_eq!(prepared.encoding, fit_encoding(&schema, &train_clean));

    // A value never seen in training encodes to the reserved code 0.
    let subset: Vec<_> = data.responses.iter().take(20).map(|r| preprocess(r, &schema, 0)).collect();
    let enc = fit_encoding(&schema, &subset);
    assert_eq!(enc.code("industry_type", "a value no respondent gave"), 0);
}

/// Label depends only on feature `signal`; every other feature is noise.
fn planted(seed: u64, d: usize, signal: usize) -> Dataset {
    let mut rng = Rng::seed_from_u64(seed);
    let mut ds = Dataset::new((0..d).map(|i| format!("f{i}")).collect());
    let mut labels = Vec::new();
    for i in 0..300 {
        let row: Vec<f64> = (0..d).map(|_| rng.next_f64()).collect();
        labels.push(Label::from_bool(row[signal] > 0.7));
        ds.rows.push(row);
        ds.row_ids.push(i.to_string());
    }
    ds.with_labels(labels).unwrap()
}

#[test]
fn planted_signal_ranks_first() {
    for seed in 0..10u64 {
        let signal = (seed % 6) as usize;
        let ds = planted(seed, 6, signal);
        let forest = train_forest(&ds, &ForestConfig { seed, ..Default::default() }).unwrap();
        let top = gini_importance(&forest, &ds.feature_names);
        assert_eq!(top.top().unwrap().feature, format!("f{signal}"), "seed {seed}");
    }
}
