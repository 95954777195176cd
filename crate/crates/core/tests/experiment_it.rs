use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use turnlens::corpus::{Split, Task};
use turnlens::experiment::{run_experiment, ExperimentConfig, ExperimentError, FeatureSetSpec};
use turnlens::features::{write_fset, FeatureMatrix};
use turnlens::synth::{generate_conversations, generate_dataset, pause_contrast_config, DatasetConfig, Profile};
use turnlens::turntaking::{label_segments, SegmentType, Talkspurt};

fn dataset(dir: &Path, n: usize, factor: f64, seed: u64) -> turnlens::Manifest {
    generate_dataset(&pause_contrast_config(n, factor), dir, seed).unwrap()
}

fn noise_fset(manifest: &turnlens::Manifest, path: &Path, width: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = FeatureMatrix::new("noise", (0..width).map(|i| format!("n{i}")).collect());
    for e in &manifest.entries {
        m.push_row(e.id.clone(), (0..width).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap();
    }
    write_fset(path, &m).unwrap();
}

#[test]
fn ttc_report_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(&dir.path().join("data"), 200, 3.0, 1);
    let cfg = ExperimentConfig::new(
        manifest.path.clone(),
        Task::Complaint,
        vec![FeatureSetSpec::Tt, FeatureSetSpec::Ttc { names: None }],
        dir.path().join("out"),
    );
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.results.len(), 2);
    let ttc = &report.results[1];
    assert_eq!(ttc.feature_set, "TTc");
    assert_eq!(ttc.dim, 6);
    assert_eq!(report.results[0].dim, 64);
    for r in &report.results {
        assert!((r.devel.recompute_uar() - r.devel_uar).abs() < 1e-12);
        assert_eq!(r.train_count + r.devel_count, 200);
        assert_eq!(r.grid.len(), cfg.c_grid.len());
        assert!(cfg.c_grid.contains(&r.best_c));
        assert!(dir.path().join("out").join(&r.model_file).is_file());
    }
    assert_eq!(report.config_hash, cfg.hash());
    for f in ["report.json", "report.txt"] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
}

#[test]
fn noise_features_stay_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(&dir.path().join("data"), 1200, 3.0, 2);
    let fset = dir.path().join("noise.fset");
    noise_fset(&manifest, &fset, 8, 99);
    let cfg = ExperimentConfig::new(
        manifest.path.clone(),
        Task::Complaint,
        vec![FeatureSetSpec::Fset { path: fset, name: None }],
        dir.path().join("out"),
    );
    let report = run_experiment(&cfg).unwrap();
    let uar = report.results[0].devel_uar;
    assert!((0.4..=0.6).contains(&uar), "noise UAR {uar}");
}

#[test]
fn missing_rows_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(&dir.path().join("data"), 20, 2.0, 3);
    let mut m = FeatureMatrix::new("partial", vec!["x".into()]);
    for e in manifest.entries.iter().skip(1) {
        m.push_row(e.id.clone(), vec![0.5]).unwrap();
    }
    let fset = dir.path().join("partial.fset");
    write_fset(&fset, &m).unwrap();
    let cfg = ExperimentConfig::new(
        manifest.path.clone(),
        Task::Request,
        vec![FeatureSetSpec::Fset { path: fset, name: None }],
        dir.path().join("out"),
    );
    match run_experiment(&cfg) {
        Err(e @ ExperimentError::MissingRow { .. }) => assert!(e.is_data_error()),
        other => panic!("expected MissingRow, got {other:?}"),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(&dir.path().join("data"), 10, 2.0, 4);
    let mut cfg = ExperimentConfig::new(manifest.path.clone(), Task::Request, vec![], dir.path().join("out"));
    assert!(matches!(cfg.validate(), Err(ExperimentError::Config(_))));
    cfg.feature_sets = vec![FeatureSetSpec::Tt, FeatureSetSpec::Tt];
    assert!(matches!(cfg.validate(), Err(ExperimentError::Config(_))));
    cfg.feature_sets = vec![FeatureSetSpec::Ttc { names: Some(vec!["Mean9".into()]) }];
    assert!(matches!(run_experiment(&cfg), Err(ExperimentError::UnknownFeature { .. })));
    cfg.feature_sets = vec![FeatureSetSpec::Tt];
    cfg.c_grid = vec![0.0];
    assert!(matches!(cfg.validate(), Err(ExperimentError::Config(_))));
}

#[test]
fn config_file_paths_resolve_against_its_directory() {
    let dir = tempfile::tempdir().unwrap();
    dataset(&dir.path().join("data"), 40, 3.0, 5);
    let text = r#"{"manifest": "data/manifest.json", "task": "complaint",
        "feature_sets": [{"kind": "ttc"}], "output_dir": "out", "seed": 3}"#;
    let path = dir.path().join("exp.json");
    std::fs::write(&path, text).unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    run_experiment(&cfg).unwrap();
    assert!(dir.path().join("out/report.json").is_file());
}

#[test]
fn pause_means_match_profile() {
    let cfg = pause_contrast_config(500, 3.0);
    let convs = generate_conversations(&cfg, 11).unwrap();
    let mut sums: BTreeMap<(String, SegmentType), (f64, usize)> = BTreeMap::new();
    for (conv, (component, _)) in convs.iter().zip(cfg.plan()) {
        let spurts = |ch| -> Vec<Talkspurt> {
            conv.channel(ch)
                .iter()
                .map(|u| Talkspurt { start: u.start, end: u.end, channel: ch })
                .collect()
        };
        let seq = label_segments(
            &spurts(turnlens::corpus::Channel::Customer),
            &spurts(turnlens::corpus::Channel::Agent),
        )
        .unwrap();
        let name = cfg.mixture[component].profile.name.clone();
        for s in &seq.segments {
            let e = sums.entry((name.clone(), s.kind)).or_default();
            e.0 += s.end - s.start;
            e.1 += 1;
        }
    }
    for m in &cfg.mixture {
        for kind in [SegmentType::S5, SegmentType::S7] {
            let (sum, n) = sums[&(m.profile.name.clone(), kind)];
            let want = m.profile.expected_duration(kind);
            let got = sum / n as f64;
            assert!((got - want).abs() <= 0.1 * want, "{} {kind:?}: {got} vs {want}", m.profile.name);
        }
    }
}

#[test]
fn dataset_layout_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 10, 2.0, 6);
    assert_eq!(manifest.entries.len(), 10);
    assert_eq!(std::fs::read_dir(dir.path().join("conversations")).unwrap().count(), 10);
    assert!(dir.path().join("manifest.json").is_file());

    let one_sided = DatasetConfig::new(
        30,
        vec![(1.0, Profile::baseline("only")), (0.0, Profile::baseline("never"))],
    );
    assert_eq!(one_sided.component_counts(), [30, 0]);
    assert!(one_sided.plan().iter().all(|&(c, _)| c == 0));

    let big = pause_contrast_config(1200, 3.0);
    let plan = big.plan();
    let train = plan.iter().filter(|p| p.1 == Split::Train).count();
    assert_eq!(train, 600);
    for c in 0..2 {
        let per: Vec<_> = plan.iter().filter(|p| p.0 == c).collect();
        assert_eq!(per.len(), 600);
        assert_eq!(per.iter().filter(|p| p.1 == Split::Train).count(), 300);
    }
}

#[test]
fn datasets_are_reproducible() {
    let cfg = pause_contrast_config(12, 2.0);
    let a = generate_conversations(&cfg, 21).unwrap();
    let b = generate_conversations(&cfg, 21).unwrap();
    let c = generate_conversations(&cfg, 22).unwrap();
    let json = |v: &[turnlens::Conversation]| v.iter().map(|c| c.to_json()).collect::<Vec<_>>();
    assert_eq!(json(&a), json(&b));
    assert_ne!(json(&a), json(&c));
}
