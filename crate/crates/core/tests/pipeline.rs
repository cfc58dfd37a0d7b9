use std::path::Path;

use inspection_core::forest::Scenario;
use inspection_core::graph::FeatureView;
use inspection_core::ingest::write_elliptic;
use inspection_core::pipeline::{self, DataSource, PipelineConfig, RawConfig};
use inspection_core::Error;

const ARTIFACTS: [&str; 6] = [
    "encoder.bin",
    "forest.bin",
    "dgi_loss.csv",
    "report.csv",
    "per_timestep_f1.csv",
    "confusion.csv",
];

fn small(out: &Path, scenario: &str) -> PipelineConfig {
    let mut raw = RawConfig::default();
    raw.set("synth.num_timesteps", "4");
    raw.set("synth.nodes_per_step", "40");
    raw.set("synth.edge_density", "0.05");
    raw.set("synth.unknown_fraction", "0.2");
    raw.set("train_count", "2");
    raw.set("epochs", "4");
    raw.set("trees", "15");
    raw.set("seed", "7");
    raw.set("scenario", scenario);
    raw.set("output_dir", &out.to_string_lossy());
    raw.resolve().unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn staged_run_matches_pipeline() {
    let root = tempfile::tempdir().unwrap();
    let a = small(&root.path().join("a"), "af-dne");
    let b = small(&root.path().join("b"), "af-dne");
    let summary = pipeline::cmd_pipeline(&a).unwrap();

    pipeline::cmd_validate(&b).unwrap();
    pipeline::cmd_train_dgi(&b).unwrap();
    pipeline::cmd_embed(&b).unwrap();
    pipeline::cmd_train_rf(&b).unwrap();
    let report = pipeline::cmd_evaluate(&b).unwrap();
    assert_eq!(report, summary.report);

    for f in ARTIFACTS {
        assert_eq!(read(&a.output_dir.join(f)), read(&b.output_dir.join(f)), "{f}");
    }
    for t in 1..=4 {
        let f = format!("embeddings/ts_{t:02}.csv");
        assert_eq!(read(&a.output_dir.join(&f)), read(&b.output_dir.join(&f)), "{f}");
    }
    assert_eq!(summary.dgi.loss_rows, 2 * 4);
    assert_eq!(summary.forest.width, 166 + 128);
    assert_eq!(summary.embed.files.len(), 4);
}

#[test]
fn report_files_have_expected_layout() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small(root.path(), "af-dne");
    pipeline::cmd_pipeline(&cfg).unwrap();
    let text = |f: &str| String::from_utf8(read(&root.path().join(f))).unwrap();

    let report = text("report.csv");
    let keys: Vec<&str> = report.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(keys[..5], ["metric", "precision", "recall", "f1", "auc"]);

    let per_step = text("per_timestep_f1.csv");
    let steps: Vec<&str> = per_step.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(steps, ["3", "4"]);
    assert!(per_step.starts_with("time_step,f1\n"));

    assert!(text("confusion.csv").starts_with("tp,fp,fn,tn\n"));
    let loss = text("dgi_loss.csv");
    assert!(loss.starts_with("graph,epoch,loss\n"));
    assert_eq!(loss.lines().count(), 1 + 8);

    let resolved = RawConfig::parse(&text("resolved_config.txt")).unwrap().resolve().unwrap();
    assert_eq!(resolved, cfg);
}

#[test]
fn scenario_widths() {
    let root = tempfile::tempdir().unwrap();
    for (name, scenario, view, width) in [
        ("dne", Scenario::Dne, FeatureView::All, 128),
        ("lf-dne", Scenario::LfDne, FeatureView::Local, 94 + 128),
        ("af-dne", Scenario::AfDne, FeatureView::All, 166 + 128),
    ] {
        let cfg = small(&root.path().join(name), name);
        assert_eq!(cfg.scenario, scenario);
        assert_eq!(cfg.view, view);
        let s = pipeline::cmd_pipeline(&cfg).unwrap();
        assert_eq!(s.forest.width, width, "{name}");
    }
}

#[test]
fn rerun_is_identical() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small(root.path(), "lf-dne");
    pipeline::cmd_pipeline(&cfg).unwrap();
    let first: Vec<Vec<u8>> = ARTIFACTS.iter().map(|f| read(&root.path().join(f))).collect();
    pipeline::cmd_pipeline(&cfg).unwrap();
    let second: Vec<Vec<u8>> = ARTIFACTS.iter().map(|f| read(&root.path().join(f))).collect();
    assert_eq!(first, second);
}

#[test]
fn stages_need_their_inputs() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small(root.path(), "af-dne");
    assert!(matches!(pipeline::cmd_embed(&cfg), Err(Error::Io { .. })));
    pipeline::cmd_train_dgi(&cfg).unwrap();
    assert!(matches!(pipeline::cmd_train_rf(&cfg), Err(Error::Config(_))));
    pipeline::cmd_embed(&cfg).unwrap();
    assert!(matches!(pipeline::cmd_evaluate(&cfg), Err(Error::Io { .. })));

    // an encoder trained on a different view is refused
    let lf = PipelineConfig {
        view: FeatureView::Local,
        ..cfg.clone()
    };
    assert!(matches!(pipeline::cmd_embed(&lf), Err(Error::CorruptArtifact(_))));
}

#[test]
fn damaged_artifacts_are_reported() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small(root.path(), "af-dne");
    pipeline::cmd_pipeline(&cfg).unwrap();
    let forest = root.path().join("forest.bin");
    let mut bytes = read(&forest);
    bytes[0] = b'X';
    std::fs::write(&forest, &bytes).unwrap();
    let err = pipeline::cmd_evaluate(&cfg).unwrap_err();
    assert!(matches!(err, Error::VersionMismatch { .. }));
    assert_eq!(err.exit_code(), 2);

    let encoder = root.path().join("encoder.bin");
    let bytes = read(&encoder);
    std::fs::write(&encoder, &bytes[..bytes.len() / 2]).unwrap();
    let err = pipeline::cmd_embed(&cfg).unwrap_err();
    assert!(matches!(err, Error::CorruptArtifact(_)));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn unlabeled_training_set_is_rejected() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = small(root.path(), "af-dne");
    if let DataSource::Synthetic(spec) = &mut cfg.data {
        spec.unknown_fraction = 1.0;
    }
    pipeline::cmd_train_dgi(&cfg).unwrap();
    pipeline::cmd_embed(&cfg).unwrap();
    assert!(matches!(pipeline::cmd_train_rf(&cfg), Err(Error::EmptyTrainingSet)));
}

#[test]
fn elliptic_files_drive_the_pipeline() {
    let root = tempfile::tempdir().unwrap();
    let synth = small(&root.path().join("data"), "af-dne");
    let DataSource::Synthetic(spec) = &synth.data else {
        unreachable!()
    };
    let ds = inspection_core::ingest::generate_synthetic(spec).unwrap();
    std::fs::create_dir_all(root.path().join("data")).unwrap();
    write_elliptic(&ds, &root.path().join("data")).unwrap();

    let mut raw = RawConfig::default();
    raw.set("data.dir", &root.path().join("data").to_string_lossy());
    raw.set("output_dir", &root.path().join("out").to_string_lossy());
    raw.set("train_count", "2");
    raw.set("epochs", "2");
    raw.set("trees", "5");
    let cfg = raw.resolve().unwrap();
    let summary = pipeline::cmd_validate(&cfg).unwrap();
    assert_eq!(summary.timesteps, 4);
    assert_eq!(summary.nodes, 160);
    assert_eq!(summary.edges, ds.num_edges());
    assert_eq!(summary.raw_edges, Some(ds.num_edges()));
    assert_eq!(summary.unknown, ds.label_counts().unknown);
    pipeline::cmd_pipeline(&cfg).unwrap();

    let bad = PipelineConfig {
        train_count: 4,
        ..cfg
    };
    assert!(matches!(pipeline::cmd_train_dgi(&bad), Err(Error::BadSplit { .. })));
}
