use std::path::Path;
use std::process::{Command, Output};

fn inspection(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inspection"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("run.conf");
    std::fs::write(
        &p,
        "# tiny synthetic run\n\
         synth.num_timesteps = 3\n\
         synth.nodes_per_step = 30\n\
         synth.edge_density = 0.05\n\
         train_count = 2\n\
         trees = 10\n",
    )
    .unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn synth_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_config(dir.path());
    let data = dir.path().join("data");
    let o = inspection(&["synth", "--config", &conf, "--seed", "3", "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    for f in ["elliptic_txs_features.csv", "elliptic_txs_classes.csv", "elliptic_txs_edgelist.csv"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let o = inspection(&["validate", "--data", data.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let s = stdout(&o);
    assert!(s.starts_with("3 timesteps, 90 nodes"), "{s}");
}

#[test]
fn pipeline_with_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_config(dir.path());
    let out = dir.path().join("out");
    let o = inspection(&[
        "pipeline",
        "--config",
        &conf,
        "--epochs",
        "3",
        "--scenario",
        "lf-dne",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("f1 "));
    let resolved = std::fs::read_to_string(out.join("resolved_config.txt")).unwrap();
    for line in ["scenario = lf-dne", "view = lf", "epochs = 3", "seed = 5", "trees = 10"] {
        assert!(resolved.lines().any(|l| l == line), "missing {line:?} in\n{resolved}");
    }

    // the stages run individually against the same directory
    for verb in ["embed", "train-rf", "evaluate"] {
        let o = inspection(&[verb, "--config", &out.join("resolved_config.txt").to_string_lossy()]);
        assert!(o.status.success(), "{verb}: {o:?}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();

    assert_eq!(inspection(&["pipeline", "--bogus"]).status.code(), Some(1));
    assert_eq!(inspection(&["validate", "--scenario", "nope"]).status.code(), Some(1));
    assert_eq!(inspection(&["validate", "--set", "nonsense=1"]).status.code(), Some(1));
    let missing = dir.path().join("missing");
    assert_eq!(inspection(&["validate", "--data", missing.to_str().unwrap()]).status.code(), Some(1));

    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join("encoder.bin"), b"not an encoder").unwrap();
    let o = inspection(&["embed", "--out", out_s]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    assert_eq!(inspection(&["--help"]).status.code(), Some(0));
}
