use std::fs;
use std::path::{Path, PathBuf};

use flashnet::harness::mnist::{load_mnist, load_set, read_images, read_labels, write_set, MnistSet};
use flashnet::harness::{run_experiment, Command, ExperimentConfig};
use flashnet::Error;

fn data_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn tiny_set() -> MnistSet {
    MnistSet {
        rows: 2,
        cols: 3,
        images: vec![vec![0, 1, 127, 128, 200, 255], vec![255, 0, 0, 64, 0, 9]],
        labels: vec![3, 9],
    }
}

#[test]
fn binarize_threshold_rules() {
    let s = tiny_set();
    assert_eq!(s.binarize(0.5)[0], vec![false, false, false, true, true, true]);
    assert_eq!(s.binarize(0.0)[0], vec![false, true, true, true, true, true]);
    assert_eq!(s.binarize(1.0)[1], vec![true, false, false, false, false, false]);
}

#[test]
fn idx_round_trip_plain_and_gzip() {
    let dir = tempfile::tempdir().unwrap();
    for ext in ["", ".gz"] {
        let (i, l) = (dir.path().join(format!("img{ext}")), dir.path().join(format!("lab{ext}")));
        write_set(&tiny_set(), &i, &l).unwrap();
        assert_eq!(load_set(&i, &l).unwrap(), tiny_set());
    }
}

#[test]
fn idx_format_errors_carry_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let (i, l) = (dir.path().join("img"), dir.path().join("lab"));
    write_set(&tiny_set(), &i, &l).unwrap();

    let mut bad = fs::read(&i).unwrap();
    bad[3] = 0x01;
    fs::write(dir.path().join("bad_magic"), &bad).unwrap();
    assert!(matches!(read_images(&dir.path().join("bad_magic")), Err(Error::Format { offset: 0, .. })));

    let short = &fs::read(&i).unwrap()[..20];
    fs::write(dir.path().join("short"), short).unwrap();
    assert!(matches!(read_images(&dir.path().join("short")), Err(Error::Format { offset: 20, .. })));

    let mut lab = fs::read(&l).unwrap();
    lab[9] = 12;
    fs::write(dir.path().join("bad_label"), &lab).unwrap();
    assert!(matches!(read_labels(&dir.path().join("bad_label")), Err(Error::Format { offset: 9, .. })));

    let mut one = tiny_set();
    one.truncate(1);
    let l1 = dir.path().join("lab1");
    write_set(&one, &dir.path().join("img1"), &l1).unwrap();
    assert!(matches!(load_set(&i, &l1), Err(Error::Data(_))));
}

#[test]
fn mnist_test_split_and_subset_round_trip() {
    let (_, test) = load_mnist(&data_dir()).unwrap();
    assert_eq!(test.len(), 10_000);
    assert_eq!((test.rows, test.cols), (28, 28));
    assert_eq!(test.class_counts(), [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009]);

    let mut sub = test.clone();
    sub.truncate(100);
    let dir = tempfile::tempdir().unwrap();
    let (i, l) = (dir.path().join("t.gz"), dir.path().join("l.gz"));
    write_set(&sub, &i, &l).unwrap();
    let back = load_set(&i, &l).unwrap();
    assert_eq!(back.binarize(0.5), sub.binarize(0.5));
    assert_eq!(back, sub);
}

#[test]
fn config_overlays_defaults() {
    let cfg = ExperimentConfig::from_toml(
        "seed = 9\n[import]\naccuracy = 0.1\n[neurons.output]\nsettle_tau = 1e-7\n[perf]\nlatency_mode = \"settling_model\"\n",
    )
    .unwrap();
    let d = ExperimentConfig::default();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.import.accuracy, 0.1);
    assert_eq!(cfg.import.tuned_fraction, d.import.tuned_fraction);
    assert_eq!(cfg.neurons.output.settle_tau, 1e-7);
    assert_eq!(cfg.neurons.output.r_f, d.neurons.output.r_f);
    assert_eq!(cfg.neurons.hidden, d.neurons.hidden);
    // the defaults survive a TOML round trip
    assert_eq!(ExperimentConfig::from_toml(&d.to_toml().unwrap()).unwrap(), d);
}

#[test]
fn config_rejects_bad_values() {
    for text in ["threshold = 2.0", "import_seeds = []", "[import]\ntuned_fraction = 0.0", "seed = \"x\"", "[[oops"] {
        assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
    }
}

fn small_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        data_dir: data_dir(),
        out_dir: out.to_path_buf(),
        train_limit: Some(3000),
        test_limit: Some(300),
        import_seeds: vec![1, 2],
        probe_patterns: 20,
        ..ExperimentConfig::default()
    }
}

#[test]
fn missing_prerequisites_name_the_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for (cmd, want) in [(Command::Import, "train"), (Command::Evaluate, "train"), (Command::Power, "import")] {
        match run_experiment(&cfg, cmd) {
            Err(Error::MissingArtifact { command, .. }) => assert_eq!(command, want),
            other => panic!("{cmd}: {other:?}"),
        }
    }
}

#[test]
fn missing_data_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { data_dir: dir.path().join("nowhere"), ..small_config(dir.path()) };
    let err = run_experiment(&cfg, Command::Train).unwrap_err().to_string();
    assert!(err.contains("fetch"), "{err}");
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn identical_config_gives_identical_artifacts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let cfg = small_config(dir.path());
        let s = run_experiment(&cfg, Command::Full).unwrap().summary;
        assert!(s["software_accuracy"].as_f64().unwrap() > 0.8);
        run_experiment(&cfg, Command::Project).unwrap();
    }
    // reports embed the out_dir, so compare with it normalised
    let norm = |dir: &Path| -> Vec<(String, Vec<u8>)> {
        let tag = dir.display().to_string();
        listing(dir)
            .into_iter()
            .map(|(n, bytes)| match String::from_utf8(bytes) {
                Ok(text) => (n, text.replace(&tag, "OUT").into_bytes()),
                Err(e) => (n, e.into_bytes()),
            })
            .collect()
    };
    let (la, lb) = (norm(a.path()), norm(b.path()));
    assert_eq!(la.iter().map(|x| &x.0).collect::<Vec<_>>(), lb.iter().map(|x| &x.0).collect::<Vec<_>>());
    for ((name, x), (_, y)) in la.iter().zip(&lb) {
        assert!(x == y, "{name} differs");
    }
    for f in ["weights.fgw", "evaluation.json", "output_histograms.csv", "perf.json", "projection.csv", "summary.json"] {
        assert!(la.iter().any(|(n, _)| n == f), "{f} missing");
    }

    // evaluating twice with the same noise seed rewrites identical bytes
    let before = fs::read(a.path().join("evaluation.json")).unwrap();
    run_experiment(&small_config(a.path()), Command::Evaluate).unwrap();
    assert_eq!(before, fs::read(a.path().join("evaluation.json")).unwrap());
}

#[test]
fn reports_embed_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    run_experiment(&cfg, Command::Project).unwrap();
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("projection.json")).unwrap()).unwrap();
    assert_eq!(doc["command"], "project");
    assert_eq!(doc["config"]["seed"], cfg.seed);
    assert_eq!(doc["config"]["import"]["accuracy"], cfg.import.accuracy);
    let csv = fs::read_to_string(dir.path().join("projection.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("ESF3,55 nm,projected,")));
    assert_eq!(csv.lines().count(), 1 + 2 + 3);
}

#[test]
fn command_names_parse() {
    for c in Command::ALL {
        assert_eq!(c.name().parse::<Command>().unwrap(), c);
    }
    assert!("nope".parse::<Command>().is_err());
}
