use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL_MODEL: &[&str] = &[
    "--hidden_dim",
    "16",
    "--embed_dim",
    "8",
    "--learning_rate",
    "0.01",
    "--pretrain_epochs",
    "2",
    "--sea_epochs",
    "2",
    "--jobs",
    "2",
];

fn sea(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sea"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = sea(args);
    assert!(
        out.status.success(),
        "sea {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth_corpus(dir: &Path, utts: &str) -> String {
    let corpus = dir.join("corpus");
    ok(&["synth", "--out", corpus.to_str().unwrap(), "--num-phones", "3", "--num-utts", utts, "--seed", "5"]);
    corpus.join("sea.conf").to_str().unwrap().to_string()
}

fn run_pipeline(conf: &str, workdir: &Path, extra: &[&str]) -> String {
    let mut args = vec!["pipeline", "--config", conf, "--workdir", workdir.to_str().unwrap()];
    args.extend_from_slice(SMALL_MODEL);
    args.extend_from_slice(extra);
    ok(&args)
}

const ARTIFACTS: &[&str] = &[
    "features.tsv",
    "features/utt0000.seaf",
    "pretrain.seam",
    "model.seam",
    "train_loss.tsv",
    "embeddings/utt0003.seaf",
    "segments.txt",
    "clusters.txt",
    "words.txt",
    "metrics.txt",
    "metrics.tsv",
];

#[test]
fn missing_manifest_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere").join("manifest.tsv");
    let out = sea(&[
        "features",
        "--manifest",
        missing.to_str().unwrap(),
        "--workdir",
        dir.path().join("w").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(missing.to_str().unwrap()), "{err}");
    assert!(err.contains("features"), "{err}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "no_such_key = 1\n").unwrap();
    let out = sea(&["segment", "--config", conf.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn pipeline_end_to_end_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let conf = synth_corpus(dir.path(), "6");
    let work = dir.path().join("work");
    let first = run_pipeline(&conf, &work, &[]);
    assert!(first.contains("evaluate: done"), "{first}");
    for a in ARTIFACTS {
        assert!(work.join(a).exists(), "missing {a}");
    }
    let metrics = fs::read_to_string(work.join("metrics.txt")).unwrap();
    let coverage: f64 = metrics
        .lines()
        .find_map(|l| l.strip_prefix("coverage: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((coverage - 1.0).abs() < 1e-9, "{metrics}");

    let before: Vec<Vec<u8>> = ARTIFACTS.iter().map(|a| fs::read(work.join(a)).unwrap()).collect();
    let second = run_pipeline(&conf, &work, &[]);
    assert_eq!(second.matches("skipped").count(), 8, "{second}");
    let after: Vec<Vec<u8>> = ARTIFACTS.iter().map(|a| fs::read(work.join(a)).unwrap()).collect();
    assert_eq!(before, after);

    let forced = run_pipeline(&conf, &work, &["--force"]);
    assert!(!forced.contains("skipped"), "{forced}");
    let rerun: Vec<Vec<u8>> = ARTIFACTS.iter().map(|a| fs::read(work.join(a)).unwrap()).collect();
    assert_eq!(before, rerun);
}

#[test]
fn fixed_seed_gives_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let conf = synth_corpus(dir.path(), "5");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_pipeline(&conf, &a, &["--jobs", "1"]);
    run_pipeline(&conf, &b, &["--jobs", "4"]);
    for name in ARTIFACTS.iter().filter(|n| !n.contains("utt0003")) {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn single_stages_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let conf = synth_corpus(dir.path(), "3");
    let work = dir.path().join("work");
    let w = work.to_str().unwrap();
    let common = ["--config", conf.as_str(), "--workdir", w, "--embed_source", "features"];
    for stage in ["features", "embed", "segment", "cluster", "discover", "evaluate"] {
        let mut args = vec![stage];
        args.extend_from_slice(&common);
        let out = ok(&args);
        assert!(out.contains(&format!("{stage}: done")), "{out}");
    }
    let png = dir.path().join("u.ppm");
    let mut args = vec!["plot", "--utt", "utt0001", "--out", png.to_str().unwrap()];
    args.extend_from_slice(&common);
    ok(&args);
    let bytes = fs::read(&png).unwrap();
    assert!(bytes.starts_with(b"P6 "));
    let header_end = bytes.iter().position(|&b| b == b'\n').unwrap();
    let n: usize = std::str::from_utf8(&bytes[3..header_end])
        .unwrap()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(bytes.len(), header_end + 1 + 3 * n * n);
}

#[test]
fn stage_without_inputs_fails_with_stage_name() {
    let dir = tempfile::tempdir().unwrap();
    let out = sea(&["cluster", "--workdir", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage cluster failed"), "{err}");
}
