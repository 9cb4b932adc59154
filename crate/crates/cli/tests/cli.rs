use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &["--preset", "desk", "--codebook-size", "4", "--widths", "8,8,8,4", "--iters", "30"];

fn xview(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xview")).args(args).output().expect("run xview")
}

fn ok(args: &[&str]) -> Output {
    let out = xview(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn with_params<'a>(base: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(SMALL).copied().collect()
}

fn synth(dir: &Path) -> String {
    let out = dir.join("data");
    let out = out.to_str().unwrap();
    ok(&["synth", "--out", out, "--classes", "3", "--views", "3", "--samples", "2", "--transfer-videos", "8"]);
    format!("{out}/manifest.json")
}

#[test]
fn every_subcommand_runs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let (codebook, net, encoded, split) = (path("codebook.txt"), path("net.txt"), path("enc"), path("split.json"));

    ok(&with_params(&["train-codebook", "--manifest", &manifest, "--out", &codebook]));
    let centroids = xview::io::read_matrix(Path::new(&codebook)).unwrap();
    assert_eq!(centroids.ncols(), 4);

    ok(&with_params(&["train-viewnet", "--manifest", &manifest, "--codebook", &codebook, "--out", &net]));
    assert_eq!(xview::io::read_network(Path::new(&net)).unwrap().feature_len(), 28);

    let pretrained = ["--codebook", codebook.as_str(), "--viewnet", net.as_str()];
    let mut args = with_params(&["encode", "--manifest", &manifest, "--out", &encoded]);
    args.extend(pretrained);
    ok(&args);
    let dict = xview::io::read_matrix(&Path::new(&encoded).join("dictionary.txt")).unwrap();
    let labels = xview::io::read_labels(&Path::new(&encoded).join("labels.txt")).unwrap();
    assert_eq!(dict.ncols(), 18);
    assert_eq!(labels.len(), 18);

    let mut args = with_params(&[
        "run-split", "--manifest", &manifest, "--train-views", "0,2", "--test-view", "1", "--modality", "depth",
        "--out", &split,
    ]);
    args.extend(pretrained);
    let out = ok(&args);
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&split).unwrap()).unwrap();
    assert_eq!(printed, saved);
    assert_eq!(saved["test_view"], 1);
    assert_eq!(saved["modality"], "depth");
}

#[test]
fn run_protocol_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let mut reports = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        ok(&with_params(&["run-protocol", "--manifest", &manifest, "--out", out.to_str().unwrap(), "--seed", "3"]));
        reports.push(std::fs::read(out).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let report = xview::io::parse_report(std::str::from_utf8(&reports[0]).unwrap()).unwrap();
    assert_eq!(report.records.len(), 3 * 3);
    assert_eq!(report.parameters.seed, 3);
}

#[test]
fn synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = std::fs::read(synth(a.path())).unwrap();
    let mb = std::fs::read(synth(b.path())).unwrap();
    assert_eq!(ma, mb);
    let sample = "data/depth/c01_v2_s01.txt";
    assert_eq!(std::fs::read(a.path().join(sample)).unwrap(), std::fs::read(b.path().join(sample)).unwrap());
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let out = dir.path().join("x.json");
    let out = out.to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        with_params(&["run-split", "--manifest", &manifest, "--train-views", "0,1", "--test-view", "1", "--out", out]),
        with_params(&["run-split", "--manifest", &manifest, "--train-views", "0,x", "--test-view", "2"]),
        with_params(&["run-split", "--manifest", &manifest, "--train-views", "0,1", "--test-view", "2", "--modality", "ir"]),
        vec!["run-protocol", "--manifest", &manifest, "--out", out, "--lambda1", "2"],
        vec!["run-protocol", "--manifest", &manifest, "--out", out, "--widths", "1,2,3"],
        vec!["run-protocol", "--manifest", &manifest, "--out", out, "--codebook-size", "10"],
    ];
    for args in cases {
        assert_eq!(xview(&args).status.code(), Some(2), "{args:?}");
    }

    let broken = dir.path().join("data/broken.json");
    std::fs::write(&broken, r#"{"classes": 2, "views": ["a"], "samples": [{"id": "x"}]}"#).unwrap();
    let code = xview(&["run-protocol", "--manifest", broken.to_str().unwrap(), "--out", out]).status.code();
    assert_eq!(code, Some(2));

    let codebook = dir.path().join("bad.txt");
    std::fs::write(&codebook, "2 2\n1 2\n3\n").unwrap();
    let args = with_params(&[
        "train-viewnet", "--manifest", &manifest, "--codebook", codebook.to_str().unwrap(), "--out", out,
    ]);
    assert_eq!(xview(&args).status.code(), Some(2));
}

#[test]
fn io_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope/manifest.json");
    let code = xview(&["run-protocol", "--manifest", missing.to_str().unwrap(), "--out", "r.json"]).status.code();
    assert_eq!(code, Some(1));

    let manifest = synth(dir.path());
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = blocker.join("report.json");
    let args = with_params(&["run-protocol", "--manifest", &manifest, "--out", out.to_str().unwrap()]);
    assert_eq!(xview(&args).status.code(), Some(1));
}
