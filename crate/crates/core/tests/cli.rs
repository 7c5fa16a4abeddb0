use std::fs;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use snn_landscape::io::{read_operator, read_points};
use snn_landscape::snn::ReluNet;
use snn_landscape::trajectory::Trajectory;

fn snn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snn")).args(args).output().expect("binary runs")
}

fn snn_stdin(args: &[&str], input: &[u8]) -> Output {
    use std::io::Write;
    let mut child = Command::new(env!("CARGO_BIN_EXE_snn"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "stderr: {text}");
    serde_json::from_str(text.trim()).unwrap()
}

/// Writes a 30-point sphere cloud and its kNN operator into `dir`.
fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let pts = dir.join("pts.csv");
    let an = dir.join("an.json");
    assert!(snn(&["graph", "sample-sphere", "--n", "30", "--seed", "4", "--out", s(&pts)]).status.success());
    let out = snn(&["graph", "build", "--input", s(&pts), "--rule", "knn", "--k", "5", "--out", s(&an)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (pts, an)
}

#[test]
fn unknown_flag_exits_1_with_json() {
    let out = snn(&["spectrum", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "input");
}

#[test]
fn missing_file_is_input_error() {
    let out = snn(&["spectrum", "--operator", "/nonexistent/an.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_json(&out)["message"].as_str().unwrap().contains("nonexistent"));
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(snn(&["--help"]).status.code(), Some(0));
    assert_eq!(snn(&["--version"]).status.code(), Some(0));
}

#[test]
fn spectrum_top_is_descending() {
    let dir = tempfile::tempdir().unwrap();
    let (_, an) = fixture(dir.path());
    let out = snn(&["spectrum", "--operator", s(&an), "--top", "5"]);
    assert!(out.status.success());
    let vals: Vec<f64> = String::from_utf8(out.stdout).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(vals.len(), 5);
    assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    // connected graph, shift 1.5
    assert!((vals[0] - 2.5).abs() < 1e-10);
}

#[test]
fn piped_pipeline_equals_one_shot() {
    let dir = tempfile::tempdir().unwrap();
    let (pts, _) = fixture(dir.path());
    let built = snn(&["graph", "build", "--input", s(&pts), "--rule", "knn", "--k", "5"]);
    assert!(built.status.success());
    let piped = snn_stdin(&["spectrum", "--operator", "-"], &built.stdout);
    let direct = snn(&["spectrum", "--input", s(&pts), "--rule", "knn", "--k", "5"]);
    assert!(piped.status.success() && direct.status.success());
    assert_eq!(piped.stdout, direct.stdout);
}

#[test]
fn operator_file_has_header_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let (_, an) = fixture(dir.path());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&an).unwrap()).unwrap();
    assert_eq!(v["rule"], "knn");
    assert_eq!(v["k"], 5);
    assert_eq!(v["a"], 1.5);
    assert_eq!(v["n"], 30);
    assert!(v["meta"]["config_hash"].as_str().unwrap().len() == 16);
    assert_eq!(read_operator(&an).unwrap().n(), 30);
}

#[test]
fn gram_rule_rejects_shift() {
    let dir = tempfile::tempdir().unwrap();
    let (pts, _) = fixture(dir.path());
    let out = snn(&["graph", "build", "--input", s(&pts), "--rule", "gram", "--shift", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    let out = snn(&["spectrum", "--input", s(&pts), "--rule", "gram", "--top", "3"]);
    assert!(out.status.success());
    // three-dimensional points: rank 3, trace n
    let vals: Vec<f64> = String::from_utf8(out.stdout).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    assert!((vals.iter().sum::<f64>() - 30.0).abs() < 1e-9);
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        assert!(snn(&["graph", "sample-sphere", "--n", "50", "--seed", "11", "--out", s(p)])
            .status
            .success());
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("# seed=11,config_hash="));
    assert_eq!(read_points(&a).unwrap().n(), 50);
}

#[test]
fn ambient_train_from_saddle_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let (_, an) = fixture(dir.path());
    let traj = dir.path().join("traj.csv");
    let y = dir.path().join("y.csv");
    let out = snn(&[
        "ambient-train",
        "--operator",
        s(&an),
        "--r",
        "2",
        "--init",
        "saddle:1,3",
        "--lr",
        "0.05",
        "--iters",
        "400",
        "--schedule",
        "cosine",
        "--labels",
        "--escape-step",
        "0.1",
        "--seed",
        "2",
        "--out",
        s(&traj),
        "--factor-out",
        s(&y),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&traj).unwrap();
    assert!(text.lines().next().unwrap().starts_with("# seed=2,"));
    let t = Trajectory::read_csv(text.as_bytes()).unwrap();
    assert!(t.len() >= 41);
    let first = t.first().unwrap();
    // recorded after the escape step has moved the iterate off the saddle
    assert!(first.escape_event && !first.labels.is_empty());
    assert!(t.last().unwrap().loss < first.loss);
    let shape: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("y.csv.json")).unwrap()).unwrap();
    assert_eq!(shape, serde_json::json!({"n": 30, "r": 2}));
}

#[test]
fn divergence_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (_, an) = fixture(dir.path());
    let out = snn(&[
        "ambient-train",
        "--operator",
        s(&an),
        "--r",
        "2",
        "--init",
        "random",
        "--lr",
        "50",
        "--iters",
        "200",
        "--out",
        s(&dir.path().join("t.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "numerical");
}

#[test]
fn bad_saddle_index_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let (_, an) = fixture(dir.path());
    let out = snn(&["ambient-train", "--operator", s(&an), "--r", "2", "--init", "saddle:0,2"]);
    assert_eq!(out.status.code(), Some(1));
    let out = snn(&["ambient-train", "--operator", s(&an), "--r", "2", "--init", "saddle:1,99"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let (_, an) = fixture(dir.path());
    let conf = dir.path().join("run.conf");
    let traj = dir.path().join("traj.csv");
    fs::write(
        &conf,
        format!("operator = {}\nr = 2\ninit = optimal\nlr = 0.01\niters = 100\nout = {}\n", s(&an), s(&traj)),
    )
    .unwrap();
    let out = snn(&["ambient-train", "--config", s(&conf), "--iters", "30"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = Trajectory::read_csv(fs::read_to_string(&traj).unwrap().as_bytes()).unwrap();
    assert_eq!(t.last().unwrap().iter, 30);
    assert!(t.records.iter().all(|r| r.grad_norm < 1e-10));

    fs::write(&conf, "no_such_key = 1\n").unwrap();
    assert_eq!(snn(&["ambient-train", "--config", s(&conf)]).status.code(), Some(1));
}

#[test]
fn snn_train_writes_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (pts, an) = fixture(dir.path());
    let net = dir.path().join("net.json");
    let traj = dir.path().join("traj.csv");
    let out = snn(&[
        "snn-train",
        "--cloud",
        s(&pts),
        "--operator",
        s(&an),
        "--r",
        "2",
        "--width",
        "16",
        "--depth",
        "2",
        "--method",
        "adam",
        "--lr",
        "1e-3",
        "--iters",
        "50",
        "--pretrain",
        "optimal",
        "--pretrain-iters",
        "100",
        "--out",
        s(&net),
        "--traj",
        s(&traj),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&net).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["depth"], 2);
    assert_eq!(v["widths"], serde_json::json!([3, 16, 2]));
    assert!(v["meta"]["version"].is_string());
    let parsed: ReluNet = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.output_dim(), 2);
    let t = Trajectory::read_csv(fs::read_to_string(&traj).unwrap().as_bytes()).unwrap();
    assert_eq!(t.last().unwrap().iter, 50);
}

#[test]
fn snn_train_rejects_mismatched_cloud() {
    let dir = tempfile::tempdir().unwrap();
    let (_, an) = fixture(dir.path());
    let other = dir.path().join("other.csv");
    assert!(snn(&["graph", "sample-sphere", "--n", "20", "--seed", "1", "--out", s(&other)])
        .status
        .success());
    let out = snn(&["snn-train", "--cloud", s(&other), "--operator", s(&an), "--r", "2", "--out", "-"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn classify_json_schema() {
    let dir = tempfile::tempdir().unwrap();
    let (_, an) = fixture(dir.path());
    let sad = dir.path().join("sad");
    let out =
        snn(&["landscape", "saddles", "--operator", s(&an), "--r", "2", "--all-subsets", "--out", s(&sad)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let index: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sad.join("index.json")).unwrap()).unwrap();
    let entries = index["saddles"].as_array().unwrap();
    assert_eq!(entries.len(), 30 * 29 / 2);
    assert_eq!(entries.iter().filter(|e| e["optimal"] == true).count(), 1);
    assert!(entries.iter().all(|e| e["grad_norm"].as_f64().unwrap() < 1e-9));

    let out = snn(&[
        "landscape",
        "classify",
        "--factor",
        s(&sad.join("saddle_1-2.csv")),
        "--operator",
        s(&an),
        "--mu",
        "0.05",
        "--alpha",
        "1e-3",
        "--beta",
        "1.2",
        "--gamma",
        "1.2",
        "--json",
    ]);
    assert!(out.status.success());
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let keys: Vec<&String> = rep.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["distance_to_opt", "escape", "grad_norm", "labels"]);
    assert_eq!(rep["labels"], serde_json::json!(["R1"]));
    assert!(rep["escape"]["hess_value"].is_number());
    assert!(rep["escape"]["which"].is_string());

    let out = snn(&[
        "landscape",
        "classify",
        "--factor",
        s(&sad.join("saddle_2-3.csv")),
        "--operator",
        s(&an),
        "--json",
    ]);
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rep["labels"].as_array().unwrap().contains(&"R2".into()));
    assert!(rep["escape"]["hess_value"].as_f64().unwrap() < 0.0);
}

#[test]
fn experiment_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = snn(&["experiment", "fig1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn experiment_fig1_small_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = snn(&[
            "experiment",
            "fig1",
            "--seed",
            "3",
            "--n",
            "60",
            "--k",
            "8",
            "--width",
            "32",
            "--iters",
            "200",
            "--out",
            s(&out_dir),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["fig1_eigensolver.csv", "fig1_snn.csv", "fig1_summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let text = fs::read_to_string(a.join("fig1_snn.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# seed=3,config_hash="));
    assert_eq!(lines[1], "# x,y,z,value");
    assert_eq!(lines.len(), 62);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("fig1_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["trivial_constant_sign"], true);
}
