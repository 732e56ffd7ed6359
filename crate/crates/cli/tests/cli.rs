use std::path::Path;
use std::process::{Command, Output};

fn iris(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iris"))
        .args(args)
        .env_remove("IRIS_LOG")
        .output()
        .expect("spawn iris")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn demo_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = iris(&["demo", "--out-dir", p(dir.path())]);
    assert!(o.status.success(), "{o:?}");
    dir
}

fn field(text: &str, key: &str) -> usize {
    text.split_whitespace()
        .find_map(|w| w.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn budget_throughput_prints_golden_number() {
    let o = iris(&["budget", "throughput"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "526933\n");
}

#[test]
fn budget_latency_and_battery() {
    assert_eq!(stdout(&iris(&["budget", "latency"])), "4 338\n50 573\n100 752\n");
    let scoped = stdout(&iris(&["budget", "latency", "--db-size", "100", "--partition", "4"]));
    assert_eq!(scoped, "100 338\n");
    let table = stdout(&iris(&["budget", "battery", "--table"]));
    assert!(table.contains("32.94"), "{table}");
    assert!(iris(&["budget", "throughput", "--table"]).status.success());
}

#[test]
fn decode_matches_encoder_frame_count() {
    let dir = tempfile::tempdir().unwrap();
    let demo = stdout(&iris(&["demo", "--out-dir", p(dir.path())]));
    let frames = dir.path().join("frames");
    let o = iris(&["decode", "--in", p(&dir.path().join("capture.bin")), "--out-dir", p(&frames)]);
    assert!(o.status.success(), "{o:?}");
    let report = stdout(&o);
    let last = report.lines().last().unwrap();
    assert_eq!(field(last, "frames_ok"), field(demo.lines().last().unwrap(), "frames_complete"));
    assert_eq!(field(last, "sequence_gaps"), 0);
    assert_eq!(std::fs::read_dir(&frames).unwrap().count(), field(last, "frames_ok"));
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = demo_dir();
    let d = dir.path();
    let run = |seed: &str| {
        let o = iris(&[
            "--seed",
            seed,
            "simulate",
            "--scene",
            p(&d.join("scene.json")),
            "--images",
            p(&d.join("images")),
            "--imu",
            p(&d.join("trace.csv")),
            "--registry",
            p(&d.join("registry.json")),
            "--db",
            p(&d.join("db.irdb")),
        ]);
        assert!(o.status.success(), "{o:?}");
        stdout(&o)
    };
    let a = run("7");
    assert_eq!(a, run("7"));
    assert!(a.contains("target Blinds 2"));
    assert!(a.contains("level=80"), "{a}");
}

#[test]
fn config_supplies_paths_and_db_roundtrip() {
    let dir = demo_dir();
    let d = dir.path();
    std::fs::write(d.join("iris.json"), r#"{"registry":"registry.json","db":"db.irdb"}"#).unwrap();
    let cfg = d.join("iris.json");
    let before = std::fs::read(d.join("db.irdb")).unwrap();

    let q = d.join("q.emb");
    let speaker = d.join("images").join("speaker.pgm");
    assert!(iris(&["embed", "--image", p(&speaker), "--out", p(&q)]).status.success());
    let out = stdout(&iris(&["--config", p(&cfg), "resolve", "--query", p(&q), "--class", "Speaker"]));
    assert!(out.starts_with("scoped=true\n1 00000000-0000-0000-0000-000005ee0001 Speaker 1.000000"), "{out}");
    assert_eq!(std::fs::read(d.join("db.irdb")).unwrap(), before);

    let o = iris(&["--config", p(&cfg), "db", "undo", "--query", p(&q), "--device", "Lamp", "--at", "9"]);
    assert!(o.status.success(), "{o:?}");
    let list = stdout(&iris(&["--config", p(&cfg), "db", "list"]));
    assert!(list.contains("entries=5"), "{list}");
    assert!(list.contains("Lights 9 correction"), "{list}");

    let blinds = d.join("images").join("blinds2.pgm");
    let o = iris(&["--config", p(&cfg), "db", "add", "--device", "Blinds 1", "--image", p(&blinds), "--label", "x"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&iris(&["--config", p(&cfg), "db", "list"])).contains("entries=6"));
}

#[test]
fn gesture_log_from_trace() {
    let dir = demo_dir();
    let out = stdout(&iris(&["gesture", "--trace", p(&dir.path().join("trace.csv"))]));
    let first = out.lines().next().unwrap();
    assert!(first.ends_with(" Click"), "{out}");
    assert!(out.contains("HoldStart") && out.contains("HoldEnd"));
}

#[test]
fn exit_codes_and_error_lines() {
    let o = iris(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    let line: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!((line["error"].as_str(), line["code"].as_i64()), (Some("usage"), Some(1)));

    let o = iris(&["gesture", "--trace", "/nonexistent/trace.csv"]);
    assert_eq!(o.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "not,a,trace\n1,2\n").unwrap();
    let o = iris(&["gesture", "--trace", p(&bad)]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.trim_end().lines().last().unwrap().contains("\"code\":3"), "{err}");

    let o = iris(&["budget", "battery", "--sleep-fraction", "1.5"]);
    assert_eq!(o.status.code(), Some(3));
}

