use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

const KEY: &str = "0000000000000000000000000000000000000000000000000000000000000000";
const ORIGIN: &str = "https://a.example";

fn fpshield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpshield"))
        .args(args)
        .output()
        .unwrap()
}

fn with_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_fpshield"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn fixture(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures/fpd")
        .join(rel)
        .to_string_lossy()
        .into_owned()
}

fn white1x1(dir: &Path) -> String {
    let p = dir.join("white1x1.rgba");
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&1u32.to_le_bytes());
    bytes.extend_from_slice(&1u32.to_le_bytes());
    bytes.extend_from_slice(&[255; 4]);
    std::fs::write(&p, bytes).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn version_names_schemas() {
    let o = fpshield(&["--version"]);
    assert!(o.status.success());
    let v = stdout(&o);
    assert!(
        v.contains("engine 0.1.0")
            && v.contains("profile schema 1")
            && v.contains("fpd config schema 1"),
        "{v}"
    );
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(fpshield(&["bogus"]).status.code(), Some(2));
    assert_eq!(
        fpshield(&["--profile", "p9", "spoof", "gl"]).status.code(),
        Some(2)
    );
    let o = fpshield(&["spoof", "gl", "--session", KEY]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--origin"));
}

#[test]
fn domain_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.rgba");
    std::fs::write(&bad, [1, 2, 3]).unwrap();
    let out = dir.path().join("out");
    let o = fpshield(&[
        "farble",
        "canvas",
        "--in",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--origin",
        ORIGIN,
        "--session",
        KEY,
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = with_stdin(
        &["time", "shield", "--origin", ORIGIN, "--session", KEY],
        "12\nabc\n",
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn fpd_empty_trace() {
    let o = fpshield(&["fpd", "analyze", "--trace", &fixture("benign/empty.json")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o)
        .lines()
        .any(|l| l == "no fingerprinting activity"));
}

#[test]
fn fpd_block_mode_is_success_with_directives() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let o = fpshield(&[
        "fpd",
        "analyze",
        "--trace",
        &fixture("fingerprinting/canvas_font_classic.json"),
        "--mode",
        "block",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["detected"], true);
    assert_eq!(doc["directives"].as_array().unwrap().len(), 2);
    assert!(stdout(&o).contains("directive: ClearPageStorage"));
}

#[test]
fn nbs_check_blocks_loopback() {
    let o = fpshield(&[
        "nbs",
        "check",
        "--origin-class",
        "public",
        "--target",
        "127.0.0.1:6666",
        "--resolved",
        "127.0.0.1",
        "--mode",
        "preresolve",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("Block"));
    let o = fpshield(&[
        "nbs",
        "check",
        "--target",
        "unknown.example",
        "--mode",
        "learn",
    ]);
    assert!(stdout(&o).starts_with("AllowAndLearn"));
    let o = fpshield(&[
        "nbs",
        "check",
        "--target",
        "unknown.example",
        "--mode",
        "preresolve",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn canvas_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let input = white1x1(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = fpshield(&[
            "farble",
            "canvas",
            "--in",
            &input,
            "--out",
            out.to_str().unwrap(),
            "--origin",
            ORIGIN,
            "--session",
            KEY,
        ]);
        assert!(o.status.success());
        std::fs::read(out).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert_eq!(&a[..8], &[1, 0, 0, 0, 1, 0, 0, 0]);
    assert!(a[8..11].iter().all(|&c| c >= 254));
    assert_eq!(a[11], 255);
}

#[test]
fn profile_routing() {
    let dir = tempfile::tempdir().unwrap();
    let input = white1x1(dir.path());
    let out = dir.path().join("p2");
    let o = fpshield(&[
        "--profile",
        "p2",
        "farble",
        "canvas",
        "--in",
        &input,
        "--out",
        out.to_str().unwrap(),
        "--origin",
        ORIGIN,
        "--session",
        KEY,
    ]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&input).unwrap());

    let out3 = dir.path().join("p3");
    let o = fpshield(&[
        "--profile",
        "p3",
        "farble",
        "canvas",
        "--in",
        &input,
        "--out",
        out3.to_str().unwrap(),
        "--origin",
        ORIGIN,
        "--session",
        KEY,
    ]);
    assert!(o.status.success());
    let marker: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(marker["action"], "FixedFake");
    assert!(!out3.exists());

    let o = fpshield(&[
        "--profile",
        "p3",
        "sensors",
        "gen",
        "--sensor",
        "gyroscope",
        "--origin",
        ORIGIN,
        "--session",
        KEY,
    ]);
    let marker: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(marker["action"], "Block");
}

#[test]
fn time_shield_rounds() {
    let o = with_stdin(
        &[
            "time",
            "shield",
            "--quantum",
            "10",
            "--no-randomize",
            "--origin",
            ORIGIN,
            "--session",
            KEY,
        ],
        "123.456\n0\n\n5000.5\n",
    );
    assert!(o.status.success());
    assert_eq!(stdout(&o), "120\n0\n5000\n");
}

#[test]
fn sensors_csv_shape() {
    let o = fpshield(&[
        "sensors",
        "gen",
        "--sensor",
        "magnetometer",
        "--rate",
        "10",
        "--duration",
        "2",
        "--origin",
        ORIGIN,
        "--session",
        KEY,
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t_ms,x,y,z");
    assert_eq!(lines.len(), 21);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 4));
    let o = fpshield(&[
        "sensors",
        "gen",
        "--sensor",
        "ambient_light",
        "--format",
        "jsonl",
        "--origin",
        ORIGIN,
        "--session",
        KEY,
    ]);
    let first: serde_json::Value =
        serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(first["kind"], "ambient_light");
}

#[test]
fn spoof_is_keyed_by_origin() {
    let a = fpshield(&[
        "spoof",
        "devices",
        "--count",
        "3",
        "--origin",
        ORIGIN,
        "--session",
        KEY,
    ]);
    let b = fpshield(&[
        "spoof",
        "devices",
        "--count",
        "3",
        "--origin",
        "https://b.example",
        "--session",
        KEY,
    ]);
    let ids: Vec<String> = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(ids.len(), 3);
    assert!(ids.iter().all(|i| i.len() == 43));
    assert_ne!(a.stdout, b.stdout);
    let gl = fpshield(&["spoof", "gl", "--origin", ORIGIN, "--session", KEY]);
    let doc: serde_json::Value = serde_json::from_slice(&gl.stdout).unwrap();
    assert!(doc["renderer"].is_string());
}

#[test]
fn geo_output_is_json() {
    let o = fpshield(&[
        "farble",
        "geo",
        "--lat",
        "48.85",
        "--lon",
        "-2.35",
        "--precision",
        "1000",
        "--origin",
        ORIGIN,
        "--session",
        KEY,
    ]);
    assert!(o.status.success());
    let c: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(c["accuracy"], 1000.0);
    assert!((c["latitude"].as_f64().unwrap() - 48.85).abs() < 0.01);
}
