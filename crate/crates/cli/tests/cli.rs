use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn kalpha(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kalpha")).args(args).output().expect("binary runs")
}

/// Runs with `--out` into a temp dir and returns the exit code and the report.
fn run(dir: &Path, name: &str, args: &[&str]) -> (i32, Value, String) {
    let out = dir.join(name);
    let mut all: Vec<&str> = args.to_vec();
    let out_s = out.to_str().unwrap().to_string();
    all.extend(["--out", &out_s]);
    let o = kalpha(&all);
    let text = std::fs::read_to_string(&out).expect("report written");
    (o.status.code().unwrap(), serde_json::from_str(&text).unwrap(), text)
}

fn p(name: &str) -> String {
    fixture(name).to_str().unwrap().to_string()
}

#[test]
fn map_of_the_dirac_example() {
    let dir = tempfile::tempdir().unwrap();
    let (code, rep, _) =
        run(dir.path(), "map.json", &["map", "--triplet", &p("dirac.json"), "--params", r#"{"alpha":0,"m":0}"#]);
    assert_eq!(code, 0);
    assert_eq!(rep["status"], "ok");
    assert_eq!(rep["version"], env!("CARGO_PKG_VERSION"));
    let g = rep["result"]["triplet"]["gamma"][0].as_f64().unwrap();
    assert!((g - (std::f64::consts::FRAC_PI_4 - 0.5)).abs() < 1e-9);
    assert_eq!(rep["result"]["triplet"]["atoms"][0]["radial"]["ell"]["kind"], "step_down");
    assert_eq!(rep["inputs"]["triplet"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn map_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for (alpha, m) in [(0.5, 0), (0.0, 1), (-1.0, 0)] {
        let params = format!(r#"{{"alpha":{alpha},"m":{m}}}"#);
        let (code, _, _) = run(dir.path(), "map.json", &["map", "--triplet", &p("stable.json"), "--params", &params]);
        assert_eq!(code, 0, "map at {params}");
        let mapped = dir.path().join("map.json");
        let mapped = mapped.to_str().unwrap();
        let (code, rep, _) = run(dir.path(), "v.json", &["validate", "--triplet", mapped]);
        assert_eq!((code, rep["result"]["valid"].as_bool()), (0, Some(true)));
        let a = alpha.to_string();
        let (code, rep, _) = run(dir.path(), "k.json", &["membership", "--triplet", mapped, "--alpha", &a]);
        assert_eq!((code, rep["result"]["member"].as_bool()), (0, Some(true)), "{rep}");
        let (code, _, _) = run(dir.path(), "r.json", &["range", "--triplet", mapped, "--params", &params]);
        assert_eq!(code, 0);
    }
}

#[test]
fn reports_are_identical_up_to_the_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--triplet",
        &p("stable.json"),
        "--params",
        r#"{"alpha":0.5,"m":0}"#,
        "--sim",
        r#"{"n_samples":500,"seed":3}"#,
    ];
    let (_, mut a, _) = run(dir.path(), "a.json", &args);
    let (_, mut b, _) = run(dir.path(), "b.json", &args);
    a.as_object_mut().unwrap().remove("timestamp");
    b.as_object_mut().unwrap().remove("timestamp");
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

    let strip = |t: String| t.lines().filter(|l| !l.contains("\"timestamp\"")).collect::<Vec<_>>().join("\n");
    let (_, _, x) =
        run(dir.path(), "x.json", &["map", "--triplet", &p("stable.json"), "--params", r#"{"alpha":0,"m":1}"#]);
    let (_, _, y) =
        run(dir.path(), "y.json", &["map", "--triplet", &p("stable.json"), "--params", r#"{"alpha":0,"m":1}"#]);
    assert_eq!(strip(x), strip(y));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, rep, _) = run(dir.path(), "bad.json", &["validate", "--triplet", &p("bad_beta.json")]);
    assert_eq!(code, 1);
    assert!(rep["result"]["failures"][0].as_str().unwrap().contains("integral diverges"));

    // beta = 1.5 has no 1.5-moment
    let (code, rep, _) =
        run(dir.path(), "dom.json", &["domain", "--triplet", &p("stable.json"), "--params", r#"{"alpha":1.5,"m":0}"#]);
    assert_eq!(code, 1);
    assert_eq!(rep["result"]["in_domain"], false);
    let (code, _, _) =
        run(dir.path(), "map.json", &["map", "--triplet", &p("stable.json"), "--params", r#"{"alpha":1.5,"m":0}"#]);
    assert_eq!(code, 1);
    let (code, _, _) = run(dir.path(), "k.json", &["membership", "--triplet", &p("dirac.json"), "--alpha", "0"]);
    assert_eq!(code, 1);

    let missing = dir.path().join("missing.json");
    let (code, rep, _) = run(
        dir.path(),
        "io.json",
        &["map", "--triplet", missing.to_str().unwrap(), "--params", r#"{"alpha":0,"m":0}"#],
    );
    assert_eq!((code, rep["status"].as_str()), (2, Some("input_error")));
    let (code, _, _) =
        run(dir.path(), "parse.json", &["map", "--triplet", &p("dirac.json"), "--params", r#"{"alpha":"x"}"#]);
    assert_eq!(code, 2);
    let (code, _, _) = run(
        dir.path(),
        "tol.json",
        &["map", "--triplet", &p("dirac.json"), "--params", r#"{"alpha":0,"m":0}"#, "--tol-quad", "0.5"],
    );
    assert_eq!(code, 2);
    assert_eq!(kalpha(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn compare_passes_on_the_gaussian_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (code, rep, _) = run(
        dir.path(),
        "cmp.json",
        &[
            "compare",
            "--triplet",
            &p("gauss.json"),
            "--params",
            r#"{"alpha":0,"m":0}"#,
            "--sim",
            r#"{"n_samples":100000,"seed":7}"#,
        ],
    );
    assert_eq!(code, 0);
    assert_eq!(rep["result"]["pass"], true);
    assert_eq!(rep["result"]["n_samples"], 100000);
}

#[test]
fn decompose_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let t = p("stable.json");
    let (code, rep, _) = run(dir.path(), "d.json", &["decompose", "--triplet", &t, "--alpha", "-0.5", "--c", "0.3"]);
    assert_eq!(code, 0);
    assert!(rep["result"]["residual"].as_f64().unwrap() < 1e-7);
    let (code, rep, _) = run(dir.path(), "v.json", &["verify", "--triplet", &t, "--alpha", "-0.5"]);
    assert_eq!((code, rep["result"]["pass"].as_bool()), (0, Some(true)));
    // beta = 0.5 on the second atom: not in K_1
    let (code, _, _) = run(dir.path(), "n.json", &["decompose", "--triplet", &t, "--alpha", "1.0"]);
    assert_eq!(code, 1);
}

#[test]
fn simulate_writes_csv_and_honours_the_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let csv_s = csv.to_str().unwrap();
    let args = [
        "simulate",
        "--triplet",
        &p("dirac.json"),
        "--params",
        r#"{"alpha":-1,"m":0}"#,
        "--sim",
        r#"{"n_samples":50,"seed":1}"#,
    ];
    let mut with_csv = args.to_vec();
    with_csv.extend(["--csv", csv_s, "--seed", "9"]);
    let (code, rep, _) = run(dir.path(), "s.json", &with_csv);
    assert_eq!(code, 0);
    assert_eq!(rep["result"]["provenance"]["seed"], 9);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# provenance: "));
    assert_eq!(text.lines().count(), 52);
}
