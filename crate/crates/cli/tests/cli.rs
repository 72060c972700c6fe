use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bmapinf"))
}

fn model(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_model(sub: &str, name: &str, extra: &[&str]) -> Output {
    let path = model(name);
    let mut args = vec![sub, "--model", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

fn assert_schema(name: &str, value: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schema")
        .join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(value)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "{name}: {errors:#?}");
}

fn ok(out: &Output) -> Value {
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    json(&out.stdout)
}

#[test]
fn validate_reports_background_law() {
    let v = ok(&run_model("validate", "two_class", &[]));
    assert_schema("validate", &v);
    assert_eq!(v["phases"], 2);
    let theta: Vec<f64> = serde_json::from_value(v["background_stationary"].clone()).unwrap();
    assert!((theta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn echo_round_trips() {
    for name in ["two_class", "mx_zeta25", "mx_logheavy30"] {
        let out = run_model("validate", name, &["--echo"]);
        let echoed = ok(&out);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, out.stdout).unwrap();
        let again = ok(&run(&["validate", "--echo", "--model", path.to_str().unwrap()]));
        assert_eq!(echoed, again, "{name}");
    }
}

#[test]
fn stability_verdicts_and_strict_exit() {
    let stable = ok(&run_model("stability", "mx_geometric", &["--strict"]));
    assert_schema("stability", &stable);
    assert_eq!(stable["stable"], true);
    let lm = stable["streams"][0]["log_moment"].as_f64().unwrap();
    assert!((lm - 1.516).abs() < 5e-4);

    let lenient = ok(&run_model("stability", "mx_logheavy15", &[]));
    assert_schema("stability", &lenient);
    assert_eq!(lenient["stable"], false);
    assert_eq!(lenient["log_moment_vector"][0], "inf");
    let strict = run_model("stability", "mx_logheavy15", &["--strict"]);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn input_errors_exit_2_with_code() {
    let out = run_model("stability", "bad_rowsum", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = json(&out.stderr);
    assert_schema("error", &err);
    assert_eq!(err["error"]["code"], "NonGenerator");

    let out = run_model("validate", "mx_logheavy10", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out.stderr)["error"]["code"], "BadPmf");

    let out = run(&["validate", "--model", "/nonexistent/model.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_schema("error", &json(&out.stderr));

    let out = run_model("drift", "two_class", &["--queue", "original"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out.stderr)["error"]["code"], "NotSingleRate");

    let out = run_model("simulate", "mx_finite", &["--horizon", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out.stderr)["error"]["code"], "HorizonNonpositive");
}

#[test]
fn generator_tolerance_is_configurable() {
    // rows of D sum to 1e-10
    let text = r#"{"d":1,"d0":[[-1.9999999999]],"streams":[{"label":"p","rate_matrix":[[2.0]],"batch":{"family":"finite","params":{"pmf":[1.0]}},"service_rate":1.0}]}"#;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("loose.json");
    std::fs::write(&path, text).unwrap();
    let path = path.to_str().unwrap();
    let out = run(&["validate", "--model", path]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out.stderr)["error"]["code"], "NonGenerator");
    ok(&run(&["validate", "--model", path, "--generator-tol", "1e-9"]));
    let out = bin()
        .args(["validate", "--model", path])
        .env("BMAPINF_GENERATOR_TOL", "1e-9")
        .output()
        .unwrap();
    ok(&out);
}

#[test]
fn drift_certificate_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("drift.csv");
    let v = ok(&run_model(
        "drift",
        "mx_finite",
        &["--range", "30", "--csv", csv.to_str().unwrap()],
    ));
    assert_schema("drift", &v);
    assert_eq!(v["violations"].as_array().unwrap().len(), 0);
    assert_eq!(v["drift_table"].as_array().unwrap().len(), 31);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,min_component"));
    assert_eq!(lines.count(), 31);

    let two = ok(&run_model("drift", "two_class", &["--queue", "q2", "--range", "3"]));
    assert_schema("drift", &two);
    assert_eq!(two["mu"], 3.0);
}

#[test]
fn solve_with_checks_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("pi.csv");
    let v = ok(&run_model(
        "solve",
        "poisson2",
        &["--cap", "60", "--queue", "original", "--csv", csv.to_str().unwrap()],
    ));
    assert_schema("solve", &v);
    assert_eq!(v["pgf_ok"], true);
    assert_eq!(v["necessity"]["holds"], true);
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<(usize, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (k, p) = l.split_once(',').unwrap();
            (k.parse().unwrap(), p.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 61);
    // Poisson(2) at level 2
    assert!((rows[2].1 - 2.0 * (-2.0f64).exp()).abs() < 1e-12);

    let unstable = ok(&run_model(
        "solve",
        "mx_logheavy15",
        &["--cap", "40", "--queue", "original"],
    ));
    assert_schema("solve", &unstable);
    assert!(unstable["necessity"].is_null());
}

#[test]
fn simulate_replications_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let args = [
        "--horizon",
        "300",
        "--seed",
        "5",
        "--replications",
        "3",
        "--burn-in",
        "10",
        "--trace",
        trace.to_str().unwrap(),
        "--trace-rows",
        "40",
    ];
    let v = ok(&run_model("simulate", "two_class", &args));
    assert_schema("simulate", &v);
    let seeds: Vec<u64> = v["replications"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["seed"].as_u64().unwrap())
        .collect();
    assert_eq!(seeds, vec![5, 6, 7]);
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("time,level,phase\n"));
    assert_eq!(text.lines().count(), 41);
    // identical with --sequential
    let seq = ok(&run_model(
        "simulate",
        "two_class",
        &[&args[..8], &["--sequential"]].concat(),
    ));
    assert_eq!(v["replications"], seq["replications"]);
}

#[test]
fn couple_reports_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("couple.csv");
    let v = ok(&run_model(
        "couple",
        "two_class",
        &[
            "--horizon",
            "200",
            "--replications",
            "5",
            "--trace",
            trace.to_str().unwrap(),
        ],
    ));
    assert_schema("couple", &v);
    assert_eq!(v["ordering_violations"], 0);
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time,L,L1,L2,phase,class_slow,class_fast"));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let (l, l1, l2): (u64, u64, u64) = (f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap());
        assert!(l2 <= l && l <= l1);
        assert_eq!(f[5].parse::<u64>().unwrap() + f[6].parse::<u64>().unwrap(), l);
    }
}

#[test]
fn report_combines_everything() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("report.json");
    let out = run_model(
        "report",
        "mx_geometric",
        &[
            "--cap",
            "100",
            "--horizon",
            "2000",
            "--burn-in",
            "50",
            "--out",
            out_path.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_schema("report", &v);
    assert_eq!(v["certificate"]["violations"].as_array().unwrap().len(), 0);
    assert!(v["simulation"]["tv_distance"].as_f64().unwrap() < 0.1);

    let unstable = ok(&run_model(
        "report",
        "mx_logheavy15",
        &["--cap", "30", "--horizon", "100"],
    ));
    assert_schema("report", &unstable);
    assert!(unstable["certificate"].is_null());
    assert_eq!(unstable["certificate_error"], "NotStable");

    let multi = ok(&run_model(
        "report",
        "two_class",
        &["--cap", "50", "--queue", "q1", "--horizon", "100"],
    ));
    assert_schema("report", &multi);
    assert!(multi["simulation"]["tv_distance"].is_null());
}

#[test]
fn version_includes_build_metadata() {
    let short = String::from_utf8(run(&["-V"]).stdout).unwrap();
    assert_eq!(short.trim(), format!("bmapinf {}", env!("CARGO_PKG_VERSION")));
    let out = run(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
    let long = String::from_utf8(out.stdout).unwrap();
    for key in ["commit: ", "target: ", "profile: "] {
        assert!(long.contains(key), "{long}");
    }
    let help = String::from_utf8(run(&["--help"]).stdout).unwrap();
    for sub in [
        "validate",
        "stability",
        "drift",
        "solve",
        "simulate",
        "couple",
        "report",
    ] {
        assert!(help.contains(sub));
    }
}
