use std::path::{Path, PathBuf};

use phasorflow::cli::{run, EXIT_USAGE};
use serde_json::Value;
use tempfile::TempDir;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Outcome {
    /// The single JSON diagnostic line.
    fn diagnostic(&self) -> Value {
        let lines: Vec<&str> = self.stderr.lines().collect();
        assert_eq!(lines.len(), 1, "stderr: {}", self.stderr);
        serde_json::from_str(lines[0]).unwrap()
    }
}

fn cli(args: &[&str]) -> Outcome {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(std::iter::once("phasorflow").chain(args.iter().copied()), &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

/// The IEEE 13 feeder after the structural edits, written to `dir`.
fn modified13(dir: &Path) -> String {
    let out = path(dir, "m13.json");
    let r = cli(&["modify", &data("ieee13.json"), "--script", &data("mods_ieee13.json"), "-o", &out]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    out
}

#[test]
fn help_and_version_go_to_stdout() {
    for flag in ["--help", "--version"] {
        let r = cli(&[flag]);
        assert_eq!(r.code, 0);
        assert!(!r.stdout.is_empty() && r.stderr.is_empty());
    }
    let r = cli(&["solve", "--help"]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("--max-iter"));
}

#[test]
fn usage_errors_exit_64() {
    for args in [&["frobnicate"][..], &[], &["solve"], &["opf", "x.json", "-o", "y.json"]] {
        let r = cli(args);
        assert_eq!(r.code, EXIT_USAGE, "{args:?}");
        assert!(r.stdout.is_empty());
    }
}

#[test]
fn validate_reports_counts_for_shipped_feeders() {
    let r = cli(&["validate", &data("ieee13.json")]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("14 nodes"), "{}", r.stdout);
    assert!(r.stdout.contains("needs modification"), "{}", r.stdout);
    let r = cli(&["validate", &data("ieee37.json")]);
    assert_eq!(r.code, 0, "{}", r.stderr);
}

#[test]
fn invalid_inputs_exit_1_with_json_diagnostic() {
    let dir = TempDir::new().unwrap();
    let r = cli(&["validate", &path(dir.path(), "missing.json")]);
    assert_eq!(r.code, 1);
    let d = r.diagnostic();
    assert_eq!(d["error"], "validation");
    assert!(d["message"].as_str().unwrap().contains("missing.json"));

    let bad = path(dir.path(), "bad.json");
    std::fs::write(&bad, r#"{"name": "x", "surprise": 1}"#).unwrap();
    let r = cli(&["validate", &bad]);
    assert_eq!(r.code, 1);
    assert_eq!(r.diagnostic()["exit_code"], 1);

    // the unmodified feeder still carries a regulator
    let r = cli(&["solve", &data("ieee13.json"), "-o", &path(dir.path(), "o.csv")]);
    assert_eq!(r.code, 1);
    assert!(r.diagnostic()["message"].as_str().unwrap().contains("regulator"));
}

#[test]
fn loose_tolerances_are_rejected() {
    let dir = TempDir::new().unwrap();
    let feeder = modified13(dir.path());
    let out = path(dir.path(), "o.csv");
    for tol in ["1e-3", "0", "-1e-9", "NaN"] {
        let tol_arg = format!("--tol={tol}");
        let r = cli(&["solve", &feeder, &tol_arg, "-o", &out]);
        assert_eq!(r.code, 1, "--tol {tol}");
    }
    let r = cli(&["solve", &feeder, "--tol", "1e-6", "-o", &out]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let r = cli(&["opf", &feeder, "--targets", "680:675", "--eps", "1e-2", "-o", &path(dir.path(), "d.json")]);
    assert_eq!(r.code, 1);
}

#[test]
fn solver_failure_exits_2_with_residual_history() {
    let dir = TempDir::new().unwrap();
    let feeder = modified13(dir.path());
    let r = cli(&["solve", &feeder, "--max-iter", "1", "-o", &path(dir.path(), "o.csv")]);
    assert_eq!(r.code, 2);
    let d = r.diagnostic();
    assert_eq!(d["error"], "solver");
    assert_eq!(d["iterations"], 1);
    assert_eq!(d["residual_history"].as_array().unwrap().len(), 2);
    assert!(!dir.path().join("o.csv").exists());
}

#[test]
fn degenerate_weights_and_infeasible_bounds() {
    let dir = TempDir::new().unwrap();
    let feeder = modified13(dir.path());
    let out = path(dir.path(), "d.json");
    let r = cli(&["opf", &feeder, "--targets", "680:675", "--rho-e", "0", "--rho-theta", "0", "--rho-w", "0", "-o", &out]);
    assert_eq!(r.code, 1);
    assert!(r.diagnostic()["message"].as_str().unwrap().contains("degenerate weights"));

    let r = cli(&["opf", &feeder, "--targets", "680:675", "--e-min", "1.2", "--e-max", "1.3", "-o", &out]);
    assert_eq!(r.code, 3);
    assert_eq!(r.diagnostic()["error"], "infeasible");
}

#[test]
fn solve_and_linearize_write_csv() {
    let dir = TempDir::new().unwrap();
    let feeder = modified13(dir.path());
    let exact = path(dir.path(), "exact.csv");
    let linear = path(dir.path(), "linear.csv");
    assert_eq!(cli(&["solve", &feeder, "-o", &exact, "--angle-unit", "rad"]).code, 0);
    assert_eq!(cli(&["linearize", &feeder, "-o", &linear]).code, 0);
    let exact = std::fs::read_to_string(exact).unwrap();
    let linear = std::fs::read_to_string(linear).unwrap();
    assert!(exact.starts_with("kind,id,phase,mag_pu,angle_rad,p_pu,q_pu\n"));
    assert!(linear.starts_with("kind,id,phase,e_pu2,mag_pu,angle_deg,p_pu,q_pu\n"));
    // 14 nodes with 35 node-phases; 13 lines with 32 line-phases
    assert_eq!(exact.lines().count(), 1 + 35 + 32);
    assert_eq!(linear.lines().count(), 1 + 35 + 32);
}

#[test]
fn opf_dispatch_feeds_back_into_solve() {
    let dir = TempDir::new().unwrap();
    let spec: Value = serde_json::from_str(&std::fs::read_to_string(data("ieee13_dual.json")).unwrap()).unwrap();
    assert_eq!(spec["actions"][0], serde_json::json!(["1680", "2680"]));
    // build the dual feeder through the library and save it as a plain feeder file
    let net = phasorflow::scenario::ScenarioSpec::load(Path::new(&data("ieee13_dual.json")))
        .unwrap()
        .build_network(Path::new(&data("")))
        .unwrap();
    let feeder = path(dir.path(), "dual.json");
    phasorflow::schema::save_feeder(&net, Path::new(&feeder)).unwrap();

    let dispatch = path(dir.path(), "dispatch.json");
    let r = cli(&["opf", &feeder, "--targets", "1680:2680", "-o", &dispatch]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&dispatch).unwrap()).unwrap();
    assert_eq!(doc["dispatch"].as_array().unwrap().len(), 14);
    assert_eq!(doc["solver"]["kkt_passed"], true);

    let r = cli(&["solve", &feeder, "--dispatch", &dispatch, "-o", &path(dir.path(), "pc.csv")]);
    assert_eq!(r.code, 0, "{}", r.stderr);
}

#[test]
fn montecarlo_is_reproducible_across_worker_counts() {
    let dir = TempDir::new().unwrap();
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "3"].iter().enumerate() {
        let out = path(dir.path(), &format!("mc{i}.csv"));
        let r = cli(&[
            "montecarlo",
            &data("ieee13.json"),
            "--script",
            &data("mods_ieee13.json"),
            "--grid",
            "0:0.1:0.05",
            "--per-cell",
            "4",
            "--seed",
            "7",
            "--workers",
            workers,
            "-o",
            &out,
        ]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        assert!(r.stdout.contains("36 records"), "{}", r.stdout);
        outputs.push(std::fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let r = cli(&["montecarlo", &data("ieee13.json"), "--workers", "0", "-o", &path(dir.path(), "x.csv")]);
    assert_eq!(r.code, 1);
}

#[test]
fn scenario_writes_report() {
    let dir = TempDir::new().unwrap();
    let out = path(dir.path(), "report.json");
    let r = cli(&["scenario", &data("ieee13_dual.json"), "-o", &out]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report: phasorflow::scenario::Report = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    let action = report.action("1680", "2680").unwrap();
    assert_eq!(action.cases.len(), 3);
    assert!(action.case("NC").unwrap().opf.is_none());
    assert!(action.case("PC").unwrap().opf.as_ref().unwrap().kkt_passed);
}
