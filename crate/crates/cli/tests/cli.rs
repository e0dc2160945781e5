use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cpbundle"))
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const NAMES: [&str; 14] = [
    "ex_point", "ex_tsb", "ex_ud", "ex_ord2", "ex1_ord2", "ex_sue", "ex_cp", "lem21", "lem22", "scp", "genrel",
    "ncp_basic", "ncp_cover", "chern",
];

#[test]
fn list_prints_the_fourteen_builtins() {
    let out = run(&["list"]);
    assert!(out.status.success());
    let names: Vec<String> = stdout(&out).lines().map(str::to_string).collect();
    assert_eq!(names, NAMES);
}

#[test]
fn every_builtin_passes_with_defaults() {
    for name in NAMES {
        let out = run(&["run", &format!("builtin:{name}")]);
        assert_eq!(out.status.code(), Some(0), "{name}:\n{}", stdout(&out));
    }
}

#[test]
fn unknown_builtin_is_a_validation_error() {
    assert_eq!(run(&["run", "builtin:nope"]).status.code(), Some(3));
}

#[test]
fn malformed_file_is_a_parse_error() {
    assert_eq!(run(&["run", &fixture("broken.toml")]).status.code(), Some(2));
    assert_eq!(run(&["run", "/nonexistent/scenario.toml"]).status.code(), Some(2));
}

#[test]
fn non_cocycle_is_rejected_at_construction() {
    let out = run(&["run", &fixture("bad_cocycle.toml")]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cocycle"));
}

#[test]
fn perturbed_generator_fails_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let report: PathBuf = dir.path().join("r.json");
    let out = run(&["run", &fixture("perturbed_q8.toml"), "--report", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let res = json["records"][0]["max_residual"].as_f64().unwrap();
    assert!(res >= 1e-4, "{res}");
    assert_eq!(json["passed"], false);
}

#[test]
fn inline_generators_are_read_row_major() {
    let out = run(&["run", &fixture("inline_group.toml")]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
}

#[test]
fn reports_are_deterministic_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let out = run(&["run", "builtin:genrel", "--seed", "11", "--report", p.to_str().unwrap()]);
        assert!(out.status.success());
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    assert!(String::from_utf8_lossy(&ta).contains("\"seed\": 11"));
}

#[test]
fn every_record_carries_an_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.json");
    assert!(run(&["run", "builtin:ex_tsb", "--report", p.to_str().unwrap()]).status.success());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    let records = json["records"].as_array().unwrap();
    assert!(!records.is_empty());
    for r in records {
        assert!(!r["anchor"].as_str().unwrap().is_empty());
        for key in ["name", "max_residual", "dims", "passed"] {
            assert!(r.get(key).is_some(), "{key} missing");
        }
    }
}

#[test]
fn special_conjugate_value_for_rank_three() {
    let out = run(&["run", "builtin:ex_scp", "--d", "3"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("value 0.333333333333"), "{}", stdout(&out));
    let out = run(&["run", "builtin:scp"]);
    assert!(stdout(&out).contains("value -0.500000000000"));
}

#[test]
fn ord2_reports_the_jump_at_omega() {
    let out = run(&["run", "builtin:ex_ord2"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("SU(d) at 31"), "{}", stdout(&out));
}

#[test]
fn text_report_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.txt");
    let out = run(&[
        "run", "builtin:lem21", "--rmax", "2", "--tol", "1e-8", "--format", "text", "--report", p.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("scenario lem21 (seed 7, tol 1e-8)"), "{text}");
    assert!(text.contains("dims [1, 1, 2]"));
}
