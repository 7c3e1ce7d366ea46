use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mtdc-opf");

fn case(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("cases").join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Compare against `tests/golden/<name>`; set `MTDC_BLESS=1` to rewrite.
fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("MTDC_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(actual, expected, "{name} differs from golden file");
}

#[test]
fn dump_matches_golden_and_repeats() {
    for (what, file) in [("problem", "dc2_problem.txt"), ("matrices", "dc2_matrices.txt")] {
        let a = run(&["dump", what, path_str(&case("dc2"))]);
        let b = run(&["dump", what, path_str(&case("dc2"))]);
        assert_eq!(code(&a), 0);
        assert_eq!(a.stdout, b.stdout);
        golden(file, &stdout(&a));
    }
}

#[test]
fn dump_lists_dc_roles() {
    let out = stdout(&run(&["dump", "problem", path_str(&case("dc2"))]));
    for role in ["dc_injection", "dc_voltage", "dc_line_limit_from", "dc_line_limit_to", "dc_psd"] {
        assert!(out.contains(role), "missing {role}");
    }
}

#[test]
fn ac_voltage_selectors_have_two_entries() {
    let out = stdout(&run(&["dump", "matrices", path_str(&case("ac2"))]));
    let mut lines = out.lines();
    let mut seen = 0;
    while let Some(header) = lines.next() {
        if !header.contains(" M ") {
            continue;
        }
        let dim: usize = header.rsplit(' ').next().unwrap().split('x').next().unwrap().parse().unwrap();
        let ones: usize = (0..dim)
            .map(|_| lines.next().unwrap().split_whitespace().filter(|v| *v != "0.0").count())
            .sum();
        assert_eq!(ones, 2, "{header}");
        seen += 1;
    }
    assert_eq!(seen, 2);
}

#[test]
fn solve_hybrid_exits_zero_and_flags_binding_lines() {
    let out = run(&["solve", path_str(&case("hybrid_39_9_mtdc"))]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("outcome: verified"));
    let flagged = text.lines().filter(|l| l.trim_end().ends_with('*')).count();
    assert!(flagged >= 1, "{text}");
}

#[test]
fn json_report_carries_state_for_verify() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = run(&["solve", path_str(&case("hybrid4")), "--format", "json"]);
    assert_eq!(code(&out), 0);
    std::fs::write(&report, &out.stdout).unwrap();
    let v = run(&["verify", path_str(&case("hybrid4")), path_str(&report)]);
    assert_eq!(code(&v), 0, "{}", stdout(&v));

    // Push a DC voltage off its solved value.
    let mut json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let vdc = &mut json["state"]["v_dc"][1];
    *vdc = (vdc.as_f64().unwrap() + 0.01).into();
    std::fs::write(&report, json.to_string()).unwrap();
    let v = run(&["verify", path_str(&case("hybrid4")), path_str(&report)]);
    assert_eq!(code(&v), 5, "{}", stdout(&v));
    assert!(stdout(&v).contains("FAIL"));
}

#[test]
fn malformed_input_exits_two_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"name\": \"x\", \"base_mva\": ").unwrap();
    for args in [
        vec!["solve", path_str(&bad)],
        vec!["dump", "problem", path_str(&bad)],
        vec!["compare", path_str(&bad), path_str(&bad)],
    ] {
        let out = run(&args);
        assert_eq!(code(&out), 2, "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let missing = run(&["solve", "/nonexistent/case.json"]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn infeasible_case_exits_three() {
    let out = run(&["solve", path_str(&case("ac2_infeasible"))]);
    assert_eq!(code(&out), 3);
}

#[test]
fn impossible_rank_threshold_exits_four() {
    let out = run(&["solve", path_str(&case("dc3")), "--rank-threshold", "1e20"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn compare_identical_cases_has_zero_deltas() {
    let p = case("ac3");
    let out = run(&["compare", path_str(&p), path_str(&p), "--format", "json"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["cost_delta"], 0.0);
    assert_eq!(v["ac_loss_delta_mw"], 0.0);
    assert_eq!(v["cost_reduced"], false);
}

#[test]
fn compare_hybrid_reports_reduction() {
    let out = run(&["compare", path_str(&case("ieee39_9")), path_str(&case("hybrid_39_9_mtdc"))]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("cost reduced: yes"));
}
