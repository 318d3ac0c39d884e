use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ebn() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ebn"));
    c.env_remove("EBN_WORKERS");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(c: &mut Command) -> Output {
    c.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn compile_toy(dir: &Path) -> PathBuf {
    let out = dir.join("toy.rbn.json");
    let o = run(ebn().args(["compile", "--model"]).arg(fixture("toy.json")).arg("--out").arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn compile_is_byte_stable_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let frameish = fixture("coarse.json");
    assert!(run(ebn().arg("compile").arg("--model").arg(&frameish).arg("--out").arg(&a).args(["--workers", "1"])).status.success());
    let o = run(ebn().arg("compile").arg("--model").arg(&frameish).arg("--out").arg(&b).env("EBN_WORKERS", "3"));
    assert!(o.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let ma: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.json.manifest.json")).unwrap()).unwrap();
    let mb: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("b.json.manifest.json")).unwrap()).unwrap();
    for k in ["command", "model_hash", "scheme_hashes", "seed", "tool_version"] {
        assert_eq!(ma[k], mb[k], "{k}");
    }
    assert!(stdout(&o).starts_with("node,method,rows,cells,solver_calls,point_solves,nonconverged,cached\n"));
}

#[test]
fn timeline_csv_has_a_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    let rbn = compile_toy(dir.path());
    let o = run(ebn().arg("timeline").arg("--rbn").arg(&rbn));
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,t,beta,pf");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].ends_with(",0.15458"));
}

#[test]
fn inconsistent_evidence_exits_with_3_naming_the_node() {
    let dir = tempfile::tempdir().unwrap();
    let rbn = compile_toy(dir.path());
    let ev = dir.path().join("ev.json");
    std::fs::write(
        &ev,
        r#"{"steps":[{"label":"a","findings":[{"node":"E1","state":"fail"},{"node":"E2","state":"survive"}]}]}"#,
    )
    .unwrap();
    let o = run(ebn().arg("timeline").arg("--rbn").arg(&rbn).arg("--evidence").arg(&ev));
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("`E2`"));
}

#[test]
fn invalid_model_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"name\": \"x\", \"nodes\": [ { \"kind\": \"table\" ").unwrap();
    let o = run(ebn().arg("compile").arg("--model").arg(&bad).arg("--out").arg(dir.path().join("o.json")));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"));
}

#[test]
fn decide_without_a_decision_spec_fails() {
    let o = run(ebn().arg("decide").arg("--model").arg(fixture("coarse.json")));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no decision spec"));
}

#[test]
fn decide_and_voi_tables() {
    let dir = tempfile::tempdir().unwrap();
    let rbn = compile_toy(dir.path());
    let o = run(ebn().arg("decide").arg("--rbn").arg(&rbn));
    assert_eq!(stdout(&o), "step,alternative,expected_utility,optimal\nnone,keep,-3091.6,false\nnone,strengthen,-1988.0,true\n");
    let o = run(ebn().arg("voi").arg("--rbn").arg(&rbn).args(["--cost", "50", "--cost", "500"]));
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("step,set,voi,marginal_gain,with_measurement,without_measurement\nnone,M,"));
    let err = stderr(&o);
    assert!(err.contains("cost 50: measure M"));
    assert!(err.contains("cost 500: measure nothing"));
}

#[test]
fn verify_exit_codes() {
    let o = run(ebn().arg("verify").arg("--model").arg(fixture("coarse.json")).args(["--samples", "100000"]));
    assert_eq!(o.status.code(), Some(4));
    let o = run(ebn().arg("verify").arg("--model").arg(fixture("safe.json")).args(["--samples", "100000"]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().nth(1).unwrap().ends_with(",true"));
}

#[test]
fn replay_writes_one_entry_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let rbn = compile_toy(dir.path());
    let ev = dir.path().join("ev.json");
    std::fs::write(
        &ev,
        r#"{"steps":[{"label":"a","findings":[{"node":"M","state":"high"}]},{"label":"b","findings":[{"node":"E1","state":"survive"}]}]}"#,
    )
    .unwrap();
    let o = run(ebn().arg("replay").arg("--rbn").arg(&rbn).arg("--evidence").arg(&ev));
    assert!(o.status.success(), "{}", stderr(&o));
    let log = ebn::session::LogEntry::parse_lines(&stdout(&o)).unwrap();
    assert_eq!(log.len(), 3);
    assert_eq!(log[2].revision, 2);
}

#[test]
fn schemas_are_printed() {
    let o = run(ebn().args(["schema", "--kind", "evidence"]));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["title"], "EvidenceScript");
}
