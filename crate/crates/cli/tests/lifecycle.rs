use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_backdoor-mip"))
        .env("BACKDOOR_MIP_DATA", data)
        .env_remove("RUST_LOG")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(data: &Path, args: &[&str]) -> String {
    let out = run(data, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// gen -> sample -> collect -> train-scorer -> train-classifier -> evaluate -> report
fn lifecycle(data: &Path) {
    for (split, count, seed) in [("scorer", "4", "11"), ("cls", "4", "12"), ("test", "3", "13")] {
        let dir = data.join("instances").join(split);
        ok(data, &["gen-instances", "--preset", "toy", "--count", count, "--seed", seed, "--out", p(&dir)]);
    }
    let inst = |s: &str| data.join("instances").join(s);
    let recs = |s: &str| data.join("records").join(format!("{s}.jsonl"));
    ok(data, &["sample", "--instances", p(&inst("scorer")), "--seed", "5", "--candidates", "8", "--fraction", "0.05"]);
    for split in ["scorer", "cls"] {
        ok(data, &[
            "collect", "--instances", p(&inst(split)), "--seed", "5", "--candidates", "8", "--fraction", "0.05",
            "--jobs", "2",
        ]);
    }
    let small = ["--hidden", "8", "--heads", "2", "--epochs", "2"];
    let (inst_s, inst_c) = (inst("scorer"), inst("cls"));
    let (recs_s, recs_c) = (recs("scorer"), recs("cls"));
    let scorer = data.join("models/scorer.json");
    let mut args = vec![
        "train-scorer", "--instances", p(&inst_s), "--records", p(&recs_s), "--collect-seed", "5",
        "--candidates", "8", "--fraction", "0.05", "--seed", "1", "--out", p(&scorer),
    ];
    args.extend(small);
    ok(data, &args);
    let classifier = data.join("models/classifier.json");
    let mut args = vec![
        "train-classifier", "--instances", p(&inst_c), "--records", p(&recs_c), "--collect-seed", "5",
        "--candidates", "8", "--fraction", "0.05", "--seed", "2", "--scorer", p(&scorer), "--out", p(&classifier),
    ];
    args.extend(small);
    ok(data, &args);
    let report = data.join("reports/test.json");
    let table = ok(data, &[
        "evaluate", "--instances", p(&inst("test")), "--seed", "9", "--candidates", "8", "--fraction", "0.05",
        "--scorer", p(&scorer), "--classifier", p(&classifier), "--out", p(&report),
    ]);
    assert!(table.contains("0 / 3 / 0"), "{table}");
    assert_eq!(ok(data, &["report", "--report", p(&report)]), table);
}

const ARTIFACTS: [&str; 7] = [
    "records/scorer.jsonl",
    "records/cls.jsonl",
    "models/scorer.json",
    "models/classifier.json",
    "reports/test.json",
    "reports/test.txt",
    "candidates/scorer/toy-s11-0000.json",
];

#[test]
fn lifecycle_is_reproducible_and_idempotent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    lifecycle(a.path());
    let first: Vec<Vec<u8>> = ARTIFACTS.iter().map(|f| fs::read(a.path().join(f)).unwrap()).collect();
    assert_eq!(
        fs::read_dir(a.path().join("instances/scorer")).unwrap().count(),
        4
    );
    let records = String::from_utf8(first[0].clone()).unwrap();
    assert_eq!(records.lines().count(), 4 * 9);

    // rerunning in place keeps every artifact unchanged
    lifecycle(a.path());
    // and a fresh directory reproduces them byte for byte
    lifecycle(b.path());
    for (name, bytes) in ARTIFACTS.iter().zip(&first) {
        assert_eq!(&fs::read(a.path().join(name)).unwrap(), bytes, "{name} changed on rerun");
        assert_eq!(&fs::read(b.path().join(name)).unwrap(), bytes, "{name} differs across runs");
    }
}

#[test]
fn solve_prints_objective_and_nodes() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path();
    ok(data, &["gen-instances", "--preset", "toy", "--count", "1", "--seed", "3"]);
    let inst = data.join("instances/toy-s3/toy-s3-0000.json");
    let out = ok(data, &["solve", "--instance", p(&inst)]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["status"], "Optimal");
    assert!(v["node_count"].as_u64().unwrap() >= 1);
    let objective = v["objective"].as_f64().unwrap();

    let n = fs::read_to_string(&inst).unwrap();
    let n = serde_json::from_str::<serde_json::Value>(&n).unwrap()["n"].as_u64().unwrap() as usize;
    let mut priority = vec![0; n];
    priority[n - 1] = 1;
    let pfile = data.join("p.json");
    fs::write(&pfile, serde_json::json!({ "priority": priority }).to_string()).unwrap();
    let log = data.join("run.jsonl");
    let out = ok(data, &["solve", "--instance", p(&inst), "--priorities", p(&pfile), "--run-log", p(&log)]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["objective"].as_f64().unwrap(), objective);
    assert_eq!(fs::read_to_string(&log).unwrap().lines().count() as u64, v["node_count"].as_u64().unwrap());
}

fn exit_code(data: &Path, args: &[&str]) -> (i32, serde_json::Value) {
    let out = run(data, args);
    let err = String::from_utf8(out.stderr).unwrap();
    let json = err
        .lines()
        .find_map(|l| serde_json::from_str(l).ok())
        .unwrap_or(serde_json::Value::Null);
    (out.status.code().unwrap(), json)
}

#[test]
fn failures_have_distinct_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path();

    assert_eq!(exit_code(data, &["solve", "--bogus"]).0, 2);

    let (code, json) = exit_code(data, &["solve", "--instance", p(&data.join("missing.json"))]);
    assert_eq!(code, 3);
    assert_eq!(json["error"]["kind"], "io");

    let bad_version = data.join("v9.json");
    fs::write(&bad_version, r#"{"version":9,"id":"x","n":0,"c":[],"bounds":[],"integer":[],"rows":[]}"#).unwrap();
    let (code, json) = exit_code(data, &["solve", "--instance", p(&bad_version)]);
    assert_eq!(code, 4);
    assert_eq!(json["error"]["kind"], "schema_version");

    let truncated = data.join("t.json");
    fs::write(&truncated, r#"{"version":1,"id":"x","n":2,"c":[1,"#).unwrap();
    assert_eq!(exit_code(data, &["solve", "--instance", p(&truncated)]).0, 5);

    let invalid = data.join("i.json");
    fs::write(
        &invalid,
        r#"{"version":1,"id":"x","n":1,"c":[1],"bounds":[[0,1]],"integer":[0],"rows":[{"coeffs":[[3,1.0]],"sense":"<=","rhs":1}]}"#,
    )
    .unwrap();
    assert_eq!(exit_code(data, &["solve", "--instance", p(&invalid)]).0, 6);
    assert_eq!(exit_code(data, &["gen-instances", "--preset", "medium", "--count", "1", "--seed", "1"]).0, 6);

    let out = data.join("inst");
    let gen = ["gen-instances", "--preset", "toy", "--count", "2", "--seed", "1", "--out", p(&out)];
    ok(data, &gen);
    fs::write(out.join("toy-s1-0001.json"), "edited").unwrap();
    assert_eq!(exit_code(data, &gen).0, 7);
    let mut forced = vec!["--force"];
    forced.extend(gen);
    ok(data, &forced);
    ok(data, &gen);
}

#[test]
fn help_lists_every_subcommand() {
    let d = tempfile::tempdir().unwrap();
    let help = ok(d.path(), &["--help"]);
    for cmd in [
        "gen-instances", "solve", "sample", "collect", "train-scorer", "train-classifier", "evaluate", "report",
    ] {
        assert!(help.contains(cmd), "{cmd} missing from --help");
    }
    let collect = ok(d.path(), &["collect", "--help"]);
    for flag in ["--jobs", "--seed", "--candidates", "--fraction", "--records", "--node-limit", "--data"] {
        assert!(collect.contains(flag), "{flag} missing from collect --help");
    }
}
