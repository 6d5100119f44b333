use std::path::Path;
use std::process::{Command, Output};

fn xkm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xkm"))
        .args(args)
        .current_dir(dir)
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("run xkm")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn exact_prints_twelve_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.csv"), "x,y\n0,0\n1,0\n5,0\n").unwrap();
    let out = xkm(
        &[
            "exact",
            "--input",
            "p.csv",
            "--skip-header",
            "--k",
            "2",
            "--out-tree",
            "t.json",
        ],
        dir.path(),
    );
    assert_eq!(stdout(&out).trim(), "0.5");
    let tree = std::fs::read_to_string(dir.path().join("t.json")).unwrap();
    assert!(tree.contains("\"theta\": 3.0"));
    std::fs::write(dir.path().join("q.csv"), "0,0\n1,0\n2,0\n").unwrap();
    let out = xkm(&["exact", "--input", "q.csv", "--k", "1"], dir.path());
    assert_eq!(stdout(&out).trim(), "2");
    // 14/3 to 12 significant digits
    std::fs::write(dir.path().join("r.csv"), "0,0\n1,0\n3,0\n").unwrap();
    let out = xkm(&["exact", "--input", "r.csv", "--k", "1"], dir.path());
    assert_eq!(stdout(&out).trim(), "4.66666666667");
}

#[test]
fn exact_enforces_limits() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.csv"), "0,0\n1,0\n5,0\n").unwrap();
    assert!(!xkm(&["exact", "--input", "p.csv", "--k", "9"], dir.path())
        .status
        .success());
    let out = xkm(
        &["exact", "--input", "p.csv", "--k", "9", "--max-k", "9"],
        dir.path(),
    );
    assert_eq!(stdout(&out).trim(), "0");
}

#[test]
fn gen_lb_then_explain_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = xkm(
        &[
            "gen-lb",
            "--k",
            "10",
            "--d",
            "2",
            "--p",
            "2",
            "--b",
            "3",
            "--out",
            "lb.csv",
            "--out-ref",
            "ref.json",
        ],
        d,
    );
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["n"], 37);
    assert_eq!(report["reference_cost"], 16.0);
    assert_eq!(report["grid"]["permutation_columns"], true);

    let out = xkm(
        &[
            "explain",
            "--input",
            "lb.csv",
            "--clustering",
            "ref.json",
            "--mode",
            "hd",
            "--audit",
            "--out-tree",
            "tree.json",
            "--out-assign",
            "assign.csv",
        ],
        d,
    );
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["k"], 10);
    assert!(report["cost"].as_f64().unwrap() >= 16.0);

    let out = xkm(
        &[
            "verify",
            "--input",
            "lb.csv",
            "--clustering",
            "ref.json",
            "--assign",
            "assign.csv",
            "--tree",
            "tree.json",
            "--dump-subproblem",
            "sub.json",
        ],
        d,
    );
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["ok"], true);
    let dump: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("sub.json")).unwrap()).unwrap();
    assert_eq!(dump["mode"], "2d");
    assert!(dump["A"].as_f64().unwrap() > 0.0);

    // the reference assignment is not what the tree induces
    let out = xkm(
        &[
            "verify",
            "--input",
            "lb.csv",
            "--clustering",
            "ref.json",
            "--tree",
            "tree.json",
        ],
        d,
    );
    assert!(!out.status.success());
}

#[test]
fn gen_lb_refuses_bad_parameters() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        ["--k", "8", "--d", "2", "--p", "2", "--b", "3"],
        ["--k", "30", "--d", "2", "--p", "3", "--b", "3"],
        ["--k", "30", "--d", "2", "--p", "1", "--b", "2"],
    ] {
        let mut full = vec!["gen-lb"];
        full.extend(args);
        full.extend(["--out", "x.csv", "--out-ref", "x.json"]);
        assert!(!xkm(&full, dir.path()).status.success(), "{args:?}");
    }
    let out = xkm(
        &[
            "gen-lb",
            "--k",
            "100",
            "--d",
            "50",
            "--auto-params",
            "--out",
            "x.csv",
            "--out-ref",
            "x.json",
        ],
        dir.path(),
    );
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(
        (report["p"].as_u64(), report["b"].as_u64()),
        (Some(4), Some(3))
    );
}

#[test]
fn explain_requires_k_or_clustering() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.csv"), "0,0\n1,0\n5,0\n").unwrap();
    assert!(!xkm(&["explain", "--input", "p.csv"], dir.path())
        .status
        .success());
    let out = xkm(
        &[
            "explain", "--input", "p.csv", "--k", "2", "--trace", "t.jsonl",
        ],
        dir.path(),
    );
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["leaves"], 2);
    let trace = std::fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    for key in [
        "depth",
        "jstar",
        "theta",
        "L",
        "forbidden_measure",
        "M",
        "Mstar",
        "A_parent",
        "A_children",
        "separated",
    ] {
        assert!(first.get(key).is_some(), "trace lacks {key}");
    }
}

#[test]
fn bench_writes_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("b.json"),
        r#"{"brute": true, "against": "brute", "instances": [
            {"source": "gaussian", "n": 10, "k": 3, "d": 2, "spread": 0.0, "seed": 4},
            {"source": "gaussian", "n": 12, "k": 3, "d": 2, "spread": 1.0, "seed": 4}
        ]}"#,
    )
    .unwrap();
    let out = xkm(
        &["bench", "--config", "b.json", "--summary", "s.json"],
        dir.path(),
    );
    let csv = stdout(&out);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "instance,n,k,d,cost_ref,cost_2d,cost_hd,cost_dp,cost_brute,ratio_2d,ratio_hd,invariant_failures"
    );
    let zero = lines.next().unwrap();
    assert!(zero.ends_with(",1.0,1.0,0"), "{zero}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(summary["rows"], 2);
    assert_eq!(summary["invariant_failures"], 0);
    assert!(summary["invariant_checks"].as_u64().unwrap() > 0);
}
