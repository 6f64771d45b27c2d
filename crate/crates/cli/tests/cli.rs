use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn bifree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bifree"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn bnc_enum_lists_catalan_many() {
    let out = bifree(&["bnc", "enum", "--chi", "llr"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["count"], 5);
    assert_eq!(v["partitions"].as_array().unwrap().len(), 5);
    assert_eq!(v["partitions"][0]["chi"], "llr");
}

#[test]
fn bnc_mobius_two_chain() {
    let out = bifree(&[
        "bnc",
        "mobius",
        "--chi",
        "ll",
        "--sigma",
        "[[1],[2]]",
        "--pi",
        "[[1,2]]",
    ]);
    assert!(out.status.success());
    assert_eq!(json(&out)["mobius"], -1);
}

#[test]
fn csv_output() {
    let out = bifree(&[
        "bnc",
        "mobius",
        "--chi",
        "ll",
        "--sigma",
        "[[1],[2]]",
        "--pi",
        "[[1,2]]",
        "--format",
        "csv",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text,
        "# schema=1 command=bnc mobius\nchi,sigma,pi,mobius\nll,\"[[1],[2]]\",\"[[1,2]]\",-1\n"
    );
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["bnc", "enum", "--chi", "lx"],
        vec!["nonsense"],
        vec!["bnc", "enum"],
        vec!["fock", "moment", "--word", "S1", "--d", "9"],
        vec!["fock", "moment", "--word", "S1", "--tolerance", "-1"],
        vec!["fisher", "run", "--experiment", "unknown"],
    ] {
        let out = bifree(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn computation_errors_exit_one_with_json() {
    for args in [
        vec!["fock", "moment", "--word", "Q1"],
        vec![
            "bnc",
            "mobius",
            "--chi",
            "ll",
            "--sigma",
            "[[1,2]]",
            "--pi",
            "[[1,2],[3]]",
        ],
        vec![
            "fock",
            "moment",
            "--word",
            "S1",
            "--model",
            "/no/such/model.json",
        ],
    ] {
        let out = bifree(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let v = json(&out);
        assert_eq!(v["schema"], 1);
        assert!(v["error"].is_string());
    }
}

#[test]
fn help_for_every_subcommand() {
    for args in [
        vec!["bnc", "enum"],
        vec!["bnc", "mobius"],
        vec!["mc", "to-cumulants"],
        vec!["mc", "to-moments"],
        vec!["bifree", "test"],
        vec!["fock", "moment"],
        vec!["conj", "check"],
        vec!["fisher", "run"],
        vec!["entropy", "run"],
        vec!["verify", "all"],
    ] {
        let mut a = args.clone();
        a.push("--help");
        let out = bifree(&a);
        assert!(out.status.success(), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
}

#[test]
fn fock_moment_semicircular() {
    let out = bifree(&["fock", "moment", "--word", "S1 S1 D1 D1"]);
    let v = json(&out);
    assert_eq!(v["value"]["re"][0][0], 1.0);
    // fourth moment of a standard semicircular is Catalan(2)
    let out = bifree(&["fock", "moment", "--word", "S1 S1 S1 S1"]);
    assert_eq!(json(&out)["value"]["re"][0][0], 2.0);
}

#[test]
fn fock_moment_from_model_file() {
    let dir = std::env::temp_dir().join(format!("bifree-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.json");
    let spec = r#"{"d": 2,
        "left": [{"d": 2, "kraus": [{"d": 2, "re": [[2.0, 0.0], [0.0, 1.0]]}]}],
        "right": []}"#;
    std::fs::write(&path, spec).unwrap();
    let out = bifree(&[
        "fock",
        "moment",
        "--word",
        "S1 S1",
        "--model",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    // η(1) = V V* = diag(4, 1)
    let v = json(&out);
    assert_eq!(
        v["value"]["re"],
        serde_json::json!([[4.0, 0.0], [0.0, 1.0]])
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn truncation_overflow_is_reported() {
    let out = bifree(&[
        "fock",
        "moment",
        "--word",
        "S1 S1 S1 S1",
        "--truncation",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(json(&out)["error"].as_str().unwrap().contains("truncation"));
    let out = bifree(&[
        "fock",
        "moment",
        "--word",
        "S1 S1 S1 S1",
        "--truncation",
        "4",
    ]);
    assert_eq!(json(&out)["value"]["re"][0][0], 2.0);
}

#[test]
fn table_round_trip_through_stdin() {
    let table = r#"[{"chi":"ll","partition":[[1],[2]],"value":{"d":1,"re":[[0.0]]}},
                    {"chi":"ll","partition":[[1,2]],"value":{"d":1,"re":[[1.0]]}}]"#;
    let kappa = pipe(&["mc", "to-cumulants", "--input", "-"], table.as_bytes());
    let moments = pipe(&["mc", "to-moments", "--input", "-"], &kappa);
    let v: Value = serde_json::from_slice(&moments).unwrap();
    let entries = v["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    for e in entries {
        let want = if e["partition"].as_array().unwrap().len() == 1 {
            1.0
        } else {
            0.0
        };
        assert_eq!(e["value"]["re"][0][0], want);
    }
}

fn pipe(args: &[&str], input: &[u8]) -> Vec<u8> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_bifree"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    out.stdout
}

#[test]
fn bifree_test_passes_on_flip_model() {
    let out = bifree(&[
        "bifree",
        "test",
        "--model",
        "flip",
        "--max-order",
        "4",
        "--decorate",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["pass"], true);
    assert!(v["tested"].as_u64().unwrap() > 0);
}

#[test]
fn conj_check_and_solve() {
    let out = bifree(&[
        "conj", "check", "--target", "S1", "--xi", "S1", "--left", "S1", "--right", "D1",
    ]);
    let v = json(&out);
    assert_eq!(v["pass"], true);
    let out = bifree(&[
        "conj", "check", "--target", "S1", "--xi", "2*S1", "--left", "S1",
    ]);
    assert_eq!(json(&out)["pass"], false);
    let out = bifree(&[
        "conj",
        "check",
        "--target",
        "S1",
        "--solve",
        "--left",
        "S1",
        "--max-n",
        "3",
        "--basis-len",
        "2",
    ]);
    let v = json(&out);
    assert_eq!(v["solved"], true);
    assert_eq!(v["pass"], true);
}

#[test]
fn experiments_report_pass() {
    let out = bifree(&["fisher", "run", "--experiment", "circular-min"]);
    let v = json(&out);
    assert_eq!(v["pass"], true);
    assert!((v["ratio"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    let out = bifree(&["entropy", "run", "--experiment", "semicircular-standard"]);
    let v = json(&out);
    assert_eq!(v["pass"], true);
    for key in ["lhs", "rhs", "ratio", "max_residual"] {
        assert!(v[key].is_number(), "{key}");
    }
}

#[test]
fn output_is_byte_stable() {
    let args = [
        "bifree",
        "test",
        "--model",
        "semicircular",
        "--max-order",
        "4",
        "--decorate",
        "--seed",
        "7",
    ];
    assert_eq!(bifree(&args).stdout, bifree(&args).stdout);
}

#[test]
fn verify_all_exits_zero() {
    let out = bifree(&["verify", "all"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    assert_eq!(v["all_pass"], true);
    assert_eq!(v["criteria"].as_array().unwrap().len(), 12);
}
