mod common;

use std::path::Path;
use std::process::Command;

use serde_json::Value;
use weylhom::algebra;

struct Run {
    code: i32,
    report: Option<Value>,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_weylhom")).args(args).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    Run {
        code: out.status.code().unwrap(),
        report: serde_json::from_str(&stdout).ok(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn valid(report: &Value) {
    common::validate(report, &common::report_schema()).unwrap_or_else(|e| panic!("schema: {e}\n{report:#}"));
}

/// Drop every key containing `wall_time`.
fn strip_times(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.retain(|k, _| !k.contains("wall_time"));
            m.values_mut().for_each(strip_times);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_times),
        _ => {}
    }
}

#[test]
fn identities_pass_and_validate() {
    let r = run(&["verify-identities", "--algebra", "su3", "g2", "--samples", "20"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rep = r.report.unwrap();
    valid(&rep);
    assert_eq!(rep["schema_version"], "1.0.0");
    assert_eq!(rep["results"].as_array().unwrap().len(), 2);
}

#[test]
fn corrupted_tensor_names_first_failing_check() {
    let dir = tempfile::tempdir().unwrap();
    let g = algebra::build_named("sp2".parse().unwrap()).unwrap();
    let mut doc = g.to_json();
    let c = doc["c"].as_array_mut().unwrap();
    let v = c[12].as_f64().unwrap();
    c[12] = serde_json::json!(v + 0.05);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    let r = run(&["verify-identities", "--algebra-json", path.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("first failing check"), "{}", r.stderr);
    let rep = r.report.unwrap();
    valid(&rep);
    assert_eq!(rep["status"], "fail");
    let first = rep["results"][0]["first_failure"].as_str().unwrap();
    assert!(rep["results"][0]["failures"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f["check"] == "jacobi"));
    assert!(r.stderr.contains(first));
}

#[test]
fn proposition_su3_passes_and_su2_is_outside() {
    let r = run(&["verify-proposition", "--algebra", "su3", "su2"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rep = r.report.unwrap();
    valid(&rep);
    assert_eq!(rep["results"][0]["status"], "pass");
    assert_eq!(rep["results"][0]["unrestricted"]["dimension"], 64);
    assert_eq!(rep["results"][0]["restricted"]["dimension"], 0);
    assert_eq!(rep["results"][1]["status"], "outside_hypothesis");
}

#[test]
fn single_restriction_modes() {
    let r = run(&["verify-proposition", "--algebra", "su3", "--restricted"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rep = r.report.unwrap();
    valid(&rep);
    assert_eq!(rep["results"][0]["restricted"]["dimension"], 0);
    assert!(rep["results"][0].get("unrestricted").is_none());

    let r = run(&["verify-proposition", "--algebra", "su3", "--unrestricted", "--gram"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rep = r.report.unwrap();
    valid(&rep);
    assert_eq!(rep["results"][0]["unrestricted"]["dimension"], 64);
    assert_eq!(rep["results"][0]["unrestricted"]["method"], "gram");
}

#[test]
fn resource_cap_and_ambiguity_exit_two() {
    let r = run(&["verify-proposition", "--algebra", "su3", "--memory-cap-mb", "0"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    valid(&r.report.unwrap());

    let r = run(&["verify-proposition", "--algebra", "su3", "--tol", "min_gap_ratio=1e30"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    let rep = r.report.unwrap();
    valid(&rep);
    assert_eq!(rep["results"][0]["status"], "ambiguous");
}

#[test]
fn table1_matches_and_is_basis_independent() {
    let base = run(&["table1", "--algebra", "su3", "sp2", "g2", "so5"]);
    assert_eq!(base.code, 0, "{}", base.stderr);
    let rep = base.report.unwrap();
    valid(&rep);
    let ms: Vec<u64> = rep["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["m"].as_u64().unwrap())
        .collect();
    assert_eq!(ms, [4, 4, 6, 4]);
    assert_eq!(rep["results"][3]["matches_table"], Value::Null);
    assert_eq!(rep["results"][0]["diagonal_family_rank"], 4);

    let rot = run(&[
        "table1",
        "--algebra",
        "su3",
        "sp2",
        "g2",
        "so5",
        "--rotate",
        "77",
        "--random-cartan",
        "5",
    ]);
    assert_eq!(rot.code, 0);
    let rep2 = rot.report.unwrap();
    for (a, b) in rep["results"]
        .as_array()
        .unwrap()
        .iter()
        .zip(rep2["results"].as_array().unwrap())
    {
        assert_eq!(a["m"], b["m"]);
        assert_eq!(a["rank"], b["rank"]);
    }
}

#[test]
fn geometry_default_and_untwisted() {
    let r = run(&["geometry", "--samples", "5"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rep = r.report.unwrap();
    valid(&rep);
    assert_eq!(rep["results"]["kappa"], -1.0);
    assert_eq!(rep["results"]["checks"]["not_symmetric"], true);

    let r = run(&["geometry", "--samples", "5", "--d-zero"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.report.unwrap()["results"]["checks"]["not_symmetric"], false);

    let r = run(&[
        "geometry",
        "--n",
        "6",
        "--epsilon",
        "-1",
        "--ab-family",
        "sine",
        "--d",
        "1,3=0.5",
        "2,4=-1",
        "--samples",
        "5",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rep = r.report.unwrap();
    valid(&rep);
    assert_eq!(rep["results"]["params"]["d"][2], 0.5);
    assert_eq!(rep["results"]["params"]["d"][10], -0.5);
}

#[test]
fn usage_errors_exit_three() {
    for args in [
        vec!["geometry", "--n", "3"],
        vec!["table1", "--algebra", "so4"],
        vec!["table1", "--algebra", "e8"],
        vec!["table1", "--tol", "nonsense=1"],
        vec!["verify-proposition", "--restricted", "--both"],
        vec!["geometry", "--d", "1,1=2"],
        vec!["frobnicate"],
        vec!["table1", "--config", "/nonexistent/config.json"],
    ] {
        let r = run(&args);
        assert_eq!(r.code, 3, "{args:?}: {}", r.stderr);
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"algebras": ["su3"], "seed": 5, "tolerances": {"jacobi": 1e-11}, "geometry": {"n": 4, "samples": 3}}"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let r = run(&["table1", "--config", c]);
    assert_eq!(r.code, 0);
    let rep = r.report.unwrap();
    assert_eq!(rep["seed"], 5);
    assert_eq!(rep["tolerances"]["identities"]["jacobi"], 1e-11);
    assert_eq!(rep["results"].as_array().unwrap().len(), 1);

    let r = run(&["table1", "--config", c, "--seed", "9", "--algebra", "g2", "sp2"]);
    let rep = r.report.unwrap();
    assert_eq!(rep["seed"], 9);
    assert_eq!(rep["results"][0]["algebra"], "g2");

    let r = run(&["geometry", "--config", c]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rep = r.report.unwrap();
    assert_eq!(rep["results"]["params"]["n"], 4);
    assert_eq!(rep["results"]["points"].as_array().unwrap().len(), 3);

    std::fs::write(&cfg, r#"{"unknown_key": 1}"#).unwrap();
    assert_eq!(run(&["table1", "--config", c]).code, 3);
}

#[test]
fn reports_are_deterministic_modulo_timings() {
    let args = ["verify-proposition", "--algebra", "su3", "--seed", "3"];
    let mut a = run(&args).report.unwrap();
    let mut b = run(&args).report.unwrap();
    strip_times(&mut a);
    strip_times(&mut b);
    assert_eq!(a, b);

    let args = ["verify-identities", "--algebra", "sp2", "--seed", "4", "--threads", "2"];
    let mut a = run(&args).report.unwrap();
    let mut b = run(&["verify-identities", "--algebra", "sp2", "--seed", "4", "--threads", "1"])
        .report
        .unwrap();
    strip_times(&mut a);
    strip_times(&mut b);
    assert_eq!(a, b);
}

#[test]
fn out_and_export_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/report.json");
    let exp = dir.path().join("systems");
    let r = run(&[
        "verify-proposition",
        "--algebra",
        "su3",
        "--out",
        out.to_str().unwrap(),
        "--export-dir",
        exp.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.report.is_none());
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    valid(&rep);
    for f in ["su3_unrestricted.triplets", "su3_restricted.triplets"] {
        assert!(Path::new(&exp.join(f)).exists(), "{f}");
    }
    let text = std::fs::read_to_string(exp.join("su3_restricted.triplets")).unwrap();
    let (m, header) = weylhom::numerics::SparseMatrix::read_triplets(std::io::Cursor::new(text)).unwrap();
    assert_eq!(m.cols(), 448);
    assert!(header.contains("phi_col"));
}

#[test]
fn in_process_entry_point() {
    assert_eq!(weylhom::cli::main_with_args(["weylhom", "--version"]), 0);
    assert_eq!(weylhom::cli::main_with_args(["weylhom", "table1", "--bogus"]), 3);
}
