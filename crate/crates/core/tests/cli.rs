use std::path::Path;
use std::process::{Command, Output};

use pimsner_lab::fock::{SchurTable, SCHUR_CSV_HEADER};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pimsner-lab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, json: &Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(json).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

/// `C` with `n = 2`, `U = scale·I`, both automorphisms trivial.
fn scaled_cuntz_config(scale: f64) -> Value {
    let one = serde_json::json!([[[[1.0, 0.0]]]]);
    let entry = |z: f64| serde_json::json!([[[[z, 0.0]]]]);
    serde_json::json!({
        "algebra": [1],
        "n": 2,
        "U": [[entry(scale), entry(0.0)], [entry(0.0), entry(scale)]],
        "automorphisms": [{"perm": [0], "unitaries": one}, {"perm": [0], "unitaries": one}],
        "M": 4,
        "N": [1, 3],
    })
}

#[test]
fn validate_preset_passes() {
    let out = run(&["validate", "--preset", "cuntz2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["command"], "validate");
    assert_eq!(v["pass"], true);
    assert_eq!(v["config"]["preset"]["name"], "cuntz2");
    assert!(v["config"]["preset"]["version"].is_string());
}

#[test]
fn crossed_schur_coefficients_are_one_minus_band_fraction() {
    let out = run(&["schur", "--preset", "crossed-z3", "--N", "1..6", "--M", "10"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(SCHUR_CSV_HEADER));
    let mut two_sided = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 9);
        let [n, r, s, l]: [i64; 4] = std::array::from_fn(|k| f[k].parse().unwrap());
        let (num, den): (i64, i64) = (f[4].parse().unwrap(), f[5].parse().unwrap());
        let abs_err: f64 = f[7].parse().unwrap();
        assert!(abs_err < 1e-9, "{line}");
        let measured: f64 = f[6].parse().unwrap();
        assert!((measured - num as f64 / den as f64).abs() < 1e-9);
        let j = if f[8] == "two" { (r - s).abs() } else { r.max(s) };
        let in_tail = f[8] == "two" || l >= n - r.max(s);
        if in_tail && j <= n {
            // 1 − j/(N+1), cross-multiplied.
            assert_eq!(num * (n + 1), (n + 1 - j) * den, "{line}");
        }
        two_sided += usize::from(f[8] == "two");
    }
    assert!(two_sided > 0);
}

#[test]
fn schur_row_count_matches_grid() {
    let (m, band) = (5i64, 4i64);
    let out = run(&["schur", "--preset", "rotation-m2", "--N", "2..4", "--M", "5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = String::from_utf8(out.stdout).unwrap().lines().count() - 1;
    let mut expected = 0;
    for _n in 2..=4 {
        for r in 0..=band {
            for s in 0..=band {
                expected += (m - r.max(s) + 1) + (2 * m - (r - s).abs() + 1);
            }
        }
    }
    assert_eq!(rows as i64, expected);
}

#[test]
fn empty_table_is_header_only() {
    assert_eq!(SchurTable::default().to_csv(), format!("{SCHUR_CSV_HEADER}\n"));
}

#[test]
fn json_schur_is_byte_identical_across_runs() {
    let args = ["schur", "--preset", "twisted2", "--N", "1..3", "--M", "4", "--format", "json", "--seed", "5"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["result"]["summary"]["pass"], true);
    assert!(v["result"]["summary"]["printed_mismatches"].as_u64().unwrap() > 0);
}

#[test]
fn floats_use_seventeen_significant_digits() {
    let out = run(&["schur", "--preset", "cuntz2", "--N", "2", "--M", "3", "--format", "json"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let measured = v["result"]["table"]["rows"][0]["measured"].as_f64().unwrap();
    assert!(text.contains(&format!("{measured:.16e}")));
    // Rationals serialize as [num, den].
    assert!(v["result"]["table"]["rows"][0]["expected"].as_array().unwrap().len() == 2);
}

#[test]
fn certificate_twisted_n4_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("cert.json");
    let out = run(&["certificate", "--preset", "twisted2", "--N", "4", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    for key in ["spec", "N", "D", "flatten_dim", "generators", "factor_maps", "tolerances", "seed", "created", "tool_version", "pass"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["N"], 4);
    assert_eq!(v["pass"], true);
    // D = 1 + 2 + 4 + 8 + 16 over A = C².
    assert_eq!(v["D"], 31);
    assert_eq!(v["flatten_dim"], 62);
    for m in v["factor_maps"].as_array().unwrap() {
        assert_eq!(m["cp"]["method"], "choi");
        assert!(m["cp"]["min_eig"].as_f64().unwrap() >= -1e-8);
        assert!(m["norm"].as_f64().unwrap() <= 1.0 + 1e-8);
    }
    assert_eq!(v["spec"]["name"], "twisted2");
}

#[test]
fn corrupted_unitary_flips_exit_to_one() {
    let tmp = tempfile::tempdir().unwrap();
    let good = write_config(tmp.path(), "good.json", &scaled_cuntz_config(1.0));
    let bad = write_config(tmp.path(), "bad.json", &scaled_cuntz_config(0.9));
    for cmd in ["validate", "schur", "expectation"] {
        let ok = run(&[cmd, "--config", &good]);
        assert_eq!(code(&ok), 0, "{cmd}: {}", stderr(&ok));
        let broken = run(&[cmd, "--config", &bad]);
        assert_eq!(code(&broken), 1, "{cmd}: {}", stderr(&broken));
        let v: Value = serde_json::from_slice(&broken.stdout).unwrap();
        assert_eq!(v["command"], "validate");
        assert_eq!(v["pass"], false);
    }
}

#[test]
fn configuration_errors_exit_two_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write_config(tmp.path(), "unknown.json", &serde_json::json!({"preset": "cuntz2", "colour": 3}));
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["validate", "--preset", "nope"], "preset"),
        (vec!["schur", "--preset", "cuntz2", "--M", "5", "--N", "1..7"], "N"),
        (vec!["schur", "--preset", "cuntz2", "--M", "40"], "M"),
        (vec!["schur", "--preset", "cuntz2", "--N", "4..2"], "N"),
        (vec!["validate", "--config", "/nonexistent/cfg.json"], "config"),
        (vec!["validate", "--config", &unknown], "config"),
        (vec!["validate", "--preset", "cuntz2", "--format", "csv"], "format"),
    ];
    for (args, field) in cases {
        let out = run(&args);
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).contains(field), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn argument_errors_exit_two() {
    for args in [
        vec!["frobnicate"],
        vec!["validate", "--preset", "cuntz2", "--config", "x.json"],
        vec!["schur", "--preset", "cuntz2", "--seed", "minus-one"],
        vec!["schur", "--preset", "cuntz2", "--N", "a..b"],
    ] {
        assert_eq!(code(&run(&args)), 2, "{args:?}");
    }
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn unwritable_output_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let target = blocker.join("sub").join("out.json");
    let out = run(&["validate", "--preset", "cuntz2", "--out", target.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn report_writes_every_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("rep");
    let out = run(&["report", "--preset", "twisted2", "--N", "1..3", "--M", "4", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut names: Vec<String> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(
        names,
        ["certificate.json", "expectation.json", "lift-check.json", "report.json", "schur.csv", "schur.json", "validate.json"]
    );
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let suites = report["result"].as_array().unwrap();
    assert!(suites.iter().all(|s| s["pass"] == true));
    assert_eq!(report["pass"], true);
}

#[test]
fn bilateral_report_exits_one_on_literal_lift_mismatch() {
    // Pairs with min(r, s) ≥ 1 differ from t_μ t_ν* by a finite-rank block.
    let out = run(&["lift-check", "--preset", "crossed-z3", "--M", "4"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for b in v["result"]["bilateral"].as_array().unwrap() {
        let (r, s) = (b["r"].as_i64().unwrap(), b["s"].as_i64().unwrap());
        assert_eq!(b["exact"], r.min(s) == 0);
        assert_eq!(b["quotient_consistent"], true);
    }
    assert!(v["result"]["defects"].as_array().unwrap().iter().all(|d| d["pass"] == true));
}
