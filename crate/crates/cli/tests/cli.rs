use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rfkde"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(path).unwrap()).to_vec()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_one_row_per_site() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let cfg = configs().join("simulate_uniform.json");
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("sample.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "i1,i2,value");
    assert_eq!(lines.len(), 101);
    assert!(!text.contains('\r'));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["base_seed"], 5);
    assert_eq!(manifest["outputs"][0], "sample.csv");
}

#[test]
fn simulate_is_deterministic_across_runs_and_threads() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("simulate_uniform.json");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&a), "--threads", "1"]).status.success());
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&b), "--threads", "8"]).status.success());
    assert_eq!(sha(&a.join("sample.csv")), sha(&b.join("sample.csv")));
    let c = tmp.path().join("c");
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&c), "--seed", "6"]).status.success());
    assert_ne!(sha(&a.join("sample.csv")), sha(&c.join("sample.csv")));
}

#[test]
fn manifest_config_reparses_and_reproduces() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("simulate_uniform.json");
    let a = tmp.path().join("a");
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&a), "--seed", "77"]).status.success());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let echoed = write(&tmp, "echo.json", &serde_json::to_string_pretty(&manifest["config"]).unwrap());
    let b = tmp.path().join("b");
    assert!(run(&["simulate", "--config", s(&echoed), "--out", s(&b)]).status.success());
    assert_eq!(sha(&a.join("sample.csv")), sha(&b.join("sample.csv")));
}

#[test]
fn refuses_non_empty_output_directory() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("simulate_uniform.json");
    let out = tmp.path().join("run");
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_bandwidth_exponent_is_a_config_error_with_line() {
    let tmp = TempDir::new().unwrap();
    let text = "{\n  \"schema_version\": 1,\n  \"seed\": 1,\n  \"model\": {\"variant\": \"iid_uniform\", \"parameters\": {\"a\": 0.0, \"b\": 1.0}},\n  \"kernel\": {\"family\": \"uniform\"},\n  \"window\": {\"d\": 2, \"n\": 10},\n  \"bandwidth\": {\n    \"schedule\": {\"c\": 1.0, \"beta\": 1.2}\n  },\n  \"points\": [0.5]\n}\n";
    let cfg = write(&tmp, "bad.json", text);
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 8"), "{err}");
    assert!(err.contains("bandwidth condition"), "{err}");
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn unknown_key_rejected_with_line() {
    let tmp = TempDir::new().unwrap();
    let text = "{\n  \"schema_version\": 1,\n  \"seed\": 1,\n  \"sede\": 2\n}\n";
    let cfg = write(&tmp, "typo.json", text);
    let o = run(&["mixing", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4") && err.contains("sede"), "{err}");
    let record: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(record["error"]["kind"], "config");
}

#[test]
fn estimate_mass_and_sign() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("est");
    let cfg = configs().join("estimate_gaussian.json");
    let o = run(&["estimate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.join("estimate.csv")).unwrap();
    let rows: Vec<(f64, f64)> = rdr.deserialize().map(|r| r.unwrap()).collect();
    assert!(rows.iter().all(|r| r.1 >= 0.0));
    let mass: f64 = rows.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    assert!((mass - 1.0).abs() < 1e-3, "{mass}");
}

#[test]
fn estimate_half_grids_concatenate() {
    let tmp = TempDir::new().unwrap();
    let base: serde_json::Value = serde_json::from_str(&fs::read_to_string(configs().join("estimate_gaussian.json")).unwrap()).unwrap();
    let with_points = |pts: Vec<f64>| {
        let mut c = base.clone();
        c["estimate"] = serde_json::json!({ "points": pts });
        serde_json::to_string(&c).unwrap()
    };
    let all: Vec<f64> = (0..40).map(|i| -2.0 + 0.1 * i as f64).collect();
    let mut outputs = Vec::new();
    for (name, pts) in [("full", all.clone()), ("lo", all[..20].to_vec()), ("hi", all[20..].to_vec())] {
        let cfg = write(&tmp, &format!("{name}.json"), &with_points(pts));
        let out = tmp.path().join(name);
        assert!(run(&["estimate", "--config", s(&cfg), "--out", s(&out)]).status.success());
        outputs.push(fs::read_to_string(out.join("estimate.csv")).unwrap());
    }
    let hi_body: String = outputs[2].lines().skip(1).map(|l| format!("{l}\n")).collect();
    assert_eq!(outputs[0], format!("{}{}", outputs[1], hi_body));
}

#[test]
fn clt_dry_run_does_not_sample() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("dry");
    let cfg = configs().join("ac1_iid_gaussian.json");
    let o = run(&["clt", "--config", s(&cfg), "--out", s(&out), "--dry-run"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!out.exists());
    let plan: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(plan["replicates"], 1000);
    assert_eq!(plan["sites_per_replicate"], 3600);
}

#[test]
fn clt_passes_and_sabotaged_target_fails() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("ac1_iid_gaussian.json");
    let good = tmp.path().join("good");
    let o = run(&["clt", "--config", s(&cfg), "--out", s(&good)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(good.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["config"]["seed"], 20240611);
    let csv = fs::read_to_string(good.join("replicates.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("r,x,t"));
    assert_eq!(csv.lines().count(), 1001);

    let mut c: serde_json::Value = serde_json::from_str(&fs::read_to_string(&cfg).unwrap()).unwrap();
    c["gates"] = serde_json::json!({ "variance_target_scale": 4.0 });
    let bad_cfg = write(&tmp, "sabotage.json", &serde_json::to_string_pretty(&c).unwrap());
    let o = run(&["clt", "--config", s(&bad_cfg), "--out", s(&tmp.path().join("bad"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn clt_outputs_identical_across_threads() {
    let tmp = TempDir::new().unwrap();
    let mut c: serde_json::Value = serde_json::from_str(&fs::read_to_string(configs().join("ac3_moving_average_two_points.json")).unwrap()).unwrap();
    c["replicates"] = 200.into();
    c["window"]["n"] = 30.into();
    c["bandwidth"]["fixed"] = 0.4.into();
    let cfg = write(&tmp, "ma.json", &serde_json::to_string(&c).unwrap());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(&["clt", "--config", s(&cfg), "--out", s(&a), "--threads", "1"]);
    run(&["clt", "--config", s(&cfg), "--out", s(&b), "--threads", "8"]);
    assert_eq!(sha(&a.join("replicates.csv")), sha(&b.join("replicates.csv")));
}

#[test]
fn mixing_verdicts() {
    let tmp = TempDir::new().unwrap();
    let mk = |name: &str, c: f64, q: f64| {
        let text = serde_json::json!({
            "schema_version": 1,
            "seed": 0,
            "mixing": {"sequence": {"family": "power_law", "parameters": {"c": c, "q": q}}, "d": 1}
        });
        write(&tmp, name, &text.to_string())
    };
    let conv = run(&["mixing", "--config", s(&mk("conv.json", 1.0, 3.0))]);
    assert_eq!(conv.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&conv.stdout).unwrap();
    assert_eq!(v["series"]["verdict"], "converges");
    let div = run(&["mixing", "--config", s(&mk("div.json", 0.25, 2.0))]);
    assert_eq!(div.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&div.stdout).unwrap();
    assert_eq!(v["series"]["verdict"], "diverges");
}

#[test]
fn mixing_zero_sequence_is_trivial() {
    let tmp = TempDir::new().unwrap();
    let text = serde_json::json!({
        "schema_version": 1,
        "seed": 0,
        "mixing": {
            "sequence": {"family": "finite_support", "parameters": {"values": []}},
            "d": 1,
            "schedule": {"c": 1.0, "beta": 0.5},
            "n_grid": [100, 10000, 1000000]
        }
    });
    let cfg = write(&tmp, "zero.json", &text.to_string());
    let out = tmp.path().join("mix");
    let o = run(&["mixing", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("lemma2.csv")).unwrap();
    let rows: Vec<Vec<String>> = csv.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.iter().map(|r| r[1].clone()).collect::<Vec<_>>(), ["3", "10", "31"]);
    assert!(rows.iter().all(|r| r[4].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn mixing_example_config_runs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("m");
    let o = run(&["mixing", "--config", s(&configs().join("mixing_power_law.json")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("mixing.json")).unwrap()).unwrap();
    assert_eq!(v["lemma2_trends_hold"], true);
    assert_eq!(v["dedecker"]["verdict"], "converges");
}
