use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cotdr-lab"))
        .args(args)
        .env_remove("COTDR_LAB_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_scenario(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const TWO_CORES: &str = r#"{
    "name": "two cores",
    "fiber": {"cores": [{"id": 0, "length_m": 200.0},
                        {"id": 1, "length_m": 200.0, "delay_offset_s": 0.6e-9}],
              "center_core_id": 0, "tdc_ppm_per_k": 7.49, "ref_temperature_c": 20.0},
    "setup": {"noise_sigma": 0.05},
    "sweep_c": [10.0, 20.0, 30.0],
    "selected_core_groups": [[0, 1]]
}"#;

#[test]
fn golay_check_output() {
    let o = lab(&["golay-check", "11"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "2048-bit pair OK: peak 4096, max sidelobe 0");

    let o = lab(&["golay-check", "3", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["peak"], 16);
    assert_eq!(v["ok"], true);

    assert_eq!(lab(&["golay-check", "40"]).status.code(), Some(3));
}

#[test]
fn usage_errors() {
    assert_eq!(lab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(lab(&["run", "x.json", "--bogus"]).status.code(), Some(2));
    assert_eq!(lab(&["golay-check"]).status.code(), Some(2));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), &TWO_CORES.replace("\"length_m\": 200.0}", "\"length_m\": -5}"));
    let o = lab(&["run", &path]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("length_m"), "{err}");

    let path = write_scenario(dir.path(), &TWO_CORES.replace("\"noise_sigma\"", "\"noise\""));
    let o = lab(&["run", &path]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8(o.stderr).unwrap().contains("line"));

    assert_eq!(lab(&["run", "/nonexistent/scenario.json"]).status.code(), Some(3));
}

#[test]
fn pipeline_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    // 20 ps apart: the two reflections merge into one peak.
    let path = write_scenario(dir.path(), &TWO_CORES.replace("0.6e-9", "10e-12"));
    let o = lab(&["run", &path]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8(o.stderr).unwrap().contains("T=10 degC"));
}

#[test]
fn simulate_then_analyze_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), TWO_CORES);
    let traces = dir.path().join("traces");
    let o = lab(&["simulate", &path, "--out", traces.to_str().unwrap(), "--seed", "9"]);
    assert!(o.status.success(), "{o:?}");
    assert!(traces.join("manifest.json").exists());
    let analyzed = lab(&["analyze", traces.to_str().unwrap()]);
    let run = lab(&["run", &path, "--seed", "9"]);
    assert!(analyzed.status.success() && run.status.success());
    assert_eq!(analyzed.stdout, run.stdout);

    let env_run = Command::new(env!("CARGO_BIN_EXE_cotdr-lab"))
        .args(["run", &path])
        .env("COTDR_LAB_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(env_run.stdout, run.stdout);
    assert_ne!(lab(&["run", &path, "--seed", "10"]).stdout, run.stdout);

    let parallel = lab(&["run", &path, "--seed", "9", "--parallel", "2"]);
    assert_eq!(parallel.stdout, run.stdout);
}

#[test]
fn simulate_requires_out() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), TWO_CORES);
    assert_eq!(lab(&["simulate", &path]).status.code(), Some(3));
}

#[test]
fn run_writes_files_and_dumps_traces() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), TWO_CORES);
    let out = dir.path().join("out");
    let o = lab(&["run", &path, "--out", out.to_str().unwrap(), "--dump-traces"]);
    assert!(o.status.success(), "{o:?}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["temperatures"].as_array().unwrap().len(), 3);
    assert!(out.join("traces/manifest.json").exists());
    assert!(out.join("traces/acq000_a.cotr").exists());

    let o = lab(&["run", &path, "--format", "csv"]);
    let text = stdout(&o);
    assert!(text.starts_with("temperature_c,core,round_trip_s,one_way_s,skew_s"));
    assert_eq!(text.lines().count(), 1 + 3 * 2);
}

#[test]
fn temp_sweep_rows_increase_with_temperature() {
    let o = lab(&["temp-sweep", "7core_10km"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut per_core: std::collections::BTreeMap<u32, Vec<(f64, f64)>> = Default::default();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        per_core
            .entry(f[1].parse().unwrap())
            .or_default()
            .push((f[0].parse().unwrap(), f[3].parse().unwrap()));
    }
    assert_eq!(per_core.len(), 7);
    for rows in per_core.values() {
        assert_eq!(rows.len(), 5);
        assert!(rows.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1));
    }
}

#[test]
fn mps_writes_spectra() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mps");
    let o = lab(&["mps", "7core_1km", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let pmd = fs::read_to_string(out.join("pmd.csv")).unwrap();
    assert_eq!(pmd.lines().count(), 8);
    let tau = fs::read_to_string(out.join("tau_core3.csv")).unwrap();
    assert!(tau.starts_with("lambda_nm,group_delay_s"));
    assert_eq!(tau.lines().count(), 1 + 2201);
    assert_eq!(fs::read_to_string(out.join("cd_core3.csv")).unwrap().lines().count(), 1 + 2199);
    assert!(out.join("dgd_core6.csv").exists());
}

#[test]
fn compare_reports_the_timebase_offset() {
    let o = lab(&["compare", "7core_1km"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let mean = v["mean_offset_s"].as_f64().unwrap();
    assert!((mean - 300e-12).abs() < 3e-12, "{mean}");
    assert_eq!(v["constant_offset"], true);
}

#[test]
fn table1_layout() {
    let o = lab(&["report", "--table1", "7core_1km", "19core_5km"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].contains("PMD min/max (ps)"));
    assert!(lines[1].contains("-1.20/0.33"), "{}", lines[1]);
    assert!(lines[2].contains("-3.31/1.88"), "{}", lines[2]);

    let o = lab(&["report", "--table1", "7core_1km", "--format", "csv"]);
    assert!(stdout(&o).starts_with("fiber,cores,length_km"));
}
