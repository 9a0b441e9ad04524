use std::process::Command;

fn dvfsim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dvfsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn trace_writes_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dvfsim(&["--out", out, "trace", "--preset", "fft_switch"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(csv.starts_with("t_start_s,t_end_s,component,state,power_mW,label"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["scenario"], "fft_switch");
}

#[test]
fn optimize_fft_edp_picks_fmax() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dvfsim(&[
        "--out", out, "--format", "json", "optimize", "--task", "fft", "--metric", "edp",
    ]);
    assert!(o.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["optimum"], "pll:80");
    assert!(dir.path().join("sweep.json").exists());
}

#[test]
fn coap_single_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dvfsim(&[
        "--out",
        out,
        "--levels",
        "24,80",
        "coap",
        "--mac",
        "idtx",
        "--method",
        "POST",
        "--payload",
        "64",
        "--secure",
        "no",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("coap.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| &r[1] == "POST"));
}

#[test]
fn config_errors_exit_2() {
    assert_eq!(dvfsim(&["--levels", "99", "baseline"]).status.code(), Some(2));
    assert_eq!(dvfsim(&["trace", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(dvfsim(&["coap", "--method", "PUT"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("profile.json");
    std::fs::write(&bad, "{\"name\": 3}").unwrap();
    assert_eq!(
        dvfsim(&["--profile", bad.to_str().unwrap(), "presets"]).status.code(),
        Some(2)
    );
}

#[test]
fn presets_are_listed() {
    let o = dvfsim(&["presets"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["sleep_baseline", "idtx_burst", "dsme_burst", "fft_switch"] {
        assert!(text.lines().any(|l| l == name), "missing {name}");
    }
}
