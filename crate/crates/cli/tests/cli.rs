use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim"))
        .args(args)
        .output()
        .expect("sim runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn entropy_run_writes_headed_csv_plot_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("e");
    let res = sim(&[
        "entropy", "--map", "cat", "--N", "16", "--partition", "equal:4", "--steps", "6", "--out",
        path(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("entropy.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# torus-entropy sim entropy"));
    assert!(lines.next().unwrap().starts_with("# config: {\"experiment\":\"entropy\""));
    assert_eq!(lines.next().unwrap(), "# seed: 0");
    assert!(lines.next().unwrap().contains("nats"));
    assert_eq!(lines.next().unwrap(), "n,I_n,bound_lin,bound_sat,slope_window");
    assert_eq!(lines.count(), 7);
    let m = manifest(&out);
    assert_eq!(m["artifacts"], serde_json::json!(["entropy.csv", "entropy.gp"]));
    assert_eq!(m["all_passed"], true);
    assert!(m["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn exit_codes_follow_the_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let o = path(&out);
    let bad_map = sim(&["entropy", "--map", "baker", "--N", "16", "--partition", "equal:4", "--steps", "2", "--out", o]);
    assert_eq!(code(&bad_map), 1);
    let missing = sim(&["entropy", "--map", "cat", "--partition", "equal:4", "--steps", "2", "--out", o]);
    assert_eq!(code(&missing), 1);
    let bad_partition = sim(&["entropy", "--map", "cat", "--N", "10", "--partition", "equal:4", "--steps", "2", "--out", o]);
    assert_eq!(code(&bad_partition), 1);
    let unknown_flag = sim(&["entropy", "--colour", "red"]);
    assert_eq!(code(&unknown_flag), 1);
    let too_big = sim(&["entropy", "--map", "cat", "--N", "128", "--partition", "equal:4", "--steps", "2", "--out", o]);
    assert_eq!(code(&too_big), 3);
    assert!(!out.exists(), "nothing is written before validation passes");
    let fault = sim(&["verify", "--inject-fault", "skip-measurement", "--out", o]);
    assert_eq!(code(&fault), 2);
    let stderr = String::from_utf8_lossy(&fault.stderr);
    assert!(stderr.contains("oracle_purity"), "{stderr}");
    assert_eq!(manifest(&out)["all_passed"], false);
}

#[test]
fn verify_fast_suite_passes_and_reports_required_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let res = sim(&["verify", "--out", path(tmp.path())]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("verify.json")).unwrap()).unwrap();
    for key in ["max_spectral_mismatch", "trace_drift", "purity_mismatch"] {
        assert!(report[key].as_f64().unwrap() < 1e-8, "{key}");
    }
    assert_eq!(report["_comment"]["config"]["suite"], "fast");
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"experiment": "fstats", "map": "elliptic", "N": 32, "partition": "equal:4", "n_max": 3, "variant": "P"}"#,
    )
    .unwrap();
    let out = tmp.path().join("f");
    let res = sim(&["fstats", "--config", path(&cfg), "--map", "cat", "--variant", "Q", "--out", path(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let m = manifest(&out);
    assert_eq!(m["config"]["map"], "cat");
    assert_eq!(m["config"]["variant"], "Q");
    assert_eq!(m["config"]["N"], 32);
    let wrong = sim(&["entropy", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(code(&wrong), 1);
}

#[test]
fn plot_scripts_only_reference_files_of_the_same_run() {
    let tmp = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 3] = [
        &["entropy", "--map", "elliptic", "--N", "16", "--partition", "sizes:2,2,4,8", "--steps", "4"],
        &["freeness", "--map", "cat", "--N", "32", "--partition", "equal:4", "--nmax", "10", "--samples", "3", "--rmax", "2", "--seed", "4"],
        &["fstats", "--map", "cat", "--N", "32", "--partition", "equal:4", "--mmax", "3", "--variant", "P"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let out = tmp.path().join(format!("r{i}"));
        let mut full: Vec<&str> = args.to_vec();
        full.extend(["--out", path(&out)]);
        let res = sim(&full);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        let m = manifest(&out);
        let artifacts: Vec<String> = m["artifacts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap().to_string())
            .collect();
        for name in &artifacts {
            let text = fs::read_to_string(out.join(name)).unwrap();
            assert!(
                text.starts_with("# torus-entropy sim") || text.starts_with("{\n  \"_comment\""),
                "{name} lacks the header"
            );
            if name.ends_with(".gp") {
                for quoted in text.split('"').skip(1).step_by(2) {
                    if quoted.ends_with(".csv") || quoted.ends_with(".json") {
                        assert!(artifacts.iter().any(|a| a == quoted), "{name} refers to {quoted}");
                    }
                }
            }
        }
    }
}

#[test]
fn sizes_partition_plot_annotates_h_meas() {
    let tmp = tempfile::tempdir().unwrap();
    let res = sim(&[
        "entropy", "--map", "cat", "--N", "16", "--partition", "sizes:2,2,4,8", "--steps", "3", "--out",
        path(tmp.path()),
    ]);
    assert_eq!(code(&res), 0);
    let gp = fs::read_to_string(tmp.path().join("entropy.gp")).unwrap();
    assert!(gp.contains("hP = 1.0678"));
    assert!(gp.contains("n h(P) (initial slope)"));
}

#[test]
fn reruns_are_byte_identical_apart_from_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["freeness", "--map", "haar", "--N", "32", "--partition", "equal:2", "--nmax", "14", "--samples", "4", "--rmax", "3", "--seed", "9"];
    for run in ["a", "b"] {
        let mut full: Vec<&str> = args.to_vec();
        let out = tmp.path().join(run);
        full.extend(["--out", path(&out)]);
        assert_eq!(code(&sim(&full)), 0);
    }
    let names = manifest(&tmp.path().join("a"))["artifacts"].clone();
    for name in names.as_array().unwrap() {
        let name = name.as_str().unwrap();
        let a = fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}
