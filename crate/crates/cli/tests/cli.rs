use std::path::Path;
use std::process::{Command, Output};

use afc_cli::RunConfig;

fn afc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afc"))
        .args(args)
        .current_dir(dir)
        .env_remove("AFC_CONFIG")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn efficiency_curve_with_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let out = afc(&["efficiency-curve", "--out", "o"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&tmp.path().join("o/efficiency.csv"));
    let near = rows.iter().find(|r| (r[0] - 0.85e-6).abs() < 1e-12).unwrap();
    assert!(near[1] > 0.38 && near[1] < 0.44, "{near:?}");
    let m = manifest(&tmp.path().join("o"));
    assert_eq!(m["config_sha256"], RunConfig::default().sha256());
    assert_eq!(m["command"], "efficiency-curve");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn broader_peaks_decay_faster() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[comb]\npeak_fwhm_hz = 297e3\npeak_optical_depth = 34.0\n");
    assert!(afc(&["efficiency-curve", "--config", &cfg, "--out", "wide"], tmp.path()).status.success());
    assert!(afc(&["efficiency-curve", "--out", "narrow"], tmp.path()).status.success());
    let ratio = |name: &str| {
        let rows = csv_rows(&tmp.path().join(name).join("efficiency.csv"));
        let at = |t: f64| rows.iter().find(|r| (r[0] - t).abs() < 1e-12).unwrap()[1];
        at(2e-6) / at(0.5e-6)
    };
    assert!(ratio("wide") < 0.5 * ratio("narrow"));
}

#[test]
fn validation_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = write_config(tmp.path(), "[efficiency]\ntimes_s = []\n");
    assert_eq!(afc(&["efficiency-curve", "--config", &empty], tmp.path()).status.code(), Some(2));
    let unknown = write_config(tmp.path(), "[comb]\npeak_width = 1.0\n");
    let out = afc(&["efficiency-curve", "--config", &unknown], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("peak_width"));
    let missing = write_config(tmp.path(), "[prep]\nlevel_scheme = \"nowhere.toml\"\n");
    assert_eq!(afc(&["prepare-comb", "--config", &missing], tmp.path()).status.code(), Some(2));
    assert_eq!(afc(&["efficiency-curve", "--config", "absent.toml"], tmp.path()).status.code(), Some(2));
}

#[test]
fn cavity_design_reaches_88_percent_and_rejects_unit_mirror() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(afc(&["cavity-design", "--out", "c"], tmp.path()).status.success());
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("c/summary.json")).unwrap()).unwrap();
    let best = s["best_efficiency"].as_f64().unwrap();
    assert!((0.86..=0.90).contains(&best), "{best}");

    let zero = write_config(tmp.path(), "[cavity]\nstorage_time_s = 0.0\n");
    assert!(afc(&["cavity-design", "--config", &zero, "--out", "z"], tmp.path()).status.success());
    let s0: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("z/summary.json")).unwrap()).unwrap();
    assert!(s0["best_efficiency"].as_f64().unwrap() > best);

    let r1 = write_config(tmp.path(), "[cavity]\nr1 = 1.0\n");
    let code = afc(&["cavity-design", "--config", &r1, "--out", "r"], tmp.path()).status.code();
    assert!(matches!(code, Some(2) | Some(3)), "{code:?}");
}

#[test]
fn prepare_comb_default_and_wider_burnback() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(afc(&["prepare-comb", "--out", "p"], tmp.path()).status.success());
    let peaks: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("p/peaks.json")).unwrap()).unwrap();
    assert_eq!(peaks.len(), 4);
    let c: Vec<f64> = peaks.iter().map(|p| p["center_hz"].as_f64().unwrap()).collect();
    for w in c.windows(2) {
        assert!((w[1] - w[0] - 2.3e6).abs() <= 10e3, "{c:?}");
    }
    let rows = csv_rows(&tmp.path().join("p/profile.csv"));
    assert!(rows.len() > 2000);
}

#[test]
fn readout_round_trip_and_uncompensated_broadening() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(afc(&["readout", "--out", "comp"], tmp.path()).status.success());
    let naive = write_config(tmp.path(), "[readout]\ncompensate = false\n");
    assert!(afc(&["readout", "--config", &naive, "--out", "naive"], tmp.path()).status.success());
    let widths = |d: &str| -> Vec<f64> {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join(d).join("peaks.json")).unwrap()).unwrap();
        v["peaks"].as_array().unwrap().iter().map(|p| p["fwhm_hz"].as_f64().unwrap()).collect()
    };
    for w in widths("comp") {
        assert!((w / 140e3 - 1.0).abs() < 0.02, "{w}");
    }
    for w in widths("naive") {
        assert!(w > 1.02 * 140e3, "{w}");
    }
}

#[test]
fn flat_structure_gives_no_beats() {
    let tmp = tempfile::tempdir().unwrap();
    let flat = write_config(tmp.path(), "[readout.structure]\npeak_optical_depth = 0.0\n");
    let out = afc(&["readout", "--config", &flat, "--out", "f"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&tmp.path().join("f/trace.csv"));
    assert!(rows.iter().all(|r| (r[1] - 1.0).abs() < 1e-9));
    assert!(!tmp.path().join("f/peaks.json").exists());
}

const SMALL_MAP: &str = "[ensemble]\nn_ions = 20000\n[echo_map]\ndelay_stop_s = 1.0e-6\ndelay_step_s = 0.25e-6\nwindow_stop_s = 2.0e-6\nmode = \"weak_coherent\"\n";

#[test]
fn echo_map_is_byte_identical_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_MAP);
    for d in ["a", "b"] {
        assert!(afc(&["echo-map", "--config", &cfg, "--out", d, "--seed", "9"], tmp.path()).status.success());
    }
    assert!(afc(&["echo-map", "--config", &cfg, "--out", "c", "--seed", "10"], tmp.path()).status.success());
    let index = std::fs::read_to_string(tmp.path().join("a/index.jsonl")).unwrap();
    assert_eq!(index.lines().count(), 5);
    for name in manifest(&tmp.path().join("a"))["outputs"].as_array().unwrap() {
        let name = name.as_str().unwrap();
        let a = std::fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    assert_eq!(manifest(&tmp.path().join("a"))["seed"], 9);
    let ha = std::fs::read(tmp.path().join("a/histograms/delay_0000.csv")).unwrap();
    let hc = std::fs::read(tmp.path().join("c/histograms/delay_0000.csv")).unwrap();
    assert_ne!(ha, hc);
}

#[test]
fn single_delay_gives_one_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[ensemble]\nn_ions = 20000\n[echo_map]\ndelays_s = [0.5e-6]\n");
    assert!(afc(&["echo-map", "--config", &cfg, "--out", "s"], tmp.path()).status.success());
    let index = std::fs::read_to_string(tmp.path().join("s/index.jsonl")).unwrap();
    assert_eq!(index.lines().count(), 1);
    let line: serde_json::Value = serde_json::from_str(index.lines().next().unwrap()).unwrap();
    assert!(line["histogram"].is_null());
    assert!(!tmp.path().join("s/histograms").exists());
}

#[test]
fn dry_run_writes_nothing_and_env_config_is_used() {
    let tmp = tempfile::tempdir().unwrap();
    let out = afc(&["echo-map", "--out", "d", "--dry-run"], tmp.path());
    assert!(out.status.success());
    assert!(!tmp.path().join("d").exists());

    let cfg = write_config(tmp.path(), "[efficiency]\ntimes_s = []\n");
    let out = Command::new(env!("CARGO_BIN_EXE_afc"))
        .args(["efficiency-curve", "--dry-run"])
        .current_dir(tmp.path())
        .env("AFC_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn hash_ignores_formatting_and_explicit_defaults() {
    let a = RunConfig::from_toml("", None).unwrap();
    let b = RunConfig::from_toml("seed = 1\n\n[comb]\npeak_count = 4\n", None).unwrap();
    assert_eq!(a.sha256(), b.sha256());
    let c = RunConfig::from_toml("seed = 2\n", None).unwrap();
    assert_ne!(a.sha256(), c.sha256());
}
