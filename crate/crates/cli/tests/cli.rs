use std::path::Path;
use std::process::Command;

fn nlhr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nlhr"))
}

/// Small vessel experiment that runs in well under a second.
const TINY: &str = r#"{
  "name": "tiny",
  "seed": 3,
  "phantom": {"kind": "parabolic_vessel", "center_depth": 0.006, "radius": 0.0005, "peak_velocity": 0.25, "inclination": 0.0},
  "acquisition": {"center_frequency": 8e6, "sampling_frequency": 40e6, "prf": 10e3, "sound_speed": 1540.0,
                  "num_frames": 16, "num_tx_cycles": 5, "f_number": 4.0, "alpha_set": [10.0]},
  "array": {"num_elements": 16},
  "grid": {"x_range": [-1e-4, 1e-4], "z_range": [0.0054, 0.0066]},
  "scatterers": {"density": 1.0},
  "estimator": {"k_window": 0.4e-3, "l_window": 4.0}
}"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn status(cmd: &mut Command) -> i32 {
    let out = cmd.output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap()
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), TINY);
    for name in ["a", "b"] {
        let code = status(nlhr().args(["--deterministic", "run", "--config"]).arg(&cfg).arg("--out").arg(d.path().join(name)));
        assert_eq!(code, 0);
    }
    let a = std::fs::read(d.path().join("a/manifest.json")).unwrap();
    let b = std::fs::read(d.path().join("b/manifest.json")).unwrap();
    assert_eq!(a, b);
    let m: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(m["beamformer"], "nlhr");
    assert!(m["metrics"]["n"].as_u64().unwrap() > 0);
}

#[test]
fn thread_count_does_not_change_output() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), TINY);
    for (name, threads) in [("one", "1"), ("four", "4")] {
        let code = status(nlhr().args(["--threads", threads, "run", "--config"]).arg(&cfg).arg("--out").arg(d.path().join(name)));
        assert_eq!(code, 0);
    }
    assert_eq!(
        std::fs::read(d.path().join("one/manifest.json")).unwrap(),
        std::fs::read(d.path().join("four/manifest.json")).unwrap()
    );
}

#[test]
fn staged_pipeline_produces_every_artifact() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), TINY);
    let p = |s: &str| d.path().join(s);
    assert_eq!(status(nlhr().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(p("rf"))), 0);
    assert_eq!(status(nlhr().args(["beamform", "--config"]).arg(&cfg).arg("--input").arg(p("rf")).arg("--out").arg(p("bf"))), 0);
    assert_eq!(status(nlhr().args(["sv-spectrum", "--config"]).arg(&cfg).arg("--input").arg(p("bf")).arg("--out").arg(p("sv"))), 0);
    assert_eq!(status(nlhr().args(["estimate", "--config"]).arg(&cfg).arg("--input").arg(p("bf")).arg("--out").arg(p("vel"))), 0);
    assert_eq!(status(nlhr().args(["evaluate", "--config"]).arg(&cfg).arg("--input").arg(p("vel")).arg("--out").arg(p("eval"))), 0);
    for f in ["rf/rf.bin", "rf/rf.json", "bf/beamformed.bin", "bf/beamformed.json", "sv/sv_spectrum.csv",
              "vel/velocity.bin", "vel/velocity.json", "vel/speed.pgm", "vel/quiver.csv", "eval/profile.csv", "eval/metrics.json"] {
        assert!(p(f).exists(), "{f} missing");
    }
    let sv = std::fs::read_to_string(p("sv/sv_spectrum.csv")).unwrap();
    assert!(sv.starts_with("component,value_db,frequency_hz\n"));
}

#[test]
fn dcc_needs_rf_and_runs_with_it() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), TINY);
    let p = |s: &str| d.path().join(s);
    assert_eq!(status(nlhr().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(p("rf"))), 0);
    assert_eq!(status(nlhr().args(["beamform", "--config"]).arg(&cfg).arg("--input").arg(p("rf")).arg("--out").arg(p("bf"))), 0);
    let without = status(nlhr().args(["estimate", "--estimator", "dcc", "--config"]).arg(&cfg).arg("--input").arg(p("bf")).arg("--out").arg(p("v1")));
    assert_eq!(without, 3);
    let with = status(
        nlhr().args(["estimate", "--estimator", "dcc", "--config"]).arg(&cfg).arg("--input").arg(p("bf"))
            .arg("--rf").arg(p("rf")).arg("--out").arg(p("v2")),
    );
    assert_eq!(with, 0);
}

#[test]
fn config_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    let bad_fs = TINY.replace("\"sampling_frequency\": 40e6", "\"sampling_frequency\": 1e6");
    let cfg = write_config(d.path(), &bad_fs);
    assert_eq!(status(nlhr().args(["run", "--config"]).arg(&cfg).arg("--out").arg(d.path().join("o"))), 2);
    let cfg = write_config(d.path(), &TINY.replace("\"seed\": 3", "\"seed\": 3, \"colour\": 1"));
    assert_eq!(status(nlhr().args(["run", "--config"]).arg(&cfg).arg("--out").arg(d.path().join("o"))), 2);
    let cfg = write_config(d.path(), TINY);
    let sweep = nlhr().args(["sweep", "--axis", "colour", "--values", "1", "--config"]).arg(&cfg).arg("--out").arg(d.path().join("s")).output().unwrap();
    assert_eq!(sweep.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&sweep.stderr).contains("unknown sweep axis"));
    assert_eq!(status(nlhr().args(["run", "--k-remove", "999", "--config"]).arg(&cfg).arg("--out").arg(d.path().join("o"))), 2);
}

#[test]
fn pipeline_errors_exit_with_three() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), TINY);
    let missing = d.path().join("nothing-here");
    assert_eq!(status(nlhr().args(["beamform", "--config"]).arg(&cfg).arg("--input").arg(&missing).arg("--out").arg(d.path().join("o"))), 3);
}

#[test]
fn sweep_writes_comparison() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), TINY);
    let out = d.path().join("sweep");
    assert_eq!(status(nlhr().args(["sweep", "--axis", "seed", "--values", "1,2", "--config"]).arg(&cfg).arg("--out").arg(&out)), 0);
    let csv = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("seed=1/manifest.json").exists());
}
