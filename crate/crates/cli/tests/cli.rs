use std::path::Path;
use std::process::{Command, Output};

fn epm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epm"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn optimize_weight_prints_spike_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let o = epm(&["optimize-weight", "--out", "ow"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("(1, -2, 1)"), "{}", stdout(&o));
    assert!(dir.path().join("ow/metadata.json").exists());
}

#[test]
fn taylor_green_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = epm(&["taylor-green", "--out", out, "--snapshots", "8"], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["errors.csv", "snapshots/snap_000016.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between runs");
    }
    let errors = std::fs::read_to_string(dir.path().join("a/errors.csv")).unwrap();
    // one comment line, one header, one row per step
    assert_eq!(errors.lines().count(), 2 + 32);
    assert!(errors.lines().nth(1).unwrap() == "k,t,vel_err,pres_err");
}

#[test]
fn default_output_directory_is_per_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let o = epm(&["truncation", "--preset", "s-w", "--h-factors", "3.1"], dir.path());
    assert!(o.status.success());
    assert!(dir.path().join("out/truncation/truncation.csv").exists());
}

#[test]
fn bad_preset_fails_with_key_name() {
    let dir = tempfile::tempdir().unwrap();
    let o = epm(&["cavity", "--preset", "x-y"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("preset"));
}

#[test]
fn config_file_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "experiment = \"taylor-green\"\ndx = 0.04\neps = \"big\"\n").unwrap();
    let o = epm(&["run", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "experiment = \"truncation\"\npreset = \"g-s\"\nh_factors = [2.6]\nout = \"from-file\"\n")
        .unwrap();
    let o = epm(&["run", "c.toml", "--preset", "s-q", "--out", "from-flag"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("s-q"));
    assert!(dir.path().join("from-flag/truncation.csv").exists());
    assert!(!dir.path().join("from-file").exists());
}

#[test]
fn unstable_run_exits_nonzero_and_keeps_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    // A time step far above the stability bound blows up within a few steps.
    std::fs::write(
        dir.path().join("c.toml"),
        "experiment = \"taylor-green\"\npreset = \"g-s\"\ntau = 0.5\nend_time = 20.0\n",
    )
    .unwrap();
    let o = epm(&["run", "c.toml", "--out", "blow"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    let meta = std::fs::read_to_string(dir.path().join("blow/metadata.json")).unwrap();
    assert!(meta.contains("\"diverged_at\": "), "{meta}");
    assert!(!meta.contains("\"diverged_at\": null"));
}
