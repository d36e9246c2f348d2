use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn rhfpt(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rhfpt"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn validate_bundled_config_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = rhfpt(&["validate", "--config", &config("validate.toml")], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("CRITERION")).count(), 14);
    assert!(stdout.lines().all(|l| !l.starts_with("CHECK") || l.contains(" PASS ") || l.contains("[literal:")));
    let summary = read_json(&dir.path().join("summary.json"));
    assert_eq!(summary["pass"], true);
    assert!(dir.path().join("criteria.csv").exists());
}

#[test]
fn nondeg_mode_on_degenerate_system_is_a_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rhfpt(
        &["expand", "--config", &config("ring16_deg.toml"), "--mode", "nondeg", "--order", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = read_json(&dir.path().join("error.json"));
    assert_eq!(err["module"], "nondeg_pt");
    assert_eq!(err["operation"], "expand");
    assert_eq!(err["kind"], "precondition");
    assert!(err["diagnostic"].as_str().unwrap().contains("degenerate"));
}

#[test]
fn wigner_writes_slope_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = rhfpt(&["wigner", "--config", &config("ring16_nondeg.toml"), "--order", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = fs::read_to_string(dir.path().join("wigner_nondeg_n1.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("beta,error,used"));
    assert!(csv.lines().count() > 4);
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["verb"], "wigner");
    assert_eq!(manifest["config"]["order"], 1);
}

#[test]
fn runs_are_reproducible_from_their_manifest() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = rhfpt(&["expand", "--config", &config("ring16_deg.toml"), "--seed", "3"], a.path());
    assert_eq!(out.status.code(), Some(0));
    let echoed = a.path().join("config.toml").to_string_lossy().into_owned();
    let out = rhfpt(&["expand", "--config", &echoed], b.path());
    assert_eq!(out.status.code(), Some(0));
    let sa = fs::read(a.path().join("summary.txt")).unwrap();
    let sb = fs::read(b.path().join("summary.txt")).unwrap();
    assert_eq!(sa, sb);
    let ea = fs::read(a.path().join("series/energies.csv")).unwrap();
    let eb = fs::read(b.path().join("series/energies.csv")).unwrap();
    assert_eq!(ea, eb);
}

#[test]
fn fd_check_and_ground_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = rhfpt(&["fd-check", "--config", &config("ring16_nondeg.toml")], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("fd_samples.csv").exists());
    let dir = tempfile::tempdir().unwrap();
    let out = rhfpt(&["ground-state", "--config", &config("double_well_mo.toml")], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("ground_state").is_dir());
}

#[test]
fn bad_inputs_fail_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let out = rhfpt(&["expand"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = read_json(&dir.path().join("error.json"));
    assert_eq!(err["module"], "cli");

    let text = fs::read_to_string(configs().join("ring16_nondeg.toml")).unwrap();
    let typo = dir.path().join("typo.toml");
    fs::write(&typo, text.replace("norm = 1.0", "nrom = 1.0")).unwrap();
    let out = rhfpt(&["expand", "--config", typo.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nrom"), "{stderr}");

    let out = rhfpt(&["expand", "--config", &config("ring16_nondeg.toml"), "--mode", "wigner"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
