//! End-to-end tests of the command-line interface, driving the built
//! binary on the shipped sample programs.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_effcalc"))
}

fn programs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .join("programs")
}

#[test]
fn check_prints_the_polymorphic_identity_scheme() {
    let out = bin()
        .args(["check"])
        .arg(programs().join("id_id.eff"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("val id : ∀α. α → α"), "{stdout}");
    assert!(stdout.contains("val id' : ∀α. α → α"), "{stdout}");
}

#[test]
fn run_evaluates_the_dyn_example_to_two() {
    let out = bin()
        .args(["run"])
        .arg(programs().join("dyn_example.eff"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "return 2");
}

#[test]
fn run_reports_fuel_exhaustion_with_exit_one() {
    let out = bin()
        .args(["run", "--fuel", "100"])
        .arg(programs().join("h_div.eff"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("fuel exhausted"), "{stdout}");
}

#[test]
fn run_rejects_h_div_in_local_mode_with_exit_one() {
    let out = bin()
        .args(["run", "--mode", "local"])
        .arg(programs().join("h_div.eff"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("occurs"), "{stderr}");
}

#[test]
fn translate_output_reparses_rechecks_and_runs() {
    let dir = std::env::temp_dir().join(format!("effcalc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out_path = dir.join("translated.eff");
    let out = bin()
        .args(["translate", "--mode", "ground", "--out"])
        .arg(&out_path)
        .arg(programs().join("dyn_example.eff"))
        .output()
        .unwrap();
    assert!(out.status.success());

    let check = bin().arg("check").arg(&out_path).output().unwrap();
    assert!(check.status.success());

    let run = bin().arg("run").arg(&out_path).output().unwrap();
    assert!(run.status.success());
    assert_eq!(String::from_utf8(run.stdout).unwrap().trim(), "return 2");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn trace_prints_numbered_steps() {
    let out = bin()
        .args(["trace", "--limit", "5"])
        .arg(programs().join("toggle_constant.eff"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("0: "), "{stdout}");
    assert!(stdout.contains("outcome: value true"), "{stdout}");
}

#[test]
fn fixture_subcommand_round_trips_through_check() {
    for name in ["T", "H_C", "H_ST", "H_RO", "id_id", "dyn_example"] {
        let out = bin().args(["fixture", name]).output().unwrap();
        assert!(out.status.success(), "{name}");
        let text = String::from_utf8(out.stdout).unwrap();
        let dir = std::env::temp_dir().join(format!("effcalc-fix-{}-{name}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("fixture.eff");
        std::fs::write(&path, &text).unwrap();
        let check = bin().arg("check").arg(&path).output().unwrap();
        assert!(
            check.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&check.stderr)
        );
        std::fs::remove_dir_all(&dir).ok();
    }
}

#[test]
fn fixture_unknown_name_fails() {
    let out = bin().args(["fixture", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_with_two() {
    let out = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fuzz_smoke_run_passes() {
    let out = bin()
        .args(["fuzz", "--theorem", "dyn-sim", "--seeds", "10", "--json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("fuzz --json must emit JSON");
    assert_eq!(v[0]["failed"], 0);
}

#[test]
fn json_check_is_structured() {
    let out = bin()
        .args(["check", "--json"])
        .arg(programs().join("id_id.eff"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["bindings"][0]["name"], "id");
}
