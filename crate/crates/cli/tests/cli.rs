//! End-to-end runs of the `bbmm` binary: each test spawns the real
//! executable against a small scenario file and checks exit codes, stdout
//! verdict lines, and written artifacts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_bbmm");

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bbmm_cli_test_{name}"));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const DOMAIN: &str = r#""domain": { "a": 0.0, "b": 3.141592653589793, "n_modes": 8, "n_grid": 12 }"#;
const KERNEL: &str = r#""kernel": { "family": "prony", "rates": [1.0, 3.0] }"#;
const CONSTANTS: &str =
    r#""constants": { "c1": 2.0, "c2": 1.0, "c3": 1.0, "eps0": 0.1, "source": "configured" }"#;

#[test]
fn riccati_triple_prints_reference_parameters_and_passes() {
    let out = run(&["riccati", "--a", "1", "--b", "2", "--c", "1"]);
    let text = stdout(&out);
    assert!(out.status.success(), "exit {:?}: {text}", out.status.code());
    assert!(text.contains("rho = 2.000000"), "{text}");
    assert!(text.contains("lambda_- = 0.267949"), "{text}");
    assert!(text.contains("lambda_+ = 3.732051"), "{text}");
    assert!(text.contains("t_rho = 5.0987"), "{text}");
    assert!(text.contains("overall: PASS"), "{text}");
}

#[test]
fn riccati_sweep_writes_a_full_pass_table() {
    let dir = scratch("riccati_sweep");
    let out_dir = dir.join("out");
    let out = run(&["riccati", "--sweep", "25", "--seed", "3", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stdout(&out));
    let table = std::fs::read_to_string(out_dir.join("riccati.csv")).unwrap();
    assert_eq!(table.lines().count(), 26, "header plus 25 rows:\n{table}");
    assert!(table.starts_with("a,b,c,rho,"), "{table}");
    for row in table.lines().skip(1) {
        assert!(row.ends_with(",1.0000000000000000e0,1.0000000000000000e0"), "failed row: {row}");
    }
}

#[test]
fn riccati_rejects_incomplete_triples() {
    let out = run(&["riccati", "--a", "1", "--b", "2"]);
    assert!(!out.status.success(), "missing --c must not pass silently");
}

#[test]
fn energy_audit_on_the_zero_scenario_passes_with_zero_residual() {
    let dir = scratch("energy_zero");
    let cfg = write_config(
        &dir,
        "zero.json",
        &format!(
            r#"{{ {DOMAIN}, {KERNEL},
                 "integrator": {{ "dt": 0.01, "scheme": "imex2", "t_final": 0.5, "record_stride": 1 }} }}"#
        ),
    );
    let out_dir = dir.join("out");
    let out = run(&[
        "energy-audit",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let text = stdout(&out);
    assert!(out.status.success(), "{text}");
    assert!(text.contains("overall: PASS"), "{text}");
    assert!(text.contains("max_residual_dt = 0.000000e0"), "{text}");

    // Summary schema shared across subcommands: command, hash, checks, metrics.
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["command"], "energy-audit");
    assert!(summary["config_hash"].as_str().unwrap().len() == 16);
    assert!(!summary["checks"].as_array().unwrap().is_empty());
    assert!(summary["metrics"].is_object());
    assert!(out_dir.join("trajectory.csv").exists());
}

#[test]
fn invariance_refuses_an_oversized_force_with_a_failing_gate_line() {
    let dir = scratch("invariance_refusal");
    let cfg = write_config(
        &dir,
        "big_force.json",
        &format!(
            r#"{{ {DOMAIN}, {KERNEL}, {CONSTANTS},
                 "force": {{ "modes": [[1, 1.0]], "norm_f": 1.5 }},
                 "integrator": {{ "dt": 0.01, "scheme": "imex2", "t_final": 1.0, "record_stride": 5 }} }}"#
        ),
    );
    let out = run(&["invariance", "--config", cfg.to_str().unwrap()]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(1), "refusal must exit nonzero: {text}");
    assert!(text.contains("[FAIL] admissibility_gate"), "{text}");
    assert!(text.contains("overall: FAIL"), "{text}");
}

#[test]
fn invariance_passes_for_a_small_admissible_force() {
    let dir = scratch("invariance_pass");
    let cfg = write_config(
        &dir,
        "small_force.json",
        &format!(
            r#"{{ {DOMAIN}, {KERNEL}, {CONSTANTS},
                 "force": {{ "modes": [[1, 1.0]], "norm_f": 0.25 }},
                 "integrator": {{ "dt": 0.005, "scheme": "imex2", "t_final": 2.0, "record_stride": 10 }},
                 "seed": 7 }}"#
        ),
    );
    let out = run(&[
        "invariance",
        "--config",
        cfg.to_str().unwrap(),
        "--members",
        "4",
        "--radius",
        "0.8",
    ]);
    let text = stdout(&out);
    assert!(out.status.success(), "{text}");
    assert!(text.contains("[PASS] set_stays_invariant"), "{text}");
}

#[test]
fn simulate_is_deterministic_and_round_trips_saved_states() {
    let dir = scratch("simulate_determinism");
    let cfg = write_config(
        &dir,
        "run.json",
        &format!(
            r#"{{ {DOMAIN}, {KERNEL},
                 "force": {{ "modes": [[1, 1.0]], "norm_f": 0.25 }},
                 "initial": {{ "modes": [[1, 0.2]] }},
                 "integrator": {{ "dt": 0.005, "scheme": "imex2", "t_final": 2.0, "record_stride": 20 }} }}"#
        ),
    );
    let run_once = |tag: &str| {
        let out_dir = dir.join(tag);
        let state = dir.join(format!("{tag}.state"));
        let out = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--save-state",
            state.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stdout(&out));
        (
            std::fs::read(out_dir.join("trajectory.csv")).unwrap(),
            std::fs::read(out_dir.join("summary.json")).unwrap(),
            std::fs::read(&state).unwrap(),
        )
    };
    let (csv1, sum1, state1) = run_once("a");
    let (csv2, sum2, state2) = run_once("b");
    assert_eq!(csv1, csv2, "identical config must reproduce the trajectory bit-exactly");
    assert_eq!(sum1, sum2, "summaries must match bit-exactly");
    assert_eq!(state1, state2, "saved states must match bit-exactly");

    // A saved state resumes (the state carries its own clock, so the horizon
    // must lie beyond it).
    let resume = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--load-state",
        dir.join("a.state").to_str().unwrap(),
        "--T",
        "3.0",
    ]);
    assert!(resume.status.success(), "{}", stdout(&resume));
    assert!(stdout(&resume).contains("final_t = 3.000000e0"), "{}", stdout(&resume));
}

#[test]
fn unknown_config_keys_are_fatal_and_named() {
    let dir = scratch("unknown_key");
    let cfg = write_config(
        &dir,
        "typo.json",
        &format!(
            r#"{{ {DOMAIN}, {KERNEL}, "dampening": 3,
                 "integrator": {{ "dt": 0.01, "scheme": "imex2", "t_final": 0.5, "record_stride": 1 }} }}"#
        ),
    );
    let out = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("dampening"), "{}", stderr(&out));
}

#[test]
fn decay_audit_passes_on_the_reference_unforced_scenario() {
    let dir = scratch("decay");
    let cfg = write_config(
        &dir,
        "decay.json",
        &format!(
            r#"{{ {DOMAIN}, {KERNEL},
                 "initial": {{ "modes": [[1, 0.1]] }},
                 "integrator": {{ "dt": 0.05, "scheme": "imex2", "t_final": 20.0, "record_stride": 4 }} }}"#
        ),
    );
    let out = run(&["decay", "--config", cfg.to_str().unwrap()]);
    let text = stdout(&out);
    assert!(out.status.success(), "{text}");
    for line in [
        "[PASS] energy_monotone_nonincreasing",
        "[PASS] final_energy_fraction",
        "[PASS] decay_rate_positive",
        "[PASS] log_fit_rms",
    ] {
        assert!(text.contains(line), "missing {line} in:\n{text}");
    }
    // Forced scenarios are the wrong tool here and must be rejected.
    let forced = write_config(
        &dir,
        "forced.json",
        &format!(
            r#"{{ {DOMAIN}, {KERNEL},
                 "force": {{ "modes": [[1, 0.1]] }},
                 "initial": {{ "modes": [[1, 0.1]] }},
                 "integrator": {{ "dt": 0.05, "scheme": "imex2", "t_final": 20.0, "record_stride": 4 }} }}"#
        ),
    );
    let out = run(&["decay", "--config", forced.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unforced"), "{}", stderr(&out));
}

#[test]
fn decompose_and_ensemble_emit_their_artifacts() {
    let dir = scratch("decompose_ensemble");
    let cfg = write_config(
        &dir,
        "scenario.json",
        &format!(
            r#"{{ {DOMAIN}, {KERNEL}, {CONSTANTS},
                 "initial": {{ "modes": [[1, 0.1]] }},
                 "integrator": {{ "dt": 0.1, "scheme": "imex2", "t_final": 22.0, "record_stride": 10 }},
                 "seed": 11 }}"#
        ),
    );
    let dec_out = dir.join("dec");
    let out = run(&[
        "decompose",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dec_out.to_str().unwrap(),
    ]);
    let text = stdout(&out);
    assert!(out.status.success(), "{text}");
    assert!(text.contains("[PASS] split_residual"), "{text}");
    let series = std::fs::read_to_string(dec_out.join("split_series.csv")).unwrap();
    assert!(series.starts_with("t,E_linear,E_forced_H1,residual_split,Theta_nu,Upsilon_nu"));

    let ens_out = dir.join("ens");
    let out = run(&[
        "ensemble",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        ens_out.to_str().unwrap(),
        "--members",
        "6",
        "--radii",
        "0.3,0.8",
    ]);
    let text = stdout(&out);
    assert!(out.status.success(), "{text}");
    assert!(text.contains("[PASS] zero_force_collapse"), "{text}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ens_out.join("ensemble.json")).unwrap())
            .unwrap();
    assert_eq!(report["levels"].as_array().unwrap().len(), 2);
    assert!(ens_out.join("checkpoints.csv").exists());
}
