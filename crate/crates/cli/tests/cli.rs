mod common;

use common::*;
use serde_json::json;

fn simulate_config(extra: serde_json::Value) -> serde_json::Value {
    let mut cfg = json!({
        "command": "simulate",
        "seed": 4,
        "system": dimer_system(),
        "dt": 1.0,
        "t_total": 50.0,
        "n_traj": 16,
        "fluctuations": { "kind": "ar1", "sigma": 60.0, "tau": 5.0 }
    });
    cfg.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
    cfg
}

#[test]
fn simulate_writes_trace_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim.json", &simulate_config(json!({})));
    let out = dir.path().join("out");
    run_ok("simulate", &cfg, &out, &[]);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "t_fs,pop_1,pop_2,re_rho_1_2,im_rho_1_2");
    assert_eq!(trace.lines().count(), 52);
    let m = manifest(&out);
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seed"], 4);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert!(m["outputs"]["trace.csv"].is_string());
    assert!(m["wall_clock_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn zero_trajectories_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim.json", &simulate_config(json!({ "n_traj": 0 })));
    let o = exciton(&["simulate", cfg.to_str().unwrap(), "--out-dir", "out"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "validation");
    assert_eq!(err["field"], "n_traj");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sim.json",
        &simulate_config(json!({ "fluctuations": { "kind": "recorded", "trajectory": "absent.csv" } })),
    );
    let o = exciton(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "runtime");
}

#[test]
fn subcommand_must_match_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim.json", &simulate_config(json!({})));
    let o = exciton(&["noise", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["field"], "command");
}

#[test]
fn identical_runs_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        write_config(dir.path(), "sim.json", &simulate_config(json!({ "n_traj": 40, "record_propagator": true })));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok("simulate", &cfg, &a, &["--workers", "1"]);
    run_ok("simulate", &cfg, &b, &["--workers", "3"]);
    assert_eq!(data_files(&a), data_files(&b));
    assert_eq!(manifest(&a)["outputs"], manifest(&b)["outputs"]);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim.json", &simulate_config(json!({})));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok("simulate", &cfg, &a, &[]);
    run_ok("simulate", &cfg, &b, &["--seed", "5"]);
    assert_eq!(manifest(&b)["seed"], 5);
    assert_ne!(data_files(&a), data_files(&b));
}

#[test]
fn env_var_sets_default_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim.json", &simulate_config(json!({ "n_traj": 2 })));
    let target = dir.path().join("from_env");
    let o = std::process::Command::new(env!("CARGO_BIN_EXE_exciton"))
        .args(["simulate", cfg.to_str().unwrap()])
        .current_dir(dir.path())
        .env("EXCITON_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(target.join("trace.csv").exists());
}

#[test]
fn hsr_and_qjc_methods_run() {
    let dir = tempfile::tempdir().unwrap();
    for method in ["HSR", "QJC"] {
        let cfg = write_config(
            dir.path(),
            "sim.json",
            &simulate_config(json!({ "method": method, "coherence_pairs": [[1, 2]] })),
        );
        let out = dir.path().join(method);
        run_ok("simulate", &cfg, &out, &[]);
        let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
        let last: Vec<f64> = trace.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert!((last[1] + last[2] - 1.0).abs() < 1e-8, "{method}: {last:?}");
    }
}

#[test]
fn noise_generates_ar1_matching_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "noise.json",
        &json!({
            "command": "noise",
            "seed": 21,
            "source": { "kind": "ar1", "means": [12000.0, 12100.0], "sigma": [80.0, 90.0], "tau": 5.0, "dt": 1.0, "n_frames": 4000 },
            "decorrelate": true,
            "correlations": { "max_lag": 60.0, "fit_t_max": 10.0 },
            "spectral_density": { "temperature": 300.0, "omega": { "start": 10.0, "stop": 600.0, "step": 10.0 } }
        }),
    );
    let out = dir.path().join("out");
    run_ok("noise", &cfg, &out, &[]);
    let traj = exciton::io::read_trajectory_csv(std::fs::File::open(out.join("trajectory.csv")).unwrap(), "t").unwrap();
    let direct = exciton::noise::ar1_generate(80.0, 5.0, 1.0, 4000, 21).unwrap();
    for (a, b) in traj.column(0).iter().zip(&direct) {
        assert!((a - 12000.0 - b).abs() < 1e-9);
    }
    for name in [
        "trajectory_decorrelated.csv",
        "correlation_1_1.csv",
        "correlation_2_2.csv",
        "spectral_density_1.csv",
        "cosine_transform_2.csv",
        "noise_summary.json",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("noise_summary.json")).unwrap()).unwrap();
    let tau = summary["sites"][0]["tau_fs"].as_f64().unwrap();
    assert!((tau - 5.0).abs() < 1.0, "{tau}");
}

#[test]
fn spectrum_analyze_and_compare_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let sim =
        write_config(dir.path(), "sim.json", &simulate_config(json!({ "t_total": 400.0, "record_propagator": true })));
    run_ok("simulate", &sim, &dir.path().join("a"), &[]);
    run_ok("simulate", &sim, &dir.path().join("b"), &["--seed", "9"]);

    std::fs::write(dir.path().join("exp.csv"), "omega_cm1,absorbance\n11500,0\n12000,1\n12500,0\n").unwrap();
    let spec = write_config(
        dir.path(),
        "spec.json",
        &json!({
            "command": "spectrum",
            "propagator": "a/propagator.csv",
            "system": dimer_system(),
            "kinds": ["abs", "ld", "cd"],
            "grid": { "start": 11700.0, "stop": 12400.0, "step": 5.0 },
            "overlay": { "path": "exp.csv", "shift": 50.0 }
        }),
    );
    let out = dir.path().join("spec");
    run_ok("spectrum", &spec, &out, &[]);
    let abs = std::fs::read_to_string(out.join("spectrum_abs.csv")).unwrap();
    assert_eq!(abs.lines().next().unwrap(), "omega_cm1,intensity");
    assert!(out.join("spectrum_cd.csv").exists());
    let overlay = std::fs::read_to_string(out.join("overlay_abs.csv")).unwrap();
    assert!(overlay.lines().nth(1).unwrap().starts_with("11650,"));
    let m = manifest(&out);
    assert!(m["inputs"]["a/propagator.csv"].is_string() && m["inputs"]["exp.csv"].is_string());

    let ana = write_config(
        dir.path(),
        "ana.json",
        &json!({ "command": "analyze", "trace": "a/trace.csv", "pairs": [[1, 2]],
                 "dephasing_slope": { "temperatures": [77.0, 300.0], "rates": [37.3, 145.5] } }),
    );
    run_ok("analyze", &ana, &dir.path().join("ana"), &[]);
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("ana/analysis.json")).unwrap()).unwrap();
    assert!((doc["dephasing_slope_cm1_per_k"].as_f64().unwrap() - 0.4852).abs() < 1e-3);
    assert!(doc["lifetimes"][0]["status"].is_string());

    let cmp =
        write_config(dir.path(), "cmp.json", &json!({ "command": "compare", "a": "a/trace.csv", "b": "a/trace.csv" }));
    run_ok("compare", &cmp, &dir.path().join("same"), &[]);
    let same: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("same/comparison.json")).unwrap()).unwrap();
    assert_eq!(same["max_abs_dev"], 0.0);
    let cmp =
        write_config(dir.path(), "cmp.json", &json!({ "command": "compare", "a": "a/trace.csv", "b": "b/trace.csv" }));
    run_ok("compare", &cmp, &dir.path().join("diff"), &[]);
    let diff: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("diff/comparison.json")).unwrap()).unwrap();
    assert!(diff["max_abs_dev"].as_f64().unwrap() > 0.0);
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim.json", &simulate_config(json!({ "n_trajectories": 3 })));
    let o = exciton(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["field"], "n_trajectories");
}
