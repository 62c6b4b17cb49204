#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn exciton(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exciton"))
        .args(args)
        .current_dir(cwd)
        .env_remove("EXCITON_OUT_DIR")
        .output()
        .expect("binary runs")
}

pub fn write_config(dir: &Path, name: &str, value: &serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
    path
}

/// Runs `subcommand config --out-dir out` and asserts success.
pub fn run_ok(subcommand: &str, config: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![subcommand, config.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = exciton(&args, config.parent().unwrap());
    assert!(o.status.success(), "{subcommand} failed: {}", String::from_utf8_lossy(&o.stderr));
}

pub fn dimer_system() -> serde_json::Value {
    serde_json::json!({
        "n_sites": 2,
        "mean_energies_cm1": [12000.0, 12100.0],
        "couplings_cm1": [[0.0, 100.0], [100.0, 0.0]],
        "geometry": {
            "positions_A": [[0.0, 0.0, 0.0], [8.0, 3.0, 1.0]],
            "dipoles": [[1.0, 0.0, 0.2], [0.3, 0.9, -0.1]],
            "symmetry_axis": [0.0, 0.0, 1.0]
        }
    })
}

/// Output files of a run, excluding the manifest.
pub fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

pub fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}
