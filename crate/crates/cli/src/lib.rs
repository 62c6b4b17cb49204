//! Batch front end: JSON run configurations in, CSV/JSON artifacts and a run
//! manifest out.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::RunConfig;
pub use error::CliError;
pub use manifest::RunManifest;

/// Default output directory when neither the flag nor the config sets one.
pub const OUT_DIR_ENV: &str = "EXCITON_OUT_DIR";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Command-line values that take precedence over the config document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory, so readers never observe a partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

fn resolve_out_dir(cfg: &RunConfig, ov: &Overrides) -> PathBuf {
    if let Some(dir) = &ov.out_dir {
        return dir.clone();
    }
    if let Some(dir) = &cfg.common.out_dir {
        return if dir.is_absolute() { dir.clone() } else { cfg.base_dir.join(dir) };
    }
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

/// Runs a configuration and writes its outputs plus a manifest. Returns the
/// output directory and the manifest.
pub fn run(cfg: &RunConfig, ov: &Overrides) -> Result<(PathBuf, RunManifest), CliError> {
    let start = Instant::now();
    let seed = ov.seed.unwrap_or(cfg.common.seed);
    let workers = match ov.workers.or(cfg.common.workers) {
        Some(0) => return Err(CliError::field("workers", "must be at least 1")),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let out_dir = resolve_out_dir(cfg, ov);

    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut ctx = commands::Context::new(cfg.base_dir.clone(), seed);
    let outputs = pool.install(|| commands::dispatch(&cfg.command, &mut ctx))?;

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut digests = std::collections::BTreeMap::new();
    for (name, bytes) in &outputs.files {
        write_atomic(&out_dir, name, bytes)?;
        digests.insert(name.clone(), manifest::sha256_hex(bytes));
    }
    let manifest = RunManifest {
        command: cfg.command.name().to_string(),
        config_sha256: manifest::sha256_hex(&cfg.raw),
        seed,
        workers,
        versions: manifest::versions(),
        inputs: ctx.inputs,
        outputs: digests,
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    let mut doc = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    doc.push(b'\n');
    write_atomic(&out_dir, MANIFEST_FILE, &doc)?;
    Ok((out_dir, manifest))
}
