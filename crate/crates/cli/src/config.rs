//! JSON run configurations.
//!
//! Every document carries a `command` discriminator plus the shared fields
//! `seed`, `workers` and `out_dir`; the remaining keys belong to the command.
//! Site indices are 1-based throughout.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};

use exciton::analysis::Observable;
use exciton::spectra::SpectrumKind;
use exciton::{Method, SiteSystem};

use crate::error::CliError;

pub const COMMANDS: [&str; 5] = ["simulate", "noise", "spectrum", "analyze", "compare"];

/// Fields shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct Common {
    pub seed: u64,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub enum Command {
    Simulate(SimulateConfig),
    Noise(NoiseConfig),
    Spectrum(SpectrumConfig),
    Analyze(AnalyzeConfig),
    Compare(CompareConfig),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Noise(_) => "noise",
            Command::Spectrum(_) => "spectrum",
            Command::Analyze(_) => "analyze",
            Command::Compare(_) => "compare",
        }
    }
}

/// A parsed configuration document.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub common: Common,
    pub command: Command,
    /// Relative input paths resolve against this directory.
    pub base_dir: PathBuf,
    /// Raw bytes of the document, hashed into the manifest.
    pub raw: Vec<u8>,
}

fn take<T: DeserializeOwned>(obj: &mut Map<String, Value>, key: &str) -> Result<Option<T>, CliError> {
    match obj.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v).map(Some).map_err(|e| CliError::field(key, e.to_string())),
    }
}

fn typed<T: DeserializeOwned>(rest: Map<String, Value>) -> Result<T, CliError> {
    serde_path_to_error::deserialize(Value::Object(rest)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        // a missing key is reported against its parent's path
        let missing = inner.strip_prefix("missing field `").and_then(|r| r.split('`').next());
        let field = match (path.as_str(), missing) {
            (".", Some(n)) => Some(n.to_string()),
            (".", None) => None,
            (p, Some(n)) => Some(format!("{p}.{n}")),
            (p, None) => Some(p.to_string()),
        };
        CliError::Validation { field, message: inner }
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read(path)
            .map_err(|e| CliError::field("config", format!("cannot read {}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(raw, base_dir)
    }

    pub fn parse(raw: Vec<u8>, base_dir: PathBuf) -> Result<Self, CliError> {
        let value: Value =
            serde_json::from_slice(&raw).map_err(|e| CliError::validation(format!("config is not valid JSON: {e}")))?;
        let Value::Object(mut obj) = value else {
            return Err(CliError::validation("config must be a JSON object"));
        };
        let command: String =
            take(&mut obj, "command")?.ok_or_else(|| CliError::field("command", "missing command discriminator"))?;
        let common = Common {
            seed: take(&mut obj, "seed")?.unwrap_or(0),
            workers: take(&mut obj, "workers")?,
            out_dir: take(&mut obj, "out_dir")?,
        };
        if common.workers == Some(0) {
            return Err(CliError::field("workers", "must be at least 1"));
        }
        let command = match command.as_str() {
            "simulate" => Command::Simulate(typed(obj)?),
            "noise" => Command::Noise(typed(obj)?),
            "spectrum" => Command::Spectrum(typed(obj)?),
            "analyze" => Command::Analyze(typed(obj)?),
            "compare" => Command::Compare(typed(obj)?),
            other => {
                return Err(CliError::field(
                    "command",
                    format!("unknown command {other:?}; expected one of {}", COMMANDS.join(", ")),
                ))
            }
        };
        Ok(Self { common, command, base_dir, raw })
    }
}

/// One value for every site, or a list with one entry per site.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PerSite {
    One(f64),
    Many(Vec<f64>),
}

impl PerSite {
    pub fn expand(&self, n: usize, field: &str) -> Result<Vec<f64>, CliError> {
        match self {
            PerSite::One(v) => Ok(vec![*v; n]),
            PerSite::Many(v) if v.len() == n => Ok(v.clone()),
            PerSite::Many(v) => Err(CliError::field(field, format!("expected {n} values, got {}", v.len()))),
        }
    }
}

/// The site system: `"fmo7"` for the built-in seven-site preset, a path to a
/// JSON document, or the document inline.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Named(String),
    Inline(exciton::model::SiteSystemDoc),
}

pub const FMO_PRESET: &str = "fmo7";

impl SystemSpec {
    pub fn inline(system: &SiteSystem) -> Self {
        SystemSpec::Inline(system.into())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FluctuationSpec {
    None,
    Static {
        sigma: PerSite,
    },
    Ar1 {
        sigma: PerSite,
        tau: PerSite,
    },
    /// Windows of a recorded trajectory CSV; `window` defaults to `t_total`.
    Recorded {
        trajectory: PathBuf,
        window: Option<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectralDensitySpec {
    DrudeLorentz {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_cutoff")]
        cutoff_time: f64,
    },
    File {
        path: PathBuf,
    },
}

fn default_lambda() -> f64 {
    exciton::SpectralDensity::DEFAULT_LAMBDA_CM1
}

fn default_cutoff() -> f64 {
    exciton::SpectralDensity::DEFAULT_CUTOFF_TIME_FS
}

impl Default for SpectralDensitySpec {
    fn default() -> Self {
        SpectralDensitySpec::DrudeLorentz { lambda: default_lambda(), cutoff_time: default_cutoff() }
    }
}

/// HSR dephasing rates: explicit fs⁻¹ values or `(σ, τ)` statistics.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum HsrRatesSpec {
    Explicit { rates: PerSite },
    Statistics { sigma: PerSite, tau: PerSite, temperature: Option<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum InitialStateSpec {
    Site {
        site: usize,
    },
    /// Rows of `[re, im]` pairs.
    Density {
        density: Vec<Vec<[f64; 2]>>,
    },
}

impl Default for InitialStateSpec {
    fn default() -> Self {
        InitialStateSpec::Site { site: 1 }
    }
}

fn default_dt() -> f64 {
    1.0
}

fn default_method() -> Method {
    Method::Md
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub system: SystemSpec,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_total: f64,
    pub output_interval: Option<f64>,
    #[serde(default = "one")]
    pub n_traj: usize,
    #[serde(default)]
    pub initial_state: InitialStateSpec,
    #[serde(default = "no_fluctuations")]
    pub fluctuations: FluctuationSpec,
    /// QJC only.
    #[serde(default)]
    pub spectral_density: Option<SpectralDensitySpec>,
    /// HSR only; derived from the fluctuation model when absent.
    #[serde(default)]
    pub hsr_rates: Option<HsrRatesSpec>,
    #[serde(default)]
    pub record_propagator: bool,
    /// Coherence columns of the trace CSV; all pairs when absent.
    pub coherence_pairs: Option<Vec<[usize; 2]>>,
    /// Recorded in the trace metadata only.
    pub temperature: Option<f64>,
}

fn one() -> usize {
    1
}

fn no_fluctuations() -> FluctuationSpec {
    FluctuationSpec::None
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSource {
    Ar1 { means: Vec<f64>, sigma: PerSite, tau: PerSite, dt: f64, n_frames: usize },
    File { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn build(&self, field: &str) -> Result<Vec<f64>, CliError> {
        exciton::spectra::uniform_grid(self.start, self.stop, self.step).map_err(|e| CliError::from(e).in_field(field))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSpec {
    /// Site pairs; every autocorrelation when absent.
    pub pairs: Option<Vec<[usize; 2]>>,
    pub max_lag: f64,
    /// Upper end of the correlation-time fit; when absent, the first lag where
    /// `C(t)/C(0) < e⁻²` (or `max_lag`).
    pub fit_t_max: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralDensityOutput {
    pub temperature: f64,
    pub omega: GridSpec,
    pub window: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub source: NoiseSource,
    #[serde(default)]
    pub decorrelate: bool,
    pub correlations: Option<CorrelationSpec>,
    pub spectral_density: Option<SpectralDensityOutput>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlaySpec {
    pub path: PathBuf,
    #[serde(default)]
    pub shift: f64,
}

fn default_kinds() -> Vec<SpectrumKind> {
    vec![SpectrumKind::Abs]
}

fn default_window() -> f64 {
    exciton::spectra::DEFAULT_WINDOW_FS
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub propagator: PathBuf,
    pub system: SystemSpec,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<SpectrumKind>,
    #[serde(default = "default_window")]
    pub window: f64,
    pub grid: GridSpec,
    pub overlay: Option<OverlaySpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeSpec {
    pub temperatures: Vec<f64>,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayFitSpec {
    pub pair: [usize; 2],
    pub t_min: f64,
    pub t_max: f64,
}

fn default_threshold() -> f64 {
    (-1.0f64).exp()
}

fn default_pairs() -> Vec<[usize; 2]> {
    vec![[1, 2]]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub trace: Option<PathBuf>,
    #[serde(default = "default_pairs")]
    pub pairs: Vec<[usize; 2]>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub dephasing_slope: Option<SlopeSpec>,
    pub decay_fit: Option<DecayFitSpec>,
}

/// Observable with 1-based site labels.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    Population { site: usize },
    Coherence { m: usize, n: usize },
    AllPopulations,
}

impl ObservableSpec {
    pub fn to_core(self) -> Result<Observable, CliError> {
        let idx = |s: usize| s.checked_sub(1).ok_or_else(|| CliError::field("observable", "sites are 1-based"));
        Ok(match self {
            ObservableSpec::Population { site } => Observable::Population { site: idx(site)? },
            ObservableSpec::Coherence { m, n } => Observable::Coherence { m: idx(m)?, n: idx(n)? },
            ObservableSpec::AllPopulations => Observable::AllPopulations,
        })
    }
}

fn all_populations() -> ObservableSpec {
    ObservableSpec::AllPopulations
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub a: PathBuf,
    pub b: PathBuf,
    #[serde(default = "all_populations")]
    pub observable: ObservableSpec,
}
