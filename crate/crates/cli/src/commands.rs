//! Subcommand bodies. Each builds its outputs in memory; nothing touches the
//! output directory until the whole computation has succeeded.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use exciton::analysis::{coherence_lifetime, compare_traces, dephasing_slope, fit_exponential_decay, Lifetime};
use exciton::hsr::{dephasing_rate, dephasing_width_cm1, hsr_propagate, DephasingRates};
use exciton::nalgebra::DMatrix;
use exciton::noise::{
    ar1_trajectory, correlation, cosine_transform, decorrelate, fit_correlation_time, spectral_density,
};
use exciton::propagator::{run_ensemble, InitialState};
use exciton::qjc::run_ensemble_qjc;
use exciton::spectra::{compute_spectrum, overlay_shift};
use exciton::{io, presets};
use exciton::{
    Complex64, DensityMatrix, EnergyTrajectory, FluctuationModel, Method, SimConfig, SiteSystem, SpectralDensity,
    ThermalParams,
};

use crate::config::*;
use crate::error::CliError;
use crate::manifest::sha256_hex;

/// Default end of the correlation-time fit: e⁻² of `C(0)`.
const FIT_LEVEL: f64 = 0.135_335_283_236_612_7;

/// Input resolution and digest bookkeeping for one run.
pub struct Context {
    base_dir: PathBuf,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
}

impl Context {
    pub fn new(base_dir: PathBuf, seed: u64) -> Self {
        Self { base_dir, seed, inputs: BTreeMap::new() }
    }

    fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let full = if path.is_absolute() { path.to_path_buf() } else { self.base_dir.join(path) };
        let bytes = std::fs::read(&full)
            .map_err(|e| CliError::Runtime(format!("cannot read input {}: {e}", full.display())))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }
}

/// Named output files in creation order.
#[derive(Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn csv(&mut self, name: String, write: impl FnOnce(&mut Vec<u8>) -> exciton::Result<()>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.files.push((name, buf));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut buf = serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        buf.push(b'\n');
        self.files.push((name.to_string(), buf));
        Ok(())
    }
}

pub fn dispatch(command: &Command, ctx: &mut Context) -> Result<Outputs, CliError> {
    match command {
        Command::Simulate(c) => simulate(c, ctx),
        Command::Noise(c) => noise(c, ctx),
        Command::Spectrum(c) => spectrum(c, ctx),
        Command::Analyze(c) => analyze(c, ctx),
        Command::Compare(c) => compare(c, ctx),
    }
}

fn load_system(spec: &SystemSpec, ctx: &mut Context) -> Result<SiteSystem, CliError> {
    let invalid = |e: exciton::Error| CliError::field("system", e.to_string());
    match spec {
        SystemSpec::Named(name) if name == FMO_PRESET => Ok(presets::fmo_seven_site()),
        SystemSpec::Named(path) => {
            let bytes = ctx.read(Path::new(path))?;
            let text = String::from_utf8(bytes).map_err(|_| CliError::field("system", "file is not UTF-8"))?;
            SiteSystem::from_json_str(&text).map_err(invalid)
        }
        SystemSpec::Inline(doc) => SiteSystem::try_from(doc.clone()).map_err(invalid),
    }
}

fn site_index(site: usize, n: usize, field: &str) -> Result<usize, CliError> {
    if site == 0 || site > n {
        return Err(CliError::field(field, format!("site {site} outside 1..={n}")));
    }
    Ok(site - 1)
}

fn pairs(list: &[[usize; 2]], n: usize, field: &str) -> Result<Vec<(usize, usize)>, CliError> {
    list.iter()
        .map(|[m, k]| {
            let (m, k) = (site_index(*m, n, field)?, site_index(*k, n, field)?);
            if m == k {
                return Err(CliError::field(field, "a coherence pair needs two different sites"));
            }
            Ok((m, k))
        })
        .collect()
}

fn read_trajectory(path: &Path, ctx: &mut Context) -> Result<EnergyTrajectory, CliError> {
    let bytes = ctx.read(path)?;
    Ok(io::read_trajectory_csv(bytes.as_slice(), &path.display().to_string())?)
}

fn fluctuations(
    spec: &FluctuationSpec,
    n: usize,
    cfg: &SimulateConfig,
    ctx: &mut Context,
) -> Result<FluctuationModel, CliError> {
    let model = match spec {
        FluctuationSpec::None => FluctuationModel::None,
        FluctuationSpec::Static { sigma } => {
            FluctuationModel::StaticDisorder { sigma: sigma.expand(n, "fluctuations.sigma")? }
        }
        FluctuationSpec::Ar1 { sigma, tau } => FluctuationModel::Ar1 {
            sigma: sigma.expand(n, "fluctuations.sigma")?,
            tau: tau.expand(n, "fluctuations.tau")?,
            dt: cfg.dt,
        },
        FluctuationSpec::Recorded { trajectory, window } => FluctuationModel::Recorded {
            trajectory: Arc::new(read_trajectory(trajectory, ctx)?),
            window: window.unwrap_or(cfg.t_total),
        },
    };
    model.validate(n).map_err(|e| CliError::from(e).in_field("fluctuations"))?;
    Ok(model)
}

fn initial_state(spec: &InitialStateSpec, n: usize) -> Result<InitialState, CliError> {
    match spec {
        InitialStateSpec::Site { site } => Ok(InitialState::Site(site_index(*site, n, "initial_state.site")?)),
        InitialStateSpec::Density { density } => {
            if density.len() != n || density.iter().any(|r| r.len() != n) {
                return Err(CliError::field("initial_state.density", format!("expected a {n}x{n} matrix")));
            }
            let m = DMatrix::from_fn(n, n, |i, j| Complex64::new(density[i][j][0], density[i][j][1]));
            let rho = DensityMatrix::new(m).map_err(|e| CliError::from(e).in_field("initial_state.density"))?;
            Ok(InitialState::Density(rho))
        }
    }
}

fn load_spectral_density(spec: &SpectralDensitySpec, ctx: &mut Context) -> Result<SpectralDensity, CliError> {
    match spec {
        SpectralDensitySpec::DrudeLorentz { lambda, cutoff_time } => {
            SpectralDensity::drude_lorentz(*lambda, *cutoff_time)
                .map_err(|e| CliError::from(e).in_field("spectral_density"))
        }
        SpectralDensitySpec::File { path } => {
            let bytes = ctx.read(path)?;
            Ok(io::read_spectral_density_csv(bytes.as_slice())?)
        }
    }
}

fn hsr_rates(cfg: &SimulateConfig, n: usize) -> Result<DephasingRates, CliError> {
    let field = |e: exciton::Error| CliError::from(e).in_field("hsr_rates");
    match (&cfg.hsr_rates, &cfg.fluctuations) {
        (Some(HsrRatesSpec::Explicit { rates }), _) => {
            DephasingRates::explicit(rates.expand(n, "hsr_rates.rates")?).map_err(field)
        }
        (Some(HsrRatesSpec::Statistics { sigma, tau, temperature }), _) => DephasingRates::from_statistics(
            &sigma.expand(n, "hsr_rates.sigma")?,
            &tau.expand(n, "hsr_rates.tau")?,
            temperature.or(cfg.temperature),
        )
        .map_err(field),
        (None, FluctuationSpec::Ar1 { sigma, tau }) => DephasingRates::from_statistics(
            &sigma.expand(n, "fluctuations.sigma")?,
            &tau.expand(n, "fluctuations.tau")?,
            cfg.temperature,
        )
        .map_err(field),
        (None, _) => Err(CliError::field("hsr_rates", "required unless fluctuations are ar1")),
    }
}

fn simulate(cfg: &SimulateConfig, ctx: &mut Context) -> Result<Outputs, CliError> {
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(CliError::field("dt", format!("must be positive, got {}", cfg.dt)));
    }
    if !(cfg.t_total >= cfg.dt && cfg.t_total.is_finite()) {
        return Err(CliError::field("t_total", format!("must be at least dt, got {}", cfg.t_total)));
    }
    if cfg.n_traj == 0 {
        return Err(CliError::field("n_traj", "must be at least 1"));
    }
    if cfg.record_propagator && cfg.method != Method::Md {
        return Err(CliError::field("record_propagator", "propagators are only recorded by the MD method"));
    }
    let system = load_system(&cfg.system, ctx)?;
    let n = system.n_sites();
    let trace_pairs = match &cfg.coherence_pairs {
        Some(list) => pairs(list, n, "coherence_pairs")?,
        None => io::all_pairs(n),
    };
    let mut sim = SimConfig::new(cfg.dt, cfg.t_total, cfg.n_traj, ctx.seed);
    sim.output_interval = cfg.output_interval.unwrap_or(cfg.dt);
    sim.method = cfg.method;
    sim.initial_state = initial_state(&cfg.initial_state, n)?;
    sim.record_propagator = cfg.record_propagator;
    sim.validate().map_err(|e| CliError::from(e).in_field("output_interval"))?;

    let mut out = Outputs::default();
    let (mut trace, propagator) = match cfg.method {
        Method::Md => {
            let fluct = fluctuations(&cfg.fluctuations, n, cfg, ctx)?;
            let res = run_ensemble(&system, &fluct, &sim)?;
            (res.trace, res.propagator)
        }
        Method::Qjc => {
            let fluct = fluctuations(&cfg.fluctuations, n, cfg, ctx)?;
            let sd = load_spectral_density(&cfg.spectral_density.clone().unwrap_or_default(), ctx)?;
            (run_ensemble_qjc(&system, &fluct, &sd, &sim)?, None)
        }
        Method::Hsr => {
            let rates = hsr_rates(cfg, n)?;
            let rho0 = sim.initial_state.density(n)?;
            let mut trace = hsr_propagate(&rho0, &system.mean_hamiltonian(), &rates, &sim.output_times())?;
            trace.metadata.seed = ctx.seed;
            (trace, None)
        }
    };
    trace.metadata.temperature = cfg.temperature;
    out.csv("trace.csv".into(), |w| io::write_trace_csv(&trace, &trace_pairs, w))?;
    if let Some(record) = &propagator {
        out.csv("propagator.csv".into(), |w| io::write_propagator_csv(record, w))?;
    }
    Ok(out)
}

#[derive(Serialize)]
struct SiteStats {
    site: usize,
    mean_cm1: f64,
    std_cm1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_fs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dephasing_width_cm1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dephasing_rate_per_fs: Option<f64>,
}

fn noise(cfg: &NoiseConfig, ctx: &mut Context) -> Result<Outputs, CliError> {
    let mut out = Outputs::default();
    let traj = match &cfg.source {
        NoiseSource::Ar1 { means, sigma, tau, dt, n_frames } => {
            let n = means.len();
            let traj = ar1_trajectory(
                means,
                &sigma.expand(n, "source.sigma")?,
                &tau.expand(n, "source.tau")?,
                *dt,
                *n_frames,
                ctx.seed,
            )
            .map_err(|e| CliError::from(e).in_field("source"))?;
            out.csv("trajectory.csv".into(), |w| io::write_trajectory_csv(&traj, w))?;
            traj
        }
        NoiseSource::File { path } => read_trajectory(path, ctx)?,
    };
    let n = traj.n_sites();
    if cfg.decorrelate {
        let shuffled = decorrelate(&traj, ctx.seed)?;
        out.csv("trajectory_decorrelated.csv".into(), |w| io::write_trajectory_csv(&shuffled, w))?;
    }

    let means = traj.site_means();
    let stds = traj.site_std();
    let mut stats: Vec<SiteStats> = (0..n)
        .map(|m| SiteStats {
            site: m + 1,
            mean_cm1: means[m],
            std_cm1: stds[m],
            tau_fs: None,
            dephasing_width_cm1: None,
            dephasing_rate_per_fs: None,
        })
        .collect();

    let mut autocorrelations = Vec::new();
    if let Some(spec) = &cfg.correlations {
        let list = match &spec.pairs {
            Some(list) => list
                .iter()
                .map(|[m, k]| Ok((site_index(*m, n, "correlations.pairs")?, site_index(*k, n, "correlations.pairs")?)))
                .collect::<Result<Vec<_>, CliError>>()?,
            None => (0..n).map(|m| (m, m)).collect(),
        };
        for (m, k) in list {
            let corr = correlation(&traj, m, k, spec.max_lag)
                .map_err(|e| CliError::from(e).in_field("correlations.max_lag"))?;
            out.csv(format!("correlation_{}_{}.csv", m + 1, k + 1), |w| io::write_correlation_csv(&corr, w))?;
            if m == k {
                // by default fit only where the signal dominates sampling noise
                let t_max = spec.fit_t_max.unwrap_or_else(|| corr.decay_time(FIT_LEVEL).unwrap_or(spec.max_lag));
                if let Ok(tau) = fit_correlation_time(&corr, t_max) {
                    let s = &mut stats[m];
                    s.tau_fs = Some(tau);
                    s.dephasing_width_cm1 = Some(dephasing_width_cm1(s.std_cm1, tau)?);
                    s.dephasing_rate_per_fs = Some(dephasing_rate(s.std_cm1, tau)?);
                }
                autocorrelations.push(corr);
            }
        }
    }
    if let Some(spec) = &cfg.spectral_density {
        if autocorrelations.is_empty() {
            return Err(CliError::field("spectral_density", "needs at least one autocorrelation in `correlations`"));
        }
        let thermal = ThermalParams::new(spec.temperature)
            .map_err(|e| CliError::from(e).in_field("spectral_density.temperature"))?;
        let omega = spec.omega.build("spectral_density.omega")?;
        for corr in &autocorrelations {
            let site = corr.site_pair.0 + 1;
            let sd = spectral_density(corr, &thermal, &omega, spec.window)?;
            let j: Vec<f64> = omega.iter().map(|w| sd.eval(*w)).collect();
            out.csv(format!("spectral_density_{site}.csv"), |w| io::write_spectral_density_csv(&omega, &j, w))?;
            let raw = cosine_transform(corr, &omega, spec.window);
            out.csv(format!("cosine_transform_{site}.csv"), |w| io::write_cosine_transform_csv(&omega, &raw, w))?;
        }
    }
    out.json(
        "noise_summary.json",
        &serde_json::json!({ "dt_fs": traj.dt_frame(), "n_frames": traj.n_frames(), "sites": stats }),
    )?;
    Ok(out)
}

fn spectrum(cfg: &SpectrumConfig, ctx: &mut Context) -> Result<Outputs, CliError> {
    let system = load_system(&cfg.system, ctx)?;
    if cfg.window.is_nan() || cfg.window <= 0.0 {
        return Err(CliError::field("window", "must be positive"));
    }
    if cfg.kinds.is_empty() {
        return Err(CliError::field("kinds", "at least one spectrum kind is required"));
    }
    let grid = cfg.grid.build("grid")?;
    let bytes = ctx.read(&cfg.propagator)?;
    let record = io::read_propagator_csv(bytes.as_slice())?;
    let experiment = match &cfg.overlay {
        Some(o) => Some((ctx.read(&o.path)?, o.shift)),
        None => None,
    };
    let experiment = experiment
        .map(|(bytes, shift)| Ok::<_, CliError>((io::read_two_columns(bytes.as_slice())?, shift)))
        .transpose()?;

    let mut out = Outputs::default();
    let mut summary = Vec::new();
    for kind in &cfg.kinds {
        let spec = compute_spectrum(&record, &system, *kind, cfg.window, &grid)
            .map_err(|e| CliError::from(e).in_field("system"))?;
        out.csv(format!("spectrum_{}.csv", kind.name()), |w| io::write_spectrum_csv(&spec, w))?;
        let mut shift = 0.0;
        if let Some(((x, y), s)) = &experiment {
            let shifted = overlay_shift(&spec, *s);
            let resampled = io::resample(x, y, &shifted.omega);
            out.csv(format!("overlay_{}.csv", kind.name()), |w| io::write_overlay_csv(&shifted, &resampled, w))?;
            shift = *s;
        }
        summary.push(serde_json::json!({
            "kind": kind,
            "peak_cm1": spec.peak(),
            "truncated": spec.truncated,
            "overlay_shift_cm1": shift,
        }));
    }
    out.json("spectrum_summary.json", &summary)?;
    Ok(out)
}

#[derive(Serialize)]
struct LifetimeEntry {
    pair: [usize; 2],
    #[serde(flatten)]
    lifetime: Lifetime,
}

fn analyze(cfg: &AnalyzeConfig, ctx: &mut Context) -> Result<Outputs, CliError> {
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(CliError::field("threshold", "must lie in (0, 1)"));
    }
    let mut doc = serde_json::Map::new();
    let trace = match &cfg.trace {
        Some(path) => {
            let bytes = ctx.read(path)?;
            Some(io::read_trace_csv(bytes.as_slice())?)
        }
        None => None,
    };
    if let Some(trace) = &trace {
        let n = trace.n_sites();
        let mut lifetimes = Vec::new();
        for (m, k) in pairs(&cfg.pairs, n, "pairs")? {
            let lifetime = coherence_lifetime(trace, m, k, cfg.threshold)?;
            lifetimes.push(LifetimeEntry { pair: [m + 1, k + 1], lifetime });
        }
        doc.insert("threshold".into(), cfg.threshold.into());
        doc.insert("lifetimes".into(), serde_json::to_value(lifetimes).expect("serialisable"));
        if let Some(fit) = &cfg.decay_fit {
            let (m, k) = pairs(&[fit.pair], n, "decay_fit.pair")?[0];
            let rate = fit_exponential_decay(&trace.times, &trace.coherence_series(m, k), fit.t_min, fit.t_max)
                .map_err(|e| CliError::from(e).in_field("decay_fit"))?;
            doc.insert(
                "decay_fit".into(),
                serde_json::json!({ "pair": fit.pair, "rate_per_fs": rate, "width_cm1": exciton::units::rate_fs_to_cm1(rate) }),
            );
        }
    } else if cfg.decay_fit.is_some() {
        return Err(CliError::field("decay_fit", "needs a `trace`"));
    }
    if let Some(s) = &cfg.dephasing_slope {
        let slope =
            dephasing_slope(&s.temperatures, &s.rates).map_err(|e| CliError::from(e).in_field("dephasing_slope"))?;
        doc.insert("dephasing_slope_cm1_per_k".into(), slope.into());
    }
    if doc.is_empty() {
        return Err(CliError::validation("nothing to analyse: give a `trace` or `dephasing_slope`"));
    }
    let mut out = Outputs::default();
    out.json("analysis.json", &doc)?;
    Ok(out)
}

fn compare(cfg: &CompareConfig, ctx: &mut Context) -> Result<Outputs, CliError> {
    let a = io::read_trace_csv(ctx.read(&cfg.a)?.as_slice())?;
    let b = io::read_trace_csv(ctx.read(&cfg.b)?.as_slice())?;
    let cmp = compare_traces(&a, &b, cfg.observable.to_core()?)?;
    let mut out = Outputs::default();
    out.json("comparison.json", &cmp)?;
    Ok(out)
}
