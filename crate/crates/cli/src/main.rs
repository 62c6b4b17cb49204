use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use exciton_cli::{run, CliError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "exciton", version, about = "Exciton dynamics and spectra from classical site-energy fluctuations")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Ensemble dynamics (MD, QJC or HSR) to a density trace.
    Simulate(RunArgs),
    /// Generate, decorrelate and characterise site-energy trajectories.
    Noise(RunArgs),
    /// Absorption, LD and CD spectra from a stored propagator record.
    Spectrum(RunArgs),
    /// Coherence lifetimes, decay fits and dephasing slopes.
    Analyze(RunArgs),
    /// RMSD and maximum deviation between two density traces.
    Compare(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON configuration file.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: config `out_dir`, then $EXCITON_OUT_DIR, then `.`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn execute(name: &str, args: RunArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config)?;
    if cfg.command.name() != name {
        return Err(CliError::field(
            "command",
            format!("config is for `{}` but `{name}` was invoked", cfg.command.name()),
        ));
    }
    let ov = Overrides { seed: args.seed, workers: args.workers, out_dir: args.out_dir };
    let (dir, manifest) = run(&cfg, &ov)?;
    let summary = serde_json::json!({
        "out_dir": dir,
        "outputs": manifest.outputs.keys().collect::<Vec<_>>(),
        "wall_clock_s": manifest.wall_clock_s,
    });
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match cli.command {
        Sub::Simulate(a) => ("simulate", a),
        Sub::Noise(a) => ("noise", a),
        Sub::Spectrum(a) => ("spectrum", a),
        Sub::Analyze(a) => ("analyze", a),
        Sub::Compare(a) => ("compare", a),
    };
    match execute(name, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
