use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qscope::cli::{cmd_analyze, cmd_reconstruct, cmd_simulate, RunConfig};
use qscope::Error;

#[derive(Parser)]
#[command(
    name = "qscope",
    version,
    about = "Scanning coincidence microscopy: simulate, reconstruct, analyze"
)]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate signal, idler and trigger streams plus ground truth.
    Simulate,
    /// Build coincidence and idler images from stream files.
    Reconstruct,
    /// SNR curve, sqrt-N fit, edge fits and confocal limits.
    Analyze,
}

fn run(args: Args) -> Result<(), Error> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }

    if let Some(n) = std::env::var("QSCOPE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("QSCOPE_THREADS: {e}")))?;
    }

    let summary = match args.command {
        Command::Simulate => serde_json::to_string_pretty(&cmd_simulate(&cfg)?),
        Command::Reconstruct => {
            let report = cmd_reconstruct(&cfg)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            serde_json::to_string_pretty(&report)
        }
        Command::Analyze => {
            let bundle = cmd_analyze(&cfg)?;
            for e in bundle.edge_fits.iter().filter_map(|e| e.error.as_ref()) {
                eprintln!("warning: edge fit failed: {e}");
            }
            serde_json::to_string_pretty(&serde_json::json!({
                "snr_points": bundle.snr_points,
                "sqrt_fit": bundle.sqrt_fit,
                "sigma_mean_um": bundle.sigma_mean_um,
                "sigma_std_um": bundle.sigma_std_um,
                "confocal_limits_um": bundle.confocal_limits_um,
            }))
        }
    };
    println!("{}", summary.expect("summary serializes"));
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
