use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use orbital_raman_cli::{apply_overrides, load_config, run, CliError, Command, Format, RunSpec};

/// Simulate, calibrate and fit phase-controlled Raman rotations of a hole
/// orbital qubit.
#[derive(Parser, Debug)]
#[command(name = "orbital-raman", version)]
struct Args {
    /// Experiment to run; overrides `command` in the config.
    #[arg(value_enum)]
    command: Option<Command>,

    /// JSON run specification.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set system.small_delta_mev=0.25`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[arg(short, long)]
    output_dir: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn resolve(args: &Args) -> Result<RunSpec, CliError> {
    let base = match &args.config {
        Some(path) => load_config(path)?,
        None => RunSpec::default(),
    };
    let mut spec = apply_overrides(&base, &args.overrides)?;
    if let Some(c) = args.command {
        spec.command = Some(c);
    }
    if let Some(d) = &args.output_dir {
        spec.output_dir = d.clone();
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(f) = args.format {
        spec.format = f;
    }
    Ok(spec)
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("ORBITAL_RAMAN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .map_err(|_| CliError::Config(format!("ORBITAL_RAMAN_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = init_threads().and_then(|_| resolve(&args)).and_then(|spec| run(&spec));
    match result {
        Ok(outcome) => {
            if outcome.files.is_empty() {
                println!("{}", serde_json::to_string_pretty(&outcome.summary).unwrap());
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("orbital-raman: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
