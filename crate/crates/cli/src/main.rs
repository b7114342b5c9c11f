mod args;
mod commands;
mod output;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use args::{Cli, Command};
use commands::{Inputs, UsageError};
use output::{OutputDir, RunManifest, SCHEMA_VERSION};

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Fit(_) => "fit",
        Command::Path(_) => "path",
        Command::Cv(_) => "cv",
        Command::NoiseEst(_) => "noise-est",
        Command::Penalties(_) => "penalties",
        Command::Simulate(_) => "simulate",
    }
}

fn run(cli: &Cli) -> Result<std::path::PathBuf> {
    if let Some(threads) = cli.global.threads {
        if threads == 0 {
            return Err(UsageError("invalid value for --threads: must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    let seed = cli.global.seed;
    let mut out = OutputDir::create(&cli.global.out)?;
    let mut inputs = Inputs::default();
    match &cli.command {
        Command::Fit(a) => commands::fit(a, &mut out, &mut inputs)?,
        Command::Path(a) => commands::path(a, &mut out, &mut inputs)?,
        Command::Cv(a) => commands::cv(a, seed, &mut out, &mut inputs)?,
        Command::NoiseEst(a) => commands::noise_est(a, &mut out, &mut inputs)?,
        Command::Penalties(a) => commands::penalties(a, &mut out, &mut inputs)?,
        Command::Simulate(a) => commands::simulate(a, seed, &mut out)?,
    }
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        command: command_name(&cli.command).into(),
        arguments: serde_json::to_value(cli)?,
        seed,
        threads: rayon::current_num_threads(),
        library_version: env!("CARGO_PKG_VERSION").into(),
        input_digests: inputs.digests,
        output_digests: Default::default(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    out.finish(manifest)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
