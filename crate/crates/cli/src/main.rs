use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gsd_cli::commands::{self, CommonArgs, StatsArgs};
use gsd_cli::config::LoadedConfig;
use gsd_cli::CliError;
use gsd_core::analysis::NoiseStrategy;

/// 3D-consistent noise, warp diagnostics and a toy score-distillation loop.
#[derive(Debug, Parser)]
#[command(name = "gsd", version)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; falls back to $GSD_OUT_DIR, then the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit with status 4 when a check or verdict fails.
    #[arg(long = "assert", global = true)]
    assert_checks: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render one consistent noise map per configured pose.
    GenNoise,
    /// Compare noise strategies: moments, KS, patch covariance, cross-view correlation.
    Stats {
        /// Restrict to these strategies (repeatable or comma separated).
        #[arg(long, value_delimiter = ',')]
        strategy: Vec<NoiseStrategy>,
        /// Require cross-view correlation from every strategy.
        #[arg(long)]
        assert_crossview: bool,
    },
    /// Identity, plane homography and round-trip warp checks.
    WarpCheck,
    /// Run the toy optimization loop.
    Optimize,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let loaded = match &cli.config {
        Some(path) => LoadedConfig::load(path)?,
        None => LoadedConfig::defaults(),
    };
    let args = CommonArgs {
        seed: cli.seed,
        out: cli.out,
        assert: cli.assert_checks,
    };
    let manifest = match cli.command {
        Command::GenNoise => commands::gen_noise(&loaded, &args)?,
        Command::Stats {
            strategy,
            assert_crossview,
        } => commands::stats(
            &loaded,
            &args,
            &StatsArgs {
                strategies: strategy,
                assert_crossview,
            },
        )?,
        Command::WarpCheck => commands::warp_check(&loaded, &args)?,
        Command::Optimize => commands::optimize_cmd(&loaded, &args)?,
    };
    println!("{}: wrote {} files", manifest.command, manifest.files.len() + 1);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gsd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
