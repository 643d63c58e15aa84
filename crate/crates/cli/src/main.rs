use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dualmc::{run, CliError, ExperimentConfig, RunOptions};

/// Runs one experiment suite and writes its CSV results.
#[derive(Debug, Parser)]
#[command(name = "dualmc", version)]
struct Args {
    /// merton-path, merton-table, mixture-compare, incomplete or quantizer-build
    scenario: String,
    /// JSON config file
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `output_dir`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write world-path increments and per-batch values
    #[arg(long)]
    dump_paths: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match execute(&args) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: &Args) -> Result<Vec<PathBuf>, CliError> {
    let cfg = ExperimentConfig::load(&args.config)?;
    if cfg.name() != args.scenario {
        return Err(CliError::config(
            "scenario",
            format!("command line asks for `{}` but the config is `{}`", args.scenario, cfg.name()),
        ));
    }
    let opts = RunOptions {
        out_dir: args.out.clone().or_else(|| cfg.output_dir().map(PathBuf::from)).unwrap_or_else(|| "results".into()),
        seed: args.seed.unwrap_or(cfg.seed()),
        dump_paths: args.dump_paths,
    };
    run(&cfg, &opts)
}
