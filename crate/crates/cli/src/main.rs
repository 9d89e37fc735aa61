use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use csdm_cli::{execute, Command, RunConfig};

#[derive(Parser)]
#[command(name = "csdm", version, about = "Compressed sensing with diffusion models, plus factor stress testing")]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// JSON configuration file; missing sections take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed the command uses.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Suppresses the list of written files and informational logging.
    #[arg(long)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Cmd {
    Sketch,
    Recover,
    Train,
    Sample,
    Pipeline,
    SweepM,
    Pca,
    Ssa,
    Bench,
    MakeData,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Sketch => Command::Sketch,
            Cmd::Recover => Command::Recover,
            Cmd::Train => Command::Train,
            Cmd::Sample => Command::Sample,
            Cmd::Pipeline => Command::Pipeline,
            Cmd::SweepM => Command::SweepM,
            Cmd::Pca => Command::Pca,
            Cmd::Ssa => Command::Ssa,
            Cmd::Bench => Command::Bench,
            Cmd::MakeData => Command::MakeData,
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let run = RunConfig {
        command: args.command.into(),
        config_path: args.config,
        seed: args.seed,
        out: args.out,
        quiet: args.quiet,
    };
    match execute(&run) {
        Ok(files) => {
            if !run.quiet {
                for f in files {
                    println!("{}", f.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
