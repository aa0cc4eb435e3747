use std::path::PathBuf;
use std::process::ExitCode;

use afc_cli::{load, run, CliError, Command};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "afc", version, about = "Stark-controlled atomic frequency comb memory toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true, env = "AFC_CONFIG")]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "afc-out")]
    out: PathBuf,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Validate the configuration without computing anything.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Analytic recall efficiency versus storage time.
    EfficiencyCurve,
    /// Echo traces over a sweep of Stark pulse delays.
    EchoMap,
    /// Hole-burning preparation of the comb.
    PrepareComb,
    /// Chirped readout round trip of a synthetic comb.
    Readout,
    /// Cavity-enhanced efficiency over comb finesse.
    CavityDesign,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::EfficiencyCurve => Command::EfficiencyCurve,
            Cmd::EchoMap => Command::EchoMap,
            Cmd::PrepareComb => Command::PrepareComb,
            Cmd::Readout => Command::Readout,
            Cmd::CavityDesign => Command::CavityDesign,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = Command::from(cli.command);
    let result = (|| -> Result<(), CliError> {
        let mut loaded = load(cli.config.as_deref())?;
        if let Some(seed) = cli.seed {
            loaded.config.seed = seed;
        }
        match run(cmd, &loaded, &cli.out, cli.dry_run)? {
            None => println!("{}: configuration valid (sha256 {})", cmd.name(), loaded.config_sha256),
            Some(m) => println!("{}: wrote {} files to {}", cmd.name(), m.outputs.len() + 1, cli.out.display()),
        }
        Ok(())
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("afc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
