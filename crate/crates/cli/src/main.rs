use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use npt_cli::commands::{cmd_synthesize, cmd_verify, load_config, read_map_table, Outcome, Overrides};
use npt_cli::CliError;
use npt_core::emergence::Strategy;

#[derive(Parser)]
#[command(name = "npt", version, about = "Synthesize and verify emergence maps between parameterized theories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build F for the configured target and ambient theories.
    Synthesize(Common),
    /// Re-verify the map table of a prior report with fresh samples.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Report written by a previous `synthesize` run.
        #[arg(long, value_name = "PATH")]
        map: String,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<String>,
    #[arg(long)]
    strategy: Option<Strategy>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            samples: self.samples,
            tol: self.tol,
            strategy: self.strategy,
        }
    }
}

fn emit(outcome: &Outcome, out: Option<&str>) -> Result<(), CliError> {
    let json = outcome.to_json()?;
    match out {
        Some(path) => std::fs::write(path, json + "\n").map_err(|source| CliError::Io {
            path: path.to_string(),
            source,
        })?,
        None => println!("{json}"),
    }
    eprintln!("{}", outcome.summary());
    Ok(())
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Synthesize(c) => {
            let cfg = load_config(&c.config, &c.overrides())?;
            let outcome = cmd_synthesize(&cfg);
            emit(&outcome, c.out.as_deref())?;
            Ok(outcome.exit_code)
        }
        Command::Verify { common: c, map } => {
            let cfg = load_config(&c.config, &c.overrides())?;
            let table = read_map_table(&map)?;
            let outcome = cmd_verify(&cfg, &table)?;
            emit(&outcome, c.out.as_deref())?;
            Ok(outcome.exit_code)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
