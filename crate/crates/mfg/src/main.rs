use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use levy_mfg::output::{write_error_record, RunStamp};
use levy_mfg::{run, Command, RunConfig};

/// Mean-field equilibria of two-sided singular control of Levy processes.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Override a configuration value, e.g. `--set solver.epsilon=0.05`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match RunConfig::load(&cli.config, &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            let dir = RunConfig::output_dir_hint(&cli.config);
            let rec = write_error_record(dir.as_ref(), None, &e);
            eprintln!("{rec}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli.command, &cfg) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let stamp = RunStamp::new(cli.command.name(), &cfg);
            let rec = write_error_record(cfg.output.dir.as_ref(), Some(&stamp), &e);
            eprintln!("{rec}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
