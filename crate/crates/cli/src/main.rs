mod args;
mod commands;
mod error;
mod inputs;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::CliError;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VOLTGRID_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            fail(CliError::Usage(first.to_string()));
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Compare(a) => commands::compare(a),
        Command::Validate(a) => commands::validate(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Summarize(a) => commands::summarize(a),
    };
    if let Err(e) = result {
        fail(e);
    }
}

fn fail(e: CliError) -> ! {
    eprintln!("{}", e.to_json_line());
    std::process::exit(e.exit_code())
}
