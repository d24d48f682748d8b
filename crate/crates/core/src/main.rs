use clap::{CommandFactory, Parser};

use beltscan::cli::{run, Cli, CliError};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => Cli::command().error(clap::error::ErrorKind::MissingRequiredArgument, msg).exit(),
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
