use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = latent_demand::cli::Cli::parse();
    ExitCode::from(latent_demand::cli::execute(&cli))
}
