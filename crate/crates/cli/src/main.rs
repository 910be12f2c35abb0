use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = aapp_cli::Cli::parse();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    ExitCode::from(aapp_cli::run(cli, &mut out, &mut err))
}
