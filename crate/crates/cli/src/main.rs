use std::process::ExitCode;

use clap::Parser;

use classgain_cli::args::Cli;

fn main() -> ExitCode {
    // argv[0] is replaced so manifests do not depend on the install path.
    let argv: Vec<String> = std::iter::once("classgain".to_string())
        .chain(std::env::args().skip(1))
        .collect();
    let cli = Cli::parse();
    let outcome = classgain_cli::configure_threads().and_then(|()| classgain_cli::run(cli, argv));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
