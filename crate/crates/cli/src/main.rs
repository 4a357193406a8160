use std::process::ExitCode;

use clap::Parser;
use passquant_cli::{run, Cli, Format};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            match cli.format {
                Format::Text => print!("{}", report.to_text()),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report.to_json()).unwrap_or_default()),
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{}", report.failure_json());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
            ExitCode::from(2)
        }
    }
}
