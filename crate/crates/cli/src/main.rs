use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::json;
use sigrf_cli::{run, Cli, EXIT_INPUT};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let _ = e.print();
            let msg = e.kind().to_string();
            println!("{}", json!({ "command": null, "status": "error", "exit_code": EXIT_INPUT, "message": msg }));
            return ExitCode::from(EXIT_INPUT as u8);
        }
    };
    let code = match run(&cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            println!(
                "{}",
                json!({ "command": cli.command.name(), "status": "error", "exit_code": code, "message": e.to_string() })
            );
            code
        }
    };
    ExitCode::from(code as u8)
}
