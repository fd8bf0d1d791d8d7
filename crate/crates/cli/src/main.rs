use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::json;

use curvarb_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let err = json!({"error": {"kind": "invalid-config", "status": 2, "message": msg.trim()}});
            eprintln!("{err}");
            return ExitCode::from(2);
        }
    };
    match cli.command.into_config().and_then(|cfg| run(&cfg)) {
        Ok(outcome) => {
            println!("{}", outcome.printed);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.status() as u8)
        }
    }
}
