use std::process::ExitCode;

use clap::Parser;

use horolab::canon;
use horolab::commands::{self, Cli};
use horolab::error::{CliError, ErrorReport};

fn fail(e: &CliError) -> ExitCode {
    let report = ErrorReport { kind: e.kind().into(), message: e.to_string(), exit_code: e.exit_code() };
    eprint!("{}", canon::to_canonical(&report).unwrap_or_else(|_| format!("{{\"message\": {:?}}}\n", e.to_string())));
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let loaded = match commands::load_config(&cli) {
        Ok(l) => l,
        Err(e) => return Ok(fail(&e)),
    };
    let out = commands::out_dir(&cli, &loaded);
    match commands::run(&cli, &loaded, &out) {
        Ok(o) => {
            print!("{}", canon::render(&o.result));
            Ok(ExitCode::from(o.exit_code as u8))
        }
        Err(e) => Ok(fail(&e)),
    }
}
