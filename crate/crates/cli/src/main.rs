use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use forgenet_cli::{commands, Cli};
use forgenet_core::Error;

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            return fail("usage", first.trim_start_matches("error: "), 2);
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(commands::threads(&cli))
        .build_global()
    {
        return fail("config", &e.to_string(), 2);
    }
    match forgenet_cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if matches!(e, Error::Usage(_) | Error::Config(_)) { 2 } else { 1 };
            fail(e.kind(), &e.to_string(), code)
        }
    }
}
