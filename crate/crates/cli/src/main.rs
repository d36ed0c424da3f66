//! `qkdsim` command-line front end.
//!
//! Exit status: 0 success, 1 runtime or I/O failure, 2 usage, 3 unknown
//! configuration key, 4 unreadable configuration file, 5 invalid value.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;

use commands::Failure;

fn run() -> Result<(), Failure> {
    let mut cmd = args::command();
    let matches = match cmd.try_get_matches_from_mut(std::env::args_os()) {
        Ok(m) => m,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    Ok(())
                }
                ErrorKind::UnknownArgument if !matches!(std::env::args().nth(1), Some(s) if s.starts_with('-')) => {
                    Err(Failure::UnknownKey(qkdsim_core::ConfigError::UnknownKey {
                        key: unknown_flag(&e),
                        line: None,
                    }))
                }
                _ => Err(Failure::Usage(e.render().to_string())),
            };
        }
    };
    let Some(request) = args::request(&matches) else {
        return Err(Failure::Usage(cmd.render_help().to_string()));
    };
    let written = commands::dispatch(&request)?;
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

/// The offending flag of an unknown-argument error, without dashes.
fn unknown_flag(e: &clap::Error) -> String {
    use clap::error::{ContextKind, ContextValue};
    match e.get(ContextKind::InvalidArg) {
        Some(ContextValue::String(s)) => s.trim_start_matches('-').replace('-', "_"),
        _ => "?".to_string(),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(text) => eprint!("{text}"),
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}
