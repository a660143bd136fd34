pub mod blocks;
pub mod conditions;
pub mod dataset;
pub mod diffuse;
pub mod eval;

use std::io::{ErrorKind, Write};
use std::process::ExitCode;

use serde::Serialize;

/// Writes `text` to stdout. A reader that hung up early, as `head` does,
/// is not an error.
pub fn print_out(text: &str) -> anyhow::Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

/// Prints `value` as one pretty-printed JSON object on stdout.
pub fn emit<T: Serialize>(value: &T) -> anyhow::Result<ExitCode> {
    print_out(&format!("{}\n", serde_json::to_string_pretty(value)?))?;
    Ok(ExitCode::SUCCESS)
}
