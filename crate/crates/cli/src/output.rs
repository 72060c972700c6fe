use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::CliError;

pub fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal("Serialize", e.to_string()))?;
    match out {
        Some(path) => fs::write(path, text + "\n").map_err(|e| io_error(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| CliError::input("Io", e.to_string()))
        }
    }
}

pub fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<(), CliError> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::input("Io", format!("{}: {e}", path.display()))
}
