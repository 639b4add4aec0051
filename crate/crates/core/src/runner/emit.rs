use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::config::Format;
use super::sweep::SweepResult;

fn io(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV text: `param,s_cm,s_hz,s_lr,<cr columns>,flags`.
pub fn to_csv(result: &SweepResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["param", "s_cm", "s_hz", "s_lr"];
    header.extend(result.cr_columns.iter().map(String::as_str));
    header.push("flags");
    let err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(&header).map_err(err)?;
    for row in &result.rows {
        let mut rec = vec![cell(Some(row.param)), cell(Some(row.s_cm)), cell(Some(row.s_hz)), cell(Some(row.s_lr))];
        rec.extend(row.s_cr.iter().map(|&v| cell(v)));
        rec.push(row.flags.join(";"));
        w.write_record(&rec).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn to_json(result: &SweepResult) -> Result<String> {
    serde_json::to_string_pretty(result).map_err(|e| Error::Io(e.to_string()))
}

pub fn from_json(text: &str) -> Result<SweepResult> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed sweep result: {e}")))
}

/// Writes `result` to `path`, creating parent directories.
pub fn emit(result: &SweepResult, format: Format, path: &Path) -> Result<()> {
    let text = match format {
        Format::Csv => to_csv(result)?,
        Format::Json => to_json(result)?,
    };
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io(path, e))
}
