use std::io::Write;
use std::path::Path;

use crate::config::{CliError, CliResult};

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> CliResult<()>) -> CliResult<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

/// Collects CSV bytes from a writer callback.
pub fn csv_bytes(fill: impl FnOnce(&mut Vec<u8>) -> dualgap_core::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    fill(&mut buf)?;
    Ok(buf)
}
