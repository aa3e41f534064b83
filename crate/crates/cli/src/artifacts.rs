//! Atomic artifact writers. A file is either fully written or absent.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, Result};

/// Version of the CSV layouts written by this crate.
pub const CSV_SCHEMA: u32 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `bytes` to a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Buffers CSV rows in memory; [`CsvTable::write`] emits them atomically.
pub struct CsvTable {
    inner: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    pub fn new<I, S>(header: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let mut inner = csv::Writer::from_writer(Vec::new());
        inner.write_record(header)?;
        Ok(Self { inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields)?;
        Ok(())
    }

    pub fn write(self, path: &Path) -> Result<()> {
        let bytes = self
            .inner
            .into_inner()
            .map_err(|e| CliError::Csv(csv::Error::from(e.into_error())))?;
        write_atomic(path, &bytes)
    }
}

/// Shortest round-trip form; scientific notation for very small or large
/// magnitudes.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Formats an optional value, empty when absent.
pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    csv_schema: u32,
    files: &'a [&'a str],
}

/// Records which artifacts a command produced and the CSV schema version.
pub fn write_manifest(dir: &Path, command: &str, files: &[&str]) -> Result<()> {
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            command,
            csv_schema: CSV_SCHEMA,
            files,
        },
    )
}
