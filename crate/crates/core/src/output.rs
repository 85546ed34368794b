//! Number formatting and CSV/JSON table I/O shared by every emitter.
//!
//! Floats are rounded to 9 significant digits and written in Rust's
//! shortest round-trip notation, so files are locale independent and
//! byte-identical across runs. Every table is versioned: JSON tables carry a
//! `schema` field, CSV tables start with a `# schema: 1` comment line.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::Result;
use crate::spectral::SCHEMA_VERSION;

/// Rounds to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Display form of [`round_sig9`].
pub fn fmt_sig9(x: f64) -> String {
    let r = round_sig9(x);
    // `{}` never switches to exponents on its own
    if r != 0.0 && (r.abs() < 1e-5 || r.abs() >= 1e15) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

pub fn sig9<S: Serializer>(x: &f64, serializer: S) -> std::result::Result<S::Ok, S::Error> {
    serializer.serialize_f64(round_sig9(*x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// JSON envelope around a table.
#[derive(Debug, Serialize, Deserialize)]
pub struct JsonTable<T> {
    pub schema: u32,
    pub kind: String,
    pub rows: Vec<T>,
}

#[derive(Serialize)]
struct JsonTableRef<'a, T> {
    schema: u32,
    kind: &'a str,
    rows: &'a [T],
}

fn csv_preamble() -> String {
    format!("# schema: {SCHEMA_VERSION}")
}

/// Writes rows as CSV with a header, or as a JSON envelope.
pub fn write_table<T: Serialize, W: Write>(out: W, kind: &str, rows: &[T], format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            let mut out = out;
            writeln!(out, "{}", csv_preamble())?;
            let mut w = csv::Writer::from_writer(out);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let table = JsonTableRef {
                schema: SCHEMA_VERSION,
                kind,
                rows,
            };
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, &table)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Writes a table to `path`, or to stdout when `path` is `None`.
pub fn emit_table<T: Serialize>(path: Option<&Path>, kind: &str, rows: &[T], format: Format) -> Result<()> {
    match path {
        Some(p) => write_table(io::BufWriter::new(File::create(p)?), kind, rows, format),
        None => write_table(io::stdout().lock(), kind, rows, format),
    }
}

/// Reads back a CSV table written by [`write_table`].
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or_default();
    let Some(version) = first.strip_prefix("# schema: ") else {
        return Err(crate::error::Error::InvalidState(
            "CSV table lacks its '# schema:' line".into(),
        ));
    };
    check_version(version.trim().parse().unwrap_or(0))?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

/// Reads back a JSON table written by [`write_table`].
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let table: JsonTable<T> = serde_json::from_reader(io::BufReader::new(File::open(path)?))?;
    check_version(table.schema)?;
    Ok(table.rows)
}

fn check_version(schema: u32) -> Result<()> {
    if schema != SCHEMA_VERSION {
        return Err(crate::error::Error::InvalidState(format!(
            "unsupported table schema {schema}"
        )));
    }
    Ok(())
}
