//! CSV and JSON helpers with path-aware errors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{EamodError, Result};

/// Records that know their CSV header, so empty tables still carry one.
pub trait CsvRecord: Serialize {
    const HEADER: &'static [&'static str];
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| EamodError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(BufReader::new(file));
    let parse_err = |e: csv::Error| {
        let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
        EamodError::Parse {
            path: path.to_path_buf(),
            row,
            msg: e.to_string(),
        }
    };
    let headers = rdr.headers().map_err(parse_err)?.clone();
    if headers.is_empty() {
        return Err(EamodError::Parse {
            path: path.to_path_buf(),
            row: 1,
            msg: "missing header".into(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec.map_err(parse_err)?);
    }
    Ok(out)
}

pub fn write_csv<T: CsvRecord>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| EamodError::io(path, e))?;
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    let to_io = |e: csv::Error| EamodError::io(path, std::io::Error::other(e.to_string()));
    wtr.write_record(T::HEADER).map_err(to_io)?;
    for r in rows {
        wtr.serialize(r).map_err(to_io)?;
    }
    wtr.flush().map_err(|e| EamodError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| EamodError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| EamodError::io(path, e))?;
    w.flush().map_err(|e| EamodError::io(path, e))
}
