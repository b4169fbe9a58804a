//! Shared plumbing for the pipeline's CSV tables: exact header checks,
//! line-numbered field errors, LF-terminated output, atomic file writes.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use chrono::FixedOffset;
use csv::{ReaderBuilder, StringRecord, Terminator, WriterBuilder};

use crate::error::{Error, Result};
use crate::time::{utc_offset, UtcInstant};

/// One data row with its 1-based line number in the source.
pub struct Row {
    pub line: u64,
    pub record: StringRecord,
}

impl Row {
    pub fn field(&self, idx: usize) -> &str {
        self.record.get(idx).unwrap_or("")
    }

    pub fn f64(&self, idx: usize, name: &str) -> Result<f64> {
        parse_f64(self.line, name, self.field(idx))
    }

    pub fn opt_f64(&self, idx: usize, name: &str) -> Result<Option<f64>> {
        let s = self.field(idx);
        if s.is_empty() {
            Ok(None)
        } else {
            parse_f64(self.line, name, s).map(Some)
        }
    }

    pub fn u64(&self, idx: usize, name: &str) -> Result<u64> {
        let s = self.field(idx);
        s.parse().map_err(|_| Error::Parse {
            line: self.line,
            message: format!("{name}: expected a non-negative integer, got {s:?}"),
        })
    }

    pub fn flag(&self, idx: usize, name: &str) -> Result<bool> {
        match self.field(idx) {
            "0" => Ok(false),
            "1" => Ok(true),
            s => Err(Error::Parse {
                line: self.line,
                message: format!("{name}: expected 0 or 1, got {s:?}"),
            }),
        }
    }

    pub fn timestamp(&self, idx: usize) -> Result<UtcInstant> {
        self.timestamp_in(idx, utc_offset())
    }

    pub fn timestamp_in(&self, idx: usize, naive_offset: FixedOffset) -> Result<UtcInstant> {
        UtcInstant::parse_with_offset(self.field(idx), naive_offset).map_err(|e| Error::Parse {
            line: self.line,
            message: e.to_string(),
        })
    }
}

pub fn parse_f64(line: u64, name: &str, s: &str) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            message: format!("{name}: expected a finite number, got {s:?}"),
        }),
    }
}

/// Reads a headed CSV table whose header must equal `header` exactly.
pub fn read_rows<R: Read>(input: R, header: &[&str]) -> Result<Vec<Row>> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(input);
    let found = rdr.headers().map_err(csv_err)?.clone();
    if found.is_empty() && header.is_empty() {
        return Ok(Vec::new());
    }
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let record = rec.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        rows.push(Row { line, record });
    }
    Ok(rows)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(1);
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => format!("expected {expected_len} fields, found {len}"),
        _ => e.to_string(),
    };
    Error::Parse { line, message }
}

/// Accumulates a CSV table in memory with LF line endings.
pub struct TableWriter {
    inner: csv::Writer<Vec<u8>>,
}

impl TableWriter {
    pub fn new(header: &[&str]) -> Self {
        let mut inner = WriterBuilder::new()
            .terminator(Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        inner
            .write_record(header)
            .expect("writing to memory cannot fail");
        TableWriter { inner }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner
            .write_record(fields)
            .expect("writing to memory cannot fail");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.inner
            .into_inner()
            .expect("flushing to memory cannot fail")
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to a temporary file beside `path`, then renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_must_match_exactly() {
        let err = read_rows("a,c\n1,2\n".as_bytes(), &["a", "b"])
            .err()
            .unwrap();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn ragged_row_reports_line() {
        let err = read_rows("a,b\n1,2\n3\n".as_bytes(), &["a", "b"])
            .err()
            .unwrap();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn writer_uses_lf() {
        let mut w = TableWriter::new(&["a", "b"]);
        w.row(["1", "2"]);
        assert_eq!(w.into_bytes(), b"a,b\n1,2\n");
    }

    #[test]
    fn non_finite_numbers_rejected() {
        assert!(parse_f64(2, "x", "NaN").is_err());
        assert!(parse_f64(2, "x", "inf").is_err());
        assert_eq!(parse_f64(2, "x", "-0.25").unwrap(), -0.25);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
