//! Shared CSV conventions: a `#` comment line, a header row, then data rows
//! with floats written to 17 significant digits so they parse back exactly.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_f64(field: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Malformed(format!("not a number: {field:?}")))
}

/// Writes the comment line and header, returning a CSV writer for the rows.
pub fn writer<W: Write>(mut inner: W, comment: &str, header: &[&str]) -> Result<csv::Writer<W>> {
    writeln!(inner, "# {comment}")?;
    let mut w = csv::Writer::from_writer(inner);
    w.write_record(header)?;
    Ok(w)
}

/// Reads a file in this schema, checking the header matches `expected`
/// (a prefix match when `prefix_only` is set). Returns the header and rows.
pub fn read_rows<R: BufRead>(input: R, expected: &[&str], prefix_only: bool) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let matches = if prefix_only {
        header.len() >= expected.len() && header.iter().zip(expected).all(|(h, e)| h == e)
    } else {
        header.len() == expected.len() && header.iter().zip(expected).all(|(h, e)| h == e)
    };
    if !matches {
        return Err(Error::Malformed(format!("unexpected header {header:?}, expected {expected:?}")));
    }
    let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((header, rows))
}
