//! CSV import/export with one-line headers, LF line endings and
//! shortest round-trip decimal formatting of every `f64`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, Terminator, WriterBuilder};

use crate::error::{Error, Result};

pub const EFFICIENCY_HEADER: [&str; 3] = ["t_s", "eta", "stderr"];
pub const PROFILE_HEADER: [&str; 2] = ["freq_hz", "alphaL"];
pub const TRACE_HEADER: [&str; 2] = ["t_s", "intensity"];
pub const RESPONSE_HEADER: [&str; 3] = ["freq_hz", "re", "im"];
pub const HISTOGRAM_HEADER: [&str; 2] = ["bin_start_s", "counts"];

/// Write numeric columns under `header`; all columns must share one length.
pub fn write_columns<W: Write>(out: W, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    if header.len() != columns.len() {
        return Err(Error::InvalidParameter(format!(
            "{} header fields for {} columns",
            header.len(),
            columns.len()
        )));
    }
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidParameter("columns have different lengths".into()));
    }
    let mut w = WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    let mut row = vec![String::new(); columns.len()];
    for i in 0..n {
        for (cell, col) in row.iter_mut().zip(columns) {
            // `{:?}` on f64 is the shortest string that parses back exactly.
            *cell = format!("{:?}", col[i]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Integer-valued second column (histograms).
pub fn write_counts<W: Write>(out: W, bin_start: &[f64], counts: &[u64]) -> Result<()> {
    if bin_start.len() != counts.len() {
        return Err(Error::InvalidParameter("bin and count lengths differ".into()));
    }
    let mut w = WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(out);
    w.write_record(HISTOGRAM_HEADER)?;
    for (t, c) in bin_start.iter().zip(counts) {
        w.write_record([format!("{t:?}"), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Read numeric columns, requiring the header to match exactly.
pub fn read_columns<R: Read>(input: R, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let found: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if found.len() != header.len() || found.iter().zip(header).any(|(a, b)| a != b) {
        return Err(Error::Parse(format!("expected header {}, found {}", header.join(","), found.join(","))));
    }
    let mut cols = vec![Vec::new(); header.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Parse(format!("row {} has {} fields, expected {}", line + 2, rec.len(), header.len())));
        }
        for (col, field) in cols.iter_mut().zip(rec.iter()) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: '{field}' is not a number", line + 2)))?;
            col.push(v);
        }
    }
    Ok(cols)
}

pub fn write_columns_file(path: impl AsRef<Path>, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let f = File::create(path)?;
    write_columns(std::io::BufWriter::new(f), header, columns)
}

pub fn read_columns_file(path: impl AsRef<Path>, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    read_columns(File::open(path)?, header)
}
