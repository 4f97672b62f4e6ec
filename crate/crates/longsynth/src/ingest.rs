//! CSV panels: one row per individual, one column per round.

use std::io::Read;
use std::path::Path;

use longsynth_core::LongitudinalDataset;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvOptions {
    /// Skip the first line.
    pub header: bool,
    /// Code values strictly below the threshold as 1, the rest as 0.
    /// Without it every cell must already be 0 or 1.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub dataset: LongitudinalDataset,
    /// Rows removed because a cell was empty.
    pub dropped: usize,
}

pub fn ingest_csv(path: &Path, opts: &CsvOptions) -> Result<Ingested> {
    let file = std::fs::File::open(path)
        .map_err(|source| HarnessError::Read { path: path.to_owned(), source })?;
    ingest_reader(file, opts)
}

pub fn ingest_reader<R: Read>(reader: R, opts: &CsvOptions) -> Result<Ingested> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(opts.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<u8>> = Vec::new();
    let mut width = None;
    let mut dropped = 0;
    for (line, record) in csv.records().enumerate() {
        let record = record?;
        let line = line + 1 + usize::from(opts.header);
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(HarnessError::input(format!(
                    "line {line}: expected {w} columns, found {}",
                    record.len()
                )))
            }
            _ => {}
        }
        if record.iter().any(str::is_empty) {
            dropped += 1;
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, cell)| binarize(cell, opts.threshold, line, col + 1))
            .collect::<Result<Vec<u8>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(HarnessError::input("no complete rows in input"));
    }
    if rows[0].is_empty() {
        return Err(HarnessError::input("input has no rounds"));
    }
    Ok(Ingested { dataset: LongitudinalDataset::from_rows(&rows)?, dropped })
}

fn binarize(cell: &str, threshold: Option<f64>, line: usize, col: usize) -> Result<u8> {
    let value: f64 = cell
        .parse()
        .map_err(|_| HarnessError::input(format!("line {line}, column {col}: '{cell}' is not numeric")))?;
    match threshold {
        Some(th) => Ok(u8::from(value < th)),
        None if value == 0.0 => Ok(0),
        None if value == 1.0 => Ok(1),
        None => Err(HarnessError::input(format!(
            "line {line}, column {col}: {cell} is not 0 or 1 (pass a threshold to binarize)"
        ))),
    }
}

/// Writes a panel as headerless 0/1 CSV.
pub fn write_panel<P: longsynth_core::BitPanel + ?Sized, W: std::io::Write>(
    panel: &P,
    out: W,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let mut record = Vec::with_capacity(panel.rounds());
    for i in 0..panel.population() {
        record.clear();
        record.extend((1..=panel.rounds()).map(|t| if panel.bit(i, t) == 1 { "1" } else { "0" }));
        w.write_record(&record)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
