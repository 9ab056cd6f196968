//! CSV output for result tables and summaries.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{Record, ResultTable, Strategy, SummaryRow};
use crate::error::{Error, Result};

pub const RESULTS_HEADER: [&str; 5] = ["subject", "strategy", "m", "rep", "accuracy"];
pub const SUMMARY_HEADER: [&str; 5] = ["strategy", "m", "mean", "std", "count"];

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn csv_error(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes one row per record; accuracies have six decimals.
pub fn write_results<W: Write>(table: &ResultTable, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in &table.records {
        w.write_record([
            r.subject.as_str(),
            r.strategy.as_str(),
            &r.m.to_string(),
            &r.rep.to_string(),
            &format!("{:.6}", r.accuracy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.strategy.as_str(),
            &r.m.to_string(),
            &format!("{:.6}", r.mean),
            &format!("{:.6}", r.std),
            &r.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: [&str; 5]) -> Result<()> {
    let header = reader
        .headers()
        .map_err(|e| Error::format(0, e.to_string()))?
        .clone();
    if header.iter().ne(expected) {
        return Err(Error::format(
            0,
            format!(
                "expected header {}, found {}",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize) -> Result<T> {
    let pos = row.position();
    row.get(i).and_then(|v| v.parse().ok()).ok_or_else(|| {
        Error::format(
            pos.map_or(0, |p| p.byte()),
            format!("bad value in column {} on line {}", i + 1, pos.map_or(0, |p| p.line())),
        )
    })
}

fn rows<R: Read>(reader: &mut csv::Reader<R>) -> impl Iterator<Item = Result<csv::StringRecord>> + '_ {
    reader.records().map(|row| {
        row.map_err(|e| {
            let offset = e.position().map_or(0, |p| p.byte());
            Error::format(offset, e.to_string())
        })
    })
}

pub fn read_results<R: Read>(input: R) -> Result<ResultTable> {
    let mut reader = csv::Reader::from_reader(input);
    check_header(&mut reader, RESULTS_HEADER)?;
    let mut records = Vec::new();
    for row in rows(&mut reader) {
        let row = row?;
        let strategy: String = field(&row, 1)?;
        records.push(Record {
            subject: field(&row, 0)?,
            strategy: strategy.parse::<Strategy>()?,
            m: field(&row, 2)?,
            rep: field(&row, 3)?,
            accuracy: field(&row, 4)?,
        });
    }
    Ok(ResultTable {
        records,
        test_sizes: Vec::new(),
    })
}

pub fn read_summary<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_reader(input);
    check_header(&mut reader, SUMMARY_HEADER)?;
    let mut out = Vec::new();
    for row in rows(&mut reader) {
        let row = row?;
        let strategy: String = field(&row, 0)?;
        out.push(SummaryRow {
            strategy: strategy.parse::<Strategy>()?,
            m: field(&row, 1)?,
            mean: field(&row, 2)?,
            std: field(&row, 3)?,
            count: field(&row, 4)?,
        });
    }
    Ok(out)
}

impl ResultTable {
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_results(self, create(path)?).map_err(|e| csv_error(path, e))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<ResultTable> {
        let path = path.as_ref();
        read_results(File::open(path).map_err(|e| Error::io(path, e))?)
    }
}

pub fn save_summary(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_summary(rows, create(path)?).map_err(|e| csv_error(path, e))
}
