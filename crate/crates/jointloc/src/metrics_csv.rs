//! Metrics traces as CSV.
//!
//! The column order is fixed; absent optional values are empty cells. Floats
//! use Rust's shortest round-trip formatting, so identical traces give
//! byte-identical files.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use jointloc_core::MetricsRecord;

use crate::Error;

pub const HEADER: [&str; 9] = [
    "iter",
    "rmse_sensor",
    "rmse_target",
    "S",
    "W",
    "P",
    "G",
    "potential",
    "wall_nanos",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics<W: Write>(out: W, records: &[MetricsRecord]) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in records {
        w.write_record([
            r.iter.to_string(),
            opt(r.rmse_sensor),
            opt(r.rmse_target),
            r.s.to_string(),
            r.w.to_string(),
            r.p.to_string(),
            r.g.to_string(),
            opt(r.potential),
            opt(r.wall_nanos),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn save_metrics(path: impl AsRef<Path>, records: &[MetricsRecord]) -> Result<(), Error> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_metrics(file, records)
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, k: usize) -> Result<Option<T>, Error> {
    match row.get(k) {
        None => Err(Error::Metrics(format!("missing column {}", HEADER[k]))),
        Some("") => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|_| Error::Metrics(format!("bad value {s:?} in column {}", HEADER[k]))),
    }
}

fn required<T: std::str::FromStr>(row: &csv::StringRecord, k: usize) -> Result<T, Error> {
    field(row, k)?.ok_or_else(|| Error::Metrics(format!("empty column {}", HEADER[k])))
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>, Error> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    if r.headers()?.iter().ne(HEADER) {
        return Err(Error::Metrics("unexpected header".into()));
    }
    r.records()
        .map(|row| {
            let row = row?;
            Ok(MetricsRecord {
                iter: required(&row, 0)?,
                rmse_sensor: field(&row, 1)?,
                rmse_target: field(&row, 2)?,
                s: required(&row, 3)?,
                w: required(&row, 4)?,
                p: required(&row, 5)?,
                g: required(&row, 6)?,
                potential: field(&row, 7)?,
                wall_nanos: field(&row, 8)?,
            })
        })
        .collect()
}
