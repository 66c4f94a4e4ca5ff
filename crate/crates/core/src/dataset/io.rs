use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{validate_schema, Column, ColumnData, ColumnSpec, Dataset};
use crate::error::{Error, Result};

const MISSING: &str = "NA";

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == MISSING
}

/// Reads a JSON array of `{name, kind, units}` objects.
pub fn load_schema(path: impl AsRef<Path>) -> Result<Vec<ColumnSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let specs: Vec<ColumnSpec> = serde_json::from_str(&text)?;
    Ok(specs)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &[ColumnSpec]) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ds = read_csv(file, schema)?;
    let n = ds.n_rows();
    ds.log_step("load_csv", &[("path", path.display().to_string())], n);
    Ok(ds)
}

pub fn read_csv<R: Read>(reader: R, schema: &[ColumnSpec]) -> Result<Dataset> {
    validate_schema(&schema.iter().collect::<Vec<_>>())?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let expected: Vec<String> = schema.iter().map(|s| s.name.clone()).collect();
    if header != expected {
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = header.iter().find(|h| !seen.insert(h.as_str())) {
            return Err(Error::DuplicateColumn(dup.clone()));
        }
        return Err(Error::HeaderMismatch {
            expected,
            found: header,
        });
    }

    let mut cells: Vec<ColumnData> = schema
        .iter()
        .map(|s| {
            if s.kind.is_numeric_storage() {
                ColumnData::Numeric(Vec::new())
            } else {
                ColumnData::Text(Vec::new())
            }
        })
        .collect();
    for record in rdr.records() {
        let record = record?;
        for (col, raw) in cells.iter_mut().zip(record.iter()) {
            match col {
                ColumnData::Numeric(v) => {
                    let parsed = if is_missing(raw) {
                        None
                    } else {
                        raw.parse::<f64>().ok().filter(|x| x.is_finite())
                    };
                    v.push(parsed);
                }
                ColumnData::Text(v) => {
                    v.push((!is_missing(raw)).then(|| raw.to_string()));
                }
            }
        }
    }
    let columns = schema
        .iter()
        .cloned()
        .zip(cells)
        .map(|(spec, data)| Column { spec, data })
        .collect();
    Dataset::new(columns, None)
}

pub fn write_csv_string(ds: &Dataset) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(ds.column_names())?;
    for i in 0..ds.n_rows() {
        let row: Vec<String> = ds
            .columns()
            .iter()
            .map(|c| match &c.data {
                ColumnData::Numeric(v) => v[i].map_or_else(|| MISSING.to_string(), |x| x.to_string()),
                ColumnData::Text(v) => v[i].clone().unwrap_or_else(|| MISSING.to_string()),
            })
            .collect();
        wtr.write_record(&row)?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| Error::io("<memory>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

pub fn write_csv(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let text = write_csv_string(ds)?;
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
