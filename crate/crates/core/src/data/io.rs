//! CSV ingestion and serialization of trial datasets.

use std::io::{Read, Write};
use std::path::Path;

use super::dataset::{Dataset, Planting, RowKey};
use super::schema::{ColumnKind, ColumnSpec, KeyColumns, Schema};
use crate::error::{Error, Result};

/// Token written for missing cells.
pub const NA_TOKEN: &str = "NA";

enum Slot {
    Year,
    Region,
    Planting,
    Clone,
    Column(usize),
    Response,
}

pub fn load_trials(path: &Path, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trials(file, schema)
}

pub fn read_trials<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let keys = &schema.keys;
    let response = schema.response();

    let mut specs: Vec<ColumnSpec> = Vec::new();
    let mut slots: Vec<Vec<Slot>> = Vec::with_capacity(header.len());
    for h in &header {
        let mut s = Vec::new();
        if *h == keys.year {
            s.push(Slot::Year);
        }
        if *h == keys.planting {
            s.push(Slot::Planting);
        }
        if *h == keys.clone_id {
            s.push(Slot::Clone);
        }
        if *h == keys.region {
            s.push(Slot::Region);
        }
        if let Some(spec) = schema.column(h) {
            if spec.kind == ColumnKind::Response {
                s.push(Slot::Response);
            } else {
                if specs.iter().any(|c| c.name == spec.name) {
                    return Err(Error::Schema(format!("column '{h}' appears twice")));
                }
                s.push(Slot::Column(specs.len()));
                specs.push(spec.clone());
            }
        }
        if s.is_empty() {
            return Err(Error::Schema(format!("unknown column '{h}'")));
        }
        slots.push(s);
    }
    for required in [&keys.year, &keys.region, &keys.planting, &keys.clone_id] {
        if !header.contains(required) {
            return Err(Error::Schema(format!("key column '{required}' is missing")));
        }
    }
    for spec in &schema.columns {
        let required = !matches!(spec.kind, ColumnKind::Derived | ColumnKind::Response);
        if required && !header.contains(&spec.name) {
            return Err(Error::Schema(format!("column '{}' is missing from the file", spec.name)));
        }
    }

    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); specs.len()];
    let mut labels: Vec<u8> = Vec::new();
    let has_response = response.is_some_and(|r| header.contains(&r.name));
    let mut row_keys = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let (mut year, mut region, mut planting, mut clone) = (None, None, None, None);
        for (cell, (slot_list, h)) in record.iter().zip(slots.iter().zip(&header)) {
            for slot in slot_list {
                match slot {
                    Slot::Year => {
                        year = Some(cell.trim().parse::<i32>().map_err(|_| Error::Parse {
                            row,
                            column: h.clone(),
                            value: cell.to_string(),
                        })?)
                    }
                    Slot::Region => region = Some(cell.trim().to_string()),
                    Slot::Planting => {
                        planting = Some(Planting::parse(cell).ok_or_else(|| Error::Parse {
                            row,
                            column: h.clone(),
                            value: cell.to_string(),
                        })?)
                    }
                    Slot::Clone => clone = Some(cell.trim().to_string()),
                    Slot::Column(j) => columns[*j].push(parse_cell(&specs[*j], cell, row, schema)?),
                    Slot::Response => {
                        let v = match cell.trim() {
                            "0" | "0.0" => 0,
                            "1" | "1.0" => 1,
                            _ => {
                                return Err(Error::Parse {
                                    row,
                                    column: h.clone(),
                                    value: cell.to_string(),
                                })
                            }
                        };
                        labels.push(v);
                    }
                }
            }
        }
        row_keys.push(RowKey {
            year: year.expect("year key checked"),
            region: region.expect("region key checked"),
            planting: planting.expect("planting key checked"),
            clone_id: clone.expect("clone key checked"),
        });
    }
    Dataset::new(specs, columns, has_response.then_some(labels), row_keys)
}

fn parse_cell(spec: &ColumnSpec, cell: &str, row: usize, schema: &Schema) -> Result<Option<f64>> {
    let t = cell.trim();
    if spec.kind == ColumnKind::Categorical {
        if schema.is_missing_token(t) {
            return Err(Error::Consistency(format!(
                "categorical column '{}' is missing at row {row}",
                spec.name
            )));
        }
        return spec
            .level_index(t)
            .map(|i| Some(i as f64))
            .ok_or_else(|| Error::Schema(format!(
                "column '{}' has undeclared level '{t}' at row {row}",
                spec.name
            )));
    }
    if schema.is_missing_token(t) {
        return Ok(None);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::Parse {
            row,
            column: spec.name.clone(),
            value: cell.to_string(),
        }),
    }
}

/// Schema describing an existing dataset, suitable for reloading what `write_dataset` wrote.
pub fn schema_for(ds: &Dataset, keys: &KeyColumns, response: &str) -> Schema {
    let mut columns = ds.specs().to_vec();
    if ds.labels().is_some() {
        columns.push(ColumnSpec::numeric(response, ColumnKind::Response, "", Some((0.0, 1.0)), 0));
    }
    Schema {
        keys: keys.clone(),
        columns,
        missing_tokens: super::schema::default_missing_tokens(),
    }
}

pub fn save_dataset(ds: &Dataset, path: &Path, keys: &KeyColumns, response: &str) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(ds, file, keys, response)
}

pub fn write_dataset<W: Write>(ds: &Dataset, writer: W, keys: &KeyColumns, response: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let region_is_column = ds.column_index(&keys.region).is_some();
    let mut header = vec![keys.year.clone()];
    if !region_is_column {
        header.push(keys.region.clone());
    }
    header.push(keys.planting.clone());
    header.push(keys.clone_id.clone());
    header.extend(ds.specs().iter().map(|s| s.name.clone()));
    if ds.labels().is_some() {
        header.push(response.to_string());
    }
    w.write_record(&header)?;
    for i in 0..ds.n_rows() {
        let k = &ds.keys()[i];
        let mut rec = vec![k.year.to_string()];
        if !region_is_column {
            rec.push(k.region.clone());
        }
        rec.push(k.planting.to_string());
        rec.push(k.clone_id.clone());
        for (j, spec) in ds.specs().iter().enumerate() {
            rec.push(match ds.get(i, j) {
                None => NA_TOKEN.to_string(),
                Some(v) if spec.kind == ColumnKind::Categorical => spec.levels[v as usize].clone(),
                Some(v) => format!("{v}"),
            });
        }
        if let Some(l) = ds.labels() {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
