//! CSV input and output in the schema's column layout.
//!
//! Headers are matched to schema names case-insensitively and may appear in
//! any order. Categorical cells are matched to level names case-insensitively.
//! Rows are numbered from 1, counting data rows only.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::schema::{Dataset, Schema};

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Columns whose cells are in basis points and are divided by 100 on read.
    pub bps_columns: Vec<String>,
}

impl ParseOptions {
    pub fn with_bps(columns: &[&str]) -> Self {
        ParseOptions {
            bps_columns: columns.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Predictor rows read for prediction: the response column may be absent and
/// named extra columns are captured verbatim.
#[derive(Debug, Clone)]
pub struct PredictorTable {
    pub rows: Vec<Vec<f64>>,
    pub response: Option<Vec<f64>>,
    /// One entry per requested extra column, `None` where the header lacks it.
    pub extras: Vec<Option<Vec<String>>>,
}

#[derive(Clone, Copy)]
enum Slot {
    Feature(usize),
    Response,
    Extra(usize),
}

struct Layout {
    slots: Vec<Slot>,
    names: Vec<String>,
    divisor: Vec<f64>,
    has_response: bool,
    extras_present: Vec<bool>,
}

fn layout(
    headers: &csv::StringRecord,
    schema: &Schema,
    opts: &ParseOptions,
    require_response: bool,
    extras: &[&str],
) -> Result<Layout> {
    if headers.iter().all(|h| h.trim().is_empty()) {
        return Err(Error::EmptyDataset);
    }
    for b in &opts.bps_columns {
        let known = schema.feature_index(b).is_some() || schema.response().name.eq_ignore_ascii_case(b);
        if !known {
            return Err(Error::UnknownColumn { column: b.clone() });
        }
    }
    let mut slots = Vec::with_capacity(headers.len());
    let mut names = Vec::with_capacity(headers.len());
    let mut divisor = Vec::with_capacity(headers.len());
    let mut seen_features = vec![false; schema.n_features()];
    let mut has_response = false;
    let mut extras_present = vec![false; extras.len()];
    for h in headers.iter() {
        let name = h.trim();
        let slot = if let Some(f) = schema.feature_index(name) {
            if seen_features[f] {
                return Err(Error::DuplicateColumn { column: name.into() });
            }
            seen_features[f] = true;
            Slot::Feature(f)
        } else if schema.response().name.eq_ignore_ascii_case(name) {
            if has_response {
                return Err(Error::DuplicateColumn { column: name.into() });
            }
            has_response = true;
            Slot::Response
        } else if let Some(e) = extras.iter().position(|e| e.eq_ignore_ascii_case(name)) {
            if extras_present[e] {
                return Err(Error::DuplicateColumn { column: name.into() });
            }
            extras_present[e] = true;
            Slot::Extra(e)
        } else {
            return Err(Error::UnknownColumn { column: name.into() });
        };
        let bps = opts.bps_columns.iter().any(|b| b.eq_ignore_ascii_case(name));
        divisor.push(if bps { 100.0 } else { 1.0 });
        slots.push(slot);
        names.push(name.to_string());
    }
    if let Some(f) = seen_features.iter().position(|s| !s) {
        return Err(Error::MissingColumn {
            column: schema.feature(f).name.clone(),
        });
    }
    if require_response && !has_response {
        return Err(Error::MissingColumn {
            column: schema.response().name.clone(),
        });
    }
    Ok(Layout {
        slots,
        names,
        divisor,
        has_response,
        extras_present,
    })
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::NotNumeric {
            row,
            column: column.into(),
            value: cell.into(),
        })
}

fn read_table<R: Read>(
    source: R,
    schema: &Schema,
    opts: &ParseOptions,
    require_response: bool,
    extras: &[&str],
) -> Result<PredictorTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    let lay = layout(&headers, schema, opts, require_response, extras)?;
    let p = schema.n_features();
    let mut rows = Vec::new();
    let mut response = Vec::new();
    let mut extra_cols: Vec<Vec<String>> = vec![Vec::new(); extras.len()];
    let mut record = csv::StringRecord::new();
    let mut row_no = 0usize;
    loop {
        match reader.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => return Err(Error::Csv(e.to_string())),
        }
        row_no += 1;
        if record.len() != lay.slots.len() {
            return Err(Error::RowArity {
                row: row_no,
                expected: lay.slots.len(),
                found: record.len(),
            });
        }
        let mut values = vec![0.0; p];
        for (i, cell) in record.iter().enumerate() {
            let column = &lay.names[i];
            if cell.is_empty() {
                if let Slot::Extra(e) = lay.slots[i] {
                    extra_cols[e].push(String::new());
                    continue;
                }
                return Err(Error::EmptyCell {
                    row: row_no,
                    column: column.clone(),
                });
            }
            match lay.slots[i] {
                Slot::Feature(f) => {
                    let spec = schema.feature(f);
                    values[f] = if spec.is_categorical() {
                        spec.level_index(cell).ok_or_else(|| Error::UnknownLevel {
                            row: row_no,
                            column: column.clone(),
                            value: cell.into(),
                        })? as f64
                    } else {
                        let v = parse_number(cell, row_no, column)? / lay.divisor[i];
                        if !spec.range.contains(v) {
                            return Err(Error::OutOfRange {
                                row: row_no,
                                column: column.clone(),
                                value: v,
                                range: spec.range.describe(),
                            });
                        }
                        v
                    };
                }
                Slot::Response => {
                    let v = parse_number(cell, row_no, column)? / lay.divisor[i];
                    let range = &schema.response().range;
                    if !range.contains(v) {
                        return Err(Error::OutOfRange {
                            row: row_no,
                            column: column.clone(),
                            value: v,
                            range: range.describe(),
                        });
                    }
                    response.push(v);
                }
                Slot::Extra(e) => extra_cols[e].push(cell.to_string()),
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(PredictorTable {
        rows,
        response: lay.has_response.then_some(response),
        extras: extra_cols
            .into_iter()
            .zip(&lay.extras_present)
            .map(|(c, &present)| present.then_some(c))
            .collect(),
    })
}

/// Reads a complete dataset: every schema column plus the response.
pub fn parse_csv<R: Read>(source: R, schema: &Schema, opts: &ParseOptions) -> Result<Dataset> {
    let table = read_table(source, schema, opts, true, &[])?;
    let response = table.response.expect("response required");
    Dataset::from_rows(schema.clone(), &table.rows, response)
}

/// Reads predictor rows for scoring. The response column is optional and any
/// of `extras` may be present.
pub fn parse_predictor_csv<R: Read>(
    source: R,
    schema: &Schema,
    opts: &ParseOptions,
    extras: &[&str],
) -> Result<PredictorTable> {
    read_table(source, schema, opts, false, extras)
}

/// Writes the response first, then predictors in schema order. Numbers use
/// the shortest representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(ds: &Dataset, sink: W) -> Result<()> {
    let schema = ds.schema();
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec![schema.response().name.clone()];
    header.extend(schema.feature_names());
    w.write_record(&header).map_err(|e| Error::Csv(e.to_string()))?;
    for row in 0..ds.n_rows() {
        let mut cells = Vec::with_capacity(header.len());
        cells.push(format!("{}", ds.response()[row]));
        for f in 0..ds.n_features() {
            match ds.level_name(row, f) {
                Some(level) => cells.push(level.to_string()),
                None => cells.push(format!("{}", ds.value(row, f))),
            }
        }
        w.write_record(&cells).map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
