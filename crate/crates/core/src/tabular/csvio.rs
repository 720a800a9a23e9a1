use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::{Column, ColumnData, Lineage, Table, TableError, Target};

/// Loads a CSV file with a header row. Columns whose non-empty cells all
/// parse as finite numbers become numeric, others categorical; empty cells
/// are missing.
pub fn load_csv(path: impl AsRef<Path>, target_name: &str) -> Result<Table, TableError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, target_name)
}

pub fn read_csv<R: Read>(reader: R, target_name: &str) -> Result<Table, TableError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(TableError::NoHeader);
    }
    for (i, h) in header.iter().enumerate() {
        if header[..i].contains(h) {
            return Err(TableError::DuplicateHeader(h.clone()));
        }
    }
    let target_idx = header
        .iter()
        .position(|h| h == target_name)
        .ok_or_else(|| TableError::TargetNotFound(target_name.to_string()))?;

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    let mut lines = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(TableError::RaggedRow {
                row: line,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (col, field) in cells.iter_mut().zip(record.iter()) {
            col.push(field.to_string());
        }
        lines.push(line);
    }
    let n_rows = lines.len();

    let target_cells = &cells[target_idx];
    if let Some(row) = target_cells.iter().position(String::is_empty) {
        return Err(TableError::MissingTargetValue(lines[row]));
    }
    let mut classes: Vec<String> = target_cells.clone();
    classes.sort();
    classes.dedup();
    let labels = target_cells
        .iter()
        .map(|c| classes.binary_search(c).expect("class present") as u32)
        .collect();
    let target = Target::new(target_name, Arc::new(classes), labels);

    let mut columns = Vec::with_capacity(header.len() - 1);
    for (idx, name) in header.iter().enumerate() {
        if idx == target_idx {
            continue;
        }
        columns.push(type_column(name, &cells[idx]));
    }
    Table::from_columns(columns, n_rows, Some(target))
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn type_column(name: &str, cells: &[String]) -> Column {
    let numeric = cells
        .iter()
        .all(|c| c.is_empty() || parse_number(c).is_some());
    if numeric {
        let values = cells
            .iter()
            .map(|c| if c.is_empty() { None } else { parse_number(c) })
            .collect();
        Column::numeric_with_missing(name, Lineage::raw(name), values)
    } else {
        let values: Vec<Option<&str>> = cells
            .iter()
            .map(|c| if c.is_empty() { None } else { Some(c.as_str()) })
            .collect();
        Column::categorical_from_strings(name, Lineage::raw(name), &values)
    }
}

/// Writes feature columns followed by the target column (if any).
pub fn write_csv<W: Write>(table: &Table, writer: W) -> Result<(), TableError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = table.columns().iter().map(|c| c.name()).collect();
    if let Some(t) = table.target() {
        header.push(t.name());
    }
    wtr.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for r in 0..table.n_rows() {
        row.clear();
        for col in table.columns() {
            if col.is_missing(r) {
                row.push(String::new());
                continue;
            }
            row.push(match col.data() {
                ColumnData::Numeric(v) => format!("{}", v[r]),
                ColumnData::Categorical { codes, levels } => levels[codes[r] as usize].clone(),
            });
        }
        if let Some(t) = table.target() {
            row.push(t.classes()[t.labels()[r] as usize].clone());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|source| TableError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

pub fn write_csv_string(table: &Table) -> Result<String, TableError> {
    let mut buf = Vec::new();
    write_csv(table, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv writer emits utf-8"))
}
