//! CSV loading and missing-value removal.

use std::io::Read;
use std::path::Path;

use crate::error::{io_err, CfxError, Result};
use crate::schema::DatasetSchema;

/// A string table as read from CSV; cells are trimmed.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let columns = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in rdr.records() {
            rows.push(record?.iter().map(str::to_string).collect());
        }
        Ok(Self { columns, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Indices of every schema feature followed by the target.
    pub fn schema_columns(&self, schema: &DatasetSchema) -> Result<Vec<usize>> {
        schema
            .features
            .iter()
            .map(|f| f.name.as_str())
            .chain(std::iter::once(schema.target.name.as_str()))
            .map(|name| {
                self.column_index(name)
                    .ok_or_else(|| CfxError::MissingColumn(name.to_string()))
            })
            .collect()
    }
}

/// Removes rows with a missing cell in any schema column. Surviving rows are
/// returned untouched and in their original order.
pub fn clean(table: RawTable, schema: &DatasetSchema) -> Result<RawTable> {
    let cols = table.schema_columns(schema)?;
    let is_missing = |v: &str| schema.missing_values.iter().any(|m| m == v);
    let RawTable { columns, rows } = table;
    let rows = rows
        .into_iter()
        .filter(|row| cols.iter().all(|&c| !is_missing(&row[c])))
        .collect();
    Ok(RawTable { columns, rows })
}

pub fn load_and_clean(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let table = RawTable::from_reader(std::io::BufReader::new(file))?;
    let before = table.len();
    let cleaned = clean(table, schema)?;
    log::info!(
        "{}: {} rows, {} after removing missing values",
        path.display(),
        before,
        cleaned.len()
    );
    Ok(cleaned)
}
