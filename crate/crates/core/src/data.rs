//! Column-oriented data tables read from CSV.

use std::collections::HashSet;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    /// Missing entries are NaN.
    Numeric(Vec<f64>),
    /// Missing entries are `None`.
    Categorical(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Numeric(v) => !v[row].is_finite(),
            Column::Categorical(v) => v[row].is_none(),
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, Column::Categorical(_))
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

/// Summary of where a table came from, recorded with every fit.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Fingerprint {
    pub rows: usize,
    pub columns: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    names: Vec<String>,
    columns: Vec<Column>,
    rows: usize,
    fingerprint: Option<Fingerprint>,
}

fn is_missing_token(s: &str) -> bool {
    s.is_empty() || s == "NA" || s == "NaN" || s == "nan"
}

impl DataTable {
    pub fn new(columns: Vec<(String, Column)>) -> Result<Self> {
        let rows = columns.first().map_or(0, |(_, c)| c.len());
        let mut seen = HashSet::new();
        for (name, col) in &columns {
            if col.len() != rows {
                return Err(Error::Data(format!(
                    "column `{name}` has {} rows, expected {rows}",
                    col.len()
                )));
            }
            if !seen.insert(name.clone()) {
                return Err(Error::Data(format!("duplicate column `{name}`")));
            }
        }
        let (names, columns) = columns.into_iter().unzip();
        Ok(DataTable {
            names,
            columns,
            rows,
            fingerprint: None,
        })
    }

    /// Convenience constructor for all-numeric tables.
    pub fn from_numeric(columns: Vec<(&str, Vec<f64>)>) -> Result<Self> {
        DataTable::new(
            columns
                .into_iter()
                .map(|(n, v)| (n.to_string(), Column::Numeric(v)))
                .collect(),
        )
    }

    /// Read a CSV with a header row. A column is categorical when any
    /// non-missing entry fails to parse as a number, or when it is listed in
    /// `force_categorical`.
    pub fn read_csv(path: impl AsRef<Path>, force_categorical: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        let mut table = DataTable::parse_csv(&bytes, force_categorical)?;
        let digest = Sha256::digest(&bytes);
        table.fingerprint = Some(Fingerprint {
            rows: table.rows,
            columns: table.names.len(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
        Ok(table)
    }

    pub fn parse_csv(bytes: &[u8], force_categorical: &[String]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(bytes);
        let names: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if names.is_empty() {
            return Err(Error::Data("CSV has no header".into()));
        }
        for f in force_categorical {
            if !names.contains(f) {
                return Err(Error::Data(format!("categorical column `{f}` not in data")));
            }
        }
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); names.len()];
        for (i, record) in reader.records().enumerate() {
            // header is line 1
            let line = i + 2;
            let record = record.map_err(|e| Error::Data(format!("malformed CSV row at line {line}: {e}")))?;
            if record.len() != names.len() {
                return Err(Error::Data(format!(
                    "malformed CSV row at line {line}: expected {} fields, found {}",
                    names.len(),
                    record.len()
                )));
            }
            for (col, field) in raw.iter_mut().zip(record.iter()) {
                col.push(field.to_string());
            }
        }
        let columns = names
            .iter()
            .zip(raw)
            .map(|(name, values)| {
                let forced = force_categorical.contains(name);
                let numeric: Option<Vec<f64>> = if forced {
                    None
                } else {
                    values
                        .iter()
                        .map(|s| {
                            if is_missing_token(s) {
                                Some(f64::NAN)
                            } else {
                                s.parse::<f64>().ok().filter(|v| v.is_finite())
                            }
                        })
                        .collect()
                };
                let col = match numeric {
                    Some(v) => Column::Numeric(v),
                    None => Column::Categorical(
                        values
                            .into_iter()
                            .map(|s| if is_missing_token(&s) { None } else { Some(s) })
                            .collect(),
                    ),
                };
                (name.clone(), col)
            })
            .collect();
        DataTable::new(columns)
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.names.iter().position(|n| n == name).map(|i| &self.columns[i])
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.column(name) {
            Some(Column::Numeric(v)) => Ok(v),
            Some(Column::Categorical(_)) => Err(Error::Data(format!("column `{name}` is not numeric"))),
            None => Err(Error::Data(format!("unknown column `{name}`"))),
        }
    }

    pub fn fingerprint(&self) -> Option<&Fingerprint> {
        self.fingerprint.as_ref()
    }

    /// Drop rows with a missing value in any of `names`. Returns the reduced
    /// table and the number of rows removed.
    pub fn complete_cases(&self, names: &[&str]) -> Result<(DataTable, usize)> {
        let cols: Vec<&Column> = names
            .iter()
            .map(|n| self.column(n).ok_or_else(|| Error::Data(format!("unknown column `{n}`"))))
            .collect::<Result<_>>()?;
        let keep: Vec<usize> = (0..self.rows)
            .filter(|&i| cols.iter().all(|c| !c.is_missing(i)))
            .collect();
        let dropped = self.rows - keep.len();
        if dropped == 0 {
            return Ok((self.clone(), 0));
        }
        let columns = self
            .names
            .iter()
            .cloned()
            .zip(self.columns.iter().map(|c| c.select(&keep)))
            .collect();
        let mut out = DataTable::new(columns)?;
        out.fingerprint = self.fingerprint.clone();
        Ok((out, dropped))
    }
}
