//! Observed data: a response on (0, 1) plus named covariate columns.
//!
//! [`Dataset`] owns equal-length column vectors and validates the response
//! support on construction, so downstream code can assume every `y_t` lies
//! strictly inside the unit interval. CSV files with a header row are the
//! on-disk format; any column can serve as the response, all remaining
//! numeric columns become covariates.

use crate::{Error, Result};
use std::path::Path;

/// A response vector and named covariate columns of common length.
#[derive(Debug, Clone)]
pub struct Dataset {
    response_name: String,
    response: Vec<f64>,
    columns: Vec<(String, Vec<f64>)>,
    /// Where the rows came from: source path and any row filtering.
    provenance: Option<String>,
}

impl Dataset {
    /// Build a dataset from a response and named covariate columns.
    ///
    /// Validates that the response is non-empty and strictly inside
    /// (0, 1), that all columns share the response length, that every
    /// value is finite, and that column names are distinct.
    pub fn new(
        response_name: impl Into<String>,
        response: Vec<f64>,
        columns: Vec<(String, Vec<f64>)>,
    ) -> Result<Self> {
        let response_name = response_name.into();
        if response.is_empty() {
            return Err(Error::Data("dataset has no rows".into()));
        }
        let bad: Vec<usize> = response
            .iter()
            .enumerate()
            .filter(|(_, &y)| !(y > 0.0 && y < 1.0))
            .map(|(t, _)| t)
            .collect();
        if !bad.is_empty() {
            return Err(Error::ResponseOutOfSupport { rows: bad });
        }
        for (name, values) in &columns {
            if values.len() != response.len() {
                return Err(Error::Data(format!(
                    "column `{name}` has {} rows but the response has {}",
                    values.len(),
                    response.len()
                )));
            }
            if let Some(t) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "column `{name}` has a non-finite value at row {t}"
                )));
            }
            if name == &response_name {
                return Err(Error::Data(format!(
                    "covariate column `{name}` clashes with the response name"
                )));
            }
        }
        let mut names: Vec<&str> = columns.iter().map(|(n, _)| n.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("duplicate column names".into()));
        }
        Ok(Dataset {
            response_name,
            response,
            columns,
            provenance: None,
        })
    }

    /// Where the rows came from, when known (source path, row filters).
    pub fn provenance(&self) -> Option<&str> {
        self.provenance.as_deref()
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    /// Covariate column by name.
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Covariate names in file/column order.
    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Resolve a list of covariate names to column slices, in order.
    pub fn columns_for(&self, names: &[String]) -> Result<Vec<&[f64]>> {
        names
            .iter()
            .map(|name| {
                self.column(name).ok_or_else(|| Error::UnknownCovariate {
                    name: name.clone(),
                    available: self.columns.iter().map(|(n, _)| n.clone()).collect(),
                })
            })
            .collect()
    }

    /// Copy of the dataset with observation `t` (0-based) removed.
    pub fn without_row(&self, t: usize) -> Result<Dataset> {
        if t >= self.n() {
            return Err(Error::Data(format!(
                "row {t} out of range for {} observations",
                self.n()
            )));
        }
        if self.n() == 1 {
            return Err(Error::Data("cannot delete the only row".into()));
        }
        let drop = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .enumerate()
                .filter(|(i, _)| *i != t)
                .map(|(_, &x)| x)
                .collect()
        };
        Ok(Dataset {
            response_name: self.response_name.clone(),
            response: drop(&self.response),
            columns: self
                .columns
                .iter()
                .map(|(n, v)| (n.clone(), drop(v)))
                .collect(),
            provenance: Some(match &self.provenance {
                Some(p) => format!("{p}; without row {t}"),
                None => format!("without row {t}"),
            }),
        })
    }

    /// Load a headered CSV file, taking `response` as the response column
    /// and every other column as a covariate.
    pub fn from_csv_path(path: impl AsRef<Path>, response: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path.as_ref())?;
        let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let resp_idx = headers.iter().position(|h| h == response).ok_or_else(|| {
            Error::Data(format!(
                "response column `{response}` not found; file has {headers:?}"
            ))
        })?;
        let mut cells: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::Data(format!(
                    "row {row} has {} fields, expected {}",
                    record.len(),
                    headers.len()
                )));
            }
            for (idx, raw) in record.iter().enumerate() {
                let trimmed = raw.trim();
                let value: f64 = trimmed.parse().map_err(|_| Error::CsvCell {
                    row,
                    column: headers[idx].clone(),
                    value: raw.to_string(),
                })?;
                if !value.is_finite() {
                    return Err(Error::CsvCell {
                        row,
                        column: headers[idx].clone(),
                        value: raw.to_string(),
                    });
                }
                cells[idx].push(value);
            }
        }
        let mut response_values = Vec::new();
        let mut columns = Vec::new();
        for (idx, values) in cells.into_iter().enumerate() {
            if idx == resp_idx {
                response_values = values;
            } else {
                columns.push((headers[idx].clone(), values));
            }
        }
        let mut data = Dataset::new(&headers[resp_idx], response_values, columns)?;
        data.provenance = Some(path.as_ref().display().to_string());
        Ok(data)
    }

    /// Write the dataset as a headered CSV file. Values are written in
    /// shortest round-trip notation, so loading the file back reproduces
    /// them bit for bit.
    pub fn to_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        let mut header = vec![self.response_name.as_str()];
        header.extend(self.columns.iter().map(|(n, _)| n.as_str()));
        writer.write_record(&header)?;
        for t in 0..self.n() {
            let mut record = vec![format_full(self.response[t])];
            record.extend(self.columns.iter().map(|(_, v)| format_full(v[t])));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Shortest decimal representation that parses back to the same f64;
/// `{}` on f64 guarantees that.
fn format_full(x: f64) -> String {
    format!("{x}")
}
