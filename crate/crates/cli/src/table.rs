//! Minimal CSV access for commands that only need some columns.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::CliError;

pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let data_err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
        let mut rdr = csv::Reader::from_path(path).map_err(data_err)?;
        let headers = rdr
            .headers()
            .map_err(data_err)?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec.map_err(data_err)?.iter().map(|f| f.trim().to_string()).collect());
        }
        Ok(Self { headers, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("schema error: column `{name}` not found")))
    }

    pub fn numeric_columns(&self, names: &[String]) -> Result<DMatrix<f64>, CliError> {
        let idx = names.iter().map(|n| self.column_index(n)).collect::<Result<Vec<_>, _>>()?;
        let mut m = DMatrix::zeros(self.rows.len(), idx.len());
        for (i, row) in self.rows.iter().enumerate() {
            for (c, (&j, name)) in idx.iter().zip(names).enumerate() {
                let tok = row.get(j).map(String::as_str).unwrap_or("");
                let v: f64 = tok.parse().map_err(|_| {
                    CliError::Data(format!("row {}: column `{name}`: `{tok}` is not a number", i + 1))
                })?;
                if !v.is_finite() {
                    return Err(CliError::Data(format!("row {}: column `{name}` is not finite", i + 1)));
                }
                m[(i, c)] = v;
            }
        }
        Ok(m)
    }

    pub fn binary_column(&self, name: &str) -> Result<Vec<u8>, CliError> {
        let j = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| match row.get(j).map(String::as_str) {
                Some("0") => Ok(0),
                Some("1") => Ok(1),
                other => Err(CliError::Data(format!(
                    "row {}: column `{name}`: `{}` is not 0 or 1",
                    i + 1,
                    other.unwrap_or("")
                ))),
            })
            .collect()
    }
}

/// Header names only.
pub fn read_headers(path: &Path) -> Result<Vec<String>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect())
}
