//! Dataset representation, CSV ingestion and fold splitting.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column names used to read a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    /// Binary outcome column.
    #[serde(default = "default_y")]
    pub y: String,
    /// Binary intervention column.
    #[serde(default = "default_a")]
    pub a: String,
    /// Confounder columns. When absent every column other than `y` and `a`
    /// is used, in file order.
    #[serde(default)]
    pub x: Option<Vec<String>>,
}

fn default_y() -> String {
    "y".into()
}

fn default_a() -> String {
    "a".into()
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            y: default_y(),
            a: default_a(),
            x: None,
        }
    }
}

/// Observational rows `(y, a, x)` plus the subset of covariates used for
/// prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<u8>,
    a: Vec<u8>,
    x: DMatrix<f64>,
    x_names: Vec<String>,
    v_indices: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset, checking that outcomes and interventions are binary,
    /// covariates finite and `v_indices` distinct and in range (0-based).
    pub fn new(
        y: Vec<u8>,
        a: Vec<u8>,
        x: DMatrix<f64>,
        x_names: Vec<String>,
        v_indices: Vec<usize>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Argument("dataset must contain at least one row".into()));
        }
        if a.len() != n || x.nrows() != n {
            return Err(Error::Argument(format!(
                "row counts disagree: y={}, a={}, x={}",
                n,
                a.len(),
                x.nrows()
            )));
        }
        if x_names.len() != x.ncols() {
            return Err(Error::Argument(format!(
                "{} covariate names for {} columns",
                x_names.len(),
                x.ncols()
            )));
        }
        if let Some(i) = y.iter().position(|&v| v > 1) {
            return Err(Error::Parse {
                row: i + 1,
                message: format!("outcome {} is not binary", y[i]),
            });
        }
        if let Some(i) = a.iter().position(|&v| v > 1) {
            return Err(Error::Parse {
                row: i + 1,
                message: format!("intervention {} is not binary", a[i]),
            });
        }
        for (i, row) in x.row_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    row: i + 1,
                    message: "non-finite covariate".into(),
                });
            }
        }
        let mut seen = vec![false; x.ncols()];
        for &j in &v_indices {
            if j >= x.ncols() {
                return Err(Error::Argument(format!(
                    "prediction covariate index {j} out of range for {} covariates",
                    x.ncols()
                )));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::Argument(format!(
                    "prediction covariate index {j} repeated"
                )));
            }
        }
        Ok(Self {
            y,
            a,
            x,
            x_names,
            v_indices,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d_x(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    /// 0-based indices of the prediction covariates within `x`.
    pub fn v_indices(&self) -> &[usize] {
        &self.v_indices
    }

    pub fn v_names(&self) -> Vec<String> {
        self.v_indices
            .iter()
            .map(|&j| self.x_names[j].clone())
            .collect()
    }

    /// The n × |V| matrix of prediction covariates.
    pub fn v(&self) -> DMatrix<f64> {
        self.x.select_columns(&self.v_indices)
    }

    /// Rows `idx` as a new dataset, keeping column layout.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            idx.iter().map(|&i| self.y[i]).collect(),
            idx.iter().map(|&i| self.a[i]).collect(),
            self.x.select_rows(idx),
            self.x_names.clone(),
            self.v_indices.clone(),
        )
    }

    /// Writes the dataset as CSV with header `y,a,<covariates>`. Floats use
    /// the shortest representation that parses back to the same value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string(), "a".to_string()];
        header.extend(self.x_names.iter().cloned());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n() {
            record.clear();
            record.push(self.y[i].to_string());
            record.push(self.a[i].to_string());
            record.extend(self.x.row(i).iter().map(|v| format!("{v:?}")));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a dataset from a CSV file. `v_columns` names the prediction
/// covariates and must be a subset of the confounder columns.
pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema, v_columns: &[String]) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_dataset(file, schema, v_columns)
}

/// Same as [`load_dataset`] over any reader.
pub fn read_dataset<R: Read>(reader: R, schema: &Schema, v_columns: &[String]) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found")))
    };
    let y_col = find(&schema.y)?;
    let a_col = find(&schema.a)?;
    let x_names: Vec<String> = match &schema.x {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != y_col && j != a_col)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let x_cols = x_names.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let v_indices = v_columns
        .iter()
        .map(|c| {
            x_names
                .iter()
                .position(|x| x == c)
                .ok_or_else(|| Error::Schema(format!("prediction column `{c}` is not a covariate")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut y = Vec::new();
    let mut a = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let field = |j: usize| rec.get(j).map(str::trim).unwrap_or("");
        y.push(parse_binary(field(y_col), row, &schema.y)?);
        a.push(parse_binary(field(a_col), row, &schema.a)?);
        for (&j, name) in x_cols.iter().zip(&x_names) {
            let tok = field(j);
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                row,
                message: format!("column `{name}`: `{tok}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    message: format!("column `{name}`: non-finite value"),
                });
            }
            values.push(v);
        }
    }
    let n = y.len();
    let x = DMatrix::from_row_slice(n, x_names.len(), &values);
    Dataset::new(y, a, x, x_names, v_indices)
}

fn parse_binary(tok: &str, row: usize, name: &str) -> Result<u8> {
    match tok {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(Error::Parse {
            row,
            message: format!("column `{name}`: `{tok}` is not 0 or 1"),
        }),
    }
}

/// Fold labels for cross-fitting, stored 0-based (`0..k`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    labels: Vec<usize>,
    k: usize,
    seed: u64,
}

/// Full reassignments attempted before falling back to a shuffled balanced
/// assignment.
const MAX_FOLD_DRAWS: usize = 1000;

impl FoldAssignment {
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn fold_of(&self, row: usize) -> usize {
        self.labels[row]
    }

    /// Rows in fold `b`.
    pub fn members(&self, b: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == b).collect()
    }

    /// Rows outside fold `b`, i.e. the training rows for fold `b`.
    pub fn complement(&self, b: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] != b).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &b in &self.labels {
            sizes[b] += 1;
        }
        sizes
    }
}

/// Assigns each of `n` rows an i.i.d. uniform fold label in `0..k`.
///
/// The whole assignment is redrawn while any fold is empty. After
/// `MAX_FOLD_DRAWS` failures (only plausible when `k` is close to `n`) a
/// shuffled round-robin assignment is used instead.
pub fn split_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 1 || k > n {
        return Err(Error::Argument(format!(
            "fold count must satisfy 1 <= K <= n, got K={k}, n={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = vec![0usize; n];
    for _ in 0..MAX_FOLD_DRAWS {
        let mut counts = vec![0usize; k];
        for l in labels.iter_mut() {
            *l = rng.gen_range(0..k);
            counts[*l] += 1;
        }
        if counts.iter().all(|&c| c > 0) {
            return Ok(FoldAssignment { labels, k, seed });
        }
    }
    for (i, l) in labels.iter_mut().enumerate() {
        *l = i % k;
    }
    rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), &mut rng);
    Ok(FoldAssignment { labels, k, seed })
}
