//! Preparation of the public two-year recidivism file
//! (`compas-scores-two-years.csv`) for `fit`.
//!
//! Rows are filtered as in the original analysis of that file (screening
//! within 30 days of arrest, known recidivism status, no ordinary traffic
//! offences, a valid score) and restricted to Black, White and Hispanic
//! defendants. The intervention `a` is pretrial detention: 0 when the
//! defendant left jail within three days of entering, 1 otherwise. The
//! outcome `y` is two-year recidivism.

use std::path::Path;

use chrono::NaiveDateTime;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;
use crate::output::{fmt_f64, write_atomic};
use crate::table::Table;

pub const COLUMNS: [&str; 8] = [
    "y",
    "a",
    "age",
    "sex_male",
    "priors_count",
    "charge_felony",
    "race_black",
    "race_hispanic",
];

/// Columns rescaled to zero mean and unit variance.
const STANDARDIZED: [usize; 2] = [2, 4];

const RELEASE_DAYS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CompasRow {
    pub values: [f64; 8],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompasSummary {
    pub raw_rows: usize,
    pub kept_rows: usize,
    pub train_rows: Option<usize>,
}

fn parse_time(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").ok()
}

/// Applies the filters and encodes one row, or `None` when it is excluded.
fn encode(row: &[String], idx: &Indices) -> Result<Option<CompasRow>, CliError> {
    let get = |j: usize| row.get(j).map(String::as_str).unwrap_or("");
    let num = |j: usize, name: &str| -> Result<f64, CliError> {
        get(j)
            .parse::<f64>()
            .map_err(|_| CliError::Data(format!("column `{name}`: `{}` is not a number", get(j))))
    };
    let race = get(idx.race);
    let (black, hispanic) = match race {
        "African-American" | "Black" => (1.0, 0.0),
        "Caucasian" | "White" => (0.0, 0.0),
        "Hispanic" => (0.0, 1.0),
        _ => return Ok(None),
    };
    if let Some(j) = idx.days_b_screening {
        match get(j).parse::<f64>() {
            Ok(d) if (-30.0..=30.0).contains(&d) => {}
            _ => return Ok(None),
        }
    }
    if let Some(j) = idx.is_recid {
        if get(j) == "-1" {
            return Ok(None);
        }
    }
    let degree = get(idx.charge_degree);
    if degree == "O" {
        return Ok(None);
    }
    if let Some(j) = idx.score_text {
        if get(j) == "N/A" || get(j).is_empty() {
            return Ok(None);
        }
    }
    let (Some(t_in), Some(t_out)) = (parse_time(get(idx.jail_in)), parse_time(get(idx.jail_out))) else {
        return Ok(None);
    };
    let days = (t_out - t_in).num_seconds() as f64 / 86_400.0;
    let a = if days <= RELEASE_DAYS { 0.0 } else { 1.0 };
    let y = match get(idx.two_year_recid) {
        "0" => 0.0,
        "1" => 1.0,
        other => return Err(CliError::Data(format!("two_year_recid `{other}` is not 0 or 1"))),
    };
    let sex_male = match get(idx.sex) {
        "Male" => 1.0,
        "Female" => 0.0,
        other => return Err(CliError::Data(format!("unrecognized sex `{other}`"))),
    };
    Ok(Some(CompasRow {
        values: [
            y,
            a,
            num(idx.age, "age")?,
            sex_male,
            num(idx.priors, "priors_count")?,
            if degree == "F" { 1.0 } else { 0.0 },
            black,
            hispanic,
        ],
    }))
}

struct Indices {
    race: usize,
    sex: usize,
    age: usize,
    priors: usize,
    charge_degree: usize,
    jail_in: usize,
    jail_out: usize,
    two_year_recid: usize,
    days_b_screening: Option<usize>,
    is_recid: Option<usize>,
    score_text: Option<usize>,
}

impl Indices {
    fn new(t: &Table) -> Result<Self, CliError> {
        let opt = |n: &str| t.headers.iter().position(|h| h == n);
        Ok(Self {
            race: t.column_index("race")?,
            sex: t.column_index("sex")?,
            age: t.column_index("age")?,
            priors: t.column_index("priors_count")?,
            charge_degree: t.column_index("c_charge_degree")?,
            jail_in: t.column_index("c_jail_in")?,
            jail_out: t.column_index("c_jail_out")?,
            two_year_recid: t.column_index("two_year_recid")?,
            days_b_screening: opt("days_b_screening_arrest"),
            is_recid: opt("is_recid"),
            score_text: opt("score_text"),
        })
    }
}

/// Filtered, encoded rows in file order (continuous columns not yet rescaled).
pub fn encode_table(table: &Table) -> Result<Vec<CompasRow>, CliError> {
    let idx = Indices::new(table)?;
    let mut out = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        if let Some(r) = encode(row, &idx).map_err(|e| CliError::Data(format!("row {}: {e}", i + 1)))? {
            out.push(r);
        }
    }
    Ok(out)
}

/// Rescales the continuous columns with moments taken from `reference`.
pub fn standardize(rows: &mut [CompasRow], reference: &[usize]) {
    for &c in &STANDARDIZED {
        let n = reference.len() as f64;
        let mean = reference.iter().map(|&i| rows[i].values[c]).sum::<f64>() / n;
        let var = reference.iter().map(|&i| (rows[i].values[c] - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for r in rows.iter_mut() {
            r.values[c] = (r.values[c] - mean) / sd;
        }
    }
}

fn write_rows(path: &Path, rows: &[CompasRow], which: &[usize]) -> Result<(), CliError> {
    write_atomic(path, |w| {
        let mut c = csv::Writer::from_writer(w);
        let err = |e: csv::Error| CliError::Output(format!("{}: {e}", path.display()));
        c.write_record(COLUMNS).map_err(err)?;
        for &i in which {
            let v = &rows[i].values;
            let rec: Vec<String> = v
                .iter()
                .enumerate()
                .map(|(j, x)| if STANDARDIZED.contains(&j) { fmt_f64(*x) } else { format!("{}", *x as i64) })
                .collect();
            c.write_record(rec).map_err(err)?;
        }
        c.flush().map_err(|e| CliError::Output(e.to_string()))
    })
}

/// Writes `compas.csv` and, when `train_size` is given, a seeded random
/// split into `train.csv` and `test.csv`. Moments for rescaling come from
/// the training rows when splitting.
pub fn cmd_preprocess_compas(raw: &Path, out_dir: &Path, train_size: Option<usize>, seed: u64) -> Result<CompasSummary, CliError> {
    let table = Table::read(raw)?;
    let mut rows = encode_table(&table)?;
    if rows.is_empty() {
        return Err(CliError::Data("no rows survive the filters".into()));
    }
    let all: Vec<usize> = (0..rows.len()).collect();
    let split = match train_size {
        Some(t) if t == 0 || t >= rows.len() => {
            return Err(CliError::Config(format!(
                "training size must lie strictly between 0 and {}",
                rows.len()
            )))
        }
        Some(t) => {
            let mut perm = all.clone();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut train = perm[..t].to_vec();
            let mut test = perm[t..].to_vec();
            train.sort_unstable();
            test.sort_unstable();
            Some((train, test))
        }
        None => None,
    };
    standardize(&mut rows, split.as_ref().map_or(&all, |(train, _)| train));
    write_rows(&out_dir.join("compas.csv"), &rows, &all)?;
    if let Some((train, test)) = &split {
        write_rows(&out_dir.join("train.csv"), &rows, train)?;
        write_rows(&out_dir.join("test.csv"), &rows, test)?;
    }
    Ok(CompasSummary {
        raw_rows: table.rows.len(),
        kept_rows: rows.len(),
        train_rows: split.map(|(t, _)| t.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[&str]) -> Table {
        let headers = "race,sex,age,priors_count,c_charge_degree,c_jail_in,c_jail_out,two_year_recid,days_b_screening_arrest,is_recid,score_text";
        Table {
            headers: headers.split(',').map(String::from).collect(),
            rows: rows.iter().map(|r| r.split(',').map(String::from).collect()).collect(),
        }
    }

    #[test]
    fn release_rule_and_filters() {
        let t = table(&[
            "African-American,Male,30,2,F,2013-01-01 10:00:00,2013-01-04 09:00:00,1,0,1,Low",
            "Caucasian,Female,45,0,M,2013-01-01 10:00:00,2013-01-05 10:00:00,0,-1,0,High",
            "Hispanic,Male,22,5,M,2013-01-01 10:00:00,2013-01-04 10:00:00,0,1,0,Medium",
            "Asian,Male,22,5,M,2013-01-01 10:00:00,2013-01-02 10:00:00,0,1,0,Medium",
            "Caucasian,Male,22,5,O,2013-01-01 10:00:00,2013-01-02 10:00:00,0,1,0,Medium",
            "Caucasian,Male,22,5,M,2013-01-01 10:00:00,2013-01-02 10:00:00,0,45,0,Medium",
            "Caucasian,Male,22,5,M,2013-01-01 10:00:00,2013-01-02 10:00:00,0,1,-1,Medium",
            "Caucasian,Male,22,5,M,,,0,1,0,Medium",
        ]);
        let rows = encode_table(&t).unwrap();
        assert_eq!(rows.len(), 3);
        // just under three days: released
        assert_eq!(rows[0].values, [1.0, 0.0, 30.0, 1.0, 2.0, 1.0, 1.0, 0.0]);
        // four days: detained
        assert_eq!(rows[1].values, [0.0, 1.0, 45.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        // exactly three days counts as released
        assert_eq!(rows[2].values[1], 0.0);
        assert_eq!(rows[2].values[7], 1.0);
    }

    #[test]
    fn standardization_uses_reference_rows() {
        let mut rows = vec![
            CompasRow { values: [0.0, 0.0, 20.0, 0.0, 0.0, 0.0, 0.0, 0.0] },
            CompasRow { values: [0.0, 0.0, 40.0, 0.0, 2.0, 0.0, 0.0, 0.0] },
            CompasRow { values: [0.0, 0.0, 60.0, 0.0, 4.0, 0.0, 0.0, 0.0] },
        ];
        standardize(&mut rows, &[0, 1]);
        assert_eq!(rows[0].values[2], -1.0);
        assert_eq!(rows[1].values[2], 1.0);
        assert_eq!(rows[2].values[2], 3.0);
        assert_eq!(rows[2].values[4], 3.0);
    }
}
