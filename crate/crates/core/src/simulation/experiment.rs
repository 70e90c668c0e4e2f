//! Replicated estimation on simulated data, compared against the oracle.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{generate_dgp, DgpConfig};
use super::oracle::{basis_for, oracle_beta_star, Oracle};
use crate::error::{Error, Result};
use crate::optimizer::mix_seed;
use crate::pipeline::{estimate_with_nuisance, fit_nuisance_stage, scores, EstimationOptions, Method};

/// Covariates handed to the outcome regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XMode {
    Correct,
    Distorted,
}

impl XMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            XMode::Correct => "correct",
            XMode::Distorted => "distorted",
        }
    }
}

fn all_methods() -> Vec<Method> {
    vec![Method::PlugIn, Method::DoublyRobust]
}

fn all_modes() -> Vec<XMode> {
    vec![XMode::Correct, XMode::Distorted]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sizes: Vec<usize>,
    pub reps: usize,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "all_modes")]
    pub x_modes: Vec<XMode>,
    #[serde(default)]
    pub seed: u64,
    /// Held-out sample size; defaults to the training size.
    #[serde(default)]
    pub test_size: Option<usize>,
    /// Covariate draws used for the reference solution.
    #[serde(default = "default_oracle_n")]
    pub oracle_n: usize,
    #[serde(default)]
    pub oracle_seed: u64,
    /// Estimation settings; `method` and `seed` are overridden per run.
    #[serde(default)]
    pub estimation: EstimationOptions,
}

fn default_oracle_n() -> usize {
    1_000_000
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::Argument("experiment needs at least one sample size".into()));
        }
        if self.sizes.iter().any(|&n| n < 2 * self.estimation.folds.max(1)) {
            return Err(Error::Argument("sample sizes must leave every fold non-empty".into()));
        }
        if self.reps == 0 {
            return Err(Error::Argument("experiment needs at least one replication".into()));
        }
        if self.methods.is_empty() || self.x_modes.is_empty() {
            return Err(Error::Argument("experiment needs at least one method and covariate mode".into()));
        }
        if self.test_size == Some(0) {
            return Err(Error::Argument("held-out sample size must be positive".into()));
        }
        if self.oracle_n == 0 {
            return Err(Error::Argument("oracle sample size must be positive".into()));
        }
        self.estimation.solver.validate()
    }

    /// Reference solution for this experiment's basis and constraints.
    pub fn oracle(&self) -> Result<Oracle> {
        let k = self.estimation.basis.k_prime(super::dgp::D_X);
        let program = self.estimation.constraints.program(k)?;
        oracle_beta_star(
            &self.estimation.basis,
            &program,
            self.oracle_n,
            self.oracle_seed,
            self.estimation.target_a,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub method: Method,
    pub x_mode: XMode,
    pub n: usize,
    pub rep: usize,
    /// `|beta_hat - beta_star|_2`.
    pub beta_err: f64,
    /// `|v_hat - v_star|`.
    pub value_err: f64,
    /// Held-out misclassification rate against the potential outcome.
    pub class_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub method: Option<Method>,
    pub x_mode: XMode,
    pub n: usize,
    pub rep: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub x_mode: XMode,
    pub n: usize,
    pub count: usize,
    pub mean_beta_err: f64,
    pub se_beta_err: f64,
    pub mean_value_err: f64,
    pub se_value_err: f64,
    pub mean_class_err: f64,
    pub se_class_err: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub records: Vec<ReplicationRecord>,
    pub failures: Vec<FailureRecord>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl ExperimentResult {
    /// Mean and standard error per (method, x_mode, n), sorted by key.
    pub fn summaries(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(Method, XMode, usize)> = self.records.iter().map(|r| (r.method, r.x_mode, r.n)).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|(method, x_mode, n)| {
                let group: Vec<&ReplicationRecord> = self
                    .records
                    .iter()
                    .filter(|r| r.method == method && r.x_mode == x_mode && r.n == n)
                    .collect();
                let col = |f: fn(&ReplicationRecord) -> f64| mean_se(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
                let (mean_beta_err, se_beta_err) = col(|r| r.beta_err);
                let (mean_value_err, se_value_err) = col(|r| r.value_err);
                let (mean_class_err, se_class_err) = col(|r| r.class_err);
                SummaryRow {
                    method,
                    x_mode,
                    n,
                    count: group.len(),
                    mean_beta_err,
                    se_beta_err,
                    mean_value_err,
                    se_value_err,
                    mean_class_err,
                    se_class_err,
                }
            })
            .collect()
    }

    /// Summary row for one cell, if any replication succeeded there.
    pub fn summary(&self, method: Method, x_mode: XMode, n: usize) -> Option<SummaryRow> {
        self.summaries()
            .into_iter()
            .find(|s| s.method == method && s.x_mode == x_mode && s.n == n)
    }

    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "method",
            "x_mode",
            "n",
            "mean_beta_err",
            "se_beta_err",
            "mean_value_err",
            "se_value_err",
            "mean_class_err",
            "se_class_err",
        ])?;
        for s in self.summaries() {
            w.write_record([
                s.method.as_str().to_string(),
                s.x_mode.as_str().to_string(),
                s.n.to_string(),
                format!("{:?}", s.mean_beta_err),
                format!("{:?}", s.se_beta_err),
                format!("{:?}", s.mean_value_err),
                format!("{:?}", s.se_value_err),
                format!("{:?}", s.mean_class_err),
                format!("{:?}", s.se_class_err),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_records_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "x_mode", "n", "rep", "beta_err", "value_err", "class_err"])?;
        for r in &self.records {
            w.write_record([
                r.method.as_str().to_string(),
                r.x_mode.as_str().to_string(),
                r.n.to_string(),
                r.rep.to_string(),
                format!("{:?}", r.beta_err),
                format!("{:?}", r.value_err),
                format!("{:?}", r.class_err),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_failures_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "x_mode", "n", "rep", "message"])?;
        for f in &self.failures {
            w.write_record([
                f.method.map_or("", |m| m.as_str()).to_string(),
                f.x_mode.as_str().to_string(),
                f.n.to_string(),
                f.rep.to_string(),
                f.message.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Seed of replication `rep` at size `n`.
pub fn replication_seed(seed: u64, n: usize, rep: usize) -> u64 {
    mix_seed(mix_seed(seed, n as u64), rep as u64)
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Argument("slope needs at least two paired points".into()));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Argument("log-log slope needs positive finite values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

fn run_cell(config: &ExperimentConfig, oracle: &Oracle, n: usize, rep: usize) -> Result<ExperimentResult> {
    let rseed = replication_seed(config.seed, n, rep);
    let target_a = config.estimation.target_a;
    let need_distorted = config.x_modes.contains(&XMode::Distorted);
    let sim = generate_dgp(&DgpConfig {
        n,
        seed: rseed,
        target_a,
        distort_outcome_covariates: need_distorted,
    })?;
    let test = generate_dgp(&DgpConfig {
        n: config.test_size.unwrap_or(n),
        seed: mix_seed(rseed, 2),
        target_a,
        distort_outcome_covariates: false,
    })?;
    let test_basis = basis_for(&config.estimation.basis, test.dataset.x());
    let test_labels = test.potential_outcome(target_a);

    let mut opts = config.estimation.clone();
    opts.seed = mix_seed(rseed, 1);
    opts.solver.seed = mix_seed(rseed, 3);

    let mut out = ExperimentResult::default();
    for &x_mode in &config.x_modes {
        let covs = match x_mode {
            XMode::Correct => None,
            XMode::Distorted => sim.outcome_covariates.as_ref(),
        };
        let (folds, nuisance) = match fit_nuisance_stage(&sim.dataset, covs, &opts) {
            Ok(v) => v,
            Err(e) => {
                out.failures.push(FailureRecord {
                    method: None,
                    x_mode,
                    n,
                    rep,
                    message: e.to_string(),
                });
                continue;
            }
        };
        for &method in &config.methods {
            let est = match estimate_with_nuisance(&sim.dataset, folds.clone(), nuisance.clone(), method, &opts) {
                Ok(e) if e.solution.converged() => e,
                Ok(e) => {
                    out.failures.push(FailureRecord {
                        method: Some(method),
                        x_mode,
                        n,
                        rep,
                        message: format!("solver stopped with KKT residual {:.3e}", e.solution.kkt_residual),
                    });
                    continue;
                }
                Err(e) => {
                    out.failures.push(FailureRecord {
                        method: Some(method),
                        x_mode,
                        n,
                        rep,
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            let beta = &est.solution.beta_hat;
            if beta.len() != oracle.beta_star.len() {
                return Err(Error::Dimension {
                    expected: oracle.beta_star.len(),
                    found: beta.len(),
                });
            }
            let predicted = scores(&test_basis, beta);
            let wrong = predicted
                .iter()
                .zip(test_labels)
                .filter(|&(&s, &l)| u8::from(s > 0.5) != l)
                .count();
            out.records.push(ReplicationRecord {
                method,
                x_mode,
                n,
                rep,
                beta_err: (beta - &oracle.beta_star).norm(),
                value_err: (est.solution.value - oracle.v_star).abs(),
                class_err: wrong as f64 / predicted.len() as f64,
            });
        }
    }
    Ok(out)
}

/// Runs every (size, replication) cell in parallel; results are merged in
/// (size, replication, x_mode, method) order regardless of scheduling.
pub fn run_dr_experiment(config: &ExperimentConfig, oracle: &Oracle) -> Result<ExperimentResult> {
    config.validate()?;
    let cells: Vec<(usize, usize)> = config
        .sizes
        .iter()
        .flat_map(|&n| (0..config.reps).map(move |rep| (n, rep)))
        .collect();
    let parts: Vec<Result<ExperimentResult>> = cells
        .par_iter()
        .map(|&(n, rep)| run_cell(config, oracle, n, rep))
        .collect();
    let mut result = ExperimentResult::default();
    for part in parts {
        let part = part?;
        result.records.extend(part.records);
        result.failures.extend(part.failures);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((loglog_slope(&x, &y).unwrap() + 0.5).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(loglog_slope(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_sizes_rejected() {
        let cfg = ExperimentConfig {
            sizes: vec![],
            reps: 1,
            methods: all_methods(),
            x_modes: all_modes(),
            seed: 0,
            test_size: None,
            oracle_n: 10,
            oracle_seed: 0,
            estimation: EstimationOptions::default(),
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn smoke_run_two_records() {
        let mut estimation = EstimationOptions::default();
        estimation.solver.starts = 2;
        let cfg = ExperimentConfig {
            sizes: vec![1000],
            reps: 1,
            methods: all_methods(),
            x_modes: vec![XMode::Correct],
            seed: 4,
            test_size: None,
            oracle_n: 50_000,
            oracle_seed: 9,
            estimation,
        };
        let oracle = cfg.oracle().unwrap();
        let res = run_dr_experiment(&cfg, &oracle).unwrap();
        assert_eq!(res.records.len() + res.failures.len(), 2);
        assert_eq!(res.records.len(), 2, "{:?}", res.failures);
        for r in &res.records {
            assert!(r.beta_err.is_finite() && r.beta_err >= 0.0);
            assert!(r.value_err.is_finite() && r.value_err >= 0.0);
            assert!((0.0..=1.0).contains(&r.class_err));
        }
        let again = run_dr_experiment(&cfg, &oracle).unwrap();
        assert_eq!(res, again);
        let mut buf = Vec::new();
        res.write_summary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,x_mode,n,mean_beta_err,se_beta_err,"));
        assert_eq!(text.lines().count(), 3);
    }
}
