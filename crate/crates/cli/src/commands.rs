use std::io::Write;
use std::path::{Path, PathBuf};

use cfclass_core::data::load_dataset;
use cfclass_core::learners::cross_entropy;
use cfclass_core::metrics::{accuracy, roc_auc, roc_curve};
use cfclass_core::simulation::{run_dr_experiment, ExperimentResult};
use cfclass_core::{estimate, Estimate};
use serde::Serialize;

use crate::artifact::{FitMetadata, ModelArtifact, Multiplier, FORMAT_VERSION};
use crate::config::{load_experiment, RunConfig};
use crate::error::CliError;
use crate::output::{fmt_f64, sibling, write_atomic, write_json};
use crate::table::{read_headers, Table};

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Output(format!("{}: {e}", path.display()))
}

fn write_scores(path: &Path, scores: &[f64]) -> Result<(), CliError> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["score"]).map_err(csv_err(path))?;
        for &s in scores {
            out.write_record([fmt_f64(s)]).map_err(csv_err(path))?;
        }
        out.flush().map_err(|e| CliError::Output(e.to_string()))
    })
}

/// What `fit` produced.
#[derive(Debug)]
pub struct FitOutput {
    pub artifact: ModelArtifact,
    pub estimate: Estimate,
    pub artifact_path: PathBuf,
    pub inference_path: Option<PathBuf>,
    pub scores_path: PathBuf,
}

impl FitOutput {
    pub fn summary(&self) -> String {
        let s = &self.estimate.solution;
        let mut text = format!(
            "method {}  n {}  basis columns {}\nrisk value {:.6}  KKT residual {:.3e}  max violation {:.3e}  status {:?}\n",
            self.artifact.method.as_str(),
            self.artifact.fit.n,
            self.artifact.beta_hat.len(),
            s.value,
            s.kkt_residual,
            s.max_violation,
            s.status
        );
        let active: Vec<String> = s.active_ids().iter().map(|id| id.to_string()).collect();
        text.push_str(&format!(
            "active constraints: {}\n",
            if active.is_empty() { "none".into() } else { active.join(", ") }
        ));
        match &self.estimate.inference {
            Some(r) => {
                text.push_str(&format!("{:.0}% confidence intervals:\n", 100.0 * r.level));
                for (name, (b, ci)) in self.artifact.basis_columns.iter().zip(s.beta_hat.iter().zip(&r.intervals)) {
                    text.push_str(&format!("  {name:<16} {b:>10.5}  [{:>10.5}, {:>10.5}]\n", ci.lower, ci.upper));
                }
                for w in &r.diagnostics.warnings {
                    text.push_str(&format!("warning: {w}\n"));
                }
            }
            None => text.push_str(&format!(
                "no intervals: {}\n",
                self.estimate.inference_error.as_deref().unwrap_or("unavailable")
            )),
        }
        text
    }
}

fn covariate_names(data: &Path, cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    match &cfg.schema.x {
        Some(x) => Ok(x.clone()),
        None => Ok(read_headers(data)?
            .into_iter()
            .filter(|h| *h != cfg.schema.y && *h != cfg.schema.a)
            .collect()),
    }
}

/// Fits a model. Outputs are written even when the solver stops short of
/// the tolerance; that case is then reported as an error.
pub fn cmd_fit(config: &Path, data: &Path, out: &Path) -> Result<FitOutput, CliError> {
    let cfg = RunConfig::load(config)?;
    let v_columns = match &cfg.v_columns {
        Some(v) => v.clone(),
        None => covariate_names(data, &cfg)?,
    };
    let dataset = load_dataset(data, &cfg.schema, &v_columns).map_err(|e| CliError::Data(e.to_string()))?;
    if cfg.folds < 2 || cfg.folds > dataset.n() {
        return Err(CliError::DegenerateFolds(format!(
            "cross-fitting needs 2 <= K <= n, got K = {} with n = {}",
            cfg.folds,
            dataset.n()
        )));
    }
    let options = cfg.estimation_options();
    let est = estimate(&dataset, None, &options).map_err(CliError::from_core)?;
    let sol = &est.solution;

    let inference_path = est.inference.as_ref().map(|_| sibling(out, ".inference.json"));
    let artifact = ModelArtifact {
        format_version: FORMAT_VERSION,
        method: cfg.method,
        target_a: cfg.target_a,
        basis_columns: cfg.basis.column_names(&v_columns),
        v_columns,
        basis: cfg.basis.clone(),
        beta_hat: sol.beta_hat.as_slice().to_vec(),
        fit: FitMetadata {
            n: dataset.n(),
            folds: cfg.folds,
            seed: cfg.seed,
            epsilon: cfg.epsilon,
            propensity: cfg.propensity.clone(),
            outcome: cfg.outcome.clone(),
            constraints: cfg.constraints.clone(),
            solver: cfg.solver.clone(),
            status: sol.status,
            risk_value: sol.value,
            kkt_residual: sol.kkt_residual,
            max_violation: sol.max_violation,
            active_constraints: sol
                .active_set
                .iter()
                .map(|&j| Multiplier {
                    constraint: sol.constraint_ids[j],
                    gamma: sol.gamma_hat[j],
                })
                .collect(),
            inference_error: est.inference_error.clone(),
        },
        inference_report: inference_path
            .as_ref()
            .and_then(|p| p.file_name())
            .map(|f| f.to_string_lossy().into_owned()),
    };
    write_json(out, &artifact)?;
    if let (Some(path), Some(report)) = (&inference_path, &est.inference) {
        write_json(path, report)?;
    }
    let scores_path = sibling(out, ".scores.csv");
    write_scores(&scores_path, &est.training_scores())?;

    let output = FitOutput {
        artifact,
        estimate: est,
        artifact_path: out.to_path_buf(),
        inference_path,
        scores_path,
    };
    if !output.estimate.solution.converged() {
        return Err(CliError::NonConverged(format!(
            "KKT residual {:.3e} above tolerance {:.1e}; outputs were written to {}",
            output.estimate.solution.kkt_residual,
            cfg.solver.kkt_tol,
            out.display()
        )));
    }
    Ok(output)
}

/// Writes one score per input row.
pub fn cmd_predict(model: &Path, data: &Path, out: &Path) -> Result<usize, CliError> {
    let art = ModelArtifact::load(model)?;
    let table = Table::read(data)?;
    let v = table.numeric_columns(&art.v_columns)?;
    let scores = art.scores(&v);
    write_scores(out, &scores)?;
    Ok(scores.len())
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    pub label_column: String,
    pub threshold: f64,
    /// Keep only rows whose `column` equals `value`.
    pub restrict: Option<(String, u8)>,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            label_column: "y".into(),
            threshold: 0.5,
            restrict: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub n: usize,
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub cross_entropy: f64,
}

/// Metrics to `out`, ROC points to `<out>.roc.csv`.
pub fn cmd_evaluate(model: &Path, data: &Path, out: &Path, opts: &EvaluateOptions) -> Result<Evaluation, CliError> {
    let art = ModelArtifact::load(model)?;
    let table = Table::read(data)?;
    let mut labels = table.binary_column(&opts.label_column)?;
    let mut scores = art.scores(&table.numeric_columns(&art.v_columns)?);
    if let Some((col, value)) = &opts.restrict {
        let keep = table.binary_column(col)?;
        let mask: Vec<bool> = keep.iter().map(|k| k == value).collect();
        labels = labels.iter().zip(&mask).filter(|(_, &m)| m).map(|(&l, _)| l).collect();
        scores = scores.iter().zip(&mask).filter(|(_, &m)| m).map(|(&s, _)| s).collect();
    }
    if labels.is_empty() {
        return Err(CliError::Data("no rows to evaluate".into()));
    }
    let auc = roc_auc(&scores, &labels).ok();
    let eval = Evaluation {
        n: labels.len(),
        auc,
        accuracy: accuracy(&scores, &labels, opts.threshold).map_err(|e| CliError::Data(e.to_string()))?,
        cross_entropy: cross_entropy(&scores, &labels),
    };
    write_atomic(out, |w| {
        let mut c = csv::Writer::from_writer(w);
        let e = csv_err(out);
        c.write_record(["metric", "value"]).map_err(&e)?;
        c.write_record(["n".to_string(), eval.n.to_string()]).map_err(&e)?;
        c.write_record(["auc".to_string(), eval.auc.map_or("unavailable".into(), fmt_f64)])
            .map_err(&e)?;
        c.write_record(["accuracy".to_string(), fmt_f64(eval.accuracy)]).map_err(&e)?;
        c.write_record(["threshold".to_string(), fmt_f64(opts.threshold)]).map_err(&e)?;
        c.write_record(["cross_entropy".to_string(), fmt_f64(eval.cross_entropy)])
            .map_err(&e)?;
        c.flush().map_err(|e| CliError::Output(e.to_string()))
    })?;
    let roc_path = sibling(out, ".roc.csv");
    write_atomic(&roc_path, |w| {
        let mut c = csv::Writer::from_writer(w);
        let e = csv_err(&roc_path);
        c.write_record(["threshold", "fpr", "tpr"]).map_err(&e)?;
        if let Ok(points) = roc_curve(&scores, &labels) {
            for p in points {
                c.write_record([fmt_f64(p.threshold), fmt_f64(p.fpr), fmt_f64(p.tpr)]).map_err(&e)?;
            }
        }
        c.flush().map_err(|e| CliError::Output(e.to_string()))
    })?;
    Ok(eval)
}

/// Runs the configured experiment; writes `summary.csv`, `records.csv`,
/// `failures.csv` and `oracle.json` into `out_dir`.
pub fn cmd_simulate(config: &Path, out_dir: &Path) -> Result<ExperimentResult, CliError> {
    let cfg = load_experiment(config)?;
    let oracle = cfg.oracle().map_err(CliError::from_core)?;
    let result = run_dr_experiment(&cfg, &oracle).map_err(CliError::from_core)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Output(format!("{}: {e}", out_dir.display())))?;
    let csv_out = |name: &str, f: &dyn Fn(&mut dyn Write) -> cfclass_core::Result<()>| {
        let path = out_dir.join(name);
        write_atomic(&path, |w| f(w).map_err(|e| CliError::Output(format!("{}: {e}", path.display()))))
    };
    csv_out("summary.csv", &|w| result.write_summary_csv(w))?;
    csv_out("records.csv", &|w| result.write_records_csv(w))?;
    csv_out("failures.csv", &|w| result.write_failures_csv(w))?;

    #[derive(Serialize)]
    struct OracleFile<'a> {
        beta_star: &'a [f64],
        v_star: f64,
        kkt_residual: f64,
        info: &'a cfclass_core::simulation::oracle::OracleInfo,
    }
    write_json(
        &out_dir.join("oracle.json"),
        &OracleFile {
            beta_star: oracle.beta_star.as_slice(),
            v_star: oracle.v_star,
            kkt_residual: oracle.solution.kkt_residual,
            info: &oracle.info,
        },
    )?;
    Ok(result)
}
