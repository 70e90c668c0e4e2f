//! Cross-fitted propensity scores and per-arm outcome regressions.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::learners::{self, FittedLearner, LearnerSpec};

/// Default propensity clamp.
pub const DEFAULT_EPSILON: f64 = 0.01;

/// Learners fitted on the complement of one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldModels {
    /// Models `P(A = 1 | X)`.
    pub propensity: FittedLearner,
    /// `E[Y | X, A = 0]` and `E[Y | X, A = 1]`.
    pub outcome: [FittedLearner; 2],
}

/// Out-of-fold nuisance predictions for every row of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceFit {
    epsilon: f64,
    target_a: u8,
    folds: Option<FoldAssignment>,
    models: Vec<FoldModels>,
    /// Unclamped out-of-fold `P(A = 1 | X)`.
    pi1_raw: Vec<f64>,
    mu: [Vec<f64>; 2],
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 0.5 {
        Ok(())
    } else {
        Err(Error::Argument(format!("clamp level must lie in (0, 0.5), got {epsilon}")))
    }
}

fn check_arm(a: u8) -> Result<()> {
    if a <= 1 {
        Ok(())
    } else {
        Err(Error::Argument(format!("intervention level must be 0 or 1, got {a}")))
    }
}

/// Fits the nuisance functions by cross-fitting: for each fold `b` the
/// propensity model and both outcome regressions are trained on the rows
/// outside `b` and evaluated on the rows inside it.
///
/// `outcome_covariates`, when given, replaces `x` as the feature matrix of
/// the outcome regressions (training and prediction); the propensity model
/// always uses `x`.
pub fn fit_nuisances(
    data: &Dataset,
    folds: &FoldAssignment,
    prop_spec: &LearnerSpec,
    out_spec: &LearnerSpec,
    epsilon: f64,
    target_a: u8,
    outcome_covariates: Option<&DMatrix<f64>>,
) -> Result<NuisanceFit> {
    check_epsilon(epsilon)?;
    check_arm(target_a)?;
    prop_spec.validate()?;
    out_spec.validate()?;
    if folds.n() != data.n() {
        return Err(Error::Argument(format!(
            "fold assignment covers {} rows, dataset has {}",
            folds.n(),
            data.n()
        )));
    }
    if folds.k() < 2 {
        return Err(Error::Argument(
            "cross-fitting needs K >= 2: with one fold the training complement is empty".into(),
        ));
    }
    let out_x = outcome_covariates.unwrap_or(data.x());
    if out_x.nrows() != data.n() {
        return Err(Error::Argument(format!(
            "outcome covariates have {} rows, dataset has {}",
            out_x.nrows(),
            data.n()
        )));
    }

    let models = (0..folds.k())
        .into_par_iter()
        .map(|b| fit_fold(data, folds, b, prop_spec, out_spec, out_x))
        .collect::<Result<Vec<_>>>()?;

    let n = data.n();
    let mut pi1_raw = vec![0.0; n];
    let mut mu = [vec![0.0; n], vec![0.0; n]];
    for (b, m) in models.iter().enumerate() {
        let rows = folds.members(b);
        let p = learners::predict(&m.propensity, &data.x().select_rows(&rows))?;
        let ox = out_x.select_rows(&rows);
        let m0 = learners::predict(&m.outcome[0], &ox)?;
        let m1 = learners::predict(&m.outcome[1], &ox)?;
        for (j, &i) in rows.iter().enumerate() {
            pi1_raw[i] = p[j];
            mu[0][i] = m0[j].clamp(0.0, 1.0);
            mu[1][i] = m1[j].clamp(0.0, 1.0);
        }
    }
    Ok(NuisanceFit {
        epsilon,
        target_a,
        folds: Some(folds.clone()),
        models,
        pi1_raw,
        mu,
    })
}

fn fit_fold(
    data: &Dataset,
    folds: &FoldAssignment,
    b: usize,
    prop_spec: &LearnerSpec,
    out_spec: &LearnerSpec,
    out_x: &DMatrix<f64>,
) -> Result<FoldModels> {
    let train = folds.complement(b);
    let degenerate = |reason: String| Error::DegenerateFold { fold: b + 1, reason };
    let arms: [Vec<usize>; 2] = [0u8, 1].map(|arm| {
        train
            .iter()
            .copied()
            .filter(|&i| data.a()[i] == arm)
            .collect()
    });
    for (arm, rows) in arms.iter().enumerate() {
        if rows.is_empty() {
            return Err(degenerate(format!("training complement has no rows with A={arm}")));
        }
    }
    let relabel = |e: Error, what: &str| match e {
        Error::Separation(msg) => degenerate(format!("{what}: {msg}")),
        Error::Argument(msg) => degenerate(format!("{what}: {msg}")),
        other => other,
    };

    let a_train: Vec<u8> = train.iter().map(|&i| data.a()[i]).collect();
    let propensity = learners::fit(prop_spec, &data.x().select_rows(&train), &a_train)
        .map_err(|e| relabel(e, "propensity"))?;
    let fit_arm = |arm: usize| -> Result<FittedLearner> {
        let rows = &arms[arm];
        let y: Vec<u8> = rows.iter().map(|&i| data.y()[i]).collect();
        learners::fit(out_spec, &out_x.select_rows(rows), &y)
            .map_err(|e| relabel(e, &format!("outcome regression for A={arm}")))
    };
    Ok(FoldModels {
        propensity,
        outcome: [fit_arm(0)?, fit_arm(1)?],
    })
}

impl NuisanceFit {
    /// Wraps externally supplied nuisance values, e.g. the true functions of
    /// a simulation. `pi1` is `P(A = 1 | X)` before clamping.
    pub fn from_oracle(pi1: Vec<f64>, mu0: Vec<f64>, mu1: Vec<f64>, target_a: u8, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        check_arm(target_a)?;
        let n = pi1.len();
        if mu0.len() != n || mu1.len() != n {
            return Err(Error::Argument("oracle nuisance vectors differ in length".into()));
        }
        if pi1.iter().chain(&mu0).chain(&mu1).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Argument("oracle nuisance values must lie in [0, 1]".into()));
        }
        Ok(Self {
            epsilon,
            target_a,
            folds: None,
            models: Vec::new(),
            pi1_raw: pi1,
            mu: [mu0, mu1],
        })
    }

    pub fn n(&self) -> usize {
        self.pi1_raw.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn target_a(&self) -> u8 {
        self.target_a
    }

    pub fn folds(&self) -> Option<&FoldAssignment> {
        self.folds.as_ref()
    }

    /// Per-fold models; empty for oracle fits.
    pub fn models(&self) -> &[FoldModels] {
        &self.models
    }

    fn check_row(&self, row: usize) -> Result<()> {
        if row < self.n() {
            Ok(())
        } else {
            Err(Error::Argument(format!("row {row} out of range for {} rows", self.n())))
        }
    }

    /// Out-of-fold `P(A = target_a | X)` clamped to `[epsilon, 1 - epsilon]`.
    pub fn predict_pi(&self, row: usize) -> Result<f64> {
        self.check_row(row)?;
        Ok(self.pi_unchecked(row))
    }

    fn pi_unchecked(&self, row: usize) -> f64 {
        let raw = if self.target_a == 1 {
            self.pi1_raw[row]
        } else {
            1.0 - self.pi1_raw[row]
        };
        raw.clamp(self.epsilon, 1.0 - self.epsilon)
    }

    /// Out-of-fold `E[Y | X, A = arm]`.
    pub fn predict_mu(&self, row: usize, arm: u8) -> Result<f64> {
        self.check_row(row)?;
        check_arm(arm)?;
        Ok(self.mu[arm as usize][row])
    }

    /// Clamped propensities of the target arm for all rows.
    pub fn pi_values(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.pi_unchecked(i)).collect()
    }

    /// Outcome-regression predictions for `arm` for all rows.
    pub fn mu_values(&self, arm: u8) -> &[f64] {
        &self.mu[usize::from(arm.min(1))]
    }

    /// Unclamped `P(A = 1 | X)` for all rows.
    pub fn raw_propensity(&self) -> &[f64] {
        &self.pi1_raw
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::split_folds;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let a = (0..n).map(|i| u8::from(rng.gen::<f64>() < 0.3 + 0.4 * (x[(i, 0)] > 0.0) as u8 as f64)).collect();
        let y = (0..n).map(|i| u8::from(rng.gen::<f64>() < 0.5 + 0.3 * x[(i, 1)])).collect();
        Dataset::new(y, a, x, vec!["x1".into(), "x2".into()], vec![0, 1]).unwrap()
    }

    fn spec() -> LearnerSpec {
        LearnerSpec::LogisticLinear { lambda: 1e-3 }
    }

    #[test]
    fn single_arm_is_degenerate() {
        let d = toy(40, 1);
        let d = Dataset::new(d.y().to_vec(), vec![1; 40], d.x().clone(), d.x_names().to_vec(), vec![0]).unwrap();
        let folds = split_folds(40, 2, 3).unwrap();
        let err = fit_nuisances(&d, &folds, &spec(), &spec(), 0.01, 1, None).unwrap_err();
        assert!(matches!(err, Error::DegenerateFold { .. }), "{err:?}");
    }

    #[test]
    fn one_fold_is_rejected() {
        let d = toy(40, 1);
        let folds = split_folds(40, 1, 3).unwrap();
        let err = fit_nuisances(&d, &folds, &spec(), &spec(), 0.01, 1, None).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn epsilon_range() {
        let d = toy(40, 1);
        let folds = split_folds(40, 2, 3).unwrap();
        for eps in [0.0, 0.5, -0.1] {
            assert!(matches!(
                fit_nuisances(&d, &folds, &spec(), &spec(), eps, 1, None),
                Err(Error::Argument(_))
            ));
        }
    }

    #[test]
    fn clamping_and_complement() {
        let fit = NuisanceFit::from_oracle(vec![0.001, 0.4, 0.999], vec![0.2; 3], vec![0.7; 3], 1, 0.01).unwrap();
        assert_eq!(fit.predict_pi(0).unwrap(), 0.01);
        assert_eq!(fit.predict_pi(1).unwrap(), 0.4);
        assert_eq!(fit.predict_pi(2).unwrap(), 0.99);
        assert!(fit.predict_pi(3).is_err());
        let fit0 = NuisanceFit::from_oracle(vec![0.001, 0.4, 0.999], vec![0.2; 3], vec![0.7; 3], 0, 0.01).unwrap();
        assert_eq!(fit0.predict_pi(0).unwrap(), 0.99);
        assert!((fit0.predict_pi(1).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(fit0.predict_mu(1, 1).unwrap(), 0.7);
        assert!(fit0.predict_mu(1, 2).is_err());
    }

    #[test]
    fn predictions_stay_in_range() {
        let d = toy(300, 2);
        let folds = split_folds(300, 3, 9).unwrap();
        let fit = fit_nuisances(&d, &folds, &spec(), &LearnerSpec::default(), 0.05, 1, None).unwrap();
        for i in 0..300 {
            let p = fit.predict_pi(i).unwrap();
            assert!((0.05..=0.95).contains(&p));
            for arm in 0..2 {
                assert!((0.0..=1.0).contains(&fit.predict_mu(i, arm).unwrap()));
            }
        }
    }

    #[test]
    fn out_of_fold_discipline() {
        let d = toy(120, 4);
        let folds = split_folds(120, 3, 5).unwrap();
        let base = fit_nuisances(&d, &folds, &spec(), &spec(), 0.01, 1, None).unwrap();
        for i in [0usize, 17, 63] {
            let mut y = d.y().to_vec();
            y[i] = 1 - y[i];
            let mut a = d.a().to_vec();
            a[i] = 1 - a[i];
            let perturbed = Dataset::new(y, a, d.x().clone(), d.x_names().to_vec(), vec![0, 1]).unwrap();
            let fit = fit_nuisances(&perturbed, &folds, &spec(), &spec(), 0.01, 1, None).unwrap();
            let own = folds.fold_of(i);
            for r in folds.members(own) {
                assert_eq!(fit.predict_pi(r).unwrap(), base.predict_pi(r).unwrap());
                assert_eq!(fit.predict_mu(r, 0).unwrap(), base.predict_mu(r, 0).unwrap());
                assert_eq!(fit.predict_mu(r, 1).unwrap(), base.predict_mu(r, 1).unwrap());
            }
            let other = folds.members((own + 1) % 3);
            assert!(other.iter().any(|&r| fit.predict_pi(r).unwrap() != base.predict_pi(r).unwrap()));
        }
    }

    #[test]
    fn alternative_outcome_covariates_leave_propensity_alone() {
        let d = toy(200, 6);
        let folds = split_folds(200, 2, 1).unwrap();
        let alt = d.x().map(|v| v * v);
        let plain = fit_nuisances(&d, &folds, &spec(), &spec(), 0.01, 1, None).unwrap();
        let distorted = fit_nuisances(&d, &folds, &spec(), &spec(), 0.01, 1, Some(&alt)).unwrap();
        assert_eq!(plain.pi_values(), distorted.pi_values());
        assert_ne!(plain.mu_values(1), distorted.mu_values(1));
        let wrong = DMatrix::zeros(10, 2);
        assert!(fit_nuisances(&d, &folds, &spec(), &spec(), 0.01, 1, Some(&wrong)).is_err());
    }
}
