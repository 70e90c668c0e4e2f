//! Doubly-robust pseudo-outcomes and linear functionals of them.
//!
//! For target arm `a` the pseudo-outcome of a row is
//!
//! ```text
//! phi = 1(A = a) / pi_a(X) * (Y - mu_A(X)) + mu_a(X)
//! ```
//!
//! whose mean identifies `E[Y^a]`. Each `phi_i` uses nuisance predictions
//! fitted without row `i`'s fold.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::nuisance::NuisanceFit;

/// Pseudo-outcomes for one target arm. Values can fall outside `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoOutcomes {
    phi: Vec<f64>,
    target_a: u8,
}

impl PseudoOutcomes {
    /// Wraps precomputed values.
    pub fn from_values(phi: Vec<f64>, target_a: u8) -> Self {
        Self { phi, target_a }
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    pub fn target_a(&self) -> u8 {
        self.target_a
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.phi.iter().sum::<f64>() / self.phi.len() as f64
    }
}

/// Pseudo-outcome of a single row.
///
/// `mu_a_hat` is the regression prediction for the target arm and
/// `mu_arow_hat` the prediction for the arm the row actually received.
pub fn pseudo_outcome(y: u8, a_row: u8, pi_hat: f64, mu_a_hat: f64, mu_arow_hat: f64, target_a: u8) -> Result<f64> {
    if !(pi_hat > 0.0 && pi_hat < 1.0) {
        return Err(Error::Argument(format!("propensity must lie in (0, 1), got {pi_hat}")));
    }
    let correction = if a_row == target_a {
        (y as f64 - mu_arow_hat) / pi_hat
    } else {
        0.0
    };
    Ok(correction + mu_a_hat)
}

/// Pseudo-outcomes for every row using out-of-fold nuisance predictions.
pub fn pseudo_outcomes(data: &Dataset, fit: &NuisanceFit) -> Result<PseudoOutcomes> {
    check_dim(data.n(), fit.n())?;
    let a = fit.target_a();
    let phi = (0..data.n())
        .map(|i| {
            let a_row = data.a()[i];
            pseudo_outcome(
                data.y()[i],
                a_row,
                fit.predict_pi(i)?,
                fit.predict_mu(i, a)?,
                fit.predict_mu(i, a_row)?,
                a,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PseudoOutcomes { phi, target_a: a })
}

/// Estimate of `E[phi h]` with its influence-function standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalEstimate {
    pub estimate: f64,
    /// `sqrt(var_n(phi h) / n)`; asymptotic, valid under the usual nuisance
    /// rate conditions.
    pub std_error: f64,
}

/// Sample mean of `phi_i h_i` and its plug-in standard error.
pub fn dr_functional(phi: &PseudoOutcomes, h: &[f64]) -> Result<FunctionalEstimate> {
    check_dim(phi.len(), h.len())?;
    if h.is_empty() {
        return Err(Error::Argument("empty sample".into()));
    }
    let n = h.len() as f64;
    let prod: Vec<f64> = phi.phi.iter().zip(h).map(|(p, h)| p * h).collect();
    let mean = prod.iter().sum::<f64>() / n;
    let var = prod.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(FunctionalEstimate {
        estimate: mean,
        std_error: (var / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn off_arm_row_keeps_regression() {
        assert_eq!(pseudo_outcome(1, 0, 0.4, 0.3, 0.9, 1).unwrap(), 0.3);
    }

    #[test]
    fn on_arm_hand_value() {
        let v = pseudo_outcome(1, 1, 0.5, 0.4, 0.4, 1).unwrap();
        assert!((v - 1.6).abs() < 1e-15);
    }

    #[test]
    fn zero_residual_keeps_regression() {
        assert_eq!(pseudo_outcome(1, 1, 0.3, 1.0, 1.0, 1).unwrap(), 1.0);
        assert_eq!(pseudo_outcome(0, 0, 0.3, 0.0, 0.0, 0).unwrap(), 0.0);
    }

    #[test]
    fn propensity_outside_unit_interval() {
        for pi in [0.0, 1.0, -0.2, f64::NAN] {
            assert!(pseudo_outcome(1, 1, pi, 0.5, 0.5, 1).is_err());
        }
    }

    fn dataset(y: Vec<u8>, a: Vec<u8>) -> Dataset {
        let n = y.len();
        Dataset::new(y, a, DMatrix::zeros(n, 1), vec!["x".into()], vec![0]).unwrap()
    }

    #[test]
    fn known_half_propensity_and_zero_regression() {
        let y = vec![1, 0, 1, 1, 0, 1];
        let a = vec![1, 1, 0, 1, 0, 0];
        let d = dataset(y.clone(), a.clone());
        let fit = NuisanceFit::from_oracle(vec![0.5; 6], vec![0.0; 6], vec![0.0; 6], 1, 0.01).unwrap();
        let phi = pseudo_outcomes(&d, &fit).unwrap();
        for i in 0..6 {
            assert_eq!(phi.values()[i], 2.0 * (a[i] == 1) as u8 as f64 * y[i] as f64);
        }
    }

    #[test]
    fn all_rows_off_arm() {
        let d = dataset(vec![1, 0, 1], vec![0, 0, 0]);
        let mu1 = vec![0.2, 0.5, 0.9];
        let fit = NuisanceFit::from_oracle(vec![0.3; 3], vec![0.1; 3], mu1.clone(), 1, 0.01).unwrap();
        assert_eq!(pseudo_outcomes(&d, &fit).unwrap().values(), mu1.as_slice());
    }

    #[test]
    fn pseudo_outcomes_are_bounded_by_clamp() {
        let eps = 0.05;
        let d = dataset(vec![1, 0, 1, 0], vec![1, 1, 1, 1]);
        let fit = NuisanceFit::from_oracle(vec![0.0, 0.0, 1.0, 0.01], vec![0.5; 4], vec![0.0, 1.0, 0.3, 1.0], 1, eps).unwrap();
        let phi = pseudo_outcomes(&d, &fit).unwrap();
        assert!(phi.values().iter().all(|v| v.abs() <= 1.0 / eps + 1.0));
    }

    #[test]
    fn functional_special_cases() {
        let phi = PseudoOutcomes::from_values(vec![0.2, 1.4, -0.3, 0.9], 1);
        let zero = dr_functional(&phi, &[0.0; 4]).unwrap();
        assert_eq!((zero.estimate, zero.std_error), (0.0, 0.0));
        let one = dr_functional(&phi, &[1.0; 4]).unwrap();
        assert!((one.estimate - phi.mean()).abs() < 1e-15);
        let var: f64 = phi.values().iter().map(|v| (v - phi.mean()).powi(2)).sum::<f64>() / 4.0;
        assert!((one.std_error - (var / 4.0).sqrt()).abs() < 1e-15);
        assert!(dr_functional(&phi, &[1.0; 3]).is_err());
    }

    proptest::proptest! {
        /// The correction term has conditional mean zero: averaging over
        /// y ~ Bernoulli(mu) and a ~ Bernoulli(pi) recovers the regression.
        #[test]
        fn correction_is_mean_zero(pi in 0.01f64..0.99, mu1 in 0.0f64..1.0, mu0 in 0.0f64..1.0, target in 0u8..2) {
            let p_arm = if target == 1 { pi } else { 1.0 - pi };
            let mu_t = if target == 1 { mu1 } else { mu0 };
            let mut mean = 0.0;
            for a in 0..2u8 {
                let pa = if a == 1 { pi } else { 1.0 - pi };
                let mu_row = if a == 1 { mu1 } else { mu0 };
                for y in 0..2u8 {
                    let py = if y == 1 { mu_row } else { 1.0 - mu_row };
                    mean += pa * py * pseudo_outcome(y, a, p_arm, mu_t, mu_row, target).unwrap();
                }
            }
            proptest::prop_assert!((mean - mu_t).abs() < 1e-12);
        }
    }
}
