use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::{expand_matrix, sigmoid, softplus, BasisKind};

const GRAD_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 200;
/// Coefficient norm beyond which an unpenalized fit is declared separated.
const SEPARATION_NORM: f64 = 1e6;

/// Logistic regression fitted by damped Newton iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Intercept first, then one coefficient per expanded feature.
    pub coefficients: Vec<f64>,
    pub quadratic: bool,
    dim: usize,
}

impl LogisticModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn design(x: &DMatrix<f64>, quadratic: bool) -> DMatrix<f64> {
        let kind = if quadratic {
            BasisKind::QuadraticWithInteractions
        } else {
            BasisKind::Raw
        };
        expand_matrix(&kind, true, x)
    }

    /// Minimizes `mean(softplus(z) - t z) + lambda/2 |theta|^2` with
    /// `z = design * theta` until the gradient norm drops below 1e-8.
    pub(crate) fn fit(x: &DMatrix<f64>, targets: &[u8], quadratic: bool, lambda: f64) -> Result<Self> {
        let z = Self::design(x, quadratic);
        let n = z.nrows() as f64;
        let p = z.ncols();
        let t = DVector::from_iterator(targets.len(), targets.iter().map(|&v| v as f64));

        let loss = |theta: &DVector<f64>| -> f64 {
            let eta = &z * theta;
            let data: f64 = eta.iter().zip(t.iter()).map(|(&e, &y)| softplus(e) - y * e).sum();
            data / n + 0.5 * lambda * theta.norm_squared()
        };

        let mut theta = DVector::zeros(p);
        let mut current = loss(&theta);
        let mut converged = false;
        for _ in 0..MAX_NEWTON {
            let eta = &z * &theta;
            let prob = eta.map(sigmoid);
            let resid = &prob - &t;
            let grad = z.tr_mul(&resid) / n + &theta * lambda;
            if grad.norm() <= GRAD_TOL {
                if lambda == 0.0 && resid.amax() < 1e-6 {
                    return Err(Error::Separation("the classes are perfectly separable".into()));
                }
                converged = true;
                break;
            }
            let w = prob.map(|q| q * (1.0 - q));
            let mut hess = weighted_gram(&z, &w) / n;
            for i in 0..p {
                hess[(i, i)] += lambda;
            }
            let step = solve_spd(hess, &grad);

            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = &theta - &step * scale;
                let val = loss(&cand);
                if val <= current - 1e-4 * scale * grad.dot(&step) || (val <= current && scale < 1e-8) {
                    theta = cand;
                    current = val;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                // no further decrease is representable
                break;
            }
            if lambda == 0.0 && theta.norm() > SEPARATION_NORM {
                return Err(Error::Separation(
                    "coefficients diverge; the classes are (quasi-)separable".into(),
                ));
            }
        }
        if !converged {
            let eta = &z * &theta;
            let resid = eta.map(sigmoid) - &t;
            let grad = z.tr_mul(&resid) / n + &theta * lambda;
            if lambda == 0.0 && (theta.norm() > 1e3 || grad.norm() > 1e-5) {
                return Err(Error::Separation(format!(
                    "Newton iterations stalled at gradient norm {:.3e}",
                    grad.norm()
                )));
            }
        }
        Ok(Self {
            coefficients: theta.as_slice().to_vec(),
            quadratic,
            dim: x.ncols(),
        })
    }

    pub(crate) fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let z = Self::design(x, self.quadratic);
        let theta = DVector::from_column_slice(&self.coefficients);
        (z * theta).iter().map(|&e| sigmoid(e)).collect()
    }
}

/// `Z^T diag(w) Z`.
pub(crate) fn weighted_gram(z: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = z.clone();
    for (mut col, _) in scaled.column_iter_mut().zip(0..) {
        col.component_mul_assign(w);
    }
    z.tr_mul(&scaled)
}

/// Solves `h x = g` for symmetric positive (semi)definite `h`, adding a
/// growing ridge when the Cholesky factorization fails.
pub(crate) fn solve_spd(h: DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let p = h.nrows();
    let scale = (h.trace().abs() / p.max(1) as f64).max(1e-12);
    let mut ridge = 0.0;
    loop {
        let mut m = h.clone();
        for i in 0..p {
            m[(i, i)] += ridge;
        }
        if let Some(chol) = m.cholesky() {
            return chol.solve(g);
        }
        ridge = if ridge == 0.0 { scale * 1e-12 } else { ridge * 10.0 };
        if ridge > scale * 1e6 {
            return g * (1.0 / scale);
        }
    }
}
