//! Synthetic data with six standard-normal confounders, a logistic
//! propensity score and threshold outcomes with probit regressions.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::optimizer::mix_seed;

pub const D_X: usize = 6;

/// Coefficients of the treatment-assignment index.
pub const PROPENSITY_COEF: [f64; D_X] = [-1.0, 0.5, -0.25, -0.1, 0.05, 0.05];
/// `Y = 1{TREATED_INDEX . X + eps > 0}` when treated.
pub const TREATED_INDEX: [f64; D_X] = [1.0, 2.0, -2.0, -1.0, 1.0, 0.0];
/// `Y = 1{CONTROL_INDEX . X + eps < 0}` when untreated.
pub const CONTROL_INDEX: [f64; D_X] = [1.0, 2.0, -2.0, -1.0, 0.0, 1.0];

const BLOCK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub target_a: u8,
    /// Also materialize the distorted covariates for the outcome models.
    #[serde(default)]
    pub distort_outcome_covariates: bool,
}

fn one() -> u8 {
    1
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            seed: 0,
            target_a: 1,
            distort_outcome_covariates: false,
        }
    }
}

/// A simulated sample together with everything only a simulation knows.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: Dataset,
    pub target_a: u8,
    /// Distorted covariates (n × 4), when requested.
    pub outcome_covariates: Option<DMatrix<f64>>,
    pub y0: Vec<u8>,
    pub y1: Vec<u8>,
    pub pi1: Vec<f64>,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
}

impl SimulatedData {
    pub fn potential_outcome(&self, arm: u8) -> &[u8] {
        if arm == 0 {
            &self.y0
        } else {
            &self.y1
        }
    }

    pub fn true_regression(&self, arm: u8) -> &[f64] {
        if arm == 0 {
            &self.mu0
        } else {
            &self.mu1
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn expit(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

/// `P(A = 1 | X = x)`.
pub fn propensity(x: &[f64]) -> f64 {
    expit(dot(&PROPENSITY_COEF, x))
}

/// `P(Y = 1 | X = x, A = arm)` in closed form.
pub fn true_regression(arm: u8, x: &[f64]) -> f64 {
    let phi = std_normal();
    if arm == 0 {
        phi.cdf(-dot(&CONTROL_INDEX, x))
    } else {
        phi.cdf(dot(&TREATED_INDEX, x))
    }
}

/// `(x1 x3 x6, x2^2, x4 / (1 + e^x5), e^(x5 / 2))`.
pub fn distort_covariates(x: &[f64]) -> Result<[f64; 4]> {
    check_dim(D_X, x.len())?;
    Ok([
        x[0] * x[2] * x[5],
        x[1] * x[1],
        x[3] / (1.0 + x[4].exp()),
        (x[4] / 2.0).exp(),
    ])
}

struct Row {
    x: [f64; D_X],
    u: f64,
    eps: f64,
}

fn draw_rows(n: usize, seed: u64) -> Vec<Row> {
    let blocks = n.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, b as u64));
            let len = BLOCK.min(n - b * BLOCK);
            (0..len)
                .map(|_| {
                    let mut x = [0.0; D_X];
                    for v in x.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                    Row {
                        x,
                        u: rng.gen::<f64>(),
                        eps: rng.sample(StandardNormal),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Covariates only: the same `X` that [`generate_dgp`] produces for the
/// same `(n, seed)`.
pub fn generate_covariates(n: usize, seed: u64) -> DMatrix<f64> {
    let rows = draw_rows(n, seed);
    DMatrix::from_fn(n, D_X, |i, j| rows[i].x[j])
}

pub fn covariate_names() -> Vec<String> {
    (1..=D_X).map(|j| format!("x{j}")).collect()
}

pub fn generate_dgp(config: &DgpConfig) -> Result<SimulatedData> {
    if config.n == 0 {
        return Err(Error::Argument("simulated sample size must be at least 1".into()));
    }
    if config.target_a > 1 {
        return Err(Error::Argument(format!("target arm must be 0 or 1, got {}", config.target_a)));
    }
    let rows = draw_rows(config.n, config.seed);
    let n = rows.len();
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut pi1 = Vec::with_capacity(n);
    let mut mu0 = Vec::with_capacity(n);
    let mut mu1 = Vec::with_capacity(n);
    for r in &rows {
        let p = propensity(&r.x);
        let treated = u8::from(r.u < p);
        let pot1 = u8::from(dot(&TREATED_INDEX, &r.x) + r.eps > 0.0);
        let pot0 = u8::from(dot(&CONTROL_INDEX, &r.x) + r.eps < 0.0);
        a.push(treated);
        y.push(if treated == 1 { pot1 } else { pot0 });
        y0.push(pot0);
        y1.push(pot1);
        pi1.push(p);
        mu0.push(true_regression(0, &r.x));
        mu1.push(true_regression(1, &r.x));
    }
    let x = DMatrix::from_fn(n, D_X, |i, j| rows[i].x[j]);
    let outcome_covariates = config.distort_outcome_covariates.then(|| {
        let mut w = DMatrix::zeros(n, 4);
        for (i, r) in rows.iter().enumerate() {
            let d = distort_covariates(&r.x).expect("six covariates");
            for (j, v) in d.into_iter().enumerate() {
                w[(i, j)] = v;
            }
        }
        w
    });
    let dataset = Dataset::new(y, a, x, covariate_names(), (0..D_X).collect())?;
    Ok(SimulatedData {
        dataset,
        target_a: config.target_a,
        outcome_covariates,
        y0,
        y1,
        pi1,
        mu0,
        mu1,
    })
}
