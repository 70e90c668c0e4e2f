//! Ground truth for the simulated population: the risk minimizer computed
//! with the exact regression function on a large covariate sample.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{generate_covariates, true_regression};
use crate::error::{Error, Result};
use crate::optimizer::{solve, Program, Solution, SolverOptions};
use crate::risk::{expand_matrix, BasisSpec, RiskObjective};

pub const ORACLE_KKT_TOL: f64 = 1e-9;

/// How the reference solution was obtained; written next to experiment output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleInfo {
    pub procedure: String,
    pub oracle_n: usize,
    pub seed: u64,
    pub target_a: u8,
}

#[derive(Debug, Clone)]
pub struct Oracle {
    pub beta_star: DVector<f64>,
    pub v_star: f64,
    pub solution: Solution,
    pub info: OracleInfo,
}

/// Basis matrix for raw covariate rows (all covariates used for prediction).
pub fn basis_for(basis: &BasisSpec, x: &DMatrix<f64>) -> DMatrix<f64> {
    expand_matrix(&basis.kind, basis.include_intercept, x)
}

/// Solves the program with the true regression `mu_a(X)` as the risk target
/// on `oracle_n` fresh covariate draws.
pub fn oracle_beta_star(basis: &BasisSpec, program: &Program, oracle_n: usize, seed: u64, target_a: u8) -> Result<Oracle> {
    if oracle_n == 0 {
        return Err(Error::Argument("oracle sample size must be positive".into()));
    }
    if target_a > 1 {
        return Err(Error::Argument(format!("target arm must be 0 or 1, got {target_a}")));
    }
    let x = generate_covariates(oracle_n, seed);
    let targets: Vec<f64> = (0..oracle_n)
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            true_regression(target_a, &row)
        })
        .collect();
    let b = basis_for(basis, &x);
    drop(x);
    let options = SolverOptions {
        starts: 1,
        kkt_tol: ORACLE_KKT_TOL,
        ..SolverOptions::default()
    };
    let objective = RiskObjective::new(&b, &targets)?;
    let solution = solve(program, &objective, &options)?;
    if !solution.converged() {
        return Err(Error::NonConverged(format!(
            "oracle solve stopped with KKT residual {:.3e}",
            solution.kkt_residual
        )));
    }
    Ok(Oracle {
        beta_star: solution.beta_hat.clone(),
        v_star: solution.value,
        info: OracleInfo {
            procedure: format!(
                "minimizer of the cross-entropy risk against the exact regression of Y^{target_a} on X, \
                 over {oracle_n} covariate draws, single start at the origin, KKT tolerance {ORACLE_KKT_TOL:e}"
            ),
            oracle_n,
            seed,
            target_a,
        },
        solution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasible_and_below_log2() {
        let spec = BasisSpec::default();
        let program = Program::new(27).with_symmetric_box(1.0);
        let o = oracle_beta_star(&spec, &program, 20_000, 1, 1).unwrap();
        assert_eq!(o.beta_star.len(), 27);
        assert!(o.beta_star.iter().all(|b| b.abs() <= 1.0 + 1e-12));
        assert!(o.v_star <= std::f64::consts::LN_2);
        assert!(o.solution.kkt_residual <= ORACLE_KKT_TOL);
    }
}
