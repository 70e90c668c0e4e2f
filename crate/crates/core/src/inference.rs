//! Asymptotic covariance and confidence intervals for a constrained
//! risk minimizer.
//!
//! At a KKT point with active set `J0`, linearizing the optimality system
//! gives
//!
//! ```text
//! sqrt(n) (beta_hat - beta*) ~ -M * sqrt(n) grad L_n(beta*)
//! ```
//!
//! where `M` is the top-left k × k block of the inverse of the bordered
//! matrix `[H + sum_j gamma_j hess g_j, B; B', 0]` with `B` the stacked
//! active-constraint gradients. The gradient noise is estimated by the
//! sample covariance of the per-row contributions `(s(u_i) - t_i) b_i`.
//! Everything is evaluated at `beta_hat`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{check_dim, Error, Result};
use crate::optimizer::{check_licq, ConstraintId, Licq, Program, Solution};
use crate::risk;

/// Label attached to every report.
pub const VALIDITY_NOTE: &str = "asymptotic, rate-conditions assumed";

fn default_level() -> f64 {
    0.95
}

fn default_sc_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceOptions {
    /// Confidence level of the intervals.
    #[serde(default = "default_level")]
    pub level: f64,
    /// Active multipliers below this are reported as weak complementarity.
    #[serde(default = "default_sc_tol")]
    pub sc_tol: f64,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            level: default_level(),
            sc_tol: default_sc_tol(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub licq: Licq,
    /// Smallest multiplier over the active set, if any.
    pub min_active_multiplier: Option<f64>,
    pub strict_complementarity: bool,
    pub kkt_condition_number: f64,
    pub warnings: Vec<String>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub n: usize,
    pub level: f64,
    #[serde(with = "crate::serde_nested::vector")]
    pub beta_hat: DVector<f64>,
    pub active_constraints: Vec<ConstraintId>,
    #[serde(with = "crate::serde_nested::matrix")]
    pub kkt_matrix: DMatrix<f64>,
    #[serde(with = "crate::serde_nested::matrix")]
    pub upsilon_cov: DMatrix<f64>,
    /// Covariance of `sqrt(n) (beta_hat - beta*)`.
    #[serde(with = "crate::serde_nested::matrix")]
    pub beta_cov: DMatrix<f64>,
    /// `sqrt(beta_cov_jj / n)`.
    pub std_errors: Vec<f64>,
    pub intervals: Vec<Interval>,
    pub diagnostics: Diagnostics,
}

/// Bordered KKT matrix at the solution: Lagrangian Hessian in the top-left
/// block and active-constraint gradients as the border columns.
pub fn kkt_matrix(solution: &Solution, program: &Program, risk_hessian: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = solution.beta_hat.len();
    check_dim(program.dim(), k)?;
    check_dim(k, risk_hessian.nrows())?;
    check_dim(k, risk_hessian.ncols())?;
    if !solution.converged() {
        return Err(Error::Diagnostic(
            "refusing to build the KKT system at a non-converged solution".into(),
        ));
    }
    if let Licq::Fails { rank, active } = check_licq(&solution.beta_hat, program, &solution.active_set) {
        return Err(Error::Diagnostic(format!(
            "LICQ fails: active gradients have rank {rank} < {active}; the KKT matrix is singular"
        )));
    }
    let beta = &solution.beta_hat;
    let active = &solution.active_set;
    let m = active.len();
    let mut out = DMatrix::zeros(k + m, k + m);
    let mut top = risk_hessian.clone();
    for (c, &j) in active.iter().enumerate() {
        let id = solution.constraint_ids[j];
        if let Some(h) = program.constraint_hessian(id, beta) {
            top += h * solution.gamma_hat[j];
        }
        let g = program.constraint_gradient(id, beta);
        out.view_mut((0, k + c), (k, 1)).copy_from(&g);
        out.view_mut((k + c, 0), (1, k)).copy_from(&g.transpose());
    }
    out.view_mut((0, 0), (k, k)).copy_from(&top);
    Ok(out)
}

/// Sample covariance (divisor n) of the per-row risk-gradient
/// contributions `(s(beta' b_i) - t_i) b_i`.
pub fn upsilon_covariance(beta_hat: &DVector<f64>, targets: &[f64], basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let c = risk::gradient_contributions(beta_hat, targets, basis)?;
    let n = c.nrows() as f64;
    let mean = c.row_mean();
    let mut centered = c;
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let mut cov = centered.tr_mul(&centered) / n;
    cov.fill_lower_triangle_with_upper_triangle();
    Ok(cov)
}

/// Reciprocal condition numbers below this make the KKT matrix singular.
const SINGULAR_RCOND: f64 = 1e-13;

/// `M upsilon_cov M'` with `M` the top-left k × k block of `kkt^{-1}`.
pub fn solution_covariance(kkt: &DMatrix<f64>, upsilon_cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = upsilon_cov.nrows();
    check_dim(k, upsilon_cov.ncols())?;
    if kkt.nrows() != kkt.ncols() || kkt.nrows() < k {
        return Err(Error::Argument(format!(
            "KKT matrix is {}x{}, expected square with at least {k} rows",
            kkt.nrows(),
            kkt.ncols()
        )));
    }
    let sv = kkt.clone().singular_values();
    if sv.min() <= SINGULAR_RCOND * sv.max() {
        return Err(Error::Diagnostic(
            "KKT matrix is singular; LICQ or strict complementarity is violated".into(),
        ));
    }
    let inv = kkt
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Diagnostic("KKT matrix could not be inverted".into()))?;
    let m = inv.view((0, 0), (k, k)).into_owned();
    let mut cov = &m * upsilon_cov * m.transpose();
    // average out rounding asymmetry
    cov = (&cov + cov.transpose()) * 0.5;
    Ok(cov)
}

/// Normal intervals `beta_j -/+ z sqrt(beta_cov_jj / n)`.
pub fn confidence_intervals(beta_hat: &DVector<f64>, beta_cov: &DMatrix<f64>, n: usize, level: f64) -> Result<Vec<Interval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument(format!("confidence level must lie in (0, 1), got {level}")));
    }
    check_dim(beta_hat.len(), beta_cov.nrows())?;
    if n == 0 {
        return Err(Error::Argument("sample size must be positive".into()));
    }
    let z = Normal::standard().inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let tol = 1e-10 * beta_cov.trace().abs().max(f64::MIN_POSITIVE);
    (0..beta_hat.len())
        .map(|j| {
            let var = beta_cov[(j, j)];
            if var < -tol {
                return Err(Error::Diagnostic(format!("negative variance {var:.3e} for coordinate {j}")));
            }
            let half = z * (var.max(0.0) / n as f64).sqrt();
            Ok(Interval {
                lower: beta_hat[j] - half,
                upper: beta_hat[j] + half,
            })
        })
        .collect()
}

/// Full report for a risk minimizer fitted to `targets` over `basis`.
pub fn infer(
    solution: &Solution,
    program: &Program,
    targets: &[f64],
    basis: &DMatrix<f64>,
    options: &InferenceOptions,
) -> Result<InferenceReport> {
    let beta = &solution.beta_hat;
    let n = basis.nrows();
    let hessian = risk::risk_hessian(beta, basis)?;
    let licq = check_licq(beta, program, &solution.active_set);
    let kkt = kkt_matrix(solution, program, &hessian)?;
    let upsilon = upsilon_covariance(beta, targets, basis)?;
    let beta_cov = solution_covariance(&kkt, &upsilon)?;
    let intervals = confidence_intervals(beta, &beta_cov, n, options.level)?;
    let std_errors = (0..beta.len())
        .map(|j| (beta_cov[(j, j)].max(0.0) / n as f64).sqrt())
        .collect();

    let min_active = solution
        .active_set
        .iter()
        .map(|&j| solution.gamma_hat[j])
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.min(g))));
    let strict = min_active.map_or(true, |g| g >= options.sc_tol);
    let mut warnings = Vec::new();
    if !strict {
        warnings.push(format!(
            "weak complementarity (min active multiplier {:.3e} < {:.1e}); distribution may be non-normal",
            min_active.unwrap_or(0.0),
            options.sc_tol
        ));
    }
    let sv = kkt.clone().singular_values();
    Ok(InferenceReport {
        n,
        level: options.level,
        beta_hat: beta.clone(),
        active_constraints: solution.active_ids(),
        kkt_matrix: kkt,
        upsilon_cov: upsilon,
        beta_cov,
        std_errors,
        intervals,
        diagnostics: Diagnostics {
            licq,
            min_active_multiplier: min_active,
            strict_complementarity: strict,
            kkt_condition_number: sv.max() / sv.min(),
            warnings,
            note: VALIDITY_NOTE.into(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::testing::Linear;
    use crate::optimizer::{solve, NormBall, SolverOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn converged_at(beta: DVector<f64>, program: &Program, gamma: Vec<f64>, active: Vec<usize>) -> Solution {
        Solution {
            beta_hat: beta,
            gamma_hat: gamma,
            constraint_ids: program.constraint_ids(),
            value: 0.0,
            active_set: active,
            kkt_residual: 0.0,
            max_violation: 0.0,
            status: crate::optimizer::SolveStatus::Converged,
            trace: crate::optimizer::SolveTrace { starts: vec![], best_start: 0 },
        }
    }

    #[test]
    fn no_active_constraints_gives_bare_hessian() {
        let program = Program::new(2).with_symmetric_box(5.0);
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let sol = converged_at(v(&[0.1, 0.2]), &program, vec![0.0; 4], vec![]);
        assert_eq!(kkt_matrix(&sol, &program, &h).unwrap(), h);
    }

    #[test]
    fn circle_constraint_assembly() {
        let program = Program::new(2).with_constraint(NormBall { radius: 1.0, center: None });
        let sol = solve(&program, &Linear(v(&[1.0, 1.0])), &SolverOptions::default()).unwrap();
        let hf = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]);
        let kkt = kkt_matrix(&sol, &program, &hf).unwrap();
        let s2 = std::f64::consts::SQRT_2;
        let expected_top = &hf + DMatrix::identity(2, 2) * s2;
        assert!((kkt.view((0, 0), (2, 2)) - expected_top).norm() < 1e-7);
        let border = kkt.view((0, 2), (2, 1)).into_owned();
        assert!((border - &sol.beta_hat * 2.0).norm() < 1e-12);
        assert_eq!(kkt[(2, 2)], 0.0);
        assert_eq!(kkt.clone(), kkt.transpose());
    }

    #[test]
    fn active_bound_border_is_unit_vector() {
        let program = Program::new(3).with_symmetric_box(1.0);
        let ids = program.constraint_ids();
        let upper0 = ids.iter().position(|&id| id == ConstraintId::Upper(0)).unwrap();
        let mut gamma = vec![0.0; ids.len()];
        gamma[upper0] = 0.7;
        let sol = converged_at(v(&[1.0, 0.0, 0.3]), &program, gamma, vec![upper0]);
        let h = DMatrix::identity(3, 3);
        let kkt = kkt_matrix(&sol, &program, &h).unwrap();
        assert_eq!(kkt.view((0, 0), (3, 3)).into_owned(), h);
        assert_eq!(kkt.view((0, 3), (3, 1)).into_owned(), v(&[1.0, 0.0, 0.0]));
    }

    #[test]
    fn refuses_bad_solutions() {
        let program = Program::new(2)
            .with_constraint(NormBall { radius: 1.0, center: None })
            .with_constraint(NormBall { radius: 1.0, center: None });
        let h = DMatrix::identity(2, 2);
        let mut sol = converged_at(v(&[1.0, 0.0]), &program, vec![0.5, 0.5], vec![0, 1]);
        assert!(matches!(kkt_matrix(&sol, &program, &h), Err(Error::Diagnostic(_))));
        sol.active_set = vec![0];
        sol.status = crate::optimizer::SolveStatus::NotConverged;
        assert!(matches!(kkt_matrix(&sol, &program, &h), Err(Error::Diagnostic(_))));
    }

    fn random_problem(seed: u64, n: usize, k: usize) -> (DVector<f64>, Vec<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = DMatrix::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0));
        let beta = DVector::from_fn(k, |_, _| rng.gen_range(-0.5..0.5));
        let t = (0..n).map(|_| rng.gen_range(-0.2..1.2)).collect();
        (beta, t, basis)
    }

    #[test]
    fn upsilon_vanishes_when_targets_match_scores() {
        let (beta, _, basis) = random_problem(1, 20, 3);
        let t: Vec<f64> = (&basis * &beta).iter().map(|&u| risk::sigmoid(u)).collect();
        assert!(upsilon_covariance(&beta, &t, &basis).unwrap().norm() < 1e-30);
    }

    #[test]
    fn upsilon_three_row_hand_computation() {
        // beta = 0 so every score is 1/2; contributions (1/2 - t_i) b_i
        let basis = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
        let t = [0.0, 1.0, 0.5];
        // c1 = (0.5, 0), c2 = (0, -1), c3 = (0, 0); mean = (1/6, -1/3)
        // centered: (1/3, 1/3), (-1/6, -2/3), (-1/6, 1/3)
        let expected = DMatrix::from_row_slice(
            2,
            2,
            &[
                (1.0 / 9.0 + 1.0 / 36.0 + 1.0 / 36.0) / 3.0,
                (1.0 / 9.0 + 1.0 / 9.0 - 1.0 / 18.0) / 3.0,
                (1.0 / 9.0 + 1.0 / 9.0 - 1.0 / 18.0) / 3.0,
                (1.0 / 9.0 + 4.0 / 9.0 + 1.0 / 9.0) / 3.0,
            ],
        );
        let got = upsilon_covariance(&DVector::zeros(2), &t, &basis).unwrap();
        assert!((got - expected).norm() < 1e-15);
    }

    #[test]
    fn unconstrained_covariance_is_sandwich() {
        let (beta, t, basis) = random_problem(2, 50, 4);
        let h = risk::risk_hessian(&beta, &basis).unwrap();
        let s = upsilon_covariance(&beta, &t, &basis).unwrap();
        let hinv = h.clone().try_inverse().unwrap();
        let expected = &hinv * &s * &hinv;
        let got = solution_covariance(&h, &s).unwrap();
        assert!((got - &expected).norm() <= 1e-12 * expected.norm());
    }

    #[test]
    fn active_linear_constraint_pins_coordinate() {
        let (beta, t, basis) = random_problem(3, 60, 3);
        let h = risk::risk_hessian(&beta, &basis).unwrap();
        let s = upsilon_covariance(&beta, &t, &basis).unwrap();
        let mut kkt = DMatrix::zeros(4, 4);
        kkt.view_mut((0, 0), (3, 3)).copy_from(&h);
        kkt[(0, 3)] = 1.0;
        kkt[(3, 0)] = 1.0;
        let cov = solution_covariance(&kkt, &s).unwrap();
        let tol = 1e-10 * cov.trace();
        for j in 0..3 {
            assert!(cov[(0, j)].abs() <= tol && cov[(j, 0)].abs() <= tol);
        }
        assert!(cov[(1, 1)] > 0.0);
        let eig = cov.symmetric_eigenvalues();
        assert!(eig.min() >= -tol);
    }

    #[test]
    fn singular_kkt_is_diagnostic() {
        let kkt = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0]);
        let s = DMatrix::identity(2, 2);
        assert!(matches!(solution_covariance(&kkt, &s), Err(Error::Diagnostic(_))));
    }

    #[test]
    fn interval_widths() {
        let beta = v(&[0.3, -1.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let ci = confidence_intervals(&beta, &cov, 100, 0.95).unwrap();
        assert!(((ci[0].upper - ci[0].lower) / 2.0 - 0.196).abs() < 1e-3);
        assert_eq!((ci[1].lower, ci[1].upper), (-1.0, -1.0));
        let narrow = confidence_intervals(&beta, &cov, 100, 0.5).unwrap();
        assert!(narrow[0].upper - narrow[0].lower < ci[0].upper - ci[0].lower);
        assert!(confidence_intervals(&beta, &cov, 100, 1.0).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(confidence_intervals(&beta, &bad, 100, 0.9), Err(Error::Diagnostic(_))));
    }
}
