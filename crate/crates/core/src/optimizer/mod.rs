//! Smooth nonlinear programs with inequality constraints and box bounds.
//!
//! Problems have the form
//!
//! ```text
//! minimize f(x)  subject to  g_j(x) <= 0,  lower <= x <= upper
//! ```
//!
//! Box bounds are handled natively by projection. General constraints go
//! through an augmented-Lagrangian outer loop whose subproblems are solved
//! by a projected limited-memory quasi-Newton method, finished with
//! projected Newton steps when second derivatives are available. Several
//! starting points are tried and the best KKT point is returned.
//!
//! For reporting, each finite box side is treated as a linear constraint
//! (`lower_i - x_i <= 0` or `x_i - upper_i <= 0`) listed after the general
//! constraints; multipliers, active sets and KKT residuals use that
//! combined list.

mod auglag;
mod bounded;
mod multipliers;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub use bounded::{minimize_box, BoxResult};

/// A twice-differentiable objective.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.value_grad(x).0
    }

    fn value_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>);

    /// Second derivatives, when the objective can provide them. Used to
    /// polish solutions with Newton steps.
    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// A smooth inequality constraint `g(x) <= 0`.
pub trait SmoothConstraint: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn describe(&self) -> String {
        "g(x) <= 0".into()
    }
}

/// `coefficients' x - rhs <= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coefficients: Vec<f64>,
    pub rhs: f64,
}

impl SmoothConstraint for LinearConstraint {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.coefficients.iter().zip(x.iter()).map(|(c, x)| c * x).sum::<f64>() - self.rhs
    }

    fn gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }

    fn describe(&self) -> String {
        format!("linear: c'x <= {}", self.rhs)
    }
}

/// `|x - center|^2 - radius^2 <= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormBall {
    pub radius: f64,
    /// Defaults to the origin.
    pub center: Option<Vec<f64>>,
}

impl NormBall {
    fn offset(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.center {
            Some(c) => x - DVector::from_column_slice(c),
            None => x.clone(),
        }
    }
}

impl SmoothConstraint for NormBall {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.offset(x).norm_squared() - self.radius * self.radius
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.offset(x) * 2.0
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(x.len(), x.len()) * 2.0
    }

    fn describe(&self) -> String {
        format!("norm ball: |x| <= {}", self.radius)
    }
}

/// Identifies one entry of the combined constraint list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintId {
    General(usize),
    /// `lower_i - x_i <= 0`.
    Lower(usize),
    /// `x_i - upper_i <= 0`.
    Upper(usize),
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintId::General(j) => write!(f, "g{j}"),
            ConstraintId::Lower(i) => write!(f, "lower[{i}]"),
            ConstraintId::Upper(i) => write!(f, "upper[{i}]"),
        }
    }
}

/// Constraint set and box for a `dim`-dimensional problem.
#[derive(Clone)]
pub struct Program {
    dim: usize,
    constraints: Vec<Arc<dyn SmoothConstraint>>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl fmt::Debug for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Program")
            .field("dim", &self.dim)
            .field(
                "constraints",
                &self.constraints.iter().map(|c| c.describe()).collect::<Vec<_>>(),
            )
            .field("lower", &self.lower.as_slice())
            .field("upper", &self.upper.as_slice())
            .finish()
    }
}

impl Program {
    /// An unconstrained program over `R^dim`.
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            constraints: Vec::new(),
            lower: DVector::from_element(dim, f64::NEG_INFINITY),
            upper: DVector::from_element(dim, f64::INFINITY),
        }
    }

    pub fn with_box(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(self.dim, lower.len())?;
        check_dim(self.dim, upper.len())?;
        self.lower = DVector::from_vec(lower);
        self.upper = DVector::from_vec(upper);
        Ok(self)
    }

    /// `|x_i| <= bound` for every coordinate.
    pub fn with_symmetric_box(self, bound: f64) -> Self {
        let dim = self.dim;
        self.with_box(vec![-bound; dim], vec![bound; dim])
            .expect("dimensions agree")
    }

    pub fn with_constraint(mut self, c: impl SmoothConstraint + 'static) -> Self {
        self.constraints.push(Arc::new(c));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn general(&self) -> &[Arc<dyn SmoothConstraint>] {
        &self.constraints
    }

    pub fn has_finite_box(&self) -> bool {
        self.lower.iter().chain(self.upper.iter()).any(|v| v.is_finite())
    }

    fn validate(&self) -> Result<()> {
        for i in 0..self.dim {
            let (l, u) = (self.lower[i], self.upper[i]);
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::Argument(format!(
                    "box for coordinate {i} is empty: [{l}, {u}]"
                )));
            }
        }
        Ok(())
    }

    /// General constraints, then finite lower and upper bounds coordinate
    /// by coordinate.
    pub fn constraint_ids(&self) -> Vec<ConstraintId> {
        let mut ids: Vec<ConstraintId> = (0..self.constraints.len()).map(ConstraintId::General).collect();
        for i in 0..self.dim {
            if self.lower[i].is_finite() {
                ids.push(ConstraintId::Lower(i));
            }
            if self.upper[i].is_finite() {
                ids.push(ConstraintId::Upper(i));
            }
        }
        ids
    }

    pub fn constraint_value(&self, id: ConstraintId, x: &DVector<f64>) -> f64 {
        match id {
            ConstraintId::General(j) => self.constraints[j].value(x),
            ConstraintId::Lower(i) => self.lower[i] - x[i],
            ConstraintId::Upper(i) => x[i] - self.upper[i],
        }
    }

    pub fn constraint_gradient(&self, id: ConstraintId, x: &DVector<f64>) -> DVector<f64> {
        match id {
            ConstraintId::General(j) => self.constraints[j].gradient(x),
            ConstraintId::Lower(i) => {
                let mut e = DVector::zeros(self.dim);
                e[i] = -1.0;
                e
            }
            ConstraintId::Upper(i) => {
                let mut e = DVector::zeros(self.dim);
                e[i] = 1.0;
                e
            }
        }
    }

    /// `None` for box bounds, whose Hessian is zero.
    pub fn constraint_hessian(&self, id: ConstraintId, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        match id {
            ConstraintId::General(j) => Some(self.constraints[j].hessian(x)),
            _ => None,
        }
    }

    pub fn project(&self, x: &mut DVector<f64>) {
        for i in 0..self.dim {
            x[i] = x[i].clamp(self.lower[i], self.upper[i]);
        }
    }
}

fn default_starts() -> usize {
    8
}
fn default_max_iter() -> usize {
    2000
}
fn default_max_outer() -> usize {
    60
}
fn default_kkt_tol() -> f64 {
    1e-6
}
fn default_feas_tol() -> f64 {
    1e-8
}
fn default_act_tol() -> f64 {
    1e-7
}
fn default_start_radius() -> f64 {
    10.0
}
fn default_memory() -> usize {
    10
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    /// Number of starting points; the first is the origin projected onto
    /// the box, the rest are seeded uniform draws.
    #[serde(default = "default_starts")]
    pub starts: usize,
    /// Iteration cap for each bound-constrained subproblem.
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Augmented-Lagrangian outer iteration cap.
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_kkt_tol")]
    pub kkt_tol: f64,
    #[serde(default = "default_feas_tol")]
    pub feas_tol: f64,
    #[serde(default = "default_act_tol")]
    pub act_tol: f64,
    #[serde(default)]
    pub seed: u64,
    /// Random starts are drawn from the box intersected with this ball.
    #[serde(default = "default_start_radius")]
    pub start_radius: f64,
    /// Number of correction pairs kept by the quasi-Newton method.
    #[serde(default = "default_memory")]
    pub memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            starts: default_starts(),
            max_iter: default_max_iter(),
            max_outer: default_max_outer(),
            kkt_tol: default_kkt_tol(),
            feas_tol: default_feas_tol(),
            act_tol: default_act_tol(),
            seed: 0,
            start_radius: default_start_radius(),
            memory: default_memory(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 {
            return Err(Error::Argument("at least one start is required".into()));
        }
        if self.max_iter == 0 || self.max_outer == 0 || self.memory == 0 {
            return Err(Error::Argument("iteration limits and memory must be positive".into()));
        }
        for (name, v) in [
            ("kkt_tol", self.kkt_tol),
            ("feas_tol", self.feas_tol),
            ("act_tol", self.act_tol),
            ("start_radius", self.start_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    NotConverged,
}

/// Outcome of one starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub index: usize,
    pub value: f64,
    pub kkt_residual: f64,
    pub max_violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub starts: Vec<StartRecord>,
    pub best_start: usize,
}

/// A (candidate) KKT point of a program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    #[serde(with = "crate::serde_nested::vector")]
    pub beta_hat: DVector<f64>,
    /// Multipliers aligned with `constraint_ids`.
    pub gamma_hat: Vec<f64>,
    pub constraint_ids: Vec<ConstraintId>,
    pub value: f64,
    /// Positions in `constraint_ids` of the active constraints.
    pub active_set: Vec<usize>,
    pub kkt_residual: f64,
    /// `max_j max(0, g_j(beta_hat))`.
    pub max_violation: f64,
    pub status: SolveStatus,
    pub trace: SolveTrace,
}

impl Solution {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn active_ids(&self) -> Vec<ConstraintId> {
        self.active_set.iter().map(|&j| self.constraint_ids[j]).collect()
    }

    /// Multiplier of constraint `id`, 0 when it is not in the list.
    pub fn multiplier(&self, id: ConstraintId) -> f64 {
        self.constraint_ids
            .iter()
            .position(|&c| c == id)
            .map_or(0.0, |j| self.gamma_hat[j])
    }
}

/// `|grad + sum_j gamma_j grad g_j|_2 + sum_j max(0, g_j) + sum_j |gamma_j g_j|`
/// over the combined constraint list.
pub fn kkt_residual(beta: &DVector<f64>, gamma: &[f64], program: &Program, grad: &DVector<f64>) -> Result<f64> {
    check_dim(program.dim(), beta.len())?;
    check_dim(program.dim(), grad.len())?;
    let ids = program.constraint_ids();
    check_dim(ids.len(), gamma.len())?;
    let mut stationarity = grad.clone();
    let mut feasibility = 0.0;
    let mut complementarity = 0.0;
    for (&id, &g) in ids.iter().zip(gamma) {
        let v = program.constraint_value(id, beta);
        feasibility += v.max(0.0);
        complementarity += (g * v).abs();
        if g != 0.0 {
            stationarity += program.constraint_gradient(id, beta) * g;
        }
    }
    Ok(stationarity.norm() + feasibility + complementarity)
}

fn activity_threshold(program: &Program, id: ConstraintId, beta: &DVector<f64>, act_tol: f64) -> f64 {
    match id {
        ConstraintId::General(_) => act_tol * (1.0 + program.constraint_gradient(id, beta).norm()),
        ConstraintId::Lower(i) => act_tol * (1.0 + program.lower[i].abs()),
        ConstraintId::Upper(i) => act_tol * (1.0 + program.upper[i].abs()),
    }
}

/// Positions (in `program.constraint_ids()`) of constraints with
/// `|g_j(beta)|` within the activity tolerance. The tolerance is scaled by
/// `1 + |grad g_j|` for general constraints and `1 + |bound|` for box sides.
pub fn active_set(beta: &DVector<f64>, program: &Program, act_tol: f64) -> Vec<usize> {
    program
        .constraint_ids()
        .into_iter()
        .enumerate()
        .filter(|&(_, id)| program.constraint_value(id, beta).abs() <= activity_threshold(program, id, beta, act_tol))
        .map(|(j, _)| j)
        .collect()
}

/// Linear independence of the active constraint gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Licq {
    Holds { rank: usize },
    Fails { rank: usize, active: usize },
}

impl Licq {
    pub fn holds(&self) -> bool {
        matches!(self, Licq::Holds { .. })
    }
}

/// Singular values below this fraction of the largest count as zero.
const LICQ_RANK_CUTOFF: f64 = 1e-8;

/// Numerical rank test of the stacked active-constraint gradients.
pub fn check_licq(beta: &DVector<f64>, program: &Program, active: &[usize]) -> Licq {
    if active.is_empty() {
        return Licq::Holds { rank: 0 };
    }
    let ids = program.constraint_ids();
    let rows: Vec<_> = active
        .iter()
        .map(|&j| program.constraint_gradient(ids[j], beta).transpose())
        .collect();
    let stacked = DMatrix::from_rows(&rows);
    let sv = stacked.singular_values();
    let max = sv.max();
    let rank = if max > 0.0 {
        sv.iter().filter(|&&s| s > LICQ_RANK_CUTOFF * max).count()
    } else {
        0
    };
    if rank == active.len() {
        Licq::Holds { rank }
    } else {
        Licq::Fails {
            rank,
            active: active.len(),
        }
    }
}

pub(crate) fn mix_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Starting point `index`; depends only on `(seed, index)` so that adding
/// starts never changes the earlier ones.
fn start_point(program: &Program, options: &SolverOptions, index: usize) -> DVector<f64> {
    let k = program.dim();
    let mut x = DVector::zeros(k);
    if index > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(options.seed, index as u64));
        let r = options.start_radius;
        for i in 0..k {
            let lo = program.lower[i].max(-r);
            let hi = program.upper[i].min(r);
            x[i] = if lo < hi {
                rng.gen_range(lo..hi)
            } else if program.lower[i] > r {
                program.lower[i]
            } else {
                program.upper[i].max(lo.min(hi))
            };
        }
        let norm = x.norm();
        if norm > r {
            x *= r / norm;
        }
    }
    program.project(&mut x);
    x
}

struct StartOutcome {
    x: DVector<f64>,
    gamma_general: Vec<f64>,
    iterations: usize,
}

/// Minimizes `objective` over `program` from several starting points and
/// returns the best KKT point found.
///
/// Failure to converge is reported through [`Solution::status`], with the
/// best iterate attached; only invalid inputs produce an error.
pub fn solve(program: &Program, objective: &dyn Objective, options: &SolverOptions) -> Result<Solution> {
    options.validate()?;
    program.validate()?;
    check_dim(program.dim(), objective.dim())?;

    let candidates: Vec<(Solution, usize)> = (0..options.starts)
        .into_par_iter()
        .map(|s| {
            let x0 = start_point(program, options, s);
            let out = if program.general().is_empty() {
                let r = minimize_box(
                    objective,
                    x0,
                    program.lower(),
                    program.upper(),
                    options.kkt_tol * 1e-2,
                    options.max_iter,
                    options.memory,
                );
                StartOutcome {
                    x: r.x,
                    gamma_general: Vec::new(),
                    iterations: r.iterations,
                }
            } else {
                auglag::run(program, objective, x0, options)
            };
            (finish(program, objective, out.x, &out.gamma_general, options), out.iterations)
        })
        .collect();

    let records: Vec<StartRecord> = candidates
        .iter()
        .enumerate()
        .map(|(index, (sol, iterations))| StartRecord {
            index,
            value: sol.value,
            kkt_residual: sol.kkt_residual,
            max_violation: sol.max_violation,
            iterations: *iterations,
            converged: sol.converged(),
        })
        .collect();

    let best = pick_best(&records);
    let mut solution = candidates.into_iter().nth(best).expect("at least one start").0;
    solution.trace = SolveTrace {
        starts: records,
        best_start: best,
    };
    Ok(solution)
}

/// Lowest value among converged starts (ties within 1e-12 go to the lower
/// index); without any converged start, the least infeasible and then
/// lowest value.
fn pick_best(records: &[StartRecord]) -> usize {
    let better = |a: &StartRecord, b: &StartRecord| a.value < b.value - 1e-12;
    let converged: Vec<&StartRecord> = records.iter().filter(|r| r.converged).collect();
    if let Some(first) = converged.first() {
        let mut best = *first;
        for r in &converged[1..] {
            if better(r, best) {
                best = r;
            }
        }
        return best.index;
    }
    let mut best = &records[0];
    for r in &records[1..] {
        let less_violation = r.max_violation < best.max_violation - 1e-12;
        let same_violation = (r.max_violation - best.max_violation).abs() <= 1e-12;
        if less_violation || (same_violation && better(r, best)) {
            best = r;
        }
    }
    best.index
}

/// Multiplier recovery and KKT diagnostics at a final iterate.
fn finish(
    program: &Program,
    objective: &dyn Objective,
    beta: DVector<f64>,
    gamma_general: &[f64],
    options: &SolverOptions,
) -> Solution {
    let ids = program.constraint_ids();
    let (value, grad) = objective.value_grad(&beta);
    let active = active_set(&beta, program, options.act_tol);

    let mut gamma = vec![0.0; ids.len()];
    for (j, &g) in gamma_general.iter().enumerate() {
        if active.contains(&j) {
            gamma[j] = g;
        }
    }
    let grads: Vec<DVector<f64>> = active
        .iter()
        .map(|&j| program.constraint_gradient(ids[j], &beta))
        .collect();
    let refit = multipliers::nonnegative_least_squares(&grad, &grads);
    for (&j, g) in active.iter().zip(refit) {
        gamma[j] = g;
    }

    let max_violation = ids
        .iter()
        .map(|&id| program.constraint_value(id, &beta).max(0.0))
        .fold(0.0, f64::max);
    let residual = kkt_residual(&beta, &gamma, program, &grad).unwrap_or(f64::INFINITY);
    let ok = value.is_finite() && residual <= options.kkt_tol && max_violation <= options.feas_tol;
    Solution {
        beta_hat: beta,
        gamma_hat: gamma,
        constraint_ids: ids,
        value,
        active_set: active,
        kkt_residual: residual,
        max_violation,
        status: if ok {
            SolveStatus::Converged
        } else {
            SolveStatus::NotConverged
        },
        trace: SolveTrace {
            starts: Vec::new(),
            best_start: 0,
        },
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// `|x - target|^2`, or `weight' x` when `linear` is set.
    pub struct Quadratic {
        pub target: DVector<f64>,
        pub scale: DVector<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.target.len()
        }

        fn value_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
            let d = x - &self.target;
            let v = d.iter().zip(self.scale.iter()).map(|(d, s)| s * d * d).sum();
            (v, d.component_mul(&self.scale) * 2.0)
        }

        fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
            Some(DMatrix::from_diagonal(&(&self.scale * 2.0)))
        }
    }

    pub struct Linear(pub DVector<f64>);

    impl Objective for Linear {
        fn dim(&self) -> usize {
            self.0.len()
        }

        fn value_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
            (self.0.dot(x), self.0.clone())
        }

        fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
            Some(DMatrix::zeros(x.len(), x.len()))
        }
    }

    /// Rosenbrock in 2-D without second derivatives.
    pub struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }

        fn value_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = DVector::from_vec(vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ]);
            (v, g)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn box_projection_problem() {
        let program = Program::new(2).with_symmetric_box(1.0);
        let obj = Quadratic { target: v(&[2.0, 0.0]), scale: v(&[1.0, 1.0]) };
        let sol = solve(&program, &obj, &SolverOptions::default()).unwrap();
        assert!(sol.converged());
        assert!((&sol.beta_hat - v(&[1.0, 0.0])).norm() <= 1e-8);
        assert_eq!(sol.active_ids(), vec![ConstraintId::Upper(0)]);
        assert!((sol.multiplier(ConstraintId::Upper(0)) - 2.0).abs() <= 1e-8);
        assert_eq!(sol.gamma_hat.iter().filter(|&&g| g != 0.0).count(), 1);
    }

    #[test]
    fn circle_problem() {
        let program = Program::new(2).with_constraint(NormBall { radius: 1.0, center: None });
        let obj = Linear(v(&[1.0, 1.0]));
        let sol = solve(&program, &obj, &SolverOptions::default()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(sol.converged(), "{sol:?}");
        assert!((&sol.beta_hat - v(&[-h, -h])).norm() <= 1e-8, "{}", sol.beta_hat);
        assert!((sol.gamma_hat[0] - h).abs() <= 1e-8, "{:?}", sol.gamma_hat);
        assert!((sol.value + std::f64::consts::SQRT_2).abs() <= 1e-8);
        assert!(sol.kkt_residual <= 1e-6 && sol.max_violation <= 1e-8);
    }

    #[test]
    fn analytic_kkt_point_has_zero_residual() {
        let program = Program::new(2).with_constraint(NormBall { radius: 1.0, center: None });
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = kkt_residual(&v(&[-h, -h]), &[h], &program, &v(&[1.0, 1.0])).unwrap();
        assert!(r <= 1e-12, "{r}");
    }

    #[test]
    fn interior_residual_is_gradient_norm() {
        let program = Program::new(2).with_symmetric_box(1.0);
        let grad = v(&[0.3, -0.4]);
        let r = kkt_residual(&v(&[0.1, 0.2]), &[0.0; 4], &program, &grad).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
        assert!(kkt_residual(&v(&[0.1, 0.2]), &[0.0; 3], &program, &grad).is_err());
    }

    #[test]
    fn residual_grows_linearly_with_perturbation() {
        let program = Program::new(2).with_constraint(NormBall { radius: 1.0, center: None });
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let dir = v(&[0.6, -0.8]);
        let grad = v(&[1.0, 1.0]);
        let ratios: Vec<f64> = [1e-3, 1e-4, 1e-5]
            .iter()
            .map(|&d| {
                let x = v(&[-h, -h]) + &dir * d;
                kkt_residual(&x, &[h], &program, &grad).unwrap() / d
            })
            .collect();
        for r in &ratios {
            assert!(*r > 0.1 && *r < 10.0, "{ratios:?}");
        }
        assert!((ratios[1] - ratios[2]).abs() / ratios[2] < 0.01);
    }

    #[test]
    fn active_sets_and_licq() {
        let program = Program::new(2).with_symmetric_box(1.0);
        let inner = v(&[0.2, -0.3]);
        assert!(active_set(&inner, &program, 1e-7).is_empty());
        assert_eq!(check_licq(&inner, &program, &[]), Licq::Holds { rank: 0 });

        let corner = v(&[1.0, -1.0]);
        let act = active_set(&corner, &program, 1e-7);
        let ids = program.constraint_ids();
        let got: Vec<_> = act.iter().map(|&j| ids[j]).collect();
        assert_eq!(got, vec![ConstraintId::Upper(0), ConstraintId::Lower(1)]);
        assert_eq!(check_licq(&corner, &program, &act), Licq::Holds { rank: 2 });

        let twice = Program::new(2)
            .with_constraint(LinearConstraint { coefficients: vec![1.0, 1.0], rhs: 1.0 })
            .with_constraint(LinearConstraint { coefficients: vec![1.0, 1.0], rhs: 1.0 });
        let on = v(&[0.5, 0.5]);
        let act = active_set(&on, &twice, 1e-7);
        assert_eq!(act, vec![0, 1]);
        assert_eq!(check_licq(&on, &twice, &act), Licq::Fails { rank: 1, active: 2 });
    }

    #[test]
    fn empty_box_is_an_argument_error() {
        let program = Program::new(1).with_box(vec![1.0], vec![0.0]).unwrap();
        let obj = Quadratic { target: v(&[0.0]), scale: v(&[1.0]) };
        assert!(matches!(solve(&program, &obj, &SolverOptions::default()), Err(Error::Argument(_))));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let program = Program::new(2);
        let opts = SolverOptions { starts: 2, max_iter: 3, ..Default::default() };
        let sol = solve(&program, &Rosenbrock, &opts).unwrap();
        assert_eq!(sol.status, SolveStatus::NotConverged);
        assert!(sol.beta_hat.iter().all(|v| v.is_finite()));
        let sol = solve(&program, &Rosenbrock, &SolverOptions::default()).unwrap();
        assert!(sol.converged());
        assert!((&sol.beta_hat - v(&[1.0, 1.0])).norm() < 1e-5);
    }

    #[test]
    fn more_starts_never_worse() {
        // two separated local minima on the box [-2, 2]
        struct DoubleWell;
        impl Objective for DoubleWell {
            fn dim(&self) -> usize {
                1
            }
            fn value_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
                let t = x[0];
                ((t * t - 1.0).powi(2) + 0.3 * t, v(&[4.0 * t * (t * t - 1.0) + 0.3]))
            }
        }
        let program = Program::new(1).with_symmetric_box(2.0);
        let mut last = f64::INFINITY;
        for starts in 1..=8 {
            let sol = solve(&program, &DoubleWell, &SolverOptions { starts, seed: 3, ..Default::default() }).unwrap();
            assert!(sol.value <= last + 1e-15);
            last = sol.value;
        }
        assert!(last < 0.0);
    }

    #[test]
    fn linear_constraint_with_box() {
        // min (x-2)^2 + (y-2)^2  s.t. x + y <= 1, 0 <= x, y <= 3
        let program = Program::new(2)
            .with_box(vec![0.0, 0.0], vec![3.0, 3.0])
            .unwrap()
            .with_constraint(LinearConstraint { coefficients: vec![1.0, 1.0], rhs: 1.0 });
        let obj = Quadratic { target: v(&[2.0, 2.0]), scale: v(&[1.0, 1.0]) };
        let sol = solve(&program, &obj, &SolverOptions::default()).unwrap();
        assert!(sol.converged(), "{sol:?}");
        assert!((&sol.beta_hat - v(&[0.5, 0.5])).norm() < 1e-8);
        assert!((sol.gamma_hat[0] - 3.0).abs() < 1e-8);
    }
}
