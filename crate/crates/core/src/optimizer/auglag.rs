//! Augmented-Lagrangian loop for general inequality constraints.
//!
//! Uses the Powell-Hestenes-Rockafellar form
//! `f(x) + (1 / 2 rho) sum_j [max(0, gamma_j + rho g_j(x))^2 - gamma_j^2]`
//! with first-order multiplier updates.

use nalgebra::{DMatrix, DVector};

use super::bounded::minimize_box;
use super::{Objective, Program, SolverOptions, StartOutcome};

const RHO_INIT: f64 = 10.0;
const RHO_MAX: f64 = 1e10;
const RHO_GROWTH: f64 = 10.0;

struct Augmented<'a> {
    base: &'a dyn Objective,
    program: &'a Program,
    gamma: &'a [f64],
    rho: f64,
}

impl Augmented<'_> {
    fn shifted(&self, x: &DVector<f64>) -> Vec<f64> {
        self.program
            .general()
            .iter()
            .zip(self.gamma)
            .map(|(c, &g)| (g + self.rho * c.value(x)).max(0.0))
            .collect()
    }
}

impl Objective for Augmented<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let (mut f, mut grad) = self.base.value_grad(x);
        for ((c, &g), s) in self.program.general().iter().zip(self.gamma).zip(self.shifted(x)) {
            f += (s * s - g * g) / (2.0 * self.rho);
            if s > 0.0 {
                grad.axpy(s, &c.gradient(x), 1.0);
            }
        }
        (f, grad)
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut h = self.base.hessian(x)?;
        for (c, s) in self.program.general().iter().zip(self.shifted(x)) {
            if s > 0.0 {
                let gc = c.gradient(x);
                h += c.hessian(x) * s + &gc * gc.transpose() * self.rho;
            }
        }
        Some(h)
    }
}

pub(super) fn run(program: &Program, objective: &dyn Objective, x0: DVector<f64>, options: &SolverOptions) -> StartOutcome {
    let m = program.general().len();
    let mut gamma = vec![0.0; m];
    let mut rho = RHO_INIT;
    let mut x = x0;
    let final_tol = options.kkt_tol * 1e-2;
    let mut inner_tol = (final_tol * 1e4).min(1e-2);
    let mut prev_violation = f64::INFINITY;
    let mut iterations = 0;

    for _ in 0..options.max_outer {
        let aug = Augmented {
            base: objective,
            program,
            gamma: &gamma,
            rho,
        };
        let r = minimize_box(
            &aug,
            x,
            program.lower(),
            program.upper(),
            inner_tol,
            options.max_iter,
            options.memory,
        );
        iterations += r.iterations;
        x = r.x;

        let values: Vec<f64> = program.general().iter().map(|c| c.value(&x)).collect();
        let violation = values
            .iter()
            .zip(&gamma)
            .map(|(&g, &lam)| g.max(-lam / rho).abs())
            .fold(0.0, f64::max);
        for (lam, &g) in gamma.iter_mut().zip(&values) {
            *lam = (*lam + rho * g).max(0.0);
        }
        let infeasible = values.iter().map(|g| g.max(0.0)).fold(0.0, f64::max);
        let complementarity = values
            .iter()
            .zip(&gamma)
            .map(|(g, lam)| (g * lam).abs())
            .fold(0.0, f64::max);

        if r.converged
            && inner_tol <= final_tol
            && infeasible <= options.feas_tol * 0.1
            && complementarity <= final_tol
        {
            break;
        }
        if violation > 0.25 * prev_violation {
            rho = (rho * RHO_GROWTH).min(RHO_MAX);
        }
        prev_violation = violation;
        inner_tol = (inner_tol * 0.1).max(final_tol);
    }

    StartOutcome {
        x,
        gamma_general: gamma,
        iterations,
    }
}
