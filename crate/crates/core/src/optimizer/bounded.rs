//! Bound-constrained minimization: projected L-BFGS on the free variables,
//! followed by projected Newton polishing when a Hessian is available.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::Objective;
use crate::learners::solve_spd;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 50;
const MAX_NEWTON: usize = 50;

#[derive(Debug, Clone)]
pub struct BoxResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    /// Norm of `x - P(x - grad)`.
    pub projected_gradient: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project(x: &mut DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

fn projected_gradient_norm(x: &DVector<f64>, g: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> f64 {
    (0..x.len())
        .map(|i| {
            let d = x[i] - (x[i] - g[i]).clamp(lower[i], upper[i]);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Coordinates not held at a bound by the gradient.
fn free_mask(x: &DVector<f64>, g: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> Vec<bool> {
    (0..x.len())
        .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
        .collect()
}

fn masked(v: &DVector<f64>, mask: &[bool]) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().zip(mask).map(|(&v, &m)| if m { v } else { 0.0 }))
}

struct Memory {
    pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)>,
    cap: usize,
}

impl Memory {
    fn push(&mut self, s: DVector<f64>, y: DVector<f64>) {
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if self.pairs.len() == self.cap {
                self.pairs.pop_front();
            }
            self.pairs.push_back((s, y, 1.0 / sy));
        }
    }

    /// Two-loop recursion: approximate inverse Hessian times `q`.
    fn apply(&self, mut q: DVector<f64>) -> DVector<f64> {
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            q *= s.dot(y) / y.norm_squared();
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        q
    }
}

/// Projected Armijo backtracking along `x + t d`. Returns the accepted
/// point with its value and gradient.
fn line_search(
    obj: &dyn Objective,
    x: &DVector<f64>,
    f: f64,
    g: &DVector<f64>,
    d: &DVector<f64>,
    t0: f64,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Option<(DVector<f64>, f64, DVector<f64>)> {
    let mut t = t0;
    for _ in 0..MAX_BACKTRACK {
        let mut cand = x + d * t;
        project(&mut cand, lower, upper);
        let step = &cand - x;
        if step.norm() == 0.0 {
            return None;
        }
        let decrease = g.dot(&step);
        let (fc, gc) = obj.value_grad(&cand);
        if fc.is_finite() && fc <= f + ARMIJO * decrease && decrease < 0.0 {
            return Some((cand, fc, gc));
        }
        t *= 0.5;
    }
    None
}

/// Full Newton step accepted on gradient progress alone, for use once the
/// predicted decrease is below the rounding error of `f` and Armijo
/// backtracking would only shrink the step to nothing.
fn noise_level_step(
    obj: &dyn Objective,
    x: &DVector<f64>,
    f: f64,
    pg: f64,
    d: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Option<(DVector<f64>, f64, DVector<f64>)> {
    let mut cand = x + d;
    project(&mut cand, lower, upper);
    let (fc, gc) = obj.value_grad(&cand);
    let noise = 1e-12 * f.abs().max(1.0);
    let pgc = projected_gradient_norm(&cand, &gc, lower, upper);
    (fc.is_finite() && fc <= f + noise && pgc <= 0.5 * pg).then_some((cand, fc, gc))
}

/// Minimizes `obj` over the box `[lower, upper]` from `x0` until the
/// projected gradient norm is at most `tol` or `max_iter` quasi-Newton
/// iterations have run.
pub fn minimize_box(
    obj: &dyn Objective,
    mut x: DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    tol: f64,
    max_iter: usize,
    memory: usize,
) -> BoxResult {
    project(&mut x, lower, upper);
    let (mut f, mut g) = obj.value_grad(&x);
    let mut mem = Memory {
        pairs: VecDeque::with_capacity(memory),
        cap: memory.max(1),
    };
    let mut iterations = 0;
    let mut pg = projected_gradient_norm(&x, &g, lower, upper);
    let has_hessian = obj.hessian(&x).is_some();
    // with second derivatives available the quasi-Newton phase only needs
    // to get close; Newton steps finish the job
    let qn_tol = if has_hessian { tol.max(1e-4) } else { tol };

    while pg > qn_tol && iterations < max_iter {
        iterations += 1;
        let mask = free_mask(&x, &g, lower, upper);
        let gf = masked(&g, &mask);
        let mut d = -masked(&mem.apply(gf.clone()), &mask);
        let mut t0 = 1.0;
        if mem.pairs.is_empty() || gf.dot(&d) >= -1e-12 * gf.norm() * d.norm() {
            d = -gf.clone();
            mem.pairs.clear();
            t0 = (1.0 / d.norm()).min(1.0);
        }
        let step = line_search(obj, &x, f, &g, &d, t0, lower, upper).or_else(|| {
            // retry with steepest descent from a fresh memory
            mem.pairs.clear();
            let d = -gf.clone();
            line_search(obj, &x, f, &g, &d, (1.0 / d.norm()).min(1.0), lower, upper)
        });
        let Some((xn, fnew, gn)) = step else {
            break;
        };
        mem.push(&xn - &x, &gn - &g);
        x = xn;
        f = fnew;
        g = gn;
        pg = projected_gradient_norm(&x, &g, lower, upper);
    }

    if has_hessian && pg > tol * 1e-3 {
        for _ in 0..MAX_NEWTON {
            let Some(h) = obj.hessian(&x) else { break };
            let mask = free_mask(&x, &g, lower, upper);
            let free: Vec<usize> = (0..x.len()).filter(|&i| mask[i]).collect();
            if free.is_empty() {
                break;
            }
            let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let gff = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
            let step = solve_spd(hff, &gff);
            let mut d = DVector::zeros(x.len());
            for (a, &i) in free.iter().enumerate() {
                d[i] = -step[a];
            }
            let accepted = if f + ARMIJO * g.dot(&d) < f {
                line_search(obj, &x, f, &g, &d, 1.0, lower, upper)
            } else {
                noise_level_step(obj, &x, f, pg, &d, lower, upper)
            };
            let Some((xn, fnew, gn)) = accepted else {
                break;
            };
            iterations += 1;
            let pgn = projected_gradient_norm(&xn, &gn, lower, upper);
            x = xn;
            f = fnew;
            g = gn;
            pg = pgn;
            if pg <= tol * 1e-3 {
                break;
            }
        }
    }

    BoxResult {
        converged: pg <= tol,
        x,
        value: f,
        gradient: g,
        projected_gradient: pg,
        iterations,
    }
}
