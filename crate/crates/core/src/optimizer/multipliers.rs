use nalgebra::{DMatrix, DVector};

/// Nonnegative `gamma` minimizing `|grad + sum_j gamma_j a_j|_2`
/// (Lawson-Hanson active-set method).
pub(super) fn nonnegative_least_squares(grad: &DVector<f64>, columns: &[DVector<f64>]) -> Vec<f64> {
    let m = columns.len();
    if m == 0 {
        return Vec::new();
    }
    let a = DMatrix::from_columns(columns);
    let b = -grad;
    let scale = a.norm().max(1.0) * b.norm().max(1.0);
    let tol = 1e-13 * scale;

    let mut x = DVector::zeros(m);
    let mut passive = vec![false; m];
    for _ in 0..3 * m + 10 {
        let w = a.tr_mul(&(&b - &a * &x));
        let candidate = (0..m)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;

        loop {
            let z = solve_passive(&a, &b, &passive);
            if (0..m).filter(|&i| passive[i]).all(|i| z[i] > 0.0) {
                x = z;
                break;
            }
            // step back toward x until a passive coordinate hits zero
            let mut alpha = 1.0f64;
            for i in (0..m).filter(|&i| passive[i] && z[i] <= 0.0) {
                let denom = x[i] - z[i];
                if denom > 0.0 {
                    alpha = alpha.min(x[i] / denom);
                }
            }
            x += (&z - &x) * alpha;
            for i in 0..m {
                if passive[i] && x[i] <= tol {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x.iter().map(|&v| v.max(0.0)).collect()
}

fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let sub = a.select_columns(&idx);
    let mut out = DVector::zeros(passive.len());
    if let Ok(sol) = sub.svd(true, true).solve(b, 1e-12) {
        for (k, &i) in idx.iter().enumerate() {
            out[i] = sol[k];
        }
    }
    out
}
