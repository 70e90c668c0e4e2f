//! Score function, basis expansion and empirical cross-entropy risks.
//!
//! With pseudo-outcomes `t_i` (doubly-robust `phi_i`, or regression
//! predictions `mu_i` for the plug-in variant) and linear index
//! `u_i = beta' b(v_i)`, the risk is
//!
//! ```text
//! L(beta) = -mean( t_i log s(u_i) + (1 - t_i) log(1 - s(u_i)) )
//! ```
//!
//! which is linear in `t` and convex in `beta` for every `t`, since its
//! Hessian `mean(s_i (1 - s_i) b_i b_i')` does not depend on `t`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Result};
use crate::influence::PseudoOutcomes;
use crate::optimizer::Objective;

/// Lower clamp for the arguments of the logarithms in the risk.
pub const LOG_FLOOR: f64 = 1e-12;

/// Overflow-safe logistic function. The result is kept strictly inside
/// `(0, 1)`: it never underflows to 0 or rounds up to 1.
pub fn sigmoid(u: f64) -> f64 {
    let s = if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `log(1 + e^v)` without overflow.
pub fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

/// `log s(u)` with the argument floored at [`LOG_FLOOR`].
fn clamped_log_sigmoid(u: f64) -> f64 {
    (-softplus(-u)).max(LOG_FLOOR.ln())
}

/// A single basis term: the product of the listed prediction covariates
/// (0-based positions within V, repeats allowed). An empty list is the
/// constant 1.
pub type Term = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// The prediction covariates themselves.
    Raw,
    /// Linear terms, squares, then pairwise products in lexicographic order.
    QuadraticWithInteractions,
    Custom(Vec<Term>),
}

/// Basis `b(v)` used in the score `s(beta' b(v))`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub kind: BasisKind,
    #[serde(default)]
    pub include_intercept: bool,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            kind: BasisKind::QuadraticWithInteractions,
            include_intercept: false,
        }
    }
}

impl BasisSpec {
    /// Output dimension for `d_v` prediction covariates.
    pub fn k_prime(&self, d_v: usize) -> usize {
        let core = match &self.kind {
            BasisKind::Raw => d_v,
            BasisKind::QuadraticWithInteractions => 2 * d_v + d_v * d_v.saturating_sub(1) / 2,
            BasisKind::Custom(terms) => terms.len(),
        };
        core + usize::from(self.include_intercept)
    }

    /// Human-readable column names, e.g. `x1*x2`.
    pub fn column_names(&self, v_names: &[String]) -> Vec<String> {
        let mut names = Vec::new();
        if self.include_intercept {
            names.push("(intercept)".to_string());
        }
        for term in terms_for(&self.kind, v_names.len()) {
            if term.is_empty() {
                names.push("1".into());
            } else {
                names.push(term.iter().map(|&j| v_names[j].as_str()).collect::<Vec<_>>().join("*"));
            }
        }
        names
    }
}

fn terms_for(kind: &BasisKind, d: usize) -> Vec<Term> {
    match kind {
        BasisKind::Raw => (0..d).map(|j| vec![j]).collect(),
        BasisKind::QuadraticWithInteractions => {
            let mut t: Vec<Term> = (0..d).map(|j| vec![j]).collect();
            t.extend((0..d).map(|j| vec![j, j]));
            for i in 0..d {
                for j in i + 1..d {
                    t.push(vec![i, j]);
                }
            }
            t
        }
        BasisKind::Custom(terms) => terms.clone(),
    }
}

/// Expands the columns of `v` into basis columns. Custom terms must only
/// reference columns of `v`.
pub fn expand_matrix(kind: &BasisKind, include_intercept: bool, v: &DMatrix<f64>) -> DMatrix<f64> {
    let terms = terms_for(kind, v.ncols());
    let offset = usize::from(include_intercept);
    let mut out = DMatrix::zeros(v.nrows(), terms.len() + offset);
    if include_intercept {
        out.column_mut(0).fill(1.0);
    }
    for (c, term) in terms.iter().enumerate() {
        let mut col = out.column_mut(c + offset);
        col.fill(1.0);
        for &j in term {
            col.component_mul_assign(&v.column(j));
        }
    }
    out
}

/// The n × k' basis matrix evaluated at each row's prediction covariates.
pub fn expand_basis(spec: &BasisSpec, data: &Dataset) -> Result<DMatrix<f64>> {
    let v = data.v();
    if let BasisKind::Custom(terms) = &spec.kind {
        if let Some(&bad) = terms.iter().flatten().find(|&&j| j >= v.ncols()) {
            return Err(crate::Error::Argument(format!(
                "basis term references covariate {bad} but V has {} columns",
                v.ncols()
            )));
        }
    }
    Ok(expand_matrix(&spec.kind, spec.include_intercept, &v))
}

/// Risk value, gradient and optionally Hessian at one `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: Option<DMatrix<f64>>,
}

fn check(beta: &DVector<f64>, targets: usize, basis: &DMatrix<f64>) -> Result<()> {
    check_dim(basis.ncols(), beta.len())?;
    check_dim(basis.nrows(), targets)
}

/// Cross-entropy risk for arbitrary real targets.
pub fn risk_value(beta: &DVector<f64>, targets: &[f64], basis: &DMatrix<f64>) -> Result<f64> {
    check(beta, targets.len(), basis)?;
    let u = basis * beta;
    let total: f64 = u
        .iter()
        .zip(targets)
        .map(|(&u, &t)| -(t * clamped_log_sigmoid(u) + (1.0 - t) * clamped_log_sigmoid(-u)))
        .sum();
    Ok(total / targets.len() as f64)
}

/// Doubly-robust risk: the cross-entropy against the pseudo-outcomes.
pub fn dr_risk(beta: &DVector<f64>, phi: &PseudoOutcomes, basis: &DMatrix<f64>) -> Result<f64> {
    risk_value(beta, phi.values(), basis)
}

/// Plug-in risk: the cross-entropy against outcome-regression predictions.
pub fn plugin_risk(beta: &DVector<f64>, mu_hat: &[f64], basis: &DMatrix<f64>) -> Result<f64> {
    risk_value(beta, mu_hat, basis)
}

/// `mean((s(u_i) - t_i) b_i)`.
pub fn risk_gradient(beta: &DVector<f64>, targets: &[f64], basis: &DMatrix<f64>) -> Result<DVector<f64>> {
    check(beta, targets.len(), basis)?;
    Ok(gradient_unchecked(beta, targets, basis))
}

fn gradient_unchecked(beta: &DVector<f64>, targets: &[f64], basis: &DMatrix<f64>) -> DVector<f64> {
    let mut r = basis * beta;
    for (r, &t) in r.iter_mut().zip(targets) {
        *r = sigmoid(*r) - t;
    }
    basis.tr_mul(&r) / targets.len() as f64
}

/// `mean(s_i (1 - s_i) b_i b_i')`; independent of the targets.
pub fn risk_hessian(beta: &DVector<f64>, basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim(basis.ncols(), beta.len())?;
    Ok(hessian_unchecked(beta, basis))
}

fn hessian_unchecked(beta: &DVector<f64>, basis: &DMatrix<f64>) -> DMatrix<f64> {
    let w = (basis * beta).map(|u| {
        let s = sigmoid(u);
        s * (1.0 - s)
    });
    let mut h = crate::learners::weighted_gram(basis, &w) / basis.nrows().max(1) as f64;
    // exact symmetry for downstream factorizations
    h.fill_lower_triangle_with_upper_triangle();
    h
}

/// Value, gradient and (optionally) Hessian in one call.
pub fn evaluate(beta: &DVector<f64>, targets: &[f64], basis: &DMatrix<f64>, with_hessian: bool) -> Result<RiskEval> {
    Ok(RiskEval {
        value: risk_value(beta, targets, basis)?,
        gradient: gradient_unchecked(beta, targets, basis),
        hessian: with_hessian.then(|| hessian_unchecked(beta, basis)),
    })
}

/// Per-row gradient contributions `(s(u_i) - t_i) b_i` as the rows of an
/// n × k matrix.
pub fn gradient_contributions(beta: &DVector<f64>, targets: &[f64], basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check(beta, targets.len(), basis)?;
    let u = basis * beta;
    let mut out = basis.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= sigmoid(u[i]) - targets[i];
    }
    Ok(out)
}

/// The risk as an optimizer objective.
#[derive(Debug, Clone)]
pub struct RiskObjective<'a> {
    basis: &'a DMatrix<f64>,
    targets: &'a [f64],
}

impl<'a> RiskObjective<'a> {
    pub fn new(basis: &'a DMatrix<f64>, targets: &'a [f64]) -> Result<Self> {
        check_dim(basis.nrows(), targets.len())?;
        Ok(Self { basis, targets })
    }
}

impl Objective for RiskObjective<'_> {
    fn dim(&self) -> usize {
        self.basis.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        risk_value(x, self.targets, self.basis).expect("dimension checked")
    }

    fn value_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.value(x), gradient_unchecked(x, self.targets, self.basis))
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(hessian_unchecked(x, self.basis))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(seed: u64, n: usize, k: usize) -> (DVector<f64>, Vec<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
        let phi = (0..n).map(|_| rng.gen_range(-0.5..1.5)).collect();
        let basis = DMatrix::from_fn(n, k, |_, _| rng.gen_range(-1.5..1.5));
        (beta, phi, basis)
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        for u in [1.0, 10.0, 50.0] {
            assert!((sigmoid(-u) - (1.0 - sigmoid(u))).abs() < 1e-15, "{u}");
            assert!((sigmoid(u) - (1.0 - sigmoid(-u))).abs() < 1e-15, "{u}");
        }
        assert!(sigmoid(-800.0) > 0.0);
        assert!(sigmoid(800.0) < 1.0);
    }

    #[test]
    fn sigmoid_tail_matches_extended_precision() {
        // e^{-u} / (1 + e^{-u}) for u = 30, 700 evaluated in closed form:
        // ln s(-700) = -700 - ln(1 + e^{-700}) ~ -700.
        let s = sigmoid(-30.0);
        let reference = 9.357622968839299e-14; // e^-30 / (1 + e^-30)
        assert!((s - reference).abs() / reference < 1e-14);
        assert!((sigmoid(-700.0).ln() + 700.0).abs() < 1e-9);
    }

    #[test]
    fn quadratic_basis_order() {
        let v = DMatrix::from_row_slice(1, 2, &[2.0, 3.0]);
        let b = expand_matrix(&BasisKind::QuadraticWithInteractions, true, &v);
        assert_eq!(b.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0, 4.0, 9.0, 6.0]);
        let spec = BasisSpec { kind: BasisKind::QuadraticWithInteractions, include_intercept: true };
        assert_eq!(spec.k_prime(2), 6);
        let names = spec.column_names(&["x1".into(), "x2".into()]);
        assert_eq!(names, ["(intercept)", "x1", "x2", "x1*x1", "x2*x2", "x1*x2"]);
    }

    #[test]
    fn basis_dimensions() {
        let raw = BasisSpec { kind: BasisKind::Raw, include_intercept: false };
        assert_eq!(raw.k_prime(3), 3);
        assert_eq!(BasisSpec { include_intercept: true, ..raw }.k_prime(3), 4);
        assert_eq!(BasisSpec::default().k_prime(6), 27);
        let v = DMatrix::from_fn(4, 6, |i, j| (i + j) as f64);
        assert_eq!(expand_matrix(&BasisKind::QuadraticWithInteractions, false, &v).ncols(), 27);
        let custom = BasisKind::Custom(vec![vec![], vec![0, 0, 1]]);
        let b = expand_matrix(&custom, false, &DMatrix::from_row_slice(1, 2, &[2.0, 5.0]));
        assert_eq!(b.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 20.0]);
    }

    #[test]
    fn zero_beta_gives_log_two() {
        let (_, phi, basis) = random_instance(1, 15, 4);
        let r = risk_value(&DVector::zeros(4), &phi, &basis).unwrap();
        assert!((r - std::f64::consts::LN_2).abs() < 1e-14);
    }

    #[test]
    fn two_row_hand_evaluation() {
        // u = logit(0.8), logit(0.2) so scores are 0.8, 0.2
        let l = (0.8f64 / 0.2).ln();
        let basis = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let r = risk_value(&DVector::from_vec(vec![l]), &[1.0, 0.0], &basis).unwrap();
        assert!((r - 0.22314355131420976).abs() < 1e-12, "{r}");
    }

    #[test]
    fn plugin_matches_dr_on_same_targets() {
        let (beta, mu, basis) = random_instance(3, 12, 3);
        let phi = PseudoOutcomes::from_values(mu.clone(), 1);
        assert_eq!(
            plugin_risk(&beta, &mu, &basis).unwrap(),
            dr_risk(&beta, &phi, &basis).unwrap()
        );
    }

    #[test]
    fn plugin_minimized_at_matching_scores() {
        let (beta, _, basis) = random_instance(4, 30, 3);
        let mu: Vec<f64> = (&basis * &beta).iter().map(|&u| sigmoid(u)).collect();
        let g = risk_gradient(&beta, &mu, &basis).unwrap();
        assert!(g.norm() < 1e-15);
        let entropy: f64 = mu.iter().map(|&s| -(s * s.ln() + (1.0 - s) * (1.0 - s).ln())).sum::<f64>() / 30.0;
        assert!((plugin_risk(&beta, &mu, &basis).unwrap() - entropy).abs() < 1e-12);
    }

    #[test]
    fn gradient_special_cases() {
        let (_, _, basis) = random_instance(5, 10, 3);
        let g = risk_gradient(&DVector::zeros(3), &[0.5; 10], &basis).unwrap();
        assert!(g.norm() < 1e-16);
        let pos = basis.map(|v| v.abs() + 0.1);
        let beta = DVector::from_vec(vec![0.3, -0.2, 0.1]);
        let g = risk_gradient(&beta, &[1.0; 10], &pos).unwrap();
        assert!(g.iter().all(|&c| c < 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-5;
        for seed in 0..100 {
            let (beta, phi, basis) = random_instance(100 + seed, 20, 5);
            let g = risk_gradient(&beta, &phi, &basis).unwrap();
            for j in 0..5 {
                let mut up = beta.clone();
                let mut dn = beta.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (risk_value(&up, &phi, &basis).unwrap() - risk_value(&dn, &phi, &basis).unwrap()) / (2.0 * h);
                let rel = (fd - g[j]).abs() / g.norm().max(1e-8);
                assert!(rel <= 1e-6, "seed {seed} coord {j}: {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_gradient() {
        let h = 1e-5;
        for seed in 0..20 {
            let (beta, phi, basis) = random_instance(300 + seed, 20, 5);
            let hess = risk_hessian(&beta, &basis).unwrap();
            for j in 0..5 {
                let mut up = beta.clone();
                let mut dn = beta.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (risk_gradient(&up, &phi, &basis).unwrap() - risk_gradient(&dn, &phi, &basis).unwrap()) / (2.0 * h);
                let err = (fd - hess.column(j)).norm() / hess.norm();
                assert!(err <= 1e-5, "seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn scalar_hessian_at_zero() {
        let basis = DMatrix::from_element(7, 1, 1.0);
        let h = risk_hessian(&DVector::zeros(1), &basis).unwrap();
        assert!((h[(0, 0)] - 0.25).abs() < 1e-16);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let basis = DMatrix::zeros(3, 2);
        assert!(risk_value(&DVector::zeros(3), &[0.0; 3], &basis).is_err());
        assert!(risk_gradient(&DVector::zeros(2), &[0.0; 2], &basis).is_err());
        assert!(risk_hessian(&DVector::zeros(1), &basis).is_err());
    }

    #[test]
    fn clamped_risk_stays_finite() {
        let basis = DMatrix::from_element(2, 1, 1.0);
        let r = risk_value(&DVector::from_vec(vec![1e4]), &[1.5, -0.5], &basis).unwrap();
        assert!(r.is_finite());
        // beyond |u| ~ 27.6 the log argument is floored
        let far = risk_value(&DVector::from_vec(vec![100.0]), &[0.0, 0.0], &basis).unwrap();
        assert!((far + LOG_FLOOR.ln()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn risk_is_affine_in_targets(seed in 0u64..10_000, alpha in 0.0f64..1.0) {
            let (beta, p1, basis) = random_instance(seed, 9, 3);
            let (_, p2, _) = random_instance(seed + 1, 9, 3);
            let mix: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
            let lhs = risk_value(&beta, &mix, &basis).unwrap();
            let rhs = alpha * risk_value(&beta, &p1, &basis).unwrap() + (1.0 - alpha) * risk_value(&beta, &p2, &basis).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn hessian_is_symmetric_psd(seed in 0u64..10_000, scale in 0.1f64..20.0) {
            let (beta, _, basis) = random_instance(seed, 12, 4);
            let h = risk_hessian(&(beta * scale), &basis).unwrap();
            prop_assert_eq!(h.clone(), h.transpose());
            let min = h.symmetric_eigenvalues().min();
            prop_assert!(min >= -1e-14 * h.norm().max(1.0), "min eigenvalue {}", min);
        }
    }
}
