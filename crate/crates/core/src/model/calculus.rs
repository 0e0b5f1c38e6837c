//! Finite-difference gradient and Hessian of a ground-truth model.
//!
//! These are test oracles for the sparsity structure that the sampling
//! algorithms exploit; they differentiate each component callable directly
//! with central differences (step 1e-5) and never touch the query ledger.

use super::ModelSpec;
use ndarray::Array2;

const FD_STEP: f64 = 1e-5;

pub fn true_gradient(model: &ModelSpec, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; model.dimension()];
    for (p, term) in model.univariate_terms() {
        let t = x[*p];
        g[*p] += (term.eval(t + FD_STEP) - term.eval(t - FD_STEP)) / (2.0 * FD_STEP);
    }
    for ((l, lp), term) in model.bivariate_terms() {
        let (a, b) = (x[*l], x[*lp]);
        g[*l] += (term.eval(a + FD_STEP, b) - term.eval(a - FD_STEP, b)) / (2.0 * FD_STEP);
        g[*lp] += (term.eval(a, b + FD_STEP) - term.eval(a, b - FD_STEP)) / (2.0 * FD_STEP);
    }
    g
}

pub fn true_hessian(model: &ModelSpec, x: &[f64]) -> Array2<f64> {
    let d = model.dimension();
    let mut h = Array2::zeros((d, d));
    for (p, term) in model.univariate_terms() {
        let t = x[*p];
        h[[*p, *p]] +=
            (term.eval(t + FD_STEP) - 2.0 * term.eval(t) + term.eval(t - FD_STEP)) / (FD_STEP * FD_STEP);
    }
    for ((l, lp), term) in model.bivariate_terms() {
        let (a, b) = (x[*l], x[*lp]);
        h[[*l, *l]] +=
            (term.eval(a + FD_STEP, b) - 2.0 * term.eval(a, b) + term.eval(a - FD_STEP, b))
                / (FD_STEP * FD_STEP);
        h[[*lp, *lp]] +=
            (term.eval(a, b + FD_STEP) - 2.0 * term.eval(a, b) + term.eval(a, b - FD_STEP))
                / (FD_STEP * FD_STEP);
        let cross = (term.eval(a + FD_STEP, b + FD_STEP) - term.eval(a + FD_STEP, b - FD_STEP)
            - term.eval(a - FD_STEP, b + FD_STEP)
            + term.eval(a - FD_STEP, b - FD_STEP))
            / (4.0 * FD_STEP * FD_STEP);
        h[[*l, *lp]] += cross;
        h[[*lp, *l]] += cross;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelConfig};
    use crate::seeds::rng_from;
    use rand::Rng;

    const FD_TOL: f64 = 1e-6;

    #[test]
    fn f1_gradient_entries_match_hand_values() {
        let m = build_model(&ModelConfig::builtin("f1_nonoverlap", 20, 0)).unwrap();
        let x = vec![0.5; 20];
        let g = true_gradient(&m, &x);
        assert!((g[0] - 2.0).abs() < FD_TOL);
        assert!(g[6].abs() < FD_TOL);
    }

    #[test]
    fn f1_hessian_cross_entry_is_constant_four() {
        let m = build_model(&ModelConfig::builtin("f1_nonoverlap", 20, 0)).unwrap();
        for x0 in [-0.8, 0.0, 0.7] {
            let x = vec![x0; 20];
            let h = true_hessian(&m, &x);
            assert!((h[[2, 3]] - 4.0).abs() < 1e-5);
            assert!((h[[3, 2]] - 4.0).abs() < 1e-5);
        }
    }

    #[test]
    fn f2_gradient_first_entry_at_origin_is_ten_pi() {
        // analytic cross-check: d/dx 10 sin(pi x) = 10 pi cos(pi x)
        let m = build_model(&ModelConfig::builtin("f2_nonoverlap", 10, 0)).unwrap();
        let x = vec![0.0; 10];
        let g = true_gradient(&m, &x);
        assert!((g[0] - 10.0 * std::f64::consts::PI).abs() < 1e-6, "got {}", g[0]);
    }

    #[test]
    fn gradient_sparsity_never_exceeds_total_sparsity() {
        let mut rng = rng_from(17, &[0]);
        for name in ["f1_nonoverlap", "f2_overlap", "f3_nonoverlap", "f1_overlap"] {
            let m = build_model(&ModelConfig::builtin(name, 30, 0)).unwrap();
            let k = m.total_sparsity();
            for _ in 0..25 {
                let x: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let g = true_gradient(&m, &x);
                let nnz = g.iter().filter(|v| v.abs() > FD_TOL).count();
                assert!(nnz <= k, "{name}: {nnz} > {k}");
            }
        }
    }

    #[test]
    fn hessian_rows_have_at_most_degree_plus_one_entries() {
        let mut rng = rng_from(23, &[0]);
        for name in ["f1_overlap", "f3_overlap"] {
            let m = build_model(&ModelConfig::builtin(name, 25, 0)).unwrap();
            let rho = m.rho_max();
            for _ in 0..25 {
                let x: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let h = true_hessian(&m, &x);
                for r in 0..25 {
                    let nnz = (0..25).filter(|&c| h[[r, c]].abs() > FD_TOL).count();
                    assert!(nnz <= rho + 1, "{name} row {r}: {nnz} > {}", rho + 1);
                }
            }
        }
    }
}
