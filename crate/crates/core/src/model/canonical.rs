//! Unique ANOVA form of an additive model with pairwise interactions.
//!
//! Every component is recentred so that univariates have zero mean, bivariates
//! have zero mean (and zero marginal mean against any shared variable of
//! degree > 1), and variables appearing both alone and inside a pair are
//! absorbed into the interaction side. Expectations are composite-Simpson
//! integrals over uniform `[-1, 1]`.

use super::terms::{BivariateTerm, UnivariateTerm};
use super::{ModelError, ModelSpec};
use crate::linalg::simpson;
use std::sync::Arc;

/// One canonicalized univariate component (plain or net-marginal).
#[derive(Clone)]
pub struct Component1 {
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Component1 {
    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }
}

/// One canonicalized bivariate component.
#[derive(Clone)]
pub struct Component2 {
    eval: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl Component2 {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.eval)(x, y)
    }
}

#[derive(Clone)]
pub struct CanonicalModel {
    pub c: f64,
    /// Centered components for indices acting alone (disjoint from any pair).
    pub univariates: Vec<(usize, Component1)>,
    pub bivariates: Vec<((usize, usize), Component2)>,
    /// Net marginal effect of variables with interaction degree > 1.
    pub net_marginals: Vec<(usize, Component1)>,
    pub quad_n: usize,
}

fn mean1(term: &UnivariateTerm, quad_n: usize) -> f64 {
    simpson(|t| term.eval(t), -1.0, 1.0, quad_n) / 2.0
}

fn mean2(term: &BivariateTerm, quad_n: usize) -> f64 {
    simpson(
        |x| simpson(|y| term.eval(x, y), -1.0, 1.0, quad_n),
        -1.0,
        1.0,
        quad_n,
    ) / 4.0
}

/// Marginal over the first argument: returns a function of the second.
fn marginal_fst(term: &Arc<BivariateTerm>, quad_n: usize, y: f64) -> f64 {
    simpson(|x| term.eval(x, y), -1.0, 1.0, quad_n) / 2.0
}

/// Marginal over the second argument: returns a function of the first.
fn marginal_snd(term: &Arc<BivariateTerm>, quad_n: usize, x: f64) -> f64 {
    simpson(|y| term.eval(x, y), -1.0, 1.0, quad_n) / 2.0
}

/// Computes the unique ANOVA form of `model` with composite-Simpson
/// expectations on `quad_n` panels per axis (`quad_n` even, at least 16).
pub fn anova_canonicalize(model: &ModelSpec, quad_n: usize) -> Result<CanonicalModel, ModelError> {
    if quad_n < 16 || quad_n % 2 != 0 {
        return Err(ModelError::QuadratureTooCoarse(quad_n));
    }
    let s2_var = model.s2_var();

    // Constant: the full-cube mean of the raw model.
    let mut c = 0.0;
    for (_, term) in model.univariate_terms() {
        c += mean1(term, quad_n);
    }
    for (_, term) in model.bivariate_terms() {
        c += mean2(term, quad_n);
    }

    // Raw univariates merge into pairs (degree 1) or net marginals (degree > 1).
    let mut merged_fst: Vec<Vec<UnivariateTerm>> =
        vec![Vec::new(); model.bivariate_terms().len()];
    let mut merged_snd: Vec<Vec<UnivariateTerm>> =
        vec![Vec::new(); model.bivariate_terms().len()];
    let mut net_extra: Vec<(usize, UnivariateTerm)> = Vec::new();
    let mut univariates = Vec::new();
    for (p, term) in model.univariate_terms() {
        if !s2_var.contains(p) {
            let m = mean1(term, quad_n);
            let t = term.clone();
            univariates.push((
                *p,
                Component1 { eval: Arc::new(move |x| t.eval(x) - m) },
            ));
        } else if model.degree(*p) == 1 {
            let slot = model
                .bivariate_terms()
                .iter()
                .position(|&((l, lp), _)| l == *p || lp == *p)
                .expect("degree-1 variable must have a pair");
            let ((l, _), _) = model.bivariate_terms()[slot];
            if l == *p {
                merged_fst[slot].push(term.clone());
            } else {
                merged_snd[slot].push(term.clone());
            }
        } else {
            net_extra.push((*p, term.clone()));
        }
    }

    // Bivariates with merged univariates folded in, then degree-based centering.
    let mut bivariates = Vec::new();
    let mut bases: Vec<Arc<BivariateTerm>> = Vec::new();
    for (slot, ((l, lp), term)) in model.bivariate_terms().iter().enumerate() {
        let mut parts = vec![term.clone()];
        for u in &merged_fst[slot] {
            parts.push(BivariateTerm::Separable {
                fx: u.clone(),
                fy: UnivariateTerm::Poly { coeffs: vec![1.0] },
            });
        }
        for u in &merged_snd[slot] {
            parts.push(BivariateTerm::Separable {
                fx: UnivariateTerm::Poly { coeffs: vec![1.0] },
                fy: u.clone(),
            });
        }
        let base = Arc::new(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            BivariateTerm::Sum { terms: parts }
        });
        bases.push(Arc::clone(&base));
        let deg_l = model.degree(*l) > 1;
        let deg_lp = model.degree(*lp) > 1;
        let m = mean2(&base, quad_n);
        let b = Arc::clone(&base);
        let eval: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> = match (deg_l, deg_lp) {
            (false, false) => Arc::new(move |x, y| b.eval(x, y) - m),
            (false, true) => Arc::new(move |x, y| b.eval(x, y) - marginal_fst(&b, quad_n, y)),
            (true, false) => Arc::new(move |x, y| b.eval(x, y) - marginal_snd(&b, quad_n, x)),
            (true, true) => Arc::new(move |x, y| {
                b.eval(x, y) - marginal_fst(&b, quad_n, y) - marginal_snd(&b, quad_n, x) + m
            }),
        };
        bivariates.push(((*l, *lp), Component2 { eval }));
    }

    // Net marginals for degree > 1 variables: the summed first-order parts of
    // every pair containing the variable, plus any absorbed raw univariate.
    let mut net_marginals = Vec::new();
    for &q in &s2_var {
        if model.degree(q) <= 1 {
            continue;
        }
        let mut pieces: Vec<(Arc<BivariateTerm>, bool, f64)> = Vec::new();
        for (slot, ((l, lp), _)) in model.bivariate_terms().iter().enumerate() {
            if *l == q {
                // q in the first slot: marginalize out the second argument
                let m = mean2(&bases[slot], quad_n);
                pieces.push((Arc::clone(&bases[slot]), true, m));
            } else if *lp == q {
                let m = mean2(&bases[slot], quad_n);
                pieces.push((Arc::clone(&bases[slot]), false, m));
            }
        }
        let extras: Vec<(UnivariateTerm, f64)> = net_extra
            .iter()
            .filter(|(p, _)| *p == q)
            .map(|(_, t)| (t.clone(), mean1(t, quad_n)))
            .collect();
        let eval: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(move |t| {
            let mut acc = 0.0;
            for (base, q_is_first, m) in &pieces {
                acc += if *q_is_first {
                    marginal_snd(base, quad_n, t) - m
                } else {
                    marginal_fst(base, quad_n, t) - m
                };
            }
            for (u, m) in &extras {
                acc += u.eval(t) - m;
            }
            acc
        });
        net_marginals.push((q, Component1 { eval }));
    }

    Ok(CanonicalModel { c, univariates, bivariates, net_marginals, quad_n })
}

impl CanonicalModel {
    /// Evaluates the canonical representation at a full point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = self.c;
        for (p, comp) in &self.univariates {
            acc += comp.eval(x[*p]);
        }
        for ((l, lp), comp) in &self.bivariates {
            acc += comp.eval(x[*l], x[*lp]);
        }
        for (q, comp) in &self.net_marginals {
            acc += comp.eval(x[*q]);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelConfig, ModelSpec};
    use crate::seeds::rng_from;
    use rand::Rng;

    const QUAD_TOL: f64 = 1e-8;
    const QUAD_N: usize = 256;

    // Independent quadrature oracle for the tests: plain Simpson on closures,
    // written against raw term callables rather than the canonical machinery.
    fn oracle_mean1(f: impl Fn(f64) -> f64) -> f64 {
        simpson(f, -1.0, 1.0, 512) / 2.0
    }

    fn oracle_mean2(f: impl Fn(f64, f64) -> f64 + Copy) -> f64 {
        simpson(|x| simpson(move |y| f(x, y), -1.0, 1.0, 512), -1.0, 1.0, 512) / 4.0
    }

    #[test]
    fn rejects_coarse_quadrature() {
        let m = build_model(&ModelConfig::builtin("f1_nonoverlap", 10, 0)).unwrap();
        assert!(matches!(anova_canonicalize(&m, 8), Err(ModelError::QuadratureTooCoarse(8))));
    }

    #[test]
    fn f1_canonical_form_matches_quadrature_oracle() {
        let m = build_model(&ModelConfig::builtin("f1_nonoverlap", 10, 0)).unwrap();
        let canon = anova_canonicalize(&m, QUAD_N).unwrap();
        // oracle: E[-3t^2] = -1, everything else zero-mean
        let expected_c = oracle_mean1(|t| -3.0 * t * t);
        assert!((canon.c - expected_c).abs() < QUAD_TOL);
        assert!((canon.c + 1.0).abs() < QUAD_TOL);
        let phi1 = canon.univariates.iter().find(|(p, _)| *p == 0).unwrap();
        let phi2 = canon.univariates.iter().find(|(p, _)| *p == 1).unwrap();
        for i in 0..9 {
            let t = -1.0 + 0.25 * i as f64;
            assert!((phi1.1.eval(t) - 2.0 * t).abs() < QUAD_TOL);
            assert!((phi2.1.eval(t) - (-3.0 * t * t + 1.0)).abs() < QUAD_TOL);
        }
        // bivariates unchanged (already zero-mean)
        let b34 = &canon.bivariates[0].1;
        assert!((b34.eval(0.5, -0.5) - 4.0 * 0.5 * -0.5).abs() < QUAD_TOL);
        assert!(canon.net_marginals.is_empty());
    }

    #[test]
    fn zero_mean_model_is_left_unchanged() {
        let m = ModelSpec::new(
            6,
            vec![(0, UnivariateTerm::linear(3.0)), (1, UnivariateTerm::Sin { amp: 2.0, freq: std::f64::consts::PI })],
            vec![((2, 3), BivariateTerm::bilinear(1.5))],
        )
        .unwrap();
        let canon = anova_canonicalize(&m, QUAD_N).unwrap();
        assert!(canon.c.abs() < QUAD_TOL);
        for i in 0..9 {
            let t = -1.0 + 0.25 * i as f64;
            assert!((canon.univariates[0].1.eval(t) - 3.0 * t).abs() < QUAD_TOL);
        }
    }

    #[test]
    fn f1_overlap_net_marginal_vanishes() {
        let m = build_model(&ModelConfig::builtin("f1_overlap", 10, 0)).unwrap();
        let canon = anova_canonicalize(&m, QUAD_N).unwrap();
        assert_eq!(canon.net_marginals.len(), 1);
        let (q, comp) = &canon.net_marginals[0];
        assert_eq!(*q, 3);
        for i in 0..17 {
            let t = -1.0 + 0.125 * i as f64;
            assert!(comp.eval(t).abs() < QUAD_TOL, "net marginal {} at {t}", comp.eval(t));
        }
    }

    #[test]
    fn canonical_components_are_zero_mean() {
        for name in ["f1_nonoverlap", "f2_overlap", "f3_nonoverlap"] {
            let m = build_model(&ModelConfig::builtin(name, 10, 0)).unwrap();
            let canon = anova_canonicalize(&m, QUAD_N).unwrap();
            for (p, comp) in &canon.univariates {
                let mean = oracle_mean1(|t| comp.eval(t));
                assert!(mean.abs() < QUAD_TOL, "{name} univariate {p} mean {mean}");
            }
            for ((l, lp), comp) in &canon.bivariates {
                let mean = simpson(
                    |x| simpson(|y| comp.eval(x, y), -1.0, 1.0, 256),
                    -1.0,
                    1.0,
                    256,
                ) / 4.0;
                assert!(mean.abs() < QUAD_TOL, "{name} pair ({l},{lp}) mean {mean}");
            }
            for (q, comp) in &canon.net_marginals {
                let mean = oracle_mean1(|t| comp.eval(t));
                assert!(mean.abs() < QUAD_TOL, "{name} net marginal {q} mean {mean}");
            }
        }
    }

    #[test]
    fn overlap_bivariates_have_zero_marginals_against_shared_variable() {
        // f2_overlap: degree(4) = 2 in 1-based labels, so each pair containing
        // it must have zero marginal mean at every slice of the shared axis.
        let m = build_model(&ModelConfig::builtin("f2_overlap", 10, 0)).unwrap();
        let canon = anova_canonicalize(&m, QUAD_N).unwrap();
        for ((l, lp), comp) in &canon.bivariates {
            if m.degree(*lp) > 1 {
                for j in 0..9 {
                    let y = -1.0 + 0.25 * j as f64;
                    let marg = oracle_mean1(|x| comp.eval(x, y));
                    assert!(marg.abs() < QUAD_TOL, "pair ({l},{lp}) marginal {marg} at y={y}");
                }
            }
            if m.degree(*l) > 1 {
                for i in 0..9 {
                    let x = -1.0 + 0.25 * i as f64;
                    let marg = oracle_mean1(|y| comp.eval(x, y));
                    assert!(marg.abs() < QUAD_TOL, "pair ({l},{lp}) marginal {marg} at x={x}");
                }
            }
        }
    }

    #[test]
    fn canonical_model_reproduces_raw_model_pointwise() {
        // uniqueness sanity: recentring must not change the function
        let mut rng = rng_from(31, &[0]);
        for name in ["f1_nonoverlap", "f1_overlap", "f2_overlap", "f3_overlap"] {
            let m = build_model(&ModelConfig::builtin(name, 8, 0)).unwrap();
            let canon = anova_canonicalize(&m, QUAD_N).unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let diff = (canon.eval(&x) - m.eval(&x)).abs();
                assert!(diff < 1e-7, "{name}: canonical drifts by {diff}");
            }
        }
    }

    #[test]
    fn s1_and_interaction_variables_are_disjoint_after_merge() {
        // raw model with an overlap: phi_3 linear, 3 also in a pair
        let m = ModelSpec::new(
            6,
            vec![(2, UnivariateTerm::linear(2.0))],
            vec![((2, 4), BivariateTerm::bilinear(3.0))],
        )
        .unwrap();
        let canon = anova_canonicalize(&m, QUAD_N).unwrap();
        assert!(canon.univariates.is_empty());
        // merged function still evaluates correctly
        let mut rng = rng_from(5, &[0]);
        for _ in 0..10 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!((canon.eval(&x) - m.eval(&x)).abs() < 1e-8);
        }
        // oracle check of the double mean of the merged base
        let expected = oracle_mean2(|x, y| 3.0 * x * y + 2.0 * x);
        assert!((canon.c - expected).abs() < QUAD_TOL);
    }
}
