//! Builtin synthetic models and the JSON-friendly model configuration tree.

use super::terms::{BivariateTerm, UnivariateTerm};
use super::{ModelError, ModelSpec};
use crate::learn::{ConstantsConfig, ProblemParams};
use crate::seeds::rng_from;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Model configuration: a builtin name (plus optional block count `t` for the
/// scaling families) or explicit custom terms. Indices are 1-based here.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub builtin: Option<String>,
    pub d: usize,
    #[serde(default)]
    pub t: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub custom: Option<CustomModelConfig>,
    #[serde(default)]
    pub constants: Option<ConstantsConfig>,
}

impl ModelConfig {
    pub fn builtin(name: &str, d: usize, seed: u64) -> Self {
        ModelConfig { builtin: Some(name.to_string()), d, t: None, seed, custom: None, constants: None }
    }

    pub fn family(name: &str, d: usize, t: usize, seed: u64) -> Self {
        ModelConfig { builtin: Some(name.to_string()), d, t: Some(t), seed, custom: None, constants: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CustomModelConfig {
    #[serde(default)]
    pub univariate: Vec<UniEntry>,
    #[serde(default)]
    pub bivariate: Vec<BivEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UniEntry {
    pub index: usize,
    pub term: UnivariateTerm,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BivEntry {
    pub pair: (usize, usize),
    pub term: BivariateTerm,
}

fn f3_pattern_a() -> UnivariateTerm {
    UnivariateTerm::Sum {
        terms: vec![
            UnivariateTerm::Cos { amp: 10.0 / 3.0, freq: PI },
            UnivariateTerm::quadratic(8.0),
        ],
    }
}

fn f3_pattern_b() -> UnivariateTerm {
    UnivariateTerm::Poly { coeffs: vec![0.0, 4.0, -5.0, 0.0, 5.0] }
}

fn of(inner: UnivariateTerm) -> BivariateTerm {
    BivariateTerm::OfProduct { inner }
}

/// Builds a validated model from a config tree.
///
/// Builtin coefficients for the scaling families are drawn once from the
/// config seed (uniform on [2, 5]) and then frozen.
pub fn build_model(config: &ModelConfig) -> Result<ModelSpec, ModelError> {
    if let Some(custom) = &config.custom {
        let mut uni = Vec::new();
        for e in &custom.univariate {
            if e.index == 0 || e.index > config.d {
                return Err(ModelError::IndexOutOfRange { index: e.index, d: config.d });
            }
            uni.push((e.index - 1, e.term.clone()));
        }
        let mut biv = Vec::new();
        for e in &custom.bivariate {
            let (l, lp) = e.pair;
            if l == 0 || lp == 0 || l > config.d || lp > config.d {
                return Err(ModelError::IndexOutOfRange { index: l.max(lp), d: config.d });
            }
            if l >= lp {
                return Err(ModelError::UnorderedPair(l, lp));
            }
            biv.push(((l - 1, lp - 1), e.term.clone()));
        }
        return ModelSpec::new(config.d, uni, biv);
    }

    let name = config.builtin.as_deref().ok_or(ModelError::EmptyConfig)?;
    let d = config.d;
    let need_t = || {
        config.t.ok_or_else(|| ModelError::MissingBlockCount { builtin: name.to_string() })
    };
    match name {
        "f1_nonoverlap" => ModelSpec::new(
            d,
            vec![(0, UnivariateTerm::linear(2.0)), (1, UnivariateTerm::quadratic(-3.0))],
            vec![((2, 3), BivariateTerm::bilinear(4.0)), ((4, 5), BivariateTerm::bilinear(-5.0))],
        ),
        "f1_overlap" => ModelSpec::new(
            d,
            vec![(0, UnivariateTerm::linear(2.0)), (1, UnivariateTerm::quadratic(-3.0))],
            vec![((2, 3), BivariateTerm::bilinear(4.0)), ((3, 4), BivariateTerm::bilinear(-5.0))],
        ),
        "f2_nonoverlap" => ModelSpec::new(
            d,
            vec![
                (0, UnivariateTerm::Sin { amp: 10.0, freq: PI }),
                (1, UnivariateTerm::Exp { amp: 5.0, rate: -2.0 }),
            ],
            vec![
                ((2, 3), of(UnivariateTerm::Sin { amp: 10.0, freq: PI })),
                ((4, 5), of(UnivariateTerm::Exp { amp: 5.0, rate: -2.0 })),
            ],
        ),
        "f2_overlap" => ModelSpec::new(
            d,
            vec![
                (0, UnivariateTerm::Sin { amp: 10.0, freq: PI }),
                (1, UnivariateTerm::Exp { amp: 5.0, rate: -2.0 }),
            ],
            vec![
                ((2, 3), of(UnivariateTerm::Sin { amp: 10.0, freq: PI })),
                ((3, 4), of(UnivariateTerm::Exp { amp: 5.0, rate: -2.0 })),
            ],
        ),
        "f3_nonoverlap" => ModelSpec::new(
            d,
            vec![(0, f3_pattern_a()), (1, f3_pattern_b())],
            vec![((2, 3), of(f3_pattern_a())), ((4, 5), of(f3_pattern_b()))],
        ),
        "f3_overlap" => ModelSpec::new(
            d,
            vec![(0, f3_pattern_a()), (1, f3_pattern_b())],
            vec![((2, 3), of(f3_pattern_a())), ((3, 4), of(f3_pattern_b()))],
        ),
        "k_family_nonoverlap" => {
            let t = need_t()?;
            let mut rng = rng_from(config.seed, &[0xa1fa]);
            let alpha: Vec<f64> = (0..4).map(|_| rng.gen_range(2.0..5.0)).collect();
            let mut uni = Vec::new();
            let mut biv = Vec::new();
            for i in 0..t {
                let b = 6 * i;
                if b + 6 > d {
                    return Err(ModelError::IndexOutOfRange { index: b + 6, d });
                }
                uni.push((b, UnivariateTerm::linear(alpha[0])));
                uni.push((b + 1, UnivariateTerm::quadratic(-alpha[1])));
                biv.push(((b + 2, b + 3), BivariateTerm::bilinear(alpha[2])));
                biv.push(((b + 4, b + 5), BivariateTerm::bilinear(-alpha[3])));
            }
            ModelSpec::new(d, uni, biv)
        }
        "k_family_overlap" => {
            let t = need_t()?;
            let mut rng = rng_from(config.seed, &[0xa1fb]);
            let alpha: Vec<f64> = (0..4).map(|_| rng.gen_range(2.0..5.0)).collect();
            let mut uni = Vec::new();
            let mut biv = Vec::new();
            for i in 0..t {
                let b = 5 * i;
                if b + 5 > d {
                    return Err(ModelError::IndexOutOfRange { index: b + 5, d });
                }
                uni.push((b, UnivariateTerm::linear(alpha[0])));
                uni.push((b + 1, UnivariateTerm::quadratic(-alpha[1])));
                biv.push(((b + 2, b + 3), BivariateTerm::bilinear(alpha[2])));
                biv.push(((b + 3, b + 4), BivariateTerm::bilinear(-alpha[3])));
            }
            ModelSpec::new(d, uni, biv)
        }
        "rho_family" => {
            let t = need_t()?;
            let mut rng = rng_from(config.seed, &[0xa1fc]);
            let a1: f64 = rng.gen_range(2.0..5.0);
            let a2: f64 = rng.gen_range(2.0..5.0);
            let a3: Vec<f64> = (0..t).map(|_| rng.gen_range(2.0..5.0)).collect();
            let a4: Vec<f64> = (0..5).map(|_| rng.gen_range(2.0..5.0)).collect();
            let mut uni =
                vec![(0, UnivariateTerm::linear(a1)), (1, UnivariateTerm::quadratic(-a2))];
            uni.sort_by_key(|&(p, _)| p);
            let mut biv = Vec::new();
            for (i, &a) in a3.iter().enumerate() {
                // star variable 3 paired with 4, 5, ..., T+3 (1-based)
                biv.push(((2, 3 + i), BivariateTerm::bilinear(a)));
            }
            for (i, &a) in a4.iter().enumerate() {
                let l = 2 * (i + 1) + 2; // 4, 6, 8, 10, 12 (1-based)
                biv.push(((l - 1, l), BivariateTerm::bilinear(a)));
            }
            biv.sort_by_key(|&(pr, _)| pr);
            let max_index = 3 + t.max(10);
            if max_index > d {
                return Err(ModelError::IndexOutOfRange { index: max_index, d });
            }
            ModelSpec::new(d, uni, biv)
        }
        other => Err(ModelError::UnknownBuiltin(other.to_string())),
    }
}

fn builtin_constants(name: &str) -> Option<(f64, f64, f64, f64, f64)> {
    // (d1, d2, b3, lambda1, lambda2)
    match name {
        "f1_nonoverlap" | "f1_overlap" | "k_family_nonoverlap" | "k_family_overlap"
        | "rho_family" => Some((2.0, 3.0, 6.0, 0.3, 1.0)),
        "f2_nonoverlap" | "f2_overlap" | "f3_nonoverlap" | "f3_overlap" => {
            Some((8.0, 4.0, 35.0, 0.3, 0.3))
        }
        _ => None,
    }
}

/// Problem constants for a config: explicit `constants` block first, builtin
/// defaults second. Custom models must supply the block; smoothness and
/// identifiability constants are inputs, never estimated from data.
pub fn default_params(config: &ModelConfig, model: &ModelSpec) -> Result<ProblemParams, ModelError> {
    let base = config
        .builtin
        .as_deref()
        .and_then(builtin_constants);
    let c = config.constants.clone().unwrap_or_default();
    let (d1, d2, b3, l1, l2) = match (c.d1, c.d2, c.b3, c.lambda1, c.lambda2) {
        (Some(d1), Some(d2), Some(b3), Some(l1), Some(l2)) => (d1, d2, b3, l1, l2),
        _ => {
            let (bd1, bd2, bb3, bl1, bl2) = base.ok_or_else(|| {
                ModelError::InvalidNoise(
                    "custom models require a full constants block (d1, d2, b3, lambda1, lambda2)"
                        .to_string(),
                )
            })?;
            (
                c.d1.unwrap_or(bd1),
                c.d2.unwrap_or(bd2),
                c.b3.unwrap_or(bb3),
                c.lambda1.unwrap_or(bl1),
                c.lambda2.unwrap_or(bl2),
            )
        }
    };
    Ok(ProblemParams {
        k: c.k.unwrap_or_else(|| model.total_sparsity().max(1)),
        rho_m: c.rho_m.unwrap_or_else(|| model.rho_max().max(1)),
        b3,
        d1,
        d2,
        lambda1: l1,
        lambda2: l2,
        c_rec: c.c.unwrap_or(1.0),
        c1: c.c1.unwrap_or(1.0),
        c2: c.c2.unwrap_or(1.0),
        c3: c.c3.unwrap_or(1.0),
        c1_hash: c.c1_hash.unwrap_or(1.7),
        b012: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn unknown_builtin_is_an_error() {
        let cfg = ModelConfig::builtin("f9_mystery", 10, 0);
        assert!(matches!(build_model(&cfg), Err(ModelError::UnknownBuiltin(_))));
    }

    #[test]
    fn k_family_nonoverlap_has_six_t_sparsity() {
        for t in [1usize, 2, 4] {
            let cfg = ModelConfig::family("k_family_nonoverlap", 100, t, 3);
            let m = build_model(&cfg).unwrap();
            assert_eq!(m.total_sparsity(), 6 * t);
            assert_eq!(m.rho_max(), 1);
            assert_eq!(m.s2().len(), 2 * t);
        }
    }

    #[test]
    fn k_family_overlap_has_five_t_sparsity_rho_two() {
        for t in [1usize, 3, 8] {
            let cfg = ModelConfig::family("k_family_overlap", 500, t, 3);
            let m = build_model(&cfg).unwrap();
            assert_eq!(m.total_sparsity(), 5 * t);
            assert_eq!(m.rho_max(), 2);
        }
    }

    #[test]
    fn rho_family_star_degree_tracks_t() {
        for t in [2usize, 3, 8] {
            let cfg = ModelConfig::family("rho_family", 500, t, 5);
            let m = build_model(&cfg).unwrap();
            assert_eq!(m.rho_max(), t, "t = {t}");
            assert_eq!(m.total_sparsity(), 13);
            assert_eq!(m.degree(2), t);
        }
    }

    #[test]
    fn family_coefficients_are_frozen_per_seed() {
        let cfg = ModelConfig::family("k_family_overlap", 50, 2, 42);
        let a = build_model(&cfg).unwrap();
        let b = build_model(&cfg).unwrap();
        let x = vec![0.37; 50];
        assert_eq!(a.eval(&x), b.eval(&x));
        let cfg2 = ModelConfig::family("k_family_overlap", 50, 2, 43);
        let c = build_model(&cfg2).unwrap();
        assert_ne!(a.eval(&x), c.eval(&x));
    }

    #[test]
    fn coefficients_land_in_stated_range() {
        let cfg = ModelConfig::family("k_family_nonoverlap", 50, 1, 9);
        let m = build_model(&cfg).unwrap();
        for (_, term) in m.univariate_terms() {
            if let UnivariateTerm::Poly { coeffs } = term {
                let a = coeffs.iter().map(|v| v.abs()).fold(0.0, f64::max);
                assert!((2.0..5.0).contains(&a), "coefficient {a} outside [2,5)");
            }
        }
    }

    #[test]
    fn custom_model_roundtrips_with_one_based_indices() {
        let cfg = ModelConfig {
            builtin: None,
            d: 6,
            t: None,
            seed: 0,
            custom: Some(CustomModelConfig {
                univariate: vec![UniEntry { index: 2, term: UnivariateTerm::linear(1.5) }],
                bivariate: vec![BivEntry { pair: (3, 5), term: BivariateTerm::bilinear(2.0) }],
            }),
            constants: None,
        };
        let m = build_model(&cfg).unwrap();
        assert_eq!(m.s1(), BTreeSet::from([1]));
        assert_eq!(m.s2(), BTreeSet::from([(2, 4)]));
    }

    #[test]
    fn default_params_pick_builtin_table() {
        let cfg = ModelConfig::builtin("f2_nonoverlap", 50, 0);
        let m = build_model(&cfg).unwrap();
        let p = default_params(&cfg, &m).unwrap();
        assert_eq!(p.d1, 8.0);
        assert_eq!(p.b3, 35.0);
        assert_eq!(p.k, 6);
        assert_eq!(p.rho_m, 1);
        assert_eq!(p.c1_hash, 1.7);
    }
}
