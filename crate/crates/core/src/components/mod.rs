//! Component estimation along canonical slices.
//!
//! With the supports identified, the model is queried on 1-D axis slices and
//! 2-D pair slices, a least-squares cubic spline plays the quasi-interpolant,
//! and the fits are recentred to the unique ANOVA form.

mod spline;

pub use spline::{BSplineBasis, CubicSpline1D, CubicSpline2D, SplineError};

use crate::model::{ModelError, Phase, QueryOracle};
use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("variable {0} is not a net-marginal candidate (degree must exceed 1)")]
    NotNetMarginal(usize),
}

/// A fitted, centered component: a cubic spline with its sample count.
#[derive(Clone, Debug, PartialEq)]
pub enum SplineEstimate {
    One(CubicSpline1D),
    Two(CubicSpline2D),
}

impl SplineEstimate {
    pub fn arity(&self) -> usize {
        match self {
            SplineEstimate::One(_) => 1,
            SplineEstimate::Two(_) => 2,
        }
    }

    pub fn n_samples(&self) -> usize {
        match self {
            SplineEstimate::One(s) => s.n_samples,
            SplineEstimate::Two(s) => s.n_samples,
        }
    }

    pub fn eval1(&self, t: f64) -> f64 {
        match self {
            SplineEstimate::One(s) => s.eval(t),
            SplineEstimate::Two(_) => panic!("called eval1 on a bivariate estimate"),
        }
    }

    pub fn eval2(&self, x: f64, y: f64) -> f64 {
        match self {
            SplineEstimate::Two(s) => s.eval(x, y),
            SplineEstimate::One(_) => panic!("called eval2 on a univariate estimate"),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            SplineEstimate::One(s) => s.mean(),
            SplineEstimate::Two(s) => s.mean(),
        }
    }

    /// Serializes to the documented text format: arity, sample count, knot
    /// grids, coefficients.
    pub fn to_text(&self) -> String {
        let mut out = String::from("spline-estimate v1\n");
        match self {
            SplineEstimate::One(s) => {
                out.push_str("arity 1\n");
                out.push_str(&format!("samples {}\n", s.n_samples));
                out.push_str(&format!(
                    "knots {}\n",
                    join(&s.basis.breakpoints())
                ));
                out.push_str(&format!("coeffs {}\n", join(&s.coeffs)));
            }
            SplineEstimate::Two(s) => {
                out.push_str("arity 2\n");
                out.push_str(&format!("samples {}\n", s.n_samples));
                out.push_str(&format!("knots_x {}\n", join(&s.basis_x.breakpoints())));
                out.push_str(&format!("knots_y {}\n", join(&s.basis_y.breakpoints())));
                let flat: Vec<f64> = s.coeffs.iter().copied().collect();
                out.push_str(&format!(
                    "coeffs {} {} {}\n",
                    s.coeffs.nrows(),
                    s.coeffs.ncols(),
                    join(&flat)
                ));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, EstimationError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != "spline-estimate v1" {
            return Err(SplineError::Parse(format!("bad header `{header}`")).into());
        }
        let mut arity = 0usize;
        let mut samples = 0usize;
        let mut knots: Vec<Vec<f64>> = Vec::new();
        let mut coeffs: Option<(usize, usize, Vec<f64>)> = None;
        for line in lines {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("arity") => arity = parse_num(it.next())?,
                Some("samples") => samples = parse_num(it.next())?,
                Some("knots") | Some("knots_x") | Some("knots_y") => {
                    knots.push(parse_floats(it)?);
                }
                Some("coeffs") => {
                    if arity == 1 {
                        coeffs = Some((0, 0, parse_floats(it)?));
                    } else {
                        let r: usize = parse_num(it.next())?;
                        let c: usize = parse_num(it.next())?;
                        coeffs = Some((r, c, parse_floats(it)?));
                    }
                }
                Some(other) => {
                    return Err(SplineError::Parse(format!("unknown field `{other}`")).into())
                }
                None => {}
            }
        }
        let (r, c, flat) =
            coeffs.ok_or_else(|| SplineError::Parse("missing coeffs".to_string()))?;
        match arity {
            1 => {
                let k = knots
                    .first()
                    .ok_or_else(|| SplineError::Parse("missing knots".to_string()))?;
                let basis = BSplineBasis::new(k.len() - 1);
                if flat.len() != basis.len() {
                    return Err(SplineError::Parse("coefficient count mismatch".to_string()).into());
                }
                Ok(SplineEstimate::One(CubicSpline1D { basis, coeffs: flat, n_samples: samples }))
            }
            2 => {
                if knots.len() != 2 {
                    return Err(SplineError::Parse("need knots_x and knots_y".to_string()).into());
                }
                let bx = BSplineBasis::new(knots[0].len() - 1);
                let by = BSplineBasis::new(knots[1].len() - 1);
                if r != bx.len() || c != by.len() || flat.len() != r * c {
                    return Err(SplineError::Parse("coefficient shape mismatch".to_string()).into());
                }
                let coeffs = Array2::from_shape_vec((r, c), flat)
                    .map_err(|e| SplineError::Parse(e.to_string()))?;
                Ok(SplineEstimate::Two(CubicSpline2D {
                    basis_x: bx,
                    basis_y: by,
                    coeffs,
                    n_samples: samples,
                }))
            }
            other => Err(SplineError::Parse(format!("bad arity {other}")).into()),
        }
    }
}

fn join(vals: &[f64]) -> String {
    vals.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>) -> Result<T, EstimationError> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| SplineError::Parse("missing or bad number".to_string()).into())
}

fn parse_floats<'a>(it: impl Iterator<Item = &'a str>) -> Result<Vec<f64>, EstimationError> {
    it.map(|t| {
        t.parse::<f64>()
            .map_err(|e| EstimationError::from(SplineError::Parse(e.to_string())))
    })
    .collect()
}

pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect()
}

/// Fits the quasi-interpolant spline to 1-D samples (>= 8 uniformly spaced
/// points including the endpoints).
pub fn quasi_interpolate_1d(samples: &[(f64, f64)]) -> Result<SplineEstimate, EstimationError> {
    let ts: Vec<f64> = samples.iter().map(|&(t, _)| t).collect();
    let vs: Vec<f64> = samples.iter().map(|&(_, v)| v).collect();
    Ok(SplineEstimate::One(spline::fit_1d(&ts, &vs, samples.len())?))
}

/// Tensor-product fit on a full `ts x us` grid of samples.
pub fn quasi_interpolate_2d(
    ts: &[f64],
    us: &[f64],
    values: &Array2<f64>,
) -> Result<SplineEstimate, EstimationError> {
    Ok(SplineEstimate::Two(spline::fit_2d(ts, us, values, values.len())?))
}

/// Estimates the univariate component of coordinate `p` from `n` axis
/// queries, centered to zero mean.
pub fn estimate_univariate(
    oracle: &QueryOracle,
    p: usize,
    n: usize,
    resample: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SplineEstimate, EstimationError> {
    let d = oracle.model().dimension();
    let ts = uniform_grid(n);
    let mut x = vec![0.0; d];
    let mut vals = Vec::with_capacity(n);
    for &t in &ts {
        x[p] = t;
        vals.push(oracle.query_averaged(&x, resample, Phase::Components, rng)?);
    }
    let mut fit = spline::fit_1d(&ts, &vals, n)?;
    let mean = fit.mean();
    fit.shift(mean);
    Ok(SplineEstimate::One(fit))
}

/// Estimates the bivariate component on `pair` from an `n1 x n1` slice grid,
/// recentred according to the interaction degrees of the two variables.
pub fn estimate_bivariate(
    oracle: &QueryOracle,
    pair: (usize, usize),
    degrees: (usize, usize),
    n1: usize,
    resample: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SplineEstimate, EstimationError> {
    let d = oracle.model().dimension();
    let (l, lp) = pair;
    let ts = uniform_grid(n1);
    let mut values = Array2::zeros((n1, n1));
    let mut x = vec![0.0; d];
    for (i, &s) in ts.iter().enumerate() {
        for (j, &t) in ts.iter().enumerate() {
            x[l] = s;
            x[lp] = t;
            values[[i, j]] = oracle.query_averaged(&x, resample, Phase::Components, rng)?;
        }
    }
    let mut fit = spline::fit_2d(&ts, &ts, &values, n1 * n1)?;
    let mean = fit.mean();
    match (degrees.0 > 1, degrees.1 > 1) {
        (false, false) => {
            fit.coeffs.mapv_inplace(|v| v);
            fit.coeffs -= mean;
        }
        (false, true) => {
            let mx = fit.marginal_over_x();
            for j in 0..fit.basis_y.len() {
                for i in 0..fit.basis_x.len() {
                    fit.coeffs[[i, j]] -= mx[j];
                }
            }
        }
        (true, false) => {
            let my = fit.marginal_over_y();
            for i in 0..fit.basis_x.len() {
                for j in 0..fit.basis_y.len() {
                    fit.coeffs[[i, j]] -= my[i];
                }
            }
        }
        (true, true) => {
            let mx = fit.marginal_over_x();
            let my = fit.marginal_over_y();
            for i in 0..fit.basis_x.len() {
                for j in 0..fit.basis_y.len() {
                    fit.coeffs[[i, j]] -= mx[j] + my[i] - mean;
                }
            }
        }
    }
    Ok(SplineEstimate::Two(fit))
}

/// Estimates the net marginal effect of a variable with interaction degree
/// above one: coordinate `l` rides one axis while every other interaction
/// variable is tied to the second axis.
pub fn estimate_net_marginal(
    oracle: &QueryOracle,
    l: usize,
    s2_var: &BTreeSet<usize>,
    n1: usize,
    resample: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SplineEstimate, EstimationError> {
    if !s2_var.contains(&l) {
        return Err(EstimationError::NotNetMarginal(l + 1));
    }
    let d = oracle.model().dimension();
    let ts = uniform_grid(n1);
    let mut values = Array2::zeros((n1, n1));
    let mut x = vec![0.0; d];
    for (i, &s) in ts.iter().enumerate() {
        for (j, &t) in ts.iter().enumerate() {
            for q in 0..d {
                x[q] = 0.0;
            }
            for &q in s2_var {
                x[q] = t;
            }
            x[l] = s;
            values[[i, j]] = oracle.query_averaged(&x, resample, Phase::Components, rng)?;
        }
    }
    let fit = spline::fit_2d(&ts, &ts, &values, n1 * n1)?;
    let mean = fit.mean();
    // E over the tied axis, minus the double mean
    let mut coeffs = fit.marginal_over_y();
    for c in &mut coeffs {
        *c -= mean;
    }
    Ok(SplineEstimate::One(CubicSpline1D {
        basis: fit.basis_x.clone(),
        coeffs,
        n_samples: n1 * n1,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        anova_canonicalize, build_model, BivariateTerm, BoundedGenerator, ModelConfig, ModelSpec,
        NoiseModel, UnivariateTerm,
    };
    use crate::seeds::rng_from;

    fn linf_1d(est: &SplineEstimate, truth: impl Fn(f64) -> f64) -> f64 {
        (0..=400)
            .map(|i| {
                let t = -1.0 + i as f64 / 200.0;
                (est.eval1(t) - truth(t)).abs()
            })
            .fold(0.0, f64::max)
    }

    fn linf_2d(est: &SplineEstimate, truth: impl Fn(f64, f64) -> f64) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..=60 {
            let x = -1.0 + i as f64 / 30.0;
            for j in 0..=60 {
                let y = -1.0 + j as f64 / 30.0;
                worst = worst.max((est.eval2(x, y) - truth(x, y)).abs());
            }
        }
        worst
    }

    #[test]
    fn interpolant_reproduces_linear_to_machine_precision() {
        let ts = uniform_grid(16);
        let samples: Vec<(f64, f64)> = ts.iter().map(|&t| (t, t)).collect();
        let est = quasi_interpolate_1d(&samples).unwrap();
        assert!(linf_1d(&est, |t| t) < 1e-12);
    }

    #[test]
    fn interpolant_2d_reproduces_bilinear() {
        let ts = uniform_grid(8);
        let mut vals = Array2::zeros((8, 8));
        for (i, &s) in ts.iter().enumerate() {
            for (j, &t) in ts.iter().enumerate() {
                vals[[i, j]] = s * t;
            }
        }
        let est = quasi_interpolate_2d(&ts, &ts, &vals).unwrap();
        assert!(linf_2d(&est, |x, y| x * y) < 1e-10);
    }

    #[test]
    fn sine_error_decays_fast_under_doubling() {
        let f = |t: f64| (std::f64::consts::PI * t).sin();
        let mut errs = Vec::new();
        for n in [8usize, 16, 32, 64] {
            let samples: Vec<(f64, f64)> =
                uniform_grid(n).into_iter().map(|t| (t, f(t))).collect();
            let est = quasi_interpolate_1d(&samples).unwrap();
            errs.push(linf_1d(&est, f));
        }
        for w in errs.windows(2) {
            let slope = (w[1] / w[0]).log2();
            assert!(slope <= -2.5, "slope {slope} from errors {errs:?}");
        }
    }

    #[test]
    fn estimate_univariate_recovers_centered_quadratic() {
        let m = build_model(&ModelConfig::builtin("f1_nonoverlap", 12, 0)).unwrap();
        let oracle = QueryOracle::new(&m, NoiseModel::Noiseless, 0.1).unwrap();
        let mut rng = rng_from(1, &[0]);
        let est = estimate_univariate(&oracle, 1, 64, 1, &mut rng).unwrap();
        // canonical form of -3 t^2 is -3 t^2 + 1
        assert!(linf_1d(&est, |t| -3.0 * t * t + 1.0) < 1e-3);
        assert!(est.mean().abs() < 1e-8);
        assert_eq!(oracle.ledger().phase(Phase::Components), 64);
    }

    #[test]
    fn centering_leaves_zero_mean_components_unchanged() {
        let m = ModelSpec::new(4, vec![(0, UnivariateTerm::linear(2.0))], vec![]).unwrap();
        let oracle = QueryOracle::new(&m, NoiseModel::Noiseless, 0.1).unwrap();
        let mut rng = rng_from(2, &[0]);
        let est = estimate_univariate(&oracle, 0, 32, 1, &mut rng).unwrap();
        assert!(linf_1d(&est, |t| 2.0 * t) < 1e-10);
    }

    #[test]
    fn bounded_noise_degrades_at_most_five_eps() {
        let m = build_model(&ModelConfig::builtin("f1_nonoverlap", 12, 0)).unwrap();
        let clean = {
            let oracle = QueryOracle::new(&m, NoiseModel::Noiseless, 0.1).unwrap();
            let mut rng = rng_from(3, &[0]);
            let est = estimate_univariate(&oracle, 1, 64, 1, &mut rng).unwrap();
            linf_1d(&est, |t| -3.0 * t * t + 1.0)
        };
        let eps = 0.01;
        let noisy = {
            let oracle = QueryOracle::new(
                &m,
                NoiseModel::BoundedArbitrary { eps, generator: BoundedGenerator::SignFlip },
                0.1,
            )
            .unwrap();
            let mut rng = rng_from(3, &[0]);
            let est = estimate_univariate(&oracle, 1, 64, 1, &mut rng).unwrap();
            linf_1d(&est, |t| -3.0 * t * t + 1.0)
        };
        assert!(noisy <= clean + 5.0 * eps, "noisy {noisy} vs clean {clean} + {}", 5.0 * eps);
    }

    #[test]
    fn bivariate_estimate_recovers_bilinear_pair() {
        let m = build_model(&ModelConfig::builtin("f1_nonoverlap", 12, 0)).unwrap();
        let oracle = QueryOracle::new(&m, NoiseModel::Noiseless, 0.1).unwrap();
        let mut rng = rng_from(4, &[0]);
        let est = estimate_bivariate(&oracle, (2, 3), (1, 1), 32, 1, &mut rng).unwrap();
        assert!(linf_2d(&est, |x, y| 4.0 * x * y) < 1e-3);
        assert!(est.mean().abs() < 1e-8);
    }

    #[test]
    fn overlap_bivariate_keeps_zero_marginal_against_shared_axis() {
        // f1_overlap pair (3,4): degree(4) = 2, so centering removes the
        // marginal over the first axis.
        let m = build_model(&ModelConfig::builtin("f1_overlap", 12, 0)).unwrap();
        let oracle = QueryOracle::new(&m, NoiseModel::Noiseless, 0.1).unwrap();
        let mut rng = rng_from(5, &[0]);
        let est = estimate_bivariate(&oracle, (2, 3), (1, 2), 32, 1, &mut rng).unwrap();
        let canon = anova_canonicalize(&m, 256).unwrap();
        let truth = &canon.bivariates.iter().find(|((l, lp), _)| (*l, *lp) == (2, 3)).unwrap().1;
        assert!(linf_2d(&est, |x, y| truth.eval(x, y)) < 1e-3);
        // zero marginal over x at sampled slices of y
        if let SplineEstimate::Two(sp) = &est {
            for my in sp.marginal_over_x() {
                assert!(my.abs() < 1e-8, "marginal coefficient {my}");
            }
        }
    }

    #[test]
    fn zero_bivariate_plant_estimates_to_zero() {
        let m = ModelSpec::new(6, vec![(0, UnivariateTerm::linear(1.0))], vec![]).unwrap();
        let oracle = QueryOracle::new(&m, NoiseModel::Noiseless, 0.1).unwrap();
        let mut rng = rng_from(6, &[0]);
        // slice over an inactive pair: constant surface, centered to zero
        let est = estimate_bivariate(&oracle, (2, 3), (1, 1), 16, 1, &mut rng).unwrap();
        assert!(linf_2d(&est, |_, _| 0.0) < 1e-10);
    }

    #[test]
    fn net_marginal_of_pure_bilinears_is_zero() {
        let m = build_model(&ModelConfig::builtin("f1_overlap", 12, 0)).unwrap();
        let oracle = QueryOracle::new(&m, NoiseModel::Noiseless, 0.1).unwrap();
        let mut rng = rng_from(7, &[0]);
        let s2v = m.s2_var();
        let est = estimate_net_marginal(&oracle, 3, &s2v, 32, 1, &mut rng).unwrap();
        assert!(linf_1d(&est, |_| 0.0) < 1e-8);
    }

    #[test]
    fn net_marginal_recovers_planted_cubic() {
        // f1_overlap plus an explicit phi_4(x) = x^3 on the shared variable
        let mut uni = vec![
            (0, UnivariateTerm::linear(2.0)),
            (1, UnivariateTerm::quadratic(-3.0)),
            (3, UnivariateTerm::Poly { coeffs: vec![0.0, 0.0, 0.0, 1.0] }),
        ];
        uni.sort_by_key(|&(p, _)| p);
        let m = ModelSpec::new(
            12,
            uni,
            vec![((2, 3), BivariateTerm::bilinear(4.0)), ((3, 4), BivariateTerm::bilinear(-5.0))],
        )
        .unwrap();
        let oracle = QueryOracle::new(&m, NoiseModel::Noiseless, 0.1).unwrap();
        let mut rng = rng_from(8, &[0]);
        let est = estimate_net_marginal(&oracle, 3, &m.s2_var(), 32, 1, &mut rng).unwrap();
        assert!(linf_1d(&est, |t| t * t * t) < 5e-3);
        assert!(est.mean().abs() < 1e-8);
    }

    #[test]
    fn text_roundtrip_preserves_estimates() {
        let m = build_model(&ModelConfig::builtin("f1_nonoverlap", 12, 0)).unwrap();
        let oracle = QueryOracle::new(&m, NoiseModel::Noiseless, 0.1).unwrap();
        let mut rng = rng_from(9, &[0]);
        for est in [
            estimate_univariate(&oracle, 0, 16, 1, &mut rng).unwrap(),
            estimate_bivariate(&oracle, (2, 3), (1, 1), 16, 1, &mut rng).unwrap(),
        ] {
            let text = est.to_text();
            let back = SplineEstimate::from_text(&text).unwrap();
            assert_eq!(est, back);
        }
        assert!(SplineEstimate::from_text("nonsense").is_err());
    }
}
