//! Sampling-plan derivation: measurement counts, grid resolutions, step
//! sizes, thresholds, and resampling counts from the problem constants.
//!
//! Noiseless step-size windows come from closed forms; under bounded or
//! Gaussian noise the windows are the negative region of a cubic whose roots
//! are taken in trigonometric form. Step sizes sit at the midpoint of their
//! admissible interval.

use super::cubic::cubic_roots_trig;
use super::LearnError;
use crate::model::NoiseModel;
use crate::recovery::VectorSolver;
use crate::sampling::target_family_size;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    /// Total sparsity bound `|S1 ∪ S2_var|`.
    pub k: usize,
    /// Maximum interaction degree bound.
    pub rho_m: usize,
    /// Third-derivative bound.
    pub b3: f64,
    /// Gradient identifiability floor.
    pub d1: f64,
    /// Cross-partial identifiability floor.
    pub d2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Recovery constant for the Bernoulli ensemble (default 1).
    pub c_rec: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Hash-family size constant (> 1).
    pub c1_hash: f64,
    /// Optional lower-order derivative bounds (metadata only).
    pub b012: Option<[f64; 3]>,
}

impl ProblemParams {
    pub fn validate(&self) -> Result<(), LearnError> {
        let ok = self.k >= 1
            && self.rho_m >= 1
            && self.rho_m <= self.k
            && self.b3 > 0.0
            && self.d1 > 0.0
            && self.d2 > 0.0
            && self.lambda1 > 0.0
            && self.lambda1 <= 1.0
            && self.lambda2 > 0.0
            && self.lambda2 <= 1.0
            && self.c_rec > 0.0
            && self.c1 > 0.0
            && self.c2 > 0.0
            && self.c3 > 0.0
            && self.c1_hash > 1.0;
        if ok {
            Ok(())
        } else {
            Err(LearnError::BadParams(format!("invalid problem constants: {self:?}")))
        }
    }
}

/// Optional overrides in a config constants block; anything absent falls back
/// to builtin defaults or to quantities read off the model.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ConstantsConfig {
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    pub b3: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub c: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub c1_hash: Option<f64>,
    pub k: Option<usize>,
    pub rho_m: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// Gradient scan plus adaptive probes; non-overlapping pairs only.
    #[serde(rename = "alg1_2")]
    GradientProbe,
    /// Row-wise Hessian recovery from gradient differences.
    #[serde(rename = "alg3")]
    HessianRows,
    /// Whole-Hessian recovery from rank-one measurements.
    #[serde(rename = "alg4")]
    HessianSketch,
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "alg1_2" => Ok(Algorithm::GradientProbe),
            "alg3" => Ok(Algorithm::HessianRows),
            "alg4" => Ok(Algorithm::HessianSketch),
            other => Err(format!("unknown algorithm `{other}` (expected alg1_2, alg3, alg4)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PlanNoise {
    Noiseless,
    Bounded(f64),
    Gaussian(f64),
}

impl PlanNoise {
    fn from_model(noise: &NoiseModel) -> Self {
        match noise {
            NoiseModel::Noiseless => PlanNoise::Noiseless,
            NoiseModel::BoundedArbitrary { eps, .. } => PlanNoise::Bounded(*eps),
            NoiseModel::Gaussian { sigma2 } => PlanNoise::Gaussian(*sigma2),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PlanOverrides {
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub solver: Option<VectorSolver>,
}

/// The reduced-set plan used after the interaction set is known.
#[derive(Clone, Copy, Debug)]
pub struct StageBPlan {
    pub m_v2: usize,
    pub mu_p: f64,
    pub mu_p_interval: (f64, f64),
    pub tau2: f64,
    pub eps_limit: f64,
    pub epsilon: f64,
    pub theta: f64,
    pub n2: usize,
}

/// Every derived sampling quantity for one algorithm at one dimension.
#[derive(Clone, Debug)]
pub struct SamplingPlan {
    pub algorithm: Algorithm,
    pub d: usize,
    pub params: ProblemParams,
    pub ctilde: f64,
    pub noise: PlanNoise,
    /// Pair-detection grid resolution (`ceil(1/lambda2)`).
    pub m_x: usize,
    /// Univariate-detection grid resolution (`ceil(1/lambda1)`).
    pub m_x_prime: usize,
    pub hash_size: usize,
    pub m_v: usize,
    pub m_v_prime: Option<usize>,
    pub mu: f64,
    pub mu_interval: (f64, f64),
    pub mu1: Option<f64>,
    pub beta: Option<f64>,
    pub tau: Option<f64>,
    pub tau_prime: Option<f64>,
    pub eta: Option<f64>,
    /// Effective noise bound for the first phase and its admissible limit.
    pub epsilon: f64,
    pub eps1_limit: f64,
    /// Effective bound for the second phase (probe phase or reduced-set scan).
    pub epsilon_prime: f64,
    pub eps2_limit: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub n1: usize,
    pub n2: usize,
    pub p_fail: f64,
    pub solver: VectorSolver,
    pub stage_b_nominal: Option<StageBPlan>,
    n2_override: Option<usize>,
}

/// Midpoint and endpoints of the admissible window for a step size governed
/// by `y^3 + p y + q < 0` (`q = 0` degenerates to `(0, sqrt(-p))`).
fn step_window(p: f64, q: f64) -> Result<(f64, (f64, f64)), LearnError> {
    if p >= 0.0 {
        return Err(LearnError::EmptyInterval("cubic leading coefficient".into()));
    }
    if q == 0.0 {
        let hi = (-p).sqrt();
        return Ok((hi / 2.0, (0.0, hi)));
    }
    let roots = cubic_roots_trig(p, q)?;
    let (lo, hi) = (roots[1], roots[0]);
    if !(lo < hi) || hi <= 0.0 {
        return Err(LearnError::EmptyInterval(format!("cubic window ({lo}, {hi})")));
    }
    Ok(((lo + hi) / 2.0, (lo, hi)))
}

fn ceil_pos(x: f64) -> usize {
    x.ceil().max(1.0) as usize
}

fn effective_eps(noise: PlanNoise, limit: f64, label: &str) -> Result<f64, LearnError> {
    let eps = match noise {
        PlanNoise::Noiseless => 0.0,
        PlanNoise::Bounded(e) => e,
        PlanNoise::Gaussian(_) => limit / 2.0,
    };
    if eps >= limit {
        return Err(LearnError::NoiseTooLarge { eps, bound: limit, phase: label.to_string() });
    }
    Ok(eps)
}

fn resample_count(sigma2: f64, eps: f64, log_arg: f64) -> usize {
    let raw = sigma2 / (eps * eps) * log_arg.ln();
    (raw.max(0.0).floor() as usize) + 1
}

/// Reduced-set (univariate) stage: measurement count, step, and threshold for
/// recovering the lone coordinates once interaction variables are excluded.
pub fn stage_b_rule(
    params: &ProblemParams,
    ctilde: f64,
    noise: PlanNoise,
    m_x_prime: usize,
    k_reduced: usize,
    p_len: usize,
    n2_override: Option<usize>,
) -> Result<StageBPlan, LearnError> {
    if k_reduced == 0 || p_len <= k_reduced {
        return Err(LearnError::BadParams(format!(
            "reduced stage needs 0 < k_reduced < |P| (got {k_reduced}, {p_len})"
        )));
    }
    let m_v2 = ceil_pos(ctilde * k_reduced as f64 * (p_len as f64 / k_reduced as f64).ln());
    let a1 = k_reduced as f64 * params.b3 / (6.0 * m_v2 as f64);
    let b1 = (m_v2 as f64).sqrt();
    let eps_limit = params.d1.powf(1.5) / (3.0 * (6.0 * a1 * params.c3.powi(3) * b1 * b1).sqrt());
    let epsilon = effective_eps(noise, eps_limit, "reduced-set scan")?;
    let theta = (-epsilon / eps_limit).clamp(-1.0, 1.0).acos();
    let p_c = -params.d1 / (2.0 * a1 * params.c3);
    let q_c = b1 * epsilon / a1;
    let (mu_p, mu_p_interval) = step_window(p_c, q_c)?;
    let tau2 = params.c3 * (a1 * mu_p * mu_p + b1 * epsilon / mu_p);
    let n2 = match noise {
        PlanNoise::Gaussian(sigma2) => n2_override.unwrap_or_else(|| {
            let p2 = 1.0 / p_len as f64;
            resample_count(sigma2, epsilon, 2.0 * (2 * m_x_prime + 1) as f64 * m_v2 as f64 / p2)
        }),
        _ => 1,
    };
    Ok(StageBPlan { m_v2, mu_p, mu_p_interval, tau2, eps_limit, epsilon, theta, n2 })
}

/// Derives the full sampling plan for `algorithm` at dimension `d`.
///
/// Under Gaussian noise the effective bounds are set to half their admissible
/// limits and resampling counts follow the logarithmic union-bound formulas
/// with failure budgets `p1 = p2 = 1/d`; explicit overrides replace the
/// derived counts.
pub fn make_plan(
    params: &ProblemParams,
    d: usize,
    noise: &NoiseModel,
    algorithm: Algorithm,
    ctilde: f64,
    overrides: &PlanOverrides,
) -> Result<SamplingPlan, LearnError> {
    params.validate()?;
    noise.validate().map_err(LearnError::Model)?;
    if !(ctilde > 0.0) {
        return Err(LearnError::BadParams(format!("ctilde = {ctilde} must be > 0")));
    }
    if d < 2 || params.k >= d {
        return Err(LearnError::BadParams(format!("need k < d (k = {}, d = {d})", params.k)));
    }
    let noise = PlanNoise::from_model(noise);
    let m_x = ceil_pos(1.0 / params.lambda2);
    let m_x_prime = ceil_pos(1.0 / params.lambda1);
    let hash_size = target_family_size(d);
    let p_fail = 1.0 / d as f64;
    let kf = params.k as f64;
    let rf = params.rho_m as f64;
    let b3 = params.b3;
    let solver = overrides.solver.unwrap_or_default();

    match algorithm {
        Algorithm::GradientProbe => {
            if params.rho_m != 1 {
                return Err(LearnError::BadParams(format!(
                    "alg1_2 requires the non-overlap regime (rho_m = {})",
                    params.rho_m
                )));
            }
            let m_v = ceil_pos(ctilde * kf * (d as f64 / kf).ln());
            let a = 2.0 * b3 * kf / (3.0 * m_v as f64);
            let b = (m_v as f64).sqrt();
            let eps1_limit =
                params.d1.powf(1.5) / (3.0 * b * params.c_rec * (6.0 * a * params.c_rec).sqrt());
            let epsilon = effective_eps(noise, eps1_limit, "gradient scan")?;
            let theta1 = (-epsilon / eps1_limit).clamp(-1.0, 1.0).acos();
            let (mu, mu_interval) =
                step_window(-params.d1 / (2.0 * a * params.c_rec), b * epsilon / a)?;
            let tau = params.c_rec * (a * mu * mu + b * epsilon / mu);

            let eps2_limit = params.d2.powi(3) / (384.0 * 2.0f64.sqrt() * b3 * b3);
            let epsilon_prime = effective_eps(noise, eps2_limit, "pair probes")?;
            let theta2 = (-epsilon_prime / eps2_limit).clamp(-1.0, 1.0).acos();
            let (beta, _) = step_window(
                -3.0 * params.d2 * params.d2 / (32.0 * b3 * b3),
                6.0 * epsilon_prime / b3,
            )?;
            let radicand = params.d2 * params.d2
                - (32.0 / (3.0 * beta)) * b3 * (beta.powi(3) * b3 + 6.0 * epsilon_prime);
            if radicand <= 0.0 {
                return Err(LearnError::EmptyInterval("probe step window".into()));
            }
            let mu1 = params.d2 / (8.0 * b3);
            let tau_prime =
                beta * beta * b3 / (3.0 * mu1) + 2.0 * mu1 * b3 + 2.0 * epsilon_prime / (beta * mu1);

            let (n1, n2) = match noise {
                PlanNoise::Gaussian(s2) => {
                    let n1 = overrides.n1.unwrap_or_else(|| {
                        resample_count(
                            s2,
                            epsilon,
                            (2.0 / p_fail)
                                * m_v as f64
                                * ((2 * m_x + 1) * (2 * m_x + 1) * hash_size) as f64,
                        )
                    });
                    let probes = kf * (2.0 * (m_x_prime * m_x_prime) as f64 + (kf.log2()).ceil());
                    let n2 = overrides
                        .n2
                        .unwrap_or_else(|| resample_count(s2, epsilon_prime, 2.0 / p_fail * probes));
                    (n1, n2)
                }
                _ => (1, 1),
            };

            Ok(SamplingPlan {
                algorithm,
                d,
                params: *params,
                ctilde,
                noise,
                m_x,
                m_x_prime,
                hash_size,
                m_v,
                m_v_prime: None,
                mu,
                mu_interval,
                mu1: Some(mu1),
                beta: Some(beta),
                tau: Some(tau),
                tau_prime: Some(tau_prime),
                eta: None,
                epsilon,
                eps1_limit,
                epsilon_prime,
                eps2_limit,
                theta1,
                theta2,
                n1,
                n2,
                p_fail,
                solver,
                stage_b_nominal: None,
                n2_override: overrides.n2,
            })
        }
        Algorithm::HessianRows => {
            if params.rho_m >= d {
                return Err(LearnError::BadParams("rho_m must be < d".into()));
            }
            let m_v = ceil_pos(ctilde * kf * (d as f64 / kf).ln());
            let m_v_prime = ceil_pos(ctilde * rf * (d as f64 / rf).ln());
            let four_rho = 4.0 * rf + 1.0;
            let a = four_rho * b3 / (2.0 * (m_v_prime as f64).sqrt());
            let b = params.c1 * (m_v_prime as f64).sqrt() * four_rho * kf * b3 / (3.0 * m_v as f64);
            let eps1_limit = params.d2.powi(3)
                / (192.0
                    * 3.0f64.sqrt()
                    * params.c1
                    * params.c2.powi(3)
                    * (a.powi(3) * b * m_v_prime as f64 * m_v as f64).sqrt());
            let epsilon = effective_eps(noise, eps1_limit, "hessian rows")?;
            let theta1 = (-epsilon / eps1_limit).clamp(-1.0, 1.0).acos();
            let root_mm = (m_v as f64 * m_v_prime as f64).sqrt();
            let (mu, mu_interval) = step_window(
                -params.d2 * params.d2 / (16.0 * a * b * params.c2 * params.c2),
                2.0 * params.c1 * epsilon * root_mm / b,
            )?;
            let mu1 = params.d2 / (4.0 * a * params.c2);
            let radicand =
                mu1 * mu1 - (b * mu * mu + 2.0 * params.c1 * epsilon * root_mm / mu) / a;
            if radicand <= 0.0 {
                return Err(LearnError::EmptyInterval("gradient-difference step window".into()));
            }
            let tau_prime = params.c2
                * (a * mu1 + b * mu * mu / mu1 + 2.0 * params.c1 * epsilon * root_mm / (mu * mu1));

            let stage_b = stage_b_rule(params, ctilde, noise, m_x_prime, params.k, d, overrides.n2)?;
            let n1 = match noise {
                PlanNoise::Gaussian(s2) => overrides.n1.unwrap_or_else(|| {
                    resample_count(
                        s2,
                        epsilon,
                        (2.0 / p_fail)
                            * m_v as f64
                            * (m_v_prime + 1) as f64
                            * ((2 * m_x + 1) * (2 * m_x + 1) * hash_size) as f64,
                    )
                }),
                _ => 1,
            };

            Ok(SamplingPlan {
                algorithm,
                d,
                params: *params,
                ctilde,
                noise,
                m_x,
                m_x_prime,
                hash_size,
                m_v,
                m_v_prime: Some(m_v_prime),
                mu,
                mu_interval,
                mu1: Some(mu1),
                beta: None,
                tau: None,
                tau_prime: Some(tau_prime),
                eta: None,
                epsilon,
                eps1_limit,
                epsilon_prime: stage_b.epsilon,
                eps2_limit: stage_b.eps_limit,
                theta1,
                theta2: stage_b.theta,
                n1,
                n2: stage_b.n2,
                p_fail,
                solver,
                stage_b_nominal: Some(stage_b),
                n2_override: overrides.n2,
            })
        }
        Algorithm::HessianSketch => {
            let kr = kf * rf;
            if (d * d) as f64 <= kr {
                return Err(LearnError::BadParams("d^2 must exceed k * rho_m".into()));
            }
            let m_v = ceil_pos(ctilde * kr * ((d * d) as f64 / kr).ln());
            let four_rho = 4.0 * rf + 1.0;
            let a = 6.0f64.sqrt() * b3 * four_rho * kf / (m_v as f64).sqrt();
            let eps1_limit =
                2.0f64.sqrt() * params.d2.powi(3) / (54.0 * a * a * params.c1.powi(3) * m_v as f64);
            let epsilon = effective_eps(noise, eps1_limit, "hessian sketch")?;
            let (mu, mu_interval, theta1) = if epsilon == 0.0 {
                let hi = params.d2 / (2.0 * a * params.c1);
                (hi / 2.0, (0.0, hi), 0.0)
            } else {
                // shifted cubic mu^3 + A mu^2 + C < 0
                let a_coef = -params.d2 / (2.0 * a * params.c1);
                let c_coef = epsilon * m_v as f64 / (2.0f64.sqrt() * a);
                let p_c = -a_coef * a_coef / 3.0;
                let q_c = 2.0 * a_coef.powi(3) / 27.0 + c_coef;
                let roots = cubic_roots_trig(p_c, q_c).map_err(LearnError::Cubic)?;
                let shifted: Vec<f64> = roots.iter().map(|x| x - a_coef / 3.0).collect();
                let (lo, hi) = (shifted[1], shifted[0]);
                if !(lo < hi) || hi <= 0.0 {
                    return Err(LearnError::EmptyInterval("sketch step window".into()));
                }
                let theta1 = (1.0 - 2.0 * epsilon / eps1_limit).clamp(-1.0, 1.0).acos();
                ((lo + hi) / 2.0, (lo, hi), theta1)
            };
            let eta = 2.0 * 3.0f64.sqrt() * mu * b3 * four_rho * kf / (m_v as f64).sqrt()
                + epsilon * m_v as f64 / (mu * mu);
            let tau = params.c1 * eta;

            let stage_b = stage_b_rule(params, ctilde, noise, m_x_prime, params.k, d, overrides.n2)?;
            let n1 = match noise {
                PlanNoise::Gaussian(s2) => overrides.n1.unwrap_or_else(|| {
                    let raw = 3.0 * s2 / (4.0 * epsilon * epsilon)
                        * ((2.0 / p_fail)
                            * m_v as f64
                            * ((2 * m_x + 1) * (2 * m_x + 1) * hash_size) as f64)
                            .ln();
                    (raw.max(0.0).floor() as usize) + 1
                }),
                _ => 1,
            };

            Ok(SamplingPlan {
                algorithm,
                d,
                params: *params,
                ctilde,
                noise,
                m_x,
                m_x_prime,
                hash_size,
                m_v,
                m_v_prime: None,
                mu,
                mu_interval,
                mu1: None,
                beta: None,
                tau: Some(tau),
                tau_prime: None,
                eta: Some(eta),
                epsilon,
                eps1_limit,
                epsilon_prime: stage_b.epsilon,
                eps2_limit: stage_b.eps_limit,
                theta1,
                theta2: stage_b.theta,
                n1,
                n2: stage_b.n2,
                p_fail,
                solver,
                stage_b_nominal: Some(stage_b),
                n2_override: overrides.n2,
            })
        }
    }
}

impl SamplingPlan {
    /// Reduced-set plan for the actual interaction variables found at runtime.
    pub fn stage_b(&self, k_reduced: usize, p_len: usize) -> Result<StageBPlan, LearnError> {
        stage_b_rule(
            &self.params,
            self.ctilde,
            self.noise,
            self.m_x_prime,
            k_reduced,
            p_len,
            self.n2_override,
        )
    }

    /// Worst-case per-coordinate excursion of any query beyond `[-1, 1]`.
    pub fn oracle_enlargement(&self) -> f64 {
        let stage_b_bound = 2.0 * (self.params.d1 / (self.params.b3 * self.params.c3)).sqrt();
        let r = match self.algorithm {
            Algorithm::GradientProbe => {
                let phase1 = self.mu / (self.m_v as f64).sqrt();
                phase1.max(self.mu1.unwrap_or(0.0)).max(self.beta.unwrap_or(0.0))
            }
            Algorithm::HessianRows => {
                let mvp = self.m_v_prime.unwrap_or(1) as f64;
                let stage_a =
                    self.mu1.unwrap_or(0.0) / mvp.sqrt() + self.mu / (self.m_v as f64).sqrt();
                stage_a.max(stage_b_bound)
            }
            Algorithm::HessianSketch => {
                let stage_a = 2.0 * self.mu * (3.0 / self.m_v as f64).sqrt();
                stage_a.max(stage_b_bound)
            }
        };
        r.max(0.1)
    }

    /// Re-evaluates the defining inequality of every chosen step size and
    /// threshold; all must hold strictly.
    pub fn check_admissible(&self) -> Result<(), LearnError> {
        let p = &self.params;
        let fail = |what: &str| Err(LearnError::EmptyInterval(format!("admissibility: {what}")));
        match self.algorithm {
            Algorithm::GradientProbe => {
                if !(self.tau.unwrap() < p.d1 / 2.0) {
                    return fail("tau < d1/2");
                }
                if !(self.tau_prime.unwrap() < p.d2 / 2.0) {
                    return fail("tau' < d2/2");
                }
                let (beta, mu1) = (self.beta.unwrap(), self.mu1.unwrap());
                let cubic_beta = beta.powi(3) - 3.0 * p.d2 * p.d2 / (32.0 * p.b3 * p.b3) * beta
                    + 6.0 * self.epsilon_prime / p.b3;
                if !(cubic_beta < 0.0) {
                    return fail("beta cubic");
                }
                let rad = p.d2 * p.d2
                    - (32.0 / (3.0 * beta)) * p.b3 * (beta.powi(3) * p.b3 + 6.0 * self.epsilon_prime);
                let (lo, hi) = ((p.d2 - rad.sqrt()) / (8.0 * p.b3), (p.d2 + rad.sqrt()) / (8.0 * p.b3));
                if !(rad > 0.0 && lo < mu1 && mu1 < hi) {
                    return fail("mu1 window");
                }
            }
            Algorithm::HessianRows => {
                if !(self.tau_prime.unwrap() < p.d2 / 2.0) {
                    return fail("tau' < d2/2");
                }
            }
            Algorithm::HessianSketch => {
                if !(self.tau.unwrap() / 2.0f64.sqrt() < p.d2 / 2.0) {
                    return fail("tau/sqrt(2) < d2/2");
                }
            }
        }
        if let Some(sb) = &self.stage_b_nominal {
            if !(sb.tau2 < p.d1 / 2.0) {
                return fail("tau'' < d1/2");
            }
        }
        let (lo, hi) = self.mu_interval;
        if !(lo < self.mu && self.mu < hi) {
            return fail("mu window");
        }
        Ok(())
    }
}
