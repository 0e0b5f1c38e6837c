//! Synthetic ground-truth models, the noisy point-query oracle, and the
//! ANOVA canonical form used as a verification target.

mod builtins;
mod calculus;
mod canonical;
mod terms;

pub use builtins::{build_model, default_params, ModelConfig};
pub use calculus::{true_gradient, true_hessian};
pub use canonical::{anova_canonicalize, CanonicalModel};
pub use terms::{BivariateTerm, UnivariateTerm};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown builtin model `{0}`")]
    UnknownBuiltin(String),
    #[error("index {index} out of range for dimension {d} (indices are 1-based)")]
    IndexOutOfRange { index: usize, d: usize },
    #[error("duplicate interaction pair ({0}, {1})")]
    DuplicatePair(usize, usize),
    #[error("pair ({0}, {1}) is not ordered l < l'")]
    UnorderedPair(usize, usize),
    #[error("bivariate term on pair ({0}, {1}) is not truly bivariate (cross partial vanishes)")]
    NotTrulyBivariate(usize, usize),
    #[error("query point leaves the enlarged cube: |x[{coord}]| = {value:.6} > {limit:.6}")]
    OutsideDomain { coord: usize, value: f64, limit: f64 },
    #[error("noise model invalid: {0}")]
    InvalidNoise(String),
    #[error("quadrature resolution {0} is below the minimum of 16 nodes per axis")]
    QuadratureTooCoarse(usize),
    #[error("builtin `{builtin}` requires the block-count parameter t")]
    MissingBlockCount { builtin: String },
    #[error("model config must name a builtin or provide custom terms")]
    EmptyConfig,
}

/// Ground-truth additive model: univariate components on single coordinates
/// plus truly bivariate components on ordered pairs. Indices are 0-based
/// internally; configs and display output use 1-based coordinates.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    d: usize,
    univariate_terms: Vec<(usize, UnivariateTerm)>,
    bivariate_terms: Vec<((usize, usize), BivariateTerm)>,
}

impl ModelSpec {
    /// Validates index ranges, pair ordering/uniqueness, and that every
    /// bivariate term has a nonvanishing cross partial on a 33x33 probe grid.
    pub fn new(
        d: usize,
        univariate_terms: Vec<(usize, UnivariateTerm)>,
        bivariate_terms: Vec<((usize, usize), BivariateTerm)>,
    ) -> Result<Self, ModelError> {
        for &(p, _) in &univariate_terms {
            if p >= d {
                return Err(ModelError::IndexOutOfRange { index: p + 1, d });
            }
        }
        let mut seen = BTreeSet::new();
        for &((l, lp), _) in &bivariate_terms {
            if l >= lp {
                return Err(ModelError::UnorderedPair(l + 1, lp + 1));
            }
            if lp >= d {
                return Err(ModelError::IndexOutOfRange { index: lp + 1, d });
            }
            if !seen.insert((l, lp)) {
                return Err(ModelError::DuplicatePair(l + 1, lp + 1));
            }
        }
        for ((l, lp), term) in &bivariate_terms {
            if !truly_bivariate(term) {
                return Err(ModelError::NotTrulyBivariate(l + 1, lp + 1));
            }
        }
        Ok(ModelSpec { d, univariate_terms, bivariate_terms })
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn univariate_terms(&self) -> &[(usize, UnivariateTerm)] {
        &self.univariate_terms
    }

    pub fn bivariate_terms(&self) -> &[((usize, usize), BivariateTerm)] {
        &self.bivariate_terms
    }

    /// Indices carrying a univariate component (raw form, before merging).
    pub fn s1(&self) -> BTreeSet<usize> {
        self.univariate_terms.iter().map(|&(p, _)| p).collect()
    }

    pub fn s2(&self) -> BTreeSet<(usize, usize)> {
        self.bivariate_terms.iter().map(|&(pr, _)| pr).collect()
    }

    /// Variables appearing in some interaction pair.
    pub fn s2_var(&self) -> BTreeSet<usize> {
        let mut v = BTreeSet::new();
        for &((l, lp), _) in &self.bivariate_terms {
            v.insert(l);
            v.insert(lp);
        }
        v
    }

    /// Number of pairs containing `l`.
    pub fn degree(&self, l: usize) -> usize {
        self.bivariate_terms
            .iter()
            .filter(|&&((a, b), _)| a == l || b == l)
            .count()
    }

    pub fn rho_max(&self) -> usize {
        self.s2_var().iter().map(|&l| self.degree(l)).max().unwrap_or(0)
    }

    /// Total sparsity `k = |S1 ∪ S2_var|`.
    pub fn total_sparsity(&self) -> usize {
        let mut s = self.s1();
        s.extend(self.s2_var());
        s.len()
    }

    /// Supports in the unique ANOVA form: univariate indices that also appear
    /// in a pair are absorbed into the interaction side.
    pub fn canonical_supports(&self) -> (BTreeSet<usize>, BTreeSet<(usize, usize)>) {
        let s2v = self.s2_var();
        let s1 = self.s1().into_iter().filter(|p| !s2v.contains(p)).collect();
        (s1, self.s2())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        let mut acc = 0.0;
        for (p, term) in &self.univariate_terms {
            acc += term.eval(x[*p]);
        }
        for ((l, lp), term) in &self.bivariate_terms {
            acc += term.eval(x[*l], x[*lp]);
        }
        acc
    }
}

fn truly_bivariate(term: &BivariateTerm) -> bool {
    // Finite-difference cross partial scanned over a dense probe grid.
    let h = 1e-4;
    let n = 33;
    let mut max_cross = 0.0f64;
    for i in 0..n {
        let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let y = -1.0 + 2.0 * j as f64 / (n - 1) as f64;
            let cross = (term.eval(x + h, y + h) - term.eval(x + h, y - h)
                - term.eval(x - h, y + h)
                + term.eval(x - h, y - h))
                / (4.0 * h * h);
            max_cross = max_cross.max(cross.abs());
        }
    }
    max_cross > 1e-8
}

/// External noise added to each point query.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    Noiseless,
    /// Arbitrary noise with magnitude strictly below `eps`.
    BoundedArbitrary { eps: f64, generator: BoundedGenerator },
    /// i.i.d. centered Gaussian with variance `sigma2`.
    Gaussian { sigma2: f64 },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum BoundedGenerator {
    /// Uniform draws on (-eps, eps).
    Uniform,
    /// Near-maximal magnitude with a sign keyed to the query point; the
    /// adversarial case for bounded-noise tests.
    SignFlip,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            NoiseModel::Noiseless => Ok(()),
            NoiseModel::BoundedArbitrary { eps, .. } => {
                if *eps >= 0.0 && eps.is_finite() {
                    Ok(())
                } else {
                    Err(ModelError::InvalidNoise(format!("eps = {eps} must be >= 0")))
                }
            }
            NoiseModel::Gaussian { sigma2 } => {
                if *sigma2 > 0.0 && sigma2.is_finite() {
                    Ok(())
                } else {
                    Err(ModelError::InvalidNoise(format!("sigma2 = {sigma2} must be > 0")))
                }
            }
        }
    }

    fn draw(&self, x: &[f64], rng: &mut ChaCha8Rng) -> f64 {
        match self {
            NoiseModel::Noiseless => 0.0,
            NoiseModel::BoundedArbitrary { eps, generator } => {
                if *eps == 0.0 {
                    return 0.0;
                }
                match generator {
                    BoundedGenerator::Uniform => {
                        loop {
                            let u: f64 = rng.gen();
                            let v = eps * (2.0 * u - 1.0);
                            if v.abs() < *eps {
                                return v;
                            }
                        }
                    }
                    BoundedGenerator::SignFlip => {
                        let mut h = 0u64;
                        for &c in x {
                            h ^= c.to_bits();
                            h = h.rotate_left(17).wrapping_mul(0x9e3779b97f4a7c15);
                        }
                        let sign = if h & 1 == 0 { 1.0 } else { -1.0 };
                        sign * eps * (1.0 - 1e-12)
                    }
                }
            }
            NoiseModel::Gaussian { sigma2 } => {
                // Box-Muller; two uniforms per draw keeps the stream simple.
                let u1: f64 = loop {
                    let u: f64 = rng.gen();
                    if u > 0.0 {
                        break u;
                    }
                };
                let u2: f64 = rng.gen();
                sigma2.sqrt() * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            }
        }
    }
}

/// Query-accounting phases, one counter per algorithm stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Phase1,
    Phase2Scan,
    Phase2Search,
    StageA,
    StageB,
    Components,
}

const PHASES: [(Phase, &str); 6] = [
    (Phase::Phase1, "phase1"),
    (Phase::Phase2Scan, "phase2_scan"),
    (Phase::Phase2Search, "phase2_search"),
    (Phase::StageA, "stage_a"),
    (Phase::StageB, "stage_b"),
    (Phase::Components, "components"),
];

impl Phase {
    fn slot(self) -> usize {
        PHASES.iter().position(|&(p, _)| p == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        PHASES[self.slot()].1
    }
}

/// Concurrent query counter; totals are exact regardless of schedule.
#[derive(Debug, Default)]
pub struct QueryLedger {
    total: AtomicU64,
    per_phase: [AtomicU64; 6],
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, phase: Phase, n: u64) {
        self.total.fetch_add(n, Ordering::Relaxed);
        self.per_phase[phase.slot()].fetch_add(n, Ordering::Relaxed);
    }

    pub fn total(&self) -> u64 {
        self.total.load(Ordering::Relaxed)
    }

    pub fn phase(&self, phase: Phase) -> u64 {
        self.per_phase[phase.slot()].load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let mut per_phase = BTreeMap::new();
        for (p, name) in PHASES {
            let v = self.phase(p);
            if v > 0 {
                per_phase.insert(name.to_string(), v);
            }
        }
        LedgerSnapshot { total: self.total(), per_phase }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct LedgerSnapshot {
    pub total: u64,
    pub per_phase: BTreeMap<String, u64>,
}

/// Point-query oracle over the enlarged cube `[-(1+r), 1+r]^d`.
///
/// Evaluation is pure; noise comes from the caller-supplied RNG stream, so a
/// fixed seed replays exactly. Every call increments the ledger by one.
#[derive(Clone)]
pub struct QueryOracle<'m> {
    model: &'m ModelSpec,
    noise: NoiseModel,
    enlargement: f64,
    ledger: Arc<QueryLedger>,
}

impl<'m> QueryOracle<'m> {
    pub fn new(model: &'m ModelSpec, noise: NoiseModel, enlargement: f64) -> Result<Self, ModelError> {
        noise.validate()?;
        Ok(QueryOracle {
            model,
            noise,
            enlargement: enlargement.max(0.1),
            ledger: Arc::new(QueryLedger::new()),
        })
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn enlargement(&self) -> f64 {
        self.enlargement
    }

    pub fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }

    pub fn query(&self, x: &[f64], phase: Phase, rng: &mut ChaCha8Rng) -> Result<f64, ModelError> {
        let limit = 1.0 + self.enlargement + 1e-12;
        for (i, &c) in x.iter().enumerate() {
            if c.abs() > limit {
                return Err(ModelError::OutsideDomain { coord: i + 1, value: c, limit });
            }
        }
        self.ledger.record(phase, 1);
        Ok(self.model.eval(x) + self.noise.draw(x, rng))
    }

    /// Repeats the query `n` times and averages; each repetition is ledgered.
    pub fn query_averaged(
        &self,
        x: &[f64],
        n: usize,
        phase: Phase,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64, ModelError> {
        let n = n.max(1);
        let mut acc = 0.0;
        for _ in 0..n {
            acc += self.query(x, phase, rng)?;
        }
        Ok(acc / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_from;

    fn f1(d: usize) -> ModelSpec {
        build_model(&ModelConfig::builtin("f1_nonoverlap", d, 1)).unwrap()
    }

    #[test]
    fn f1_structure_matches_expected_supports() {
        let m = f1(100);
        assert_eq!(m.s1(), BTreeSet::from([0, 1]));
        assert_eq!(m.s2(), BTreeSet::from([(2, 3), (4, 5)]));
        assert_eq!(m.total_sparsity(), 6);
        assert_eq!(m.rho_max(), 1);
    }

    #[test]
    fn f1_overlap_has_degree_two_and_k_five() {
        let m = build_model(&ModelConfig::builtin("f1_overlap", 100, 1)).unwrap();
        assert_eq!(m.s2(), BTreeSet::from([(2, 3), (3, 4)]));
        assert_eq!(m.rho_max(), 2);
        assert_eq!(m.total_sparsity(), 5);
    }

    #[test]
    fn empty_model_is_valid_and_zero() {
        let m = ModelSpec::new(10, vec![], vec![]).unwrap();
        assert_eq!(m.total_sparsity(), 0);
        assert_eq!(m.eval(&[0.25; 10]), 0.0);
    }

    #[test]
    fn f1_query_values_are_exact_noiseless() {
        let m = f1(100);
        let oracle = QueryOracle::new(&m, NoiseModel::Noiseless, 0.1).unwrap();
        let mut rng = rng_from(0, &[0]);
        let x0 = vec![0.0; 100];
        assert_eq!(oracle.query(&x0, Phase::Phase1, &mut rng).unwrap(), 0.0);
        let mut x = vec![0.0; 100];
        for i in 0..6 {
            x[i] = 1.0;
        }
        // 2 - 3 + 4 - 5
        let v = oracle.query(&x, Phase::Phase1, &mut rng).unwrap();
        assert!((v - (-2.0)).abs() < 1e-12);
        assert_eq!(oracle.ledger().total(), 2);
    }

    #[test]
    fn bounded_noise_stays_within_band() {
        let m = f1(20);
        for generator in [BoundedGenerator::Uniform, BoundedGenerator::SignFlip] {
            let oracle = QueryOracle::new(
                &m,
                NoiseModel::BoundedArbitrary { eps: 0.1, generator },
                0.1,
            )
            .unwrap();
            let mut rng = rng_from(3, &[1]);
            let mut x = vec![0.0; 20];
            for trial in 0..200 {
                x[7] = -1.0 + (trial % 9) as f64 / 4.0;
                let v = oracle.query(&x, Phase::Phase1, &mut rng).unwrap();
                let clean = m.eval(&x);
                assert!((v - clean).abs() < 0.1, "noise out of band: {}", v - clean);
            }
        }
    }

    #[test]
    fn query_is_deterministic_for_fixed_seed() {
        let m = f1(20);
        let oracle = QueryOracle::new(&m, NoiseModel::Gaussian { sigma2: 1e-2 }, 0.1).unwrap();
        let x = vec![0.5; 20];
        let a = {
            let mut rng = rng_from(11, &[2]);
            oracle.query(&x, Phase::Phase1, &mut rng).unwrap()
        };
        let b = {
            let mut rng = rng_from(11, &[2]);
            oracle.query(&x, Phase::Phase1, &mut rng).unwrap()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn queries_outside_enlarged_cube_error() {
        let m = f1(20);
        let oracle = QueryOracle::new(&m, NoiseModel::Noiseless, 0.1).unwrap();
        let mut rng = rng_from(0, &[0]);
        let mut x = vec![0.0; 20];
        x[3] = 1.2;
        assert!(matches!(
            oracle.query(&x, Phase::Phase1, &mut rng),
            Err(ModelError::OutsideDomain { coord: 4, .. })
        ));
    }

    #[test]
    fn ledger_counts_are_exact_under_concurrency() {
        let ledger = Arc::new(QueryLedger::new());
        let mut handles = vec![];
        for _ in 0..8 {
            let l = Arc::clone(&ledger);
            handles.push(std::thread::spawn(move || {
                for _ in 0..10_000 {
                    l.record(Phase::StageA, 1);
                }
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(ledger.total(), 80_000);
        assert_eq!(ledger.phase(Phase::StageA), 80_000);
    }

    #[test]
    fn gaussian_resampling_counts_every_repetition() {
        let m = f1(20);
        let oracle = QueryOracle::new(&m, NoiseModel::Gaussian { sigma2: 1.0 }, 0.1).unwrap();
        let mut rng = rng_from(5, &[7]);
        let x = vec![0.0; 20];
        let avg = oracle.query_averaged(&x, 400, Phase::StageB, &mut rng).unwrap();
        assert_eq!(oracle.ledger().phase(Phase::StageB), 400);
        // mean of 400 N(0,1) draws concentrates near 0
        assert!(avg.abs() < 0.25, "avg = {avg}");
    }

    #[test]
    fn duplicate_pair_and_bad_index_are_rejected() {
        let b = BivariateTerm::bilinear(1.0);
        assert!(matches!(
            ModelSpec::new(10, vec![], vec![((2, 3), b.clone()), ((2, 3), b.clone())]),
            Err(ModelError::DuplicatePair(3, 4))
        ));
        assert!(matches!(
            ModelSpec::new(3, vec![], vec![((2, 5), b.clone())]),
            Err(ModelError::IndexOutOfRange { index: 6, d: 3 })
        ));
        let flat = BivariateTerm::Separable {
            fx: UnivariateTerm::linear(1.0),
            fy: UnivariateTerm::Poly { coeffs: vec![1.0] },
        };
        assert!(matches!(
            ModelSpec::new(10, vec![], vec![((0, 1), flat)]),
            Err(ModelError::NotTrulyBivariate(1, 2))
        ));
    }
}
