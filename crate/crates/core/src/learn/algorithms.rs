//! The four support-identification procedures, driven by a sampling plan and
//! a query oracle.
//!
//! Grid points within a phase are processed in parallel with per-point RNG
//! streams derived from `(seed, point index)`, and detections merge through
//! order-independent set unions, so results are schedule-invariant.

use super::gradients::{estimate_gradient, estimate_gradient_restricted, estimate_partial};
use super::plan::{Algorithm, SamplingPlan};
use super::LearnError;
use crate::model::{LedgerSnapshot, Phase, QueryOracle};
use crate::recovery::{
    recover_symmetric_matrix, recover_vector, MatrixRecoveryProblem, VectorRecoveryProblem,
};
use crate::sampling::{
    build_hash_family, grid_chi, grid_chi_diag, grid_chi_i, sample_directions, DirectionKind,
};
use crate::seeds::rng_from;
use ndarray::Array1;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

const TAG_HASH: u64 = 1;
const TAG_V: u64 = 2;
const TAG_VP: u64 = 3;
const TAG_VPP: u64 = 4;
const TAG_NOISE_P1: u64 = 5;
const TAG_NOISE_P2: u64 = 6;
const TAG_NOISE_SA: u64 = 7;
const TAG_NOISE_SB: u64 = 8;

#[derive(Clone, Copy, Debug, Default)]
pub struct ThresholdSet {
    pub tau: f64,
    pub tau_prime: f64,
    pub tau_second: f64,
    pub eta: f64,
}

/// Per-run measurement diagnostics: the largest statistic observed per
/// coordinate and per pair, plus the thresholds they were compared against.
#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    pub max_coordinate_stat: Vec<f64>,
    pub max_pair_stat: BTreeMap<(usize, usize), f64>,
    pub thresholds: ThresholdSet,
}

#[derive(Clone, Debug)]
pub struct RecoveryResult {
    pub s1: BTreeSet<usize>,
    pub s2: BTreeSet<(usize, usize)>,
    pub ledger: LedgerSnapshot,
    pub diagnostics: Diagnostics,
}

fn merge_max(acc: &mut Vec<f64>, other: &Array1<f64>) {
    for (a, &b) in acc.iter_mut().zip(other.iter()) {
        *a = a.max(b.abs());
    }
}

/// Gradient scan over the hashed 2-D grids: thresholds every recovered
/// gradient entry and returns the union of detected coordinates.
pub fn scan_active_set(
    oracle: &QueryOracle,
    plan: &SamplingPlan,
    seed: u64,
) -> Result<(BTreeSet<usize>, Vec<f64>), LearnError> {
    let d = plan.d;
    let tau = plan.tau.expect("gradient scan needs tau");
    let family = build_hash_family(d, plan.params.c1_hash, &mut rng_from(seed, &[TAG_HASH]))?;
    let dirs =
        sample_directions(plan.m_v, d, DirectionKind::Bernoulli, &mut rng_from(seed, &[TAG_V]));
    let mut points = Vec::new();
    for h in family.functions() {
        points.extend(grid_chi(h, plan.m_x).points);
    }
    let per_point: Vec<(BTreeSet<usize>, Array1<f64>)> = points
        .par_iter()
        .enumerate()
        .map(|(idx, x)| -> Result<_, LearnError> {
            let mut rng = rng_from(seed, &[TAG_NOISE_P1, idx as u64]);
            let g = estimate_gradient(
                oracle,
                x,
                plan.mu,
                &dirs,
                plan.params.k,
                plan.solver,
                plan.n1,
                Phase::Phase1,
                &mut rng,
            )?;
            let detected = (0..d).filter(|&q| g[q].abs() > tau).collect();
            Ok((detected, g))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut active = BTreeSet::new();
    let mut max_stat = vec![0.0; d];
    for (det, g) in per_point {
        active.extend(det);
        merge_max(&mut max_stat, &g);
    }
    Ok((active, max_stat))
}

/// Classifies a recovered active set into lone coordinates and interaction
/// pairs via probe differences of estimated partial derivatives, locating the
/// partner of each interacting variable by halving search.
pub fn classify_active_set(
    oracle: &QueryOracle,
    active: &BTreeSet<usize>,
    plan: &SamplingPlan,
    seed: u64,
) -> Result<(BTreeSet<usize>, BTreeSet<(usize, usize)>, Diagnostics), LearnError> {
    let mu1 = plan.mu1.expect("probe phase needs mu1");
    let beta = plan.beta.expect("probe phase needs beta");
    let tau_prime = plan.tau_prime.expect("probe phase needs tau'");
    let globals: Vec<usize> = active.iter().copied().collect();
    let k_hat = globals.len();
    let d = plan.d;
    let mut s1 = BTreeSet::new();
    let mut s2 = BTreeSet::new();
    let mut classified: BTreeSet<usize> = BTreeSet::new();
    let mut diags = Diagnostics {
        max_coordinate_stat: vec![0.0; d],
        max_pair_stat: BTreeMap::new(),
        thresholds: ThresholdSet {
            tau: plan.tau.unwrap_or(0.0),
            tau_prime,
            ..Default::default()
        },
    };
    let embed = |z: &[f64]| -> Vec<f64> {
        let mut full = vec![0.0; d];
        for (i, &zi) in z.iter().enumerate() {
            full[globals[i]] = zi;
        }
        full
    };

    for i_local in 0..k_hat {
        if classified.contains(&i_local) {
            continue;
        }
        let axis = globals[i_local];
        let mut rng = rng_from(seed, &[TAG_NOISE_P2, i_local as u64]);
        let (grid, e2) = grid_chi_i(i_local, &classified, k_hat, plan.m_x_prime);
        let mut hit: Option<(Vec<f64>, f64)> = None;
        for x_local in &grid.points {
            let d0 = estimate_partial(
                oracle,
                &embed(x_local),
                axis,
                beta,
                plan.n2,
                Phase::Phase2Scan,
                &mut rng,
            )?;
            let shifted: Vec<f64> =
                x_local.iter().zip(&e2).map(|(&xq, &eq)| xq + mu1 * eq).collect();
            let d1 = estimate_partial(
                oracle,
                &embed(&shifted),
                axis,
                beta,
                plan.n2,
                Phase::Phase2Scan,
                &mut rng,
            )?;
            let stat = (d1 - d0).abs() / mu1;
            diags.max_coordinate_stat[axis] = diags.max_coordinate_stat[axis].max(stat);
            if stat > tau_prime {
                hit = Some((x_local.clone(), d0));
                break;
            }
        }
        let Some((x_star, d0_star)) = hit else {
            s1.insert(axis);
            classified.insert(i_local);
            continue;
        };

        // halving search for the partner over the unclassified remainder
        let mut remainder: Vec<usize> =
            (0..k_hat).filter(|j| *j != i_local && !classified.contains(j)).collect();
        let probe = |subset: &[usize], rng: &mut rand_chacha::ChaCha8Rng| -> Result<f64, LearnError> {
            let mut z = x_star.clone();
            for &j in subset {
                z[j] += mu1;
            }
            let dp =
                estimate_partial(oracle, &embed(&z), axis, beta, plan.n2, Phase::Phase2Search, rng)?;
            Ok((dp - d0_star).abs() / mu1)
        };
        let mut saw_positive = false;
        while remainder.len() > 1 {
            let half = remainder.len() / 2;
            let stat = probe(&remainder[..half], &mut rng)?;
            if stat > tau_prime {
                saw_positive = true;
                remainder.truncate(half);
            } else {
                remainder.drain(..half);
            }
        }
        let j_local = *remainder.first().expect("halving keeps one candidate");
        if !saw_positive {
            // no partition ever exceeded the threshold: verify the singleton
            let stat = probe(&[j_local], &mut rng)?;
            if !(stat > tau_prime) {
                return Err(LearnError::BinarySearchInconsistency { variable: axis + 1 });
            }
        }
        let partner = globals[j_local];
        let pair = (axis.min(partner), axis.max(partner));
        diags
            .max_pair_stat
            .entry(pair)
            .and_modify(|v| *v = v.max(tau_prime))
            .or_insert(tau_prime);
        s2.insert(pair);
        classified.insert(i_local);
        classified.insert(j_local);
    }
    Ok((s1, s2, diags))
}

/// Shared reduced-set stage: scans the diagonal grid with restricted gradient
/// estimates over the complement of the interaction variables.
fn stage_b_scan(
    oracle: &QueryOracle,
    plan: &SamplingPlan,
    s2: &BTreeSet<(usize, usize)>,
    seed: u64,
    diags: &mut Diagnostics,
) -> Result<BTreeSet<usize>, LearnError> {
    let d = plan.d;
    let mut s2_vars = BTreeSet::new();
    for &(l, lp) in s2 {
        if l >= lp {
            return Err(LearnError::BadParams(format!("unordered pair ({l}, {lp})")));
        }
        s2_vars.insert(l);
        s2_vars.insert(lp);
    }
    let k_reduced = plan.params.k.saturating_sub(s2_vars.len());
    if k_reduced == 0 {
        return Ok(BTreeSet::new());
    }
    let p_set: Vec<usize> = (0..d).filter(|q| !s2_vars.contains(q)).collect();
    let sb = plan.stage_b(k_reduced, p_set.len())?;
    diags.thresholds.tau_second = sb.tau2;
    let dirs = sample_directions(
        sb.m_v2,
        d,
        DirectionKind::Bernoulli,
        &mut rng_from(seed, &[TAG_VPP]),
    );
    let diag_grid = grid_chi_diag(d, plan.m_x_prime);
    let per_point: Vec<(BTreeSet<usize>, Array1<f64>)> = diag_grid
        .points
        .par_iter()
        .enumerate()
        .map(|(idx, x)| -> Result<_, LearnError> {
            let mut rng = rng_from(seed, &[TAG_NOISE_SB, idx as u64]);
            let g = estimate_gradient_restricted(
                oracle,
                x,
                sb.mu_p,
                &dirs,
                &p_set,
                k_reduced,
                plan.solver,
                sb.n2,
                Phase::StageB,
                &mut rng,
            )?;
            let detected = p_set.iter().copied().filter(|&q| g[q].abs() > sb.tau2).collect();
            Ok((detected, g))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut s1 = BTreeSet::new();
    for (det, g) in per_point {
        s1.extend(det);
        merge_max(&mut diags.max_coordinate_stat, &g);
    }
    Ok(s1)
}

/// Interaction detection through row-wise Hessian recovery: at every grid
/// point, the base gradient plus displaced gradients give per-row linear
/// measurements of the Hessian, each row is recovered with budget
/// `rho_m + 1`, and off-diagonal entries above the threshold become pairs.
pub fn identify_via_hessian_rows(
    oracle: &QueryOracle,
    plan: &SamplingPlan,
    seed: u64,
) -> Result<(BTreeSet<usize>, BTreeSet<(usize, usize)>, Diagnostics), LearnError> {
    let d = plan.d;
    let mu1 = plan.mu1.expect("hessian rows need mu1");
    let tau_prime = plan.tau_prime.expect("hessian rows need tau'");
    let m_v_prime = plan.m_v_prime.expect("hessian rows need m_v'");
    let family = build_hash_family(d, plan.params.c1_hash, &mut rng_from(seed, &[TAG_HASH]))?;
    let dirs =
        sample_directions(plan.m_v, d, DirectionKind::Bernoulli, &mut rng_from(seed, &[TAG_V]));
    let dirs_prime =
        sample_directions(m_v_prime, d, DirectionKind::Bernoulli, &mut rng_from(seed, &[TAG_VP]));
    let mut points = Vec::new();
    for h in family.functions() {
        points.extend(grid_chi(h, plan.m_x).points);
    }

    let per_point: Vec<(BTreeSet<(usize, usize)>, BTreeMap<(usize, usize), f64>)> = points
        .par_iter()
        .enumerate()
        .map(|(idx, x)| -> Result<_, LearnError> {
            let mut rng = rng_from(seed, &[TAG_NOISE_SA, idx as u64]);
            let g0 = estimate_gradient(
                oracle,
                x,
                plan.mu,
                &dirs,
                plan.params.k,
                plan.solver,
                plan.n1,
                Phase::StageA,
                &mut rng,
            )?;
            let mut displaced = Vec::with_capacity(m_v_prime);
            let mut shifted = x.clone();
            for p in 0..m_v_prime {
                let vp = dirs_prime.row(p);
                for q in 0..d {
                    shifted[q] = x[q] + mu1 * vp[q];
                }
                displaced.push(estimate_gradient(
                    oracle,
                    &shifted,
                    plan.mu,
                    &dirs,
                    plan.params.k,
                    plan.solver,
                    plan.n1,
                    Phase::StageA,
                    &mut rng,
                )?);
            }
            let mut pairs = BTreeSet::new();
            let mut stats = BTreeMap::new();
            for q in 0..d {
                let y = Array1::from_shape_fn(m_v_prime, |p| (displaced[p][q] - g0[q]) / mu1);
                if y.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let row = recover_vector(&VectorRecoveryProblem {
                    measurements: y,
                    directions: &dirs_prime,
                    sparsity: plan.params.rho_m + 1,
                    solver: plan.solver,
                })?;
                for qp in (q + 1)..d {
                    let v = row[qp].abs();
                    if v > 0.0 {
                        stats.entry((q, qp)).and_modify(|m: &mut f64| *m = m.max(v)).or_insert(v);
                    }
                    if v > tau_prime {
                        pairs.insert((q, qp));
                    }
                }
            }
            Ok((pairs, stats))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut s2 = BTreeSet::new();
    let mut diags = Diagnostics {
        max_coordinate_stat: vec![0.0; d],
        max_pair_stat: BTreeMap::new(),
        thresholds: ThresholdSet { tau_prime, ..Default::default() },
    };
    for (pairs, stats) in per_point {
        s2.extend(pairs);
        for (pr, v) in stats {
            diags.max_pair_stat.entry(pr).and_modify(|m| *m = m.max(v)).or_insert(v);
        }
    }
    let s1 = stage_b_scan(oracle, plan, &s2, seed, &mut diags)?;
    Ok((s1, s2, diags))
}

/// Interaction detection through whole-Hessian recovery from rank-one
/// second-difference measurements, solved as an entrywise-l1 program over
/// symmetric matrices with residual budget `eta`.
pub fn identify_via_hessian_sketch(
    oracle: &QueryOracle,
    plan: &SamplingPlan,
    seed: u64,
) -> Result<(BTreeSet<usize>, BTreeSet<(usize, usize)>, Diagnostics), LearnError> {
    let d = plan.d;
    let tau = plan.tau.expect("hessian sketch needs tau");
    let eta = plan.eta.expect("hessian sketch needs eta");
    let family = build_hash_family(d, plan.params.c1_hash, &mut rng_from(seed, &[TAG_HASH]))?;
    let dirs =
        sample_directions(plan.m_v, d, DirectionKind::Ternary, &mut rng_from(seed, &[TAG_V]));
    let mut points = Vec::new();
    for h in family.functions() {
        points.extend(grid_chi(h, plan.m_x).points);
    }

    let per_point: Vec<(BTreeSet<(usize, usize)>, BTreeMap<(usize, usize), f64>)> = points
        .par_iter()
        .enumerate()
        .map(|(idx, x)| -> Result<_, LearnError> {
            let mut rng = rng_from(seed, &[TAG_NOISE_SA, idx as u64]);
            let f0 = oracle.query_averaged(x, plan.n1, Phase::StageA, &mut rng)?;
            let mut y = Array1::zeros(plan.m_v);
            let mut plus = x.clone();
            let mut minus = x.clone();
            for j in 0..plan.m_v {
                let v = dirs.row(j);
                for q in 0..d {
                    plus[q] = x[q] + 2.0 * plan.mu * v[q];
                    minus[q] = x[q] - 2.0 * plan.mu * v[q];
                }
                let fp = oracle.query_averaged(&plus, plan.n1, Phase::StageA, &mut rng)?;
                let fm = oracle.query_averaged(&minus, plan.n1, Phase::StageA, &mut rng)?;
                y[j] = (fp + fm - 2.0 * f0) / (4.0 * plan.mu * plan.mu);
            }
            let h = recover_symmetric_matrix(
                &MatrixRecoveryProblem { measurements: y, directions: &dirs, eta },
                d,
            )?;
            let mut pairs = BTreeSet::new();
            let mut stats = BTreeMap::new();
            for q in 0..d {
                for qp in (q + 1)..d {
                    let v = h[[q, qp]].abs();
                    if v > 0.0 {
                        stats.entry((q, qp)).and_modify(|m: &mut f64| *m = m.max(v)).or_insert(v);
                    }
                    if v > tau {
                        pairs.insert((q, qp));
                    }
                }
            }
            Ok((pairs, stats))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut s2 = BTreeSet::new();
    let mut diags = Diagnostics {
        max_coordinate_stat: vec![0.0; d],
        max_pair_stat: BTreeMap::new(),
        thresholds: ThresholdSet { tau, eta, ..Default::default() },
    };
    for (pairs, stats) in per_point {
        s2.extend(pairs);
        for (pr, v) in stats {
            diags.max_pair_stat.entry(pr).and_modify(|m| *m = m.max(v)).or_insert(v);
        }
    }
    let s1 = stage_b_scan(oracle, plan, &s2, seed, &mut diags)?;
    Ok((s1, s2, diags))
}

/// Runs the full identification pipeline selected by the plan.
pub fn recover_structure(
    oracle: &QueryOracle,
    plan: &SamplingPlan,
    seed: u64,
) -> Result<RecoveryResult, LearnError> {
    let (s1, s2, mut diagnostics) = match plan.algorithm {
        Algorithm::GradientProbe => {
            let (active, scan_stats) = scan_active_set(oracle, plan, seed)?;
            let (s1, s2, mut diags) = classify_active_set(oracle, &active, plan, seed)?;
            for (m, s) in diags.max_coordinate_stat.iter_mut().zip(scan_stats) {
                *m = m.max(s);
            }
            (s1, s2, diags)
        }
        Algorithm::HessianRows => identify_via_hessian_rows(oracle, plan, seed)?,
        Algorithm::HessianSketch => identify_via_hessian_sketch(oracle, plan, seed)?,
    };
    let mut s2_vars = BTreeSet::new();
    for &(l, lp) in &s2 {
        s2_vars.insert(l);
        s2_vars.insert(lp);
    }
    debug_assert!(s1.is_disjoint(&s2_vars), "classified sets must be disjoint");
    if diagnostics.max_coordinate_stat.is_empty() {
        diagnostics.max_coordinate_stat = vec![0.0; plan.d];
    }
    Ok(RecoveryResult { s1, s2, ledger: oracle.ledger().snapshot(), diagnostics })
}
