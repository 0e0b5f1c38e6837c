//! Hash-family grid construction and random measurement ensembles.
//!
//! The pair-separating hash family turns the problem of hitting every 2-D
//! canonical subspace into a union of small 2-D lattices; Bernoulli and
//! sparse-ternary direction sets provide the compressed-sensing measurements.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("hash family construction exhausted {retries} retries for d = {d} (size cap {cap})")]
    RetryCapExceeded { d: usize, retries: usize, cap: usize },
    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("hash constant must exceed 1, got {0}")]
    BadHashConstant(f64),
}

/// One map `[d] -> {1, 2}`, stored as the indicator of class 1.
#[derive(Clone, Debug)]
pub struct HashFn {
    class_one: Vec<bool>,
}

impl HashFn {
    pub fn class(&self, i: usize) -> u8 {
        if self.class_one[i] {
            1
        } else {
            2
        }
    }

    /// Indicator vectors of the two preimages; they partition `[d]`.
    pub fn e1_e2(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.class_one.len();
        let mut e1 = vec![0.0; d];
        let mut e2 = vec![0.0; d];
        for i in 0..d {
            if self.class_one[i] {
                e1[i] = 1.0;
            } else {
                e2[i] = 1.0;
            }
        }
        (e1, e2)
    }
}

/// A family of maps `[d] -> {1, 2}` separating every pair of indices.
#[derive(Clone, Debug)]
pub struct HashFamily {
    pub d: usize,
    functions: Vec<HashFn>,
}

impl HashFamily {
    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[HashFn] {
        &self.functions
    }

    /// Exact pair-coverage check: two indices are unseparated iff they share
    /// the same class under every function, i.e. the same signature.
    pub fn covers_all_pairs(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.d);
        for i in 0..self.d {
            let sig: Vec<bool> = self.functions.iter().map(|h| h.class_one[i]).collect();
            if !seen.insert(sig) {
                return false;
            }
        }
        true
    }
}

/// Family size drawn per attempt; makes full pair coverage likely in one shot.
pub fn target_family_size(d: usize) -> usize {
    let lg = (d.max(2) as f64).log2();
    (2.0 * lg).ceil() as usize + 1
}

/// Size cap from the probabilistic construction: `2 (c1 + 1) e^2 ln d`.
pub fn family_size_bound(d: usize, c1: f64) -> usize {
    (2.0 * (c1 + 1.0) * std::f64::consts::E.powi(2) * (d.max(2) as f64).ln()).ceil() as usize
}

const FAMILY_RETRY_CAP: usize = 50;

/// Draws uniformly random maps `[d] -> {1, 2}` until the whole family
/// separates every pair, retrying complete families up to a cap of 50.
pub fn build_hash_family(d: usize, c1: f64, rng: &mut ChaCha8Rng) -> Result<HashFamily, SamplingError> {
    if d < 2 {
        return Err(SamplingError::DimensionTooSmall(d));
    }
    if !(c1 > 1.0) {
        return Err(SamplingError::BadHashConstant(c1));
    }
    let size = target_family_size(d);
    let cap = family_size_bound(d, c1);
    if size > cap {
        return Err(SamplingError::RetryCapExceeded { d, retries: 0, cap });
    }
    for _ in 0..FAMILY_RETRY_CAP {
        let functions: Vec<HashFn> = (0..size)
            .map(|_| HashFn { class_one: (0..d).map(|_| rng.gen_bool(0.5)).collect() })
            .collect();
        let fam = HashFamily { d, functions };
        if fam.covers_all_pairs() {
            return Ok(fam);
        }
    }
    Err(SamplingError::RetryCapExceeded { d, retries: FAMILY_RETRY_CAP, cap })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionKind {
    Bernoulli,
    Ternary,
}

/// Random sampling directions, one per row.
#[derive(Clone, Debug)]
pub struct DirectionSet {
    pub m: usize,
    pub d: usize,
    pub kind: DirectionKind,
    rows: ndarray::Array2<f64>,
}

impl DirectionSet {
    pub fn rows(&self) -> &ndarray::Array2<f64> {
        &self.rows
    }

    pub fn row(&self, j: usize) -> ndarray::ArrayView1<'_, f64> {
        self.rows.row(j)
    }

    pub fn max_abs_entry(&self) -> f64 {
        match self.kind {
            DirectionKind::Bernoulli => 1.0 / (self.m as f64).sqrt(),
            DirectionKind::Ternary => (3.0 / self.m as f64).sqrt(),
        }
    }
}

/// Draws `m` i.i.d. direction rows.
///
/// Bernoulli entries are `±1/sqrt(m)`; ternary entries are `±sqrt(3/m)` with
/// probability 1/6 each and zero otherwise, so the unscaled entries have unit
/// variance and fourth moment 3.
pub fn sample_directions(
    m: usize,
    d: usize,
    kind: DirectionKind,
    rng: &mut ChaCha8Rng,
) -> DirectionSet {
    assert!(m >= 1, "need at least one direction");
    let mut rows = ndarray::Array2::zeros((m, d));
    match kind {
        DirectionKind::Bernoulli => {
            let v = 1.0 / (m as f64).sqrt();
            for e in rows.iter_mut() {
                *e = if rng.gen_bool(0.5) { v } else { -v };
            }
        }
        DirectionKind::Ternary => {
            let v = (3.0 / m as f64).sqrt();
            for e in rows.iter_mut() {
                let u: f64 = rng.gen();
                *e = if u < 1.0 / 6.0 {
                    v
                } else if u < 1.0 / 3.0 {
                    -v
                } else {
                    0.0
                };
            }
        }
    }
    DirectionSet { m, d, kind, rows }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GridProvenance {
    /// 2-D lattice spanned by the two preimage indicators of a hash function.
    HashPlane { m_x: usize },
    /// 2-D lattice spanned by a coordinate axis and the ones vector off the
    /// processed set.
    AxisPlane { i: usize, m_x: usize },
    /// The diagonal line `(x, ..., x)`.
    Diagonal { m_x: usize },
}

/// A finite set of full-dimensional sample points on a lattice.
#[derive(Clone, Debug)]
pub struct GridSet {
    pub points: Vec<Vec<f64>>,
    pub resolution: usize,
    pub provenance: GridProvenance,
}

fn lattice(m_x: usize) -> Vec<f64> {
    (0..=2 * m_x).map(|j| (j as f64 - m_x as f64) / m_x as f64).collect()
}

/// `(2 m_x + 1)^2` points `c1 e1(h) + c2 e2(h)`, lexicographic in `(c1, c2)`.
pub fn grid_chi(h: &HashFn, m_x: usize) -> GridSet {
    assert!(m_x >= 1);
    let (e1, e2) = h.e1_e2();
    let d = e1.len();
    let vals = lattice(m_x);
    let mut points = Vec::with_capacity(vals.len() * vals.len());
    for &c1 in &vals {
        for &c2 in &vals {
            let mut x = vec![0.0; d];
            for q in 0..d {
                x[q] = c1 * e1[q] + c2 * e2[q];
            }
            points.push(x);
        }
    }
    GridSet { points, resolution: m_x, provenance: GridProvenance::HashPlane { m_x } }
}

/// Axis-plane grid for processing variable `i` in a `k`-dimensional space:
/// `c1 e1(i) + c2 e2(i)` where `e2(i)` is all ones off `{i} ∪ processed`.
/// Also returns `e2(i)`, the probe direction used to detect interactions.
pub fn grid_chi_i(
    i: usize,
    processed: &BTreeSet<usize>,
    k: usize,
    m_x: usize,
) -> (GridSet, Vec<f64>) {
    assert!(m_x >= 1);
    assert!(i < k && !processed.contains(&i));
    let mut e2 = vec![1.0; k];
    e2[i] = 0.0;
    for &j in processed {
        e2[j] = 0.0;
    }
    let vals = lattice(m_x);
    let mut points = Vec::with_capacity(vals.len() * vals.len());
    for &c1 in &vals {
        for &c2 in &vals {
            let mut x = vec![0.0; k];
            for (q, xq) in x.iter_mut().enumerate() {
                *xq = if q == i { c1 } else { c2 * e2[q] };
            }
            points.push(x);
        }
    }
    (
        GridSet { points, resolution: m_x, provenance: GridProvenance::AxisPlane { i, m_x } },
        e2,
    )
}

/// `2 m_x + 1` points on the diagonal line of `[-1, 1]^d`.
pub fn grid_chi_diag(d: usize, m_x: usize) -> GridSet {
    assert!(m_x >= 1 && d >= 1);
    let points = lattice(m_x).into_iter().map(|c| vec![c; d]).collect();
    GridSet { points, resolution: m_x, provenance: GridProvenance::Diagonal { m_x } }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_from;

    fn exhaustive_coverage(fam: &HashFamily) -> bool {
        // enumeration oracle, O(d^2 |H|)
        for i in 0..fam.d {
            for j in (i + 1)..fam.d {
                if !fam.functions().iter().any(|h| h.class(i) != h.class(j)) {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn d2_family_covers_the_single_pair() {
        let mut rng = rng_from(1, &[0]);
        let fam = build_hash_family(2, 1.7, &mut rng).unwrap();
        assert!(fam.covers_all_pairs());
        assert!(exhaustive_coverage(&fam));
        assert!(fam.len() <= family_size_bound(2, 1.7));
    }

    #[test]
    fn d100_family_respects_size_bound_and_covers() {
        let mut rng = rng_from(2, &[0]);
        let fam = build_hash_family(100, 1.7, &mut rng).unwrap();
        let bound = (2.0f64 * 2.7 * std::f64::consts::E.powi(2) * 100f64.ln()).ceil() as usize;
        assert!(fam.len() <= bound, "{} > {bound}", fam.len());
        assert!(exhaustive_coverage(&fam));
    }

    #[test]
    fn d10_every_pair_separated_exhaustively() {
        let mut rng = rng_from(3, &[0]);
        let fam = build_hash_family(10, 1.7, &mut rng).unwrap();
        assert!(exhaustive_coverage(&fam));
    }

    #[test]
    fn d2000_coverage_holds() {
        let mut rng = rng_from(4, &[0]);
        let fam = build_hash_family(2000, 1.7, &mut rng).unwrap();
        assert!(fam.covers_all_pairs());
    }

    #[test]
    fn signature_check_agrees_with_enumeration_oracle() {
        let mut rng = rng_from(5, &[0]);
        for d in [2usize, 5, 17, 64] {
            for _ in 0..3 {
                let size = 4;
                let functions: Vec<HashFn> = (0..size)
                    .map(|_| HashFn { class_one: (0..d).map(|_| rng.gen_bool(0.5)).collect() })
                    .collect();
                let fam = HashFamily { d, functions };
                assert_eq!(fam.covers_all_pairs(), exhaustive_coverage(&fam), "d = {d}");
            }
        }
    }

    #[test]
    fn grid_chi_smallest_lattice_is_nine_points() {
        let h = HashFn { class_one: vec![true, false] };
        let g = grid_chi(&h, 1);
        assert_eq!(g.points.len(), 9);
        for p in &g.points {
            for &c in p {
                assert!(c == -1.0 || c == 0.0 || c == 1.0);
            }
        }
    }

    #[test]
    fn grid_chi_ties_unseparated_coordinates() {
        // d = 3 with h(1) = h(3) != h(2): every point has x1 == x3
        let h = HashFn { class_one: vec![true, false, true] };
        let g = grid_chi(&h, 1);
        for p in &g.points {
            assert_eq!(p[0], p[2]);
        }
    }

    #[test]
    fn grid_chi_resolution_four_has_81_points_spaced_quarter() {
        let h = HashFn { class_one: vec![true, false] };
        let g = grid_chi(&h, 4);
        assert_eq!(g.points.len(), 81);
        let mut c1s: Vec<f64> = g.points.iter().map(|p| p[0]).collect();
        c1s.dedup();
        assert_eq!(c1s.len(), 9);
        assert!((c1s[1] - c1s[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn grid_chi_i_full_square_and_degenerate_cases() {
        let (g, e2) = grid_chi_i(0, &BTreeSet::new(), 2, 1);
        assert_eq!(e2, vec![0.0, 1.0]);
        assert_eq!(g.points.len(), 9);

        let (g81, _) = grid_chi_i(2, &BTreeSet::new(), 6, 4);
        assert_eq!(g81.points.len(), 81);

        // everything but i processed: e2 = 0, grid degenerates to a line
        let processed: BTreeSet<usize> = [1, 2].into_iter().collect();
        let (gl, e2l) = grid_chi_i(0, &processed, 3, 1);
        assert_eq!(e2l, vec![0.0; 3]);
        assert_eq!(gl.points.len(), 9);
        for p in &gl.points {
            assert_eq!(p[1], 0.0);
            assert_eq!(p[2], 0.0);
        }
    }

    #[test]
    fn diag_grid_sizes_and_values() {
        let g = grid_chi_diag(4, 1);
        assert_eq!(g.points.len(), 3);
        assert_eq!(g.points[0], vec![-1.0; 4]);
        assert_eq!(g.points[1], vec![0.0; 4]);
        let g9 = grid_chi_diag(5, 4);
        assert_eq!(g9.points.len(), 9);
        assert!((g9.points[1][0] + 0.75).abs() < 1e-15);
        let g1 = grid_chi_diag(1, 4);
        assert_eq!(g1.points.len(), 9);
        assert_eq!(g1.points[0], vec![-1.0]);
    }

    #[test]
    fn bernoulli_entries_are_half_for_m4() {
        let mut rng = rng_from(6, &[0]);
        let v = sample_directions(4, 3, DirectionKind::Bernoulli, &mut rng);
        for &e in v.rows().iter() {
            assert!((e.abs() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn ternary_nonzeros_and_zero_fraction() {
        let mut rng = rng_from(7, &[0]);
        let (m, d) = (100, 200); // m*d = 2e4
        let v = sample_directions(m, d, DirectionKind::Ternary, &mut rng);
        let scale = (3.0 / m as f64).sqrt();
        let mut zeros = 0usize;
        for &e in v.rows().iter() {
            if e == 0.0 {
                zeros += 1;
            } else {
                assert!((e.abs() - scale).abs() < 1e-15);
            }
        }
        let frac = zeros as f64 / (m * d) as f64;
        assert!((frac - 2.0 / 3.0).abs() < 0.05, "zero fraction {frac}");
    }

    #[test]
    fn ternary_unscaled_moments() {
        let mut rng = rng_from(8, &[0]);
        let v = sample_directions(200, 500, DirectionKind::Ternary, &mut rng);
        let scale = (3.0 / 200f64).sqrt();
        let n = (200 * 500) as f64;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        let mut m4 = 0.0;
        for &e in v.rows().iter() {
            let a = e / scale * 3f64.sqrt(); // unscaled entry in {0, ±sqrt(3)}
            m1 += a;
            m2 += a * a;
            m4 += a.powi(4);
        }
        assert!((m1 / n).abs() < 0.02);
        assert!((m2 / n - 1.0).abs() < 0.05);
        assert!((m4 / n - 3.0).abs() < 0.15);
    }

    #[test]
    fn constructions_are_deterministic_in_the_seed() {
        let a = sample_directions(8, 16, DirectionKind::Bernoulli, &mut rng_from(9, &[1]));
        let b = sample_directions(8, 16, DirectionKind::Bernoulli, &mut rng_from(9, &[1]));
        assert_eq!(a.rows(), b.rows());
        let fa = build_hash_family(50, 1.7, &mut rng_from(9, &[2])).unwrap();
        let fb = build_hash_family(50, 1.7, &mut rng_from(9, &[2])).unwrap();
        for (x, y) in fa.functions().iter().zip(fb.functions()) {
            assert_eq!(x.class_one, y.class_one);
        }
    }
}
