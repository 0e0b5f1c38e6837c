//! Iterative hard thresholding for `min ||A z - y||^2  s.t.  ||z||_0 <= s`.
//!
//! Fixed step `1/L` with `L` a 20-round power-iteration estimate of the
//! largest squared singular value; once the active set stops changing the
//! iterate is debiased by least squares on that support, which is what makes
//! the noiseless runs terminate in a handful of iterations.

use super::RecoveryError;
use crate::linalg::{lstsq, spectral_norm_sq};
use ndarray::{Array1, Array2};

pub const MAX_ITER: usize = 500;
pub const RESIDUAL_TOL: f64 = 1e-10;

fn hard_threshold(z: &Array1<f64>, s: usize) -> (Array1<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_by(|&a, &b| {
        z[b].abs()
            .partial_cmp(&z[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = idx.into_iter().take(s).filter(|&i| z[i] != 0.0).collect();
    kept.sort_unstable();
    let mut out = Array1::zeros(z.len());
    for &i in &kept {
        out[i] = z[i];
    }
    (out, kept)
}

fn debias(a: &Array2<f64>, y: &Array1<f64>, support: &[usize]) -> Option<Array1<f64>> {
    if support.is_empty() {
        return Some(Array1::zeros(a.ncols()));
    }
    let mut sub = Array2::zeros((a.nrows(), support.len()));
    for (c, &j) in support.iter().enumerate() {
        sub.column_mut(c).assign(&a.column(j));
    }
    let w = lstsq(&sub, y).ok()?;
    let mut z = Array1::zeros(a.ncols());
    for (c, &j) in support.iter().enumerate() {
        z[j] = w[c];
    }
    Some(z)
}

pub fn solve(a: &Array2<f64>, y: &Array1<f64>, s: usize) -> Result<Array1<f64>, RecoveryError> {
    let n = a.ncols();
    if y.iter().all(|&v| v == 0.0) {
        return Ok(Array1::zeros(n));
    }
    let l = spectral_norm_sq(a, 20).max(1e-12);
    let step = 1.0 / (1.05 * l);

    let mut z: Array1<f64> = Array1::zeros(n);
    let mut support: Vec<usize> = Vec::new();
    let mut residual = y.clone();
    let mut res_norm_sq = residual.dot(&residual);
    let mut stable_support = 0usize;

    for _ in 0..MAX_ITER {
        let grad = a.t().dot(&residual);
        let (zt, new_support) = hard_threshold(&(&z + &(grad * step)), s);
        let same = new_support == support;
        stable_support = if same { stable_support + 1 } else { 0 };
        z = if stable_support >= 1 {
            debias(a, y, &new_support).unwrap_or(zt)
        } else {
            zt
        };
        support = new_support;
        residual = y - &a.dot(&z);
        let new_norm_sq = residual.dot(&residual);
        let change = (new_norm_sq - res_norm_sq).abs() / res_norm_sq.max(1e-30);
        res_norm_sq = new_norm_sq;
        if change < RESIDUAL_TOL && stable_support >= 1 {
            return Ok(z);
        }
    }
    Err(RecoveryError::NonConvergence { iterations: MAX_ITER, last: z.to_vec() })
}
