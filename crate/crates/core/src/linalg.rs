//! Small dense linear-algebra kernels: Cholesky solves, least squares,
//! and a power-iteration spectral estimate. Sized for the matrices this
//! crate actually produces (a few hundred to ~2000 unknowns).

use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} at column {col})")]
    NotPositiveDefinite { col: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// In-place lower Cholesky factorization.
pub fn cholesky_in_place(a: &mut Array2<f64>) -> Result<(), LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::Dimension(format!("{}x{}", a.nrows(), a.ncols())));
    }
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= a[[j, k]] * a[[j, k]];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { col: j, pivot: diag });
        }
        let ljj = diag.sqrt();
        a[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = s / ljj;
        }
        for i in 0..j {
            a[[i, j]] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L L^T x = b` given the lower factor from [`cholesky_in_place`].
pub fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[[i, k]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solves the SPD system `a x = b`, consuming `a`.
pub fn solve_spd(mut a: Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>, LinalgError> {
    cholesky_in_place(&mut a)?;
    Ok(cholesky_solve(&a, b))
}

/// Least squares `min ||a x - b||_2` through the normal equations.
pub fn lstsq(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>, LinalgError> {
    let ata = a.t().dot(a);
    let atb = a.t().dot(b);
    solve_spd(ata, &atb)
}

/// Power-iteration estimate of the largest squared singular value of `a`.
///
/// Deterministic start vector; `iters` rounds on `a^T a`.
pub fn spectral_norm_sq(a: &Array2<f64>, iters: usize) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + (i as f64) / (n as f64));
    let mut norm = (v.dot(&v)).sqrt();
    v.mapv_inplace(|x| x / norm);
    let mut lambda = 0.0;
    for _ in 0..iters {
        let av = a.dot(&v);
        let atav = a.t().dot(&av);
        lambda = v.dot(&atav);
        norm = atav.dot(&atav).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = atav / norm;
    }
    lambda.max(0.0)
}

/// Composite Simpson quadrature of `f` over `[a, b]` with `n` panels (n even).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n >= 2 && n % 2 == 0, "simpson needs an even panel count");
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for j in 1..n {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * j as f64);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 2.0, 0.0], [2.0, 5.0, 1.0], [0.0, 1.0, 3.0]];
        let x_true = array![1.0, -2.0, 0.5];
        let b = a.dot(&x_true);
        let x = solve_spd(a, &b).unwrap();
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(solve_spd(a, &array![1.0, 1.0]).is_err());
    }

    #[test]
    fn spectral_estimate_matches_known_matrix() {
        let a = array![[3.0, 0.0], [0.0, 1.0]];
        let l = spectral_norm_sq(&a, 50);
        assert!((l - 9.0).abs() < 1e-9, "got {l}");
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let v = simpson(|t| t * t * t - 2.0 * t + 1.0, -1.0, 1.0, 2);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn simpson_quartic_error_is_tiny_at_256() {
        let v = simpson(|t| t.powi(4), -1.0, 1.0, 256);
        assert!((v - 0.4).abs() < 1e-12);
    }
}
