//! Least-squares cubic B-splines on uniform clamped knots over [-1, 1],
//! in one and two (tensor-product) dimensions.

use crate::linalg::{lstsq, solve_spd, LinalgError};
use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { got: usize, min: usize },
    #[error("sample grid is not uniform over [-1, 1] (offender near index {0})")]
    NonUniformGrid(usize),
    #[error("least-squares fit failed: {0}")]
    Fit(#[from] LinalgError),
    #[error("malformed spline text: {0}")]
    Parse(String),
}

const DEGREE: usize = 3;

/// Clamped uniform cubic B-spline basis with `k_intervals` spans on [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct BSplineBasis {
    knots: Vec<f64>,
    pub k_intervals: usize,
}

impl BSplineBasis {
    pub fn new(k_intervals: usize) -> Self {
        let k = k_intervals.max(1);
        let mut knots = vec![-1.0; DEGREE + 1];
        for j in 1..k {
            knots.push(-1.0 + 2.0 * j as f64 / k as f64);
        }
        knots.extend(std::iter::repeat(1.0).take(DEGREE + 1));
        BSplineBasis { knots, k_intervals: k }
    }

    pub fn len(&self) -> usize {
        self.k_intervals + DEGREE
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        (0..=self.k_intervals)
            .map(|j| -1.0 + 2.0 * j as f64 / self.k_intervals as f64)
            .collect()
    }

    /// All basis values at `t` by the Cox-de Boor recursion.
    pub fn eval_all(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(-1.0, 1.0);
        let n = self.len();
        let kn = &self.knots;
        let m = kn.len();
        let mut deg0 = vec![0.0f64; m - 1];
        for i in 0..(m - 1) {
            let last = kn[i] < 1.0 && kn[i + 1] >= 1.0;
            if (kn[i] <= t && t < kn[i + 1]) || (t >= 1.0 && last) {
                deg0[i] = 1.0;
            }
        }
        let mut cur = deg0;
        for p in 1..=DEGREE {
            let mut next = vec![0.0f64; m - 1 - p];
            for i in 0..next.len() {
                let left_den = kn[i + p] - kn[i];
                let right_den = kn[i + p + 1] - kn[i + 1];
                let mut v = 0.0;
                if left_den > 0.0 {
                    v += (t - kn[i]) / left_den * cur[i];
                }
                if right_den > 0.0 {
                    v += (kn[i + p + 1] - t) / right_den * cur[i + 1];
                }
                next[i] = v;
            }
            cur = next;
        }
        debug_assert_eq!(cur.len(), n);
        cur
    }

    /// `∫_{-1}^{1} B_i(t) dt` for each basis function, exact for cubics
    /// (two Simpson panels per knot span).
    pub fn integrals(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        let bp = self.breakpoints();
        for span in bp.windows(2) {
            let (a, b) = (span[0], span[1]);
            let h = (b - a) / 4.0;
            for (node, weight) in [
                (a, 1.0),
                (a + h, 4.0),
                (a + 2.0 * h, 2.0),
                (a + 3.0 * h, 4.0),
                (b, 1.0),
            ] {
                let vals = self.eval_all(node);
                for (wi, v) in w.iter_mut().zip(vals) {
                    *wi += weight * v * h / 3.0;
                }
            }
        }
        w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CubicSpline1D {
    pub basis: BSplineBasis,
    pub coeffs: Vec<f64>,
    pub n_samples: usize,
}

impl CubicSpline1D {
    pub fn eval(&self, t: f64) -> f64 {
        self.basis.eval_all(t).iter().zip(&self.coeffs).map(|(b, c)| b * c).sum()
    }

    /// Uniform mean over [-1, 1].
    pub fn mean(&self) -> f64 {
        let w = self.basis.integrals();
        self.coeffs.iter().zip(w).map(|(c, wi)| c * wi).sum::<f64>() / 2.0
    }

    /// Subtracts a constant (exact through partition of unity).
    pub fn shift(&mut self, c: f64) {
        for v in &mut self.coeffs {
            *v -= c;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CubicSpline2D {
    pub basis_x: BSplineBasis,
    pub basis_y: BSplineBasis,
    /// Row index follows the x basis, column index the y basis.
    pub coeffs: Array2<f64>,
    pub n_samples: usize,
}

impl CubicSpline2D {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let bx = self.basis_x.eval_all(x);
        let by = self.basis_y.eval_all(y);
        let mut acc = 0.0;
        for (i, bxi) in bx.iter().enumerate() {
            if *bxi == 0.0 {
                continue;
            }
            for (j, byj) in by.iter().enumerate() {
                acc += bxi * byj * self.coeffs[[i, j]];
            }
        }
        acc
    }

    pub fn mean(&self) -> f64 {
        let wx = self.basis_x.integrals();
        let wy = self.basis_y.integrals();
        let mut acc = 0.0;
        for i in 0..wx.len() {
            for j in 0..wy.len() {
                acc += wx[i] * wy[j] * self.coeffs[[i, j]];
            }
        }
        acc / 4.0
    }

    /// Mean over x as a function of y: coefficients in the y basis.
    pub fn marginal_over_x(&self) -> Vec<f64> {
        let wx = self.basis_x.integrals();
        (0..self.basis_y.len())
            .map(|j| (0..self.basis_x.len()).map(|i| self.coeffs[[i, j]] * wx[i]).sum::<f64>() / 2.0)
            .collect()
    }

    /// Mean over y as a function of x: coefficients in the x basis.
    pub fn marginal_over_y(&self) -> Vec<f64> {
        let wy = self.basis_y.integrals();
        (0..self.basis_x.len())
            .map(|i| (0..self.basis_y.len()).map(|j| self.coeffs[[i, j]] * wy[j]).sum::<f64>() / 2.0)
            .collect()
    }
}

pub fn check_uniform(ts: &[f64]) -> Result<(), SplineError> {
    let n = ts.len();
    if n < 2 {
        return Err(SplineError::TooFewSamples { got: n, min: 8 });
    }
    let h = 2.0 / (n - 1) as f64;
    for (i, &t) in ts.iter().enumerate() {
        let expected = -1.0 + h * i as f64;
        if (t - expected).abs() > 1e-9 {
            return Err(SplineError::NonUniformGrid(i));
        }
    }
    Ok(())
}

/// Least-squares cubic spline through uniformly spaced samples on [-1, 1]
/// with `ceil(n/4)` knot spans.
pub fn fit_1d(ts: &[f64], values: &[f64], n_samples: usize) -> Result<CubicSpline1D, SplineError> {
    if ts.len() < 8 {
        return Err(SplineError::TooFewSamples { got: ts.len(), min: 8 });
    }
    check_uniform(ts)?;
    let k = ts.len().div_ceil(4);
    let basis = BSplineBasis::new(k);
    let nb = basis.len();
    let mut design = Array2::zeros((ts.len(), nb));
    for (r, &t) in ts.iter().enumerate() {
        let row = basis.eval_all(t);
        for (c, v) in row.into_iter().enumerate() {
            design[[r, c]] = v;
        }
    }
    let rhs = Array1::from_vec(values.to_vec());
    let coeffs = lstsq(&design, &rhs)?;
    Ok(CubicSpline1D { basis, coeffs: coeffs.to_vec(), n_samples })
}

/// Tensor-product least-squares fit on an `n1 x n1` uniform grid; solved
/// through the Kronecker structure of the normal equations.
pub fn fit_2d(
    ts: &[f64],
    us: &[f64],
    values: &Array2<f64>,
    n_samples: usize,
) -> Result<CubicSpline2D, SplineError> {
    if ts.len() < 8 || us.len() < 8 {
        return Err(SplineError::TooFewSamples { got: ts.len().min(us.len()), min: 8 });
    }
    check_uniform(ts)?;
    check_uniform(us)?;
    let basis_x = BSplineBasis::new(ts.len().div_ceil(4));
    let basis_y = BSplineBasis::new(us.len().div_ceil(4));
    let bx = design(&basis_x, ts);
    let by = design(&basis_y, us);
    // C = (Bx^T Bx)^{-1} Bx^T S By (By^T By)^{-1}
    let gx = bx.t().dot(&bx);
    let gy = by.t().dot(&by);
    let rhs = bx.t().dot(values).dot(&by);
    let mut c = Array2::zeros((basis_x.len(), basis_y.len()));
    // solve Gx * M = rhs columnwise, then Gy * C^T = M^T columnwise
    let mut m = Array2::zeros((basis_x.len(), basis_y.len()));
    for j in 0..basis_y.len() {
        let col = rhs.column(j).to_owned();
        let sol = solve_spd(gx.clone(), &col)?;
        m.column_mut(j).assign(&sol);
    }
    for i in 0..basis_x.len() {
        let row = m.row(i).to_owned();
        let sol = solve_spd(gy.clone(), &row)?;
        c.row_mut(i).assign(&sol);
    }
    Ok(CubicSpline2D { basis_x, basis_y, coeffs: c, n_samples })
}

fn design(basis: &BSplineBasis, ts: &[f64]) -> Array2<f64> {
    let mut b = Array2::zeros((ts.len(), basis.len()));
    for (r, &t) in ts.iter().enumerate() {
        for (c, v) in basis.eval_all(t).into_iter().enumerate() {
            b[[r, c]] = v;
        }
    }
    b
}
