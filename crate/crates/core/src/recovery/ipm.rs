//! Primal-dual interior-point solvers.
//!
//! `bp_equality` solves the basis-pursuit program `min ||z||_1 s.t. A z = y`
//! by reducing each Newton step to an m x m positive-definite system.
//! `symmetric_l1` solves the epigraph LP for `min w^T|u| s.t. ||y - A u||_1
//! <= eta`; its Newton step is reduced analytically to the `u` block, so the
//! factored system stays at the number of matrix unknowns.

use super::RecoveryError;
use crate::linalg::{cholesky_in_place, cholesky_solve, solve_spd};
use ndarray::{Array1, Array2};

const MAX_ITER: usize = 200;
const LS_BACKTRACKS: usize = 32;
const MU_UPDATE: f64 = 10.0;
/// Relative duality-gap target.
pub const GAP_TOL: f64 = 1e-8;
pub const FEAS_TOL: f64 = 1e-8;

fn norm3(a: &Array1<f64>, b: &Array1<f64>, c: &Array1<f64>) -> f64 {
    (a.dot(a) + b.dot(b) + c.dot(c)).sqrt()
}

/// Minimum-norm interpolant `A^T (A A^T)^{-1} y`; errors if `A z = y` has no
/// solution reachable this way.
fn min_norm_solution(a: &Array2<f64>, y: &Array1<f64>) -> Result<Array1<f64>, RecoveryError> {
    let mut gram = a.dot(&a.t());
    cholesky_in_place(&mut gram).map_err(|_| RecoveryError::Infeasible)?;
    let q = cholesky_solve(&gram, y);
    let x = a.t().dot(&q);
    let res = y - &a.dot(&x);
    let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if res.iter().any(|v| v.abs() > FEAS_TOL * scale) {
        return Err(RecoveryError::Infeasible);
    }
    Ok(x)
}

pub fn bp_equality(a: &Array2<f64>, y: &Array1<f64>) -> Result<Array1<f64>, RecoveryError> {
    let n = a.ncols();
    if y.iter().all(|&v| v == 0.0) {
        return Ok(Array1::zeros(n));
    }
    let mut x = min_norm_solution(a, y)?;
    let maxabs = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut u = x.mapv(f64::abs) * 0.95 + 0.10 * maxabs + 1e-12;
    let mut fu1 = &x - &u;
    let mut fu2 = -&x - &u;
    let mut lamu1 = fu1.mapv(|v| -1.0 / v);
    let mut lamu2 = fu2.mapv(|v| -1.0 / v);
    let mut v = -a.dot(&(&lamu1 - &lamu2));
    let mut atv = a.t().dot(&v);
    let mut sdg = -(fu1.dot(&lamu1) + fu2.dot(&lamu2));

    for _ in 0..MAX_ITER {
        let tau = MU_UPDATE * (2 * n) as f64 / sdg;
        let inv_tau = 1.0 / tau;
        let rcent1 = -(&lamu1 * &fu1) - inv_tau;
        let rcent2 = -(&lamu2 * &fu2) - inv_tau;
        let rdual1 = &lamu1 - &lamu2 + &atv;
        let rdual2 = 1.0 - &lamu1 - &lamu2;
        let rpri = a.dot(&x) - y;
        let resnorm = (rcent1.dot(&rcent1)
            + rcent2.dot(&rcent2)
            + rdual1.dot(&rdual1)
            + rdual2.dot(&rdual2)
            + rpri.dot(&rpri))
        .sqrt();

        let sig1 = -(&lamu1 / &fu1) - &(&lamu2 / &fu2);
        let sig2 = &lamu1 / &fu1 - &(&lamu2 / &fu2);
        // stable form of sig1 - sig2^2/sig1: avoids cancellation near optimum
        let sigx = 4.0 * &lamu1 * &lamu2 / (&fu1 * &fu2 * &sig1);
        let w1 = -inv_tau * (fu1.mapv(|v| -1.0 / v) + fu2.mapv(|v| 1.0 / v)) - &atv;
        let w2 = -1.0 - inv_tau * (fu1.mapv(|v| 1.0 / v) + fu2.mapv(|v| 1.0 / v));
        let w3 = -&rpri;

        let w1p = &a.dot(&(&w1 / &sigx - &(&w2 * &sig2 / (&sigx * &sig1)))) - &w3;
        // H11p = A diag(1/sigx) A^T, with a relative diagonal shift so the
        // factorization survives the rank collapse near the optimum
        let mut scaled = a.clone();
        for (mut col, s) in scaled.columns_mut().into_iter().zip(sigx.iter()) {
            col.mapv_inplace(|v| v / s);
        }
        let mut h11p = scaled.dot(&a.t());
        let max_diag = (0..h11p.nrows()).fold(0.0f64, |mx, i| mx.max(h11p[[i, i]]));
        for i in 0..h11p.nrows() {
            h11p[[i, i]] += 1e-12 * max_diag;
        }
        let dv = match solve_spd(h11p, &w1p) {
            Ok(dv) => dv,
            Err(e) => {
                if sdg <= 1e-5 * u.sum().max(1.0) {
                    return Ok(x);
                }
                return Err(RecoveryError::Numerical(e.to_string()));
            }
        };
        let atdv = a.t().dot(&dv);
        let dx = (&w1 - &(&w2 * &sig2 / &sig1) - &atdv) / &sigx;
        let adx = a.dot(&dx);
        let du = (&w2 - &(&sig2 * &dx)) / &sig1;
        let dlamu1 = (&lamu1 / &fu1) * (&du - &dx) - &lamu1 - inv_tau * fu1.mapv(|v| 1.0 / v);
        let dlamu2 = (&lamu2 / &fu2) * (&dx + &du) - &lamu2 - inv_tau * fu2.mapv(|v| 1.0 / v);

        let mut s = 1.0f64;
        for i in 0..n {
            if dlamu1[i] < 0.0 {
                s = s.min(-lamu1[i] / dlamu1[i]);
            }
            if dlamu2[i] < 0.0 {
                s = s.min(-lamu2[i] / dlamu2[i]);
            }
            let dfu1 = dx[i] - du[i];
            if dfu1 > 0.0 {
                s = s.min(-fu1[i] / dfu1);
            }
            let dfu2 = -dx[i] - du[i];
            if dfu2 > 0.0 {
                s = s.min(-fu2[i] / dfu2);
            }
        }
        s *= 0.99;

        let mut accepted = false;
        for _ in 0..LS_BACKTRACKS {
            let xp = &x + &(s * &dx);
            let up = &u + &(s * &du);
            let lam1p = &lamu1 + &(s * &dlamu1);
            let lam2p = &lamu2 + &(s * &dlamu2);
            let atvp = &atv + &(s * &atdv);
            let fu1p = &xp - &up;
            let fu2p = -&xp - &up;
            let rd1 = &lam1p - &lam2p + &atvp;
            let rd2 = 1.0 - &lam1p - &lam2p;
            let rc1 = -(&lam1p * &fu1p) - inv_tau;
            let rc2 = -(&lam2p * &fu2p) - inv_tau;
            let rpp = &rpri + &(s * &adx);
            let newnorm = (rd1.dot(&rd1)
                + rd2.dot(&rd2)
                + rc1.dot(&rc1)
                + rc2.dot(&rc2)
                + rpp.dot(&rpp))
            .sqrt();
            if newnorm <= (1.0 - 0.01 * s) * resnorm {
                x = xp;
                u = up;
                lamu1 = lam1p;
                lamu2 = lam2p;
                v = &v + &(s * &dv);
                atv = atvp;
                fu1 = fu1p;
                fu2 = fu2p;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            if sdg <= 1e-5 * u.sum().max(1.0) {
                return Ok(x);
            }
            return Err(RecoveryError::Numerical("basis pursuit line search stalled".into()));
        }

        sdg = -(fu1.dot(&lamu1) + fu2.dot(&lamu2));
        if sdg <= GAP_TOL * u.sum().max(1.0) {
            return Ok(x);
        }
    }
    Err(RecoveryError::NonConvergence { iterations: MAX_ITER, last: x.to_vec() })
}

/// Weighted basis pursuit `min sum w_i |u_i| s.t. A u = y` via column scaling.
pub fn bp_equality_weighted(
    a: &Array2<f64>,
    y: &Array1<f64>,
    w: &Array1<f64>,
) -> Result<Array1<f64>, RecoveryError> {
    let mut scaled = a.clone();
    for (mut col, &wi) in scaled.columns_mut().into_iter().zip(w.iter()) {
        col.mapv_inplace(|v| v / wi);
    }
    let z = bp_equality(&scaled, y)?;
    Ok(&z / w)
}

/// Solves `min w^T t  s.t. |u| <= t, ||y - A u||_1 <= eta` (eta > 0).
pub fn symmetric_l1(
    a: &Array2<f64>,
    y: &Array1<f64>,
    w: &Array1<f64>,
    eta: f64,
) -> Result<Array1<f64>, RecoveryError> {
    assert!(eta > 0.0);
    let nu = a.ncols();
    let m = a.nrows();
    if y.iter().all(|&v| v == 0.0) {
        return Ok(Array1::zeros(nu));
    }
    let mut u = min_norm_solution(a, y)?;
    let maxabs = u.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
    let mut t = u.mapv(f64::abs) * 1.05 + 0.10 * maxabs + 1e-9;
    let mut s = Array1::from_elem(m, eta / (2.0 * m as f64));

    // slacks and multipliers for the five constraint groups
    let slack = |u: &Array1<f64>, t: &Array1<f64>, s: &Array1<f64>| {
        let au = a.dot(u);
        let s1 = t - u;
        let s2 = t + u;
        let s3 = y - &au + s;
        let s4 = &au - y + s;
        let s5 = eta - s.sum();
        (s1, s2, s3, s4, s5)
    };
    let (mut s1, mut s2, mut s3, mut s4, mut s5) = slack(&u, &t, &s);
    if s5 <= 0.0 || s3.iter().chain(s4.iter()).any(|&v| v <= 0.0) {
        return Err(RecoveryError::Infeasible);
    }
    let mut l1 = s1.mapv(|v| 1.0 / v);
    let mut l2 = s2.mapv(|v| 1.0 / v);
    let mut l3 = s3.mapv(|v| 1.0 / v);
    let mut l4 = s4.mapv(|v| 1.0 / v);
    let mut l5 = 1.0 / s5;
    let n_con = (2 * nu + 2 * m + 1) as f64;

    for _ in 0..MAX_ITER {
        let gap = l1.dot(&s1) + l2.dot(&s2) + l3.dot(&s3) + l4.dot(&s4) + l5 * s5;
        if gap <= GAP_TOL * w.dot(&t).max(1.0) {
            return Ok(u);
        }
        let tau = MU_UPDATE * n_con / gap;
        let inv_tau = 1.0 / tau;

        let ru = &l1 - &l2 + &a.t().dot(&(&l3 - &l4));
        let rt = w - &l1 - &l2;
        let rs = -&l3 - &l4 + l5;
        let rc = |l: &Array1<f64>, sl: &Array1<f64>| l * sl - inv_tau;
        let resnorm = {
            let c1 = rc(&l1, &s1);
            let c2 = rc(&l2, &s2);
            let c3 = rc(&l3, &s3);
            let c4 = rc(&l4, &s4);
            let c5 = l5 * s5 - inv_tau;
            (norm3(&ru, &rt, &rs).powi(2)
                + c1.dot(&c1)
                + c2.dot(&c2)
                + c3.dot(&c3)
                + c4.dot(&c4)
                + c5 * c5)
                .sqrt()
        };

        let d1 = &l1 / &s1;
        let d2 = &l2 / &s2;
        let d3 = &l3 / &s3;
        let d4 = &l4 / &s4;
        let d5 = l5 / s5;
        let c1 = s1.mapv(|v| inv_tau / v) - &l1;
        let c2 = s2.mapv(|v| inv_tau / v) - &l2;
        let c3 = s3.mapv(|v| inv_tau / v) - &l3;
        let c4 = s4.mapv(|v| inv_tau / v) - &l4;
        let c5 = inv_tau / s5 - l5;

        let d12 = &d1 + &d2;
        let gcoef = (&d2 - &d1) / &d12;
        let dd = 4.0 * &d1 * &d2 / &d12;
        let d34 = &d3 + &d4;
        let e = &d4 - &d3;
        let w_tilde = 4.0 * &d3 * &d4 / &d34;
        let inv34 = d34.mapv(|v| 1.0 / v);
        let ssum = inv34.sum();
        let rho = d5 / (1.0 + d5 * ssum);
        let g = &e * &inv34;

        let bt = -&rt + &c1 + &c2;
        let bu = -&ru - &c1 + &c2 - &a.t().dot(&(&c3 - &c4));
        let bs = -&rs + &c3 + &c4 - c5;

        let minv = |z: &Array1<f64>| -> Array1<f64> {
            let iz = z * &inv34;
            let correction = rho * iz.sum();
            &iz - &(correction * &inv34)
        };

        // K = diag(dd) + A^T diag(w_tilde) A + rho (A^T g)(A^T g)^T
        let mut scaled = a.clone();
        for (mut row, &wt) in scaled.rows_mut().into_iter().zip(w_tilde.iter()) {
            row.mapv_inplace(|v| v * wt);
        }
        let mut k = a.t().dot(&scaled);
        let atg = a.t().dot(&g);
        for i in 0..nu {
            for j in 0..nu {
                k[[i, j]] += rho * atg[i] * atg[j];
            }
            k[[i, i]] += dd[i];
        }
        let rhs = &bu - &(&gcoef * &bt) - &a.t().dot(&(&e * &minv(&bs)));
        let du = solve_spd(k, &rhs).map_err(|e| RecoveryError::Numerical(e.to_string()))?;
        let dt = (&bt - &((&d2 - &d1) * &du)) / &d12;
        let adu = a.dot(&du);
        let ds = minv(&(&bs - &(&e * &adu)));

        let ds1 = &dt - &du;
        let ds2 = &dt + &du;
        let ds3 = &ds - &adu;
        let ds4 = &ds + &adu;
        let ds5 = -ds.sum();
        let dl1 = &c1 - &(&d1 * &ds1);
        let dl2 = &c2 - &(&d2 * &ds2);
        let dl3 = &c3 - &(&d3 * &ds3);
        let dl4 = &c4 - &(&d4 * &ds4);
        let dl5 = c5 - d5 * ds5;

        let mut alpha = 1.0f64;
        let clip = |alpha: &mut f64, val: f64, dir: f64| {
            if dir < 0.0 {
                *alpha = alpha.min(-val / dir);
            }
        };
        for i in 0..nu {
            clip(&mut alpha, l1[i], dl1[i]);
            clip(&mut alpha, l2[i], dl2[i]);
            clip(&mut alpha, s1[i], ds1[i]);
            clip(&mut alpha, s2[i], ds2[i]);
        }
        for j in 0..m {
            clip(&mut alpha, l3[j], dl3[j]);
            clip(&mut alpha, l4[j], dl4[j]);
            clip(&mut alpha, s3[j], ds3[j]);
            clip(&mut alpha, s4[j], ds4[j]);
        }
        clip(&mut alpha, l5, dl5);
        clip(&mut alpha, s5, ds5);
        alpha *= 0.99;

        let mut accepted = false;
        for _ in 0..LS_BACKTRACKS {
            let up = &u + &(alpha * &du);
            let tp = &t + &(alpha * &dt);
            let sp = &s + &(alpha * &ds);
            let l1p = &l1 + &(alpha * &dl1);
            let l2p = &l2 + &(alpha * &dl2);
            let l3p = &l3 + &(alpha * &dl3);
            let l4p = &l4 + &(alpha * &dl4);
            let l5p = l5 + alpha * dl5;
            let (s1p, s2p, s3p, s4p, s5p) = slack(&up, &tp, &sp);
            let rup = &l1p - &l2p + &a.t().dot(&(&l3p - &l4p));
            let rtp = w - &l1p - &l2p;
            let rsp = -&l3p - &l4p + l5p;
            let c1p = &l1p * &s1p - inv_tau;
            let c2p = &l2p * &s2p - inv_tau;
            let c3p = &l3p * &s3p - inv_tau;
            let c4p = &l4p * &s4p - inv_tau;
            let c5p = l5p * s5p - inv_tau;
            let newnorm = (norm3(&rup, &rtp, &rsp).powi(2)
                + c1p.dot(&c1p)
                + c2p.dot(&c2p)
                + c3p.dot(&c3p)
                + c4p.dot(&c4p)
                + c5p * c5p)
                .sqrt();
            if newnorm.is_finite() && newnorm <= (1.0 - 0.01 * alpha) * resnorm {
                u = up;
                t = tp;
                s = sp;
                l1 = l1p;
                l2 = l2p;
                l3 = l3p;
                l4 = l4p;
                l5 = l5p;
                s1 = s1p;
                s2 = s2p;
                s3 = s3p;
                s4 = s4p;
                s5 = s5p;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(RecoveryError::Numerical("residual LP line search stalled".into()));
        }
    }
    Err(RecoveryError::NonConvergence { iterations: MAX_ITER, last: u.to_vec() })
}
