//! Real roots of a depressed cubic `y^3 + p y + q` in trigonometric form.
//!
//! Used by the planner to solve the step-size inequalities that balance
//! Taylor error against external noise.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CubicError {
    #[error("discriminant {0:.3e} is non-negative: fewer than three distinct real roots")]
    NonNegativeDiscriminant(f64),
}

/// Returns the three real roots of `y^3 + p y + q = 0` in descending order.
///
/// Requires `q^2/4 + p^3/27 < 0` (which forces `p < 0`); the roots are
/// `2 sqrt(-p/3) cos((phi + 2 j pi) / 3)` with `phi = arccos(-q / (2 sqrt(-p^3/27)))`.
pub fn cubic_roots_trig(p: f64, q: f64) -> Result<[f64; 3], CubicError> {
    let disc = q * q / 4.0 + p * p * p / 27.0;
    if !(disc < 0.0) {
        return Err(CubicError::NonNegativeDiscriminant(disc));
    }
    let r = (-p * p * p / 27.0).sqrt();
    let phi = (-q / (2.0 * r)).clamp(-1.0, 1.0).acos();
    let scale = 2.0 * (-p / 3.0).sqrt();
    let mut roots = [
        scale * (phi / 3.0).cos(),
        scale * ((phi + 2.0 * std::f64::consts::PI) / 3.0).cos(),
        scale * ((phi + 4.0 * std::f64::consts::PI) / 3.0).cos(),
    ];
    roots.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(p: f64, q: f64, y: f64) -> f64 {
        y * y * y + p * y + q
    }

    /// Bisection oracle: finds a root of the cubic inside [lo, hi].
    fn bisect(p: f64, q: f64, mut lo: f64, mut hi: f64) -> f64 {
        let f = |y: f64| residual(p, q, y);
        assert!(f(lo) * f(hi) <= 0.0, "oracle bracket invalid");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn factorized_cubic_has_unit_roots() {
        let roots = cubic_roots_trig(-1.0, 0.0).unwrap();
        assert!((roots[0] - 1.0).abs() < 1e-12);
        assert!(roots[1].abs() < 1e-12);
        assert!((roots[2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn roots_match_bisection_oracle() {
        let (p, q) = (-3.0, 1.0);
        let roots = cubic_roots_trig(p, q).unwrap();
        // brackets from the shape of y^3 - 3y + 1
        let expected = [bisect(p, q, 1.0, 2.0), bisect(p, q, 0.0, 1.0), bisect(p, q, -2.0, -1.0)];
        for (r, e) in roots.iter().zip(expected) {
            assert!((r - e).abs() < 1e-9, "{r} vs {e}");
        }
    }

    #[test]
    fn nonnegative_discriminant_is_an_error() {
        // q^2/4 + p^3/27 = 1/4 - 1/27 > 0
        assert!(matches!(cubic_roots_trig(-1.0, 1.0), Err(CubicError::NonNegativeDiscriminant(_))));
    }

    #[test]
    fn residuals_stay_below_tolerance_on_random_instances() {
        use crate::seeds::rng_from;
        use rand::Rng;
        let mut rng = rng_from(77, &[0]);
        let mut tested = 0;
        while tested < 300 {
            let p: f64 = -rng.gen_range(0.01..50.0);
            let qmax = 2.0 * (-p * p * p / 27.0).sqrt();
            let q: f64 = rng.gen_range(-0.999..0.999) * qmax;
            if q * q / 4.0 + p * p * p / 27.0 >= 0.0 {
                continue;
            }
            let roots = cubic_roots_trig(p, q).unwrap();
            let tol = 1e-9 * p.abs().max(q.abs()).max(1.0);
            for r in roots {
                assert!(residual(p, q, r).abs() <= tol, "residual {} at p={p} q={q}", residual(p, q, r));
            }
            tested += 1;
        }
    }
}
