//! Derivative-free gradient estimation: central-difference measurements along
//! random directions feed a sparse-recovery solve.

use super::LearnError;
use crate::model::{Phase, QueryOracle};
use crate::recovery::{recover_vector, recover_vector_restricted, VectorRecoveryProblem, VectorSolver};
use crate::sampling::DirectionSet;
use ndarray::Array1;
use rand_chacha::ChaCha8Rng;

/// Estimates the sparse gradient at `x` from `2 m` central-difference queries
/// `(f(x + mu v_j) - f(x - mu v_j)) / (2 mu)`, resampled `n_resample` times
/// per query under stochastic noise.
#[allow(clippy::too_many_arguments)]
pub fn estimate_gradient(
    oracle: &QueryOracle,
    x: &[f64],
    mu: f64,
    directions: &DirectionSet,
    sparsity: usize,
    solver: VectorSolver,
    n_resample: usize,
    phase: Phase,
    rng: &mut ChaCha8Rng,
) -> Result<Array1<f64>, LearnError> {
    let mut y = Array1::zeros(directions.m);
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    for j in 0..directions.m {
        let v = directions.row(j);
        for q in 0..directions.d {
            plus[q] = x[q] + mu * v[q];
            minus[q] = x[q] - mu * v[q];
        }
        let fp = oracle.query_averaged(&plus, n_resample, phase, rng)?;
        let fm = oracle.query_averaged(&minus, n_resample, phase, rng)?;
        y[j] = (fp - fm) / (2.0 * mu);
    }
    let problem = VectorRecoveryProblem { measurements: y, directions, sparsity, solver };
    recover_vector(&problem).map_err(LearnError::Recovery)
}

/// Restricted variant: queries and the recovery both live on the coordinates
/// in `active`; every other entry of the result is exactly zero.
#[allow(clippy::too_many_arguments)]
pub fn estimate_gradient_restricted(
    oracle: &QueryOracle,
    x: &[f64],
    mu: f64,
    directions: &DirectionSet,
    active: &[usize],
    sparsity: usize,
    solver: VectorSolver,
    n_resample: usize,
    phase: Phase,
    rng: &mut ChaCha8Rng,
) -> Result<Array1<f64>, LearnError> {
    let d = directions.d;
    let mut y = Array1::zeros(directions.m);
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    for j in 0..directions.m {
        let v = directions.row(j);
        for q in 0..d {
            plus[q] = 0.0;
            minus[q] = 0.0;
        }
        for &q in active {
            plus[q] = x[q] + mu * v[q];
            minus[q] = x[q] - mu * v[q];
        }
        let fp = oracle.query_averaged(&plus, n_resample, phase, rng)?;
        let fm = oracle.query_averaged(&minus, n_resample, phase, rng)?;
        y[j] = (fp - fm) / (2.0 * mu);
    }
    let problem = VectorRecoveryProblem { measurements: y, directions, sparsity, solver };
    recover_vector_restricted(&problem, active).map_err(LearnError::Recovery)
}

/// Central-difference partial derivative along coordinate `axis`.
pub fn estimate_partial(
    oracle: &QueryOracle,
    x: &[f64],
    axis: usize,
    beta: f64,
    n_resample: usize,
    phase: Phase,
    rng: &mut ChaCha8Rng,
) -> Result<f64, LearnError> {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[axis] += beta;
    minus[axis] -= beta;
    let fp = oracle.query_averaged(&plus, n_resample, phase, rng)?;
    let fm = oracle.query_averaged(&minus, n_resample, phase, rng)?;
    Ok((fp - fm) / (2.0 * beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, NoiseModel, UnivariateTerm};
    use crate::sampling::{sample_directions, DirectionKind};
    use crate::seeds::rng_from;

    #[test]
    fn linear_function_gradient_is_exact_for_any_step() {
        // f = 2 x1 on d = 5: third derivatives vanish, no Taylor error
        let m = ModelSpec::new(5, vec![(0, UnivariateTerm::linear(2.0))], vec![]).unwrap();
        let oracle = QueryOracle::new(&m, NoiseModel::Noiseless, 1.0).unwrap();
        let mut rng = rng_from(1, &[0]);
        let dirs = sample_directions(12, 5, DirectionKind::Bernoulli, &mut rng);
        for mu in [0.05, 0.4, 1.0] {
            let g = estimate_gradient(
                &oracle,
                &[0.0; 5],
                mu,
                &dirs,
                1,
                VectorSolver::Iht,
                1,
                Phase::Phase1,
                &mut rng,
            )
            .unwrap();
            assert!((g[0] - 2.0).abs() < 1e-8, "mu {mu}: {}", g[0]);
            for q in 1..5 {
                assert!(g[q].abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_model_gives_zero_gradient() {
        let m = ModelSpec::new(6, vec![], vec![]).unwrap();
        let oracle = QueryOracle::new(&m, NoiseModel::Noiseless, 0.1).unwrap();
        let mut rng = rng_from(2, &[0]);
        let dirs = sample_directions(10, 6, DirectionKind::Bernoulli, &mut rng);
        let g = estimate_gradient(
            &oracle,
            &[0.0; 6],
            0.05,
            &dirs,
            1,
            VectorSolver::Iht,
            1,
            Phase::Phase1,
            &mut rng,
        )
        .unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_domain_steps_propagate_domain_error() {
        let m = ModelSpec::new(4, vec![(0, UnivariateTerm::linear(1.0))], vec![]).unwrap();
        let oracle = QueryOracle::new(&m, NoiseModel::Noiseless, 0.1).unwrap();
        let mut rng = rng_from(3, &[0]);
        let dirs = sample_directions(6, 4, DirectionKind::Bernoulli, &mut rng);
        let res = estimate_gradient(
            &oracle,
            &[1.0; 4],
            2.0,
            &dirs,
            1,
            VectorSolver::Iht,
            1,
            Phase::Phase1,
            &mut rng,
        );
        assert!(matches!(res, Err(LearnError::Model(_))));
    }
}
