//! Damped Gauss-Newton (Levenberg) on manifold-valued parameters.
//!
//! Problems supply residuals, a Jacobian with respect to local tangent
//! coordinates, and a retraction. Damping is `lambda * I` on the tangent
//! normal equations: raised tenfold on a rejected step, lowered tenfold on
//! an accepted one.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub relative_tolerance: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 10.0,
            max_iterations: 100,
            relative_tolerance: 1e-12,
        }
    }
}

pub trait LeastSquaresProblem {
    type Params: Clone;

    fn residuals(&self, params: &Self::Params) -> DVector<f64>;

    /// Jacobian of the residuals with respect to the tangent coordinates at `params`.
    fn jacobian(&self, params: &Self::Params) -> DMatrix<f64>;

    fn retract(&self, params: &Self::Params, delta: &DVector<f64>) -> Self::Params;
}

#[derive(Debug, Clone)]
pub struct LmOutcome<P> {
    pub params: P,
    /// Sum of squared residuals at `params`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Damping beyond which no representable descent step is left.
const DAMPING_CEILING: f64 = 1e16;

pub fn minimize<P: LeastSquaresProblem>(
    problem: &P,
    initial: P::Params,
    config: &LmConfig,
) -> LmOutcome<P::Params> {
    let mut params = initial;
    let mut r = problem.residuals(&params);
    let mut cost = r.norm_squared();
    let mut lambda = config.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        if cost == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        let j = problem.jacobian(&params);
        let jt = j.transpose();
        let hessian = &jt * &j;
        let gradient = &jt * &r;
        if gradient.amax() == 0.0 {
            converged = true;
            break;
        }

        let mut accepted = false;
        while lambda <= DAMPING_CEILING {
            let mut damped = hessian.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda;
            }
            let step = match damped.cholesky() {
                Some(ch) => -ch.solve(&gradient),
                None => {
                    lambda *= config.damping_up;
                    continue;
                }
            };
            let candidate = problem.retract(&params, &step);
            let r_new = problem.residuals(&candidate);
            let cost_new = r_new.norm_squared();
            if cost_new.is_finite() && cost_new < cost {
                let decrease = cost - cost_new;
                params = candidate;
                r = r_new;
                let previous = cost;
                cost = cost_new;
                lambda = (lambda / config.damping_down).max(1e-15);
                accepted = true;
                if decrease < config.relative_tolerance * previous {
                    converged = true;
                }
                break;
            }
            lambda *= config.damping_up;
        }
        if !accepted {
            // no descent direction survives rounding: a stationary point
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    LmOutcome {
        params,
        cost,
        iterations,
        converged,
    }
}

/// Orthonormal basis (as columns) of the complement of the unit vector `x`.
pub fn sphere_tangent_basis(x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let k = x.iamax();
    let mut u = x.clone();
    u[k] -= x[k].signum();
    let uu = u.norm_squared();
    let mut h = DMatrix::<f64>::identity(n, n);
    if uu > 0.0 {
        h -= (&u * u.transpose()) * (2.0 / uu);
    }
    // Householder H maps x to +-e_k; its other columns span x's complement.
    let cols: Vec<usize> = (0..n).filter(|&i| i != k).collect();
    h.select_columns(cols.iter())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fits y = a * exp(b * t) in plain Euclidean coordinates.
    struct ExpCurve {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquaresProblem for ExpCurve {
        type Params = DVector<f64>;

        fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
            DVector::from_iterator(
                self.t.len(),
                self.t
                    .iter()
                    .zip(&self.y)
                    .map(|(t, y)| p[0] * (p[1] * t).exp() - y),
            )
        }

        fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
            let mut j = DMatrix::zeros(self.t.len(), 2);
            for (i, t) in self.t.iter().enumerate() {
                let e = (p[1] * t).exp();
                j[(i, 0)] = e;
                j[(i, 1)] = p[0] * t * e;
            }
            j
        }

        fn retract(&self, p: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
            p + d
        }
    }

    #[test]
    fn recovers_exponential_curve() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y = t.iter().map(|t| 2.0 * (-1.3 * t).exp()).collect();
        let problem = ExpCurve { t, y };
        let out = minimize(&problem, DVector::from_vec(vec![1.0, 0.0]), &LmConfig::default());
        assert!(out.converged);
        assert!((out.params[0] - 2.0).abs() < 1e-10);
        assert!((out.params[1] + 1.3).abs() < 1e-10);
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y = t.iter().map(|t| 2.0 * (-1.3 * t).exp()).collect();
        let problem = ExpCurve { t, y };
        let config = LmConfig {
            max_iterations: 1,
            ..LmConfig::default()
        };
        let out = minimize(&problem, DVector::from_vec(vec![1.0, 0.0]), &config);
        assert!(!out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn tangent_basis_is_orthonormal_complement() {
        for v in [
            vec![1.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.3, -0.4, 0.5, 0.1, 0.2, -0.6],
        ] {
            let x = DVector::from_vec(v).normalize();
            let b = sphere_tangent_basis(&x);
            assert_eq!(b.ncols(), x.len() - 1);
            let gram = b.transpose() * &b;
            assert!((gram - DMatrix::identity(x.len() - 1, x.len() - 1)).amax() < 1e-14);
            assert!((b.transpose() * &x).amax() < 1e-14);
        }
    }
}
