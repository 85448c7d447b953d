//! Small dense Levenberg-Marquardt solver for weighted least squares with
//! analytic gradients and a compile-time parameter count.

use nalgebra::{SMatrix, SVector};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Convergence when the largest relative parameter change in an accepted
    /// step falls below this.
    pub rel_tol: f64,
    pub lambda_init: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 200, rel_tol: 1e-8, lambda_init: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome<const P: usize> {
    pub params: SVector<f64, P>,
    /// Parameter covariance (J^T W J)^-1 at the final parameters.
    pub covariance: SMatrix<f64, P, P>,
    pub chi2: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn chi2<const P: usize, F>(f: &F, data: &[(f64, f64, f64)], p: &SVector<f64, P>) -> f64
where
    F: Fn(f64, &SVector<f64, P>) -> (f64, SVector<f64, P>),
{
    data.iter()
        .map(|&(x, y, w)| {
            let (v, _) = f(x, p);
            w * (y - v) * (y - v)
        })
        .sum()
}

/// Minimizes sum_i w_i (y_i - f(x_i, p))^2 over p.
///
/// `f` returns the model value and its gradient with respect to the
/// parameters. `data` is (x, y, weight) with weight = 1 / variance.
/// Damped normal equations with multiplicative lambda control: accepted steps
/// divide lambda by 4, rejected steps multiply it by 10 until a step is
/// accepted or lambda overflows the search range (flagged as unconverged).
pub fn fit<const P: usize, F>(
    f: F,
    data: &[(f64, f64, f64)],
    start: SVector<f64, P>,
    opts: &LmOptions,
) -> LmOutcome<P>
where
    F: Fn(f64, &SVector<f64, P>) -> (f64, SVector<f64, P>),
{
    let mut params = start;
    let mut lambda = opts.lambda_init;
    let mut current_chi2 = chi2(&f, data, &params);
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iterations {
        iterations += 1;
        let mut a = SMatrix::<f64, P, P>::zeros();
        let mut g = SVector::<f64, P>::zeros();
        for &(x, y, w) in data {
            let (v, grad) = f(x, &params);
            let r = y - v;
            a += w * grad * grad.transpose();
            g += w * r * grad;
        }
        // try damped steps until one lowers chi2
        let mut stepped = false;
        while lambda < 1e14 {
            let mut damped = a;
            for j in 0..P {
                let d = a[(j, j)].max(1e-30);
                damped[(j, j)] = d * (1.0 + lambda);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&g);
            let candidate = params + delta;
            let cand_chi2 = chi2(&f, data, &candidate);
            if cand_chi2.is_finite() && cand_chi2 <= current_chi2 {
                let max_rel = (0..P)
                    .map(|j| (delta[j] / params[j].abs().max(1e-300)).abs())
                    .fold(0.0f64, f64::max);
                params = candidate;
                current_chi2 = cand_chi2;
                lambda = (lambda / 4.0).max(1e-12);
                stepped = true;
                if max_rel < opts.rel_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !stepped || converged {
            // no acceptable step left, or tolerance reached
            converged = converged || stepped;
            break;
        }
    }
    // covariance from the undamped normal matrix at the solution
    let mut a = SMatrix::<f64, P, P>::zeros();
    for &(x, _, w) in data {
        let (_, grad) = f(x, &params);
        a += w * grad * grad.transpose();
    }
    let covariance = a.try_inverse().unwrap_or_else(SMatrix::zeros);
    LmOutcome { params, covariance, chi2: current_chi2, iterations, converged }
}
