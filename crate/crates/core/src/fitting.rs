//! Small dense least-squares machinery shared by the calibration fits.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("singular or ill-conditioned system")]
    Singular,
    #[error("fit did not converge after {0} iterations (cost {1:.3e})")]
    NotConverged(usize, f64),
    #[error("degenerate fit: {0}")]
    Degenerate(&'static str),
}

/// Solve a small dense linear system by Gaussian elimination with partial
/// pivoting.
pub fn solve_linear(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>, FitError> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let mut r = row.clone();
            r.push(rhs);
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot][col].abs() < 1e-300 {
            return Err(FitError::Singular);
        }
        m.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let factor = m[row][col] / m[col][col];
                for k in col..=n {
                    m[row][k] -= factor * m[col][k];
                }
            }
        }
    }
    Ok((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Least-squares outcome: parameters, their covariance, and the residual.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// Parameter covariance, (JᵀJ)⁻¹ scaled by the residual variance.
    pub covariance: Vec<Vec<f64>>,
    /// Root-mean-square residual.
    pub residual: f64,
    pub iterations: usize,
}

impl FitResult {
    pub fn sigma(&self, i: usize) -> f64 {
        self.covariance[i][i].max(0.0).sqrt()
    }
}

/// Damped least squares (Levenberg-Marquardt) with caller-supplied residuals
/// and analytic Jacobian. `eval` fills `residuals[i]` and `jacobian[i][p]` =
/// ∂residual_i/∂param_p at the supplied parameters.
pub fn levenberg_marquardt<F>(
    mut eval: F,
    x0: &[f64],
    n_residuals: usize,
    max_iter: usize,
) -> Result<FitResult, FitError>
where
    F: FnMut(&[f64], &mut [f64], &mut [Vec<f64>]),
{
    let n_params = x0.len();
    if n_residuals <= n_params {
        return Err(FitError::Degenerate("fewer residuals than parameters"));
    }
    let mut params = x0.to_vec();
    let mut residuals = vec![0.0; n_residuals];
    let mut jacobian = vec![vec![0.0; n_params]; n_residuals];
    eval(&params, &mut residuals, &mut jacobian);
    let mut cost: f64 = residuals.iter().map(|r| r * r).sum();
    let mut lambda = 1e-3;
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        // Normal equations with Marquardt damping.
        let mut jtj = vec![vec![0.0; n_params]; n_params];
        let mut jtr = vec![0.0; n_params];
        for i in 0..n_residuals {
            for p in 0..n_params {
                jtr[p] += jacobian[i][p] * residuals[i];
                for q in p..n_params {
                    jtj[p][q] += jacobian[i][p] * jacobian[i][q];
                }
            }
        }
        for p in 0..n_params {
            for q in 0..p {
                jtj[p][q] = jtj[q][p];
            }
        }
        let mut damped = jtj.clone();
        for p in 0..n_params {
            damped[p][p] *= 1.0 + lambda;
        }
        let step = match solve_linear(&damped, &jtr) {
            Ok(s) => s,
            Err(_) => {
                lambda *= 10.0;
                continue;
            }
        };
        let trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p - s).collect();
        let mut trial_res = vec![0.0; n_residuals];
        let mut trial_jac = vec![vec![0.0; n_params]; n_residuals];
        eval(&trial, &mut trial_res, &mut trial_jac);
        let trial_cost: f64 = trial_res.iter().map(|r| r * r).sum();
        if trial_cost < cost {
            let improvement = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
            params = trial;
            residuals = trial_res;
            jacobian = trial_jac;
            cost = trial_cost;
            lambda = (lambda * 0.3).max(1e-12);
            if improvement < 1e-12 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    // Covariance from the undamped normal equations.
    let mut jtj = vec![vec![0.0; n_params]; n_params];
    for i in 0..n_residuals {
        for p in 0..n_params {
            for q in 0..n_params {
                jtj[p][q] += jacobian[i][p] * jacobian[i][q];
            }
        }
    }
    let dof = (n_residuals - n_params) as f64;
    let sigma_sq = cost / dof;
    let mut covariance = vec![vec![0.0; n_params]; n_params];
    for p in 0..n_params {
        let mut unit = vec![0.0; n_params];
        unit[p] = 1.0;
        let col = solve_linear(&jtj, &unit)?;
        for q in 0..n_params {
            covariance[q][p] = col[q] * sigma_sq;
        }
    }
    Ok(FitResult {
        params,
        covariance,
        residual: (cost / n_residuals as f64).sqrt(),
        iterations,
    })
}
