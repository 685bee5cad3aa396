//! Logistic regression by iteratively reweighted least squares (Newton–Raphson
//! on the Bernoulli log-likelihood) with step halving.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Added to the diagonal of the weighted Hessian before each solve.
const HESSIAN_RIDGE: f64 = 1e-10;
/// Coefficients beyond this size only arise when the likelihood has no finite maximum.
const DIVERGENCE_BOUND: f64 = 1e4;
/// Per-observation gradient level accepted when the Newton step has stalled at
/// rounding precision.
const ROUNDING_FLOOR: f64 = 1e-8;
/// Relative log-likelihood drop still treated as no change.
const LL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LogitFit {
    pub coefficients: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the score `X'(z - p)` at the returned coefficients.
    pub gradient_norm: f64,
    pub log_likelihood: f64,
    /// Log-likelihood after each accepted iteration, starting from the initial point.
    pub trace: Vec<f64>,
}

/// Numerically stable `1 / (1 + exp(-t))`.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub fn log_likelihood(x: &DMatrix<f64>, z: &[f64], theta: &DVector<f64>) -> f64 {
    let eta = x * theta;
    eta.iter()
        .zip(z)
        .map(|(&t, &zi)| zi * t - softplus(t))
        .sum()
}

/// Gradient of the log-likelihood, `X'(z - p)`.
pub fn score(x: &DMatrix<f64>, z: &[f64], theta: &DVector<f64>) -> DVector<f64> {
    let eta = x * theta;
    let resid = DVector::from_iterator(
        z.len(),
        eta.iter().zip(z).map(|(&t, &zi)| zi - logistic(t)),
    );
    x.transpose() * resid
}

pub fn predict(x: &DMatrix<f64>, theta: &DVector<f64>) -> DVector<f64> {
    (x * theta).map(logistic)
}

pub fn logit_fit(x: &DMatrix<f64>, z: &[f64], tol: f64, max_iter: usize) -> Result<LogitFit> {
    let (n, k) = x.shape();
    if z.len() != n {
        return Err(Error::domain(format!("outcome length {} != rows {n}", z.len())));
    }
    if k == 0 || n == 0 {
        return Err(Error::domain("empty logistic design"));
    }
    if z.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::domain("logistic outcome must be 0/1"));
    }
    let ones = z.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::Separation(format!(
            "all {n} outcomes equal {}",
            if ones == 0 { 0 } else { 1 }
        )));
    }

    let mut theta = DVector::zeros(k);
    let mut ll = log_likelihood(x, z, &theta);
    let mut trace = vec![ll];

    for iter in 1..=max_iter {
        let eta = x * &theta;
        let p = eta.map(logistic);
        let grad = x.transpose() * (DVector::from_column_slice(z) - &p);

        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= p[i] * (1.0 - p[i]);
        }
        let mut hess = x.transpose() * xw;
        for j in 0..k {
            hess[(j, j)] += HESSIAN_RIDGE;
        }
        let step = hess
            .clone()
            .cholesky()
            .map(|c| c.solve(&grad))
            .or_else(|| hess.lu().solve(&grad))
            .ok_or_else(|| Error::Singular("logistic Hessian".into()))?;

        // Step halving keeps the log-likelihood nondecreasing up to rounding.
        let floor = ll - LL_SLACK * (1.0 + ll.abs());
        let mut scale = 1.0;
        let mut candidate = &theta + &step;
        let mut ll_new = log_likelihood(x, z, &candidate);
        let mut halvings = 0;
        while ll_new < floor && halvings < 40 {
            scale *= 0.5;
            candidate = &theta + &step * scale;
            ll_new = log_likelihood(x, z, &candidate);
            halvings += 1;
        }
        if ll_new < floor {
            candidate = theta.clone();
            ll_new = ll;
        }

        let step_size = (&candidate - &theta).amax();
        theta = candidate;
        ll = ll_new;
        trace.push(ll);

        if theta.amax() > DIVERGENCE_BOUND {
            return Err(Error::Separation(format!(
                "coefficients diverged (|theta| = {:.3e})",
                theta.amax()
            )));
        }
        let fitted = predict(x, &theta);
        if fitted
            .iter()
            .zip(z)
            .all(|(&pi, &zi)| (pi - zi).abs() < 1e-8)
        {
            return Err(Error::Separation("fitted probabilities reproduce the outcome".into()));
        }

        let g = score(x, z, &theta).amax();
        let stalled = step_size <= tol * (1.0 + theta.amax());
        if g <= tol || (stalled && g < ROUNDING_FLOOR * n as f64) {
            return Ok(LogitFit {
                coefficients: theta,
                converged: true,
                iterations: iter,
                gradient_norm: g,
                log_likelihood: ll,
                trace,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "logistic IRLS",
        iterations: max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (DMatrix<f64>, Vec<f64>) {
        // 12 rows: intercept and two covariates, overlapping classes.
        let rows = [
            (0.5, 1.2, 0.0),
            (-1.0, 0.3, 0.0),
            (1.5, -0.7, 1.0),
            (0.2, 2.0, 1.0),
            (-0.3, -1.1, 0.0),
            (2.2, 0.4, 1.0),
            (-1.8, 1.5, 0.0),
            (0.9, -0.2, 0.0),
            (1.1, 1.0, 1.0),
            (-0.6, -0.4, 1.0),
            (0.0, 0.8, 0.0),
            (1.7, -1.3, 1.0),
        ];
        let x = DMatrix::from_fn(12, 3, |i, j| match j {
            0 => 1.0,
            1 => rows[i].0,
            _ => rows[i].1,
        });
        let z = rows.iter().map(|r| r.2).collect();
        (x, z)
    }

    /// Newton iteration whose Hessian is built by central differences of the score.
    fn fd_newton(x: &DMatrix<f64>, z: &[f64]) -> DVector<f64> {
        let k = x.ncols();
        let mut theta = DVector::zeros(k);
        for _ in 0..100 {
            let g = score(x, z, &theta);
            let h = 1e-5;
            let mut hess = DMatrix::zeros(k, k);
            for j in 0..k {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[j] += h;
                dn[j] -= h;
                let col = (score(x, z, &up) - score(x, z, &dn)) / (2.0 * h);
                hess.set_column(j, &col);
            }
            let step = (-hess).lu().solve(&g).unwrap();
            theta += &step;
            if step.amax() < 1e-14 {
                break;
            }
        }
        theta
    }

    #[test]
    fn intercept_only_equals_log_odds() {
        let x = DMatrix::from_element(10, 1, 1.0);
        let z: Vec<f64> = (0..10).map(|i| if i < 3 { 1.0 } else { 0.0 }).collect();
        let fit = logit_fit(&x, &z, 1e-10, 100).unwrap();
        let expected = (0.3f64 / 0.7).ln();
        assert!((fit.coefficients[0] - expected).abs() < 1e-10);
        assert!((expected + 0.84730).abs() < 1e-5);
        assert!(fit.gradient_norm < 1e-8);
    }

    #[test]
    fn all_treated_is_separation() {
        let x = DMatrix::from_element(5, 1, 1.0);
        let err = logit_fit(&x, &[1.0; 5], 1e-10, 100).unwrap_err();
        assert!(matches!(err, Error::Separation(_)));
    }

    #[test]
    fn perfectly_separated_covariate_is_detected() {
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let z = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let err = logit_fit(&x, &z, 1e-10, 100).unwrap_err();
        assert!(matches!(err, Error::Separation(_)), "{err}");
    }

    #[test]
    fn matches_finite_difference_newton_oracle() {
        let (x, z) = toy();
        let fit = logit_fit(&x, &z, 1e-10, 100).unwrap();
        let oracle = fd_newton(&x, &z);
        for j in 0..3 {
            assert!((fit.coefficients[j] - oracle[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn likelihood_trace_is_monotone() {
        let (x, z) = toy();
        let fit = logit_fit(&x, &z, 1e-10, 100).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * (1.0 + w[0].abs()));
        }
    }

    #[test]
    fn score_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = 30;
            let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
            let z: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 }).collect();
            let theta = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let g = score(&x, &z, &theta);
            for j in 0..3 {
                let h = 1e-6;
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (log_likelihood(&x, &z, &up) - log_likelihood(&x, &z, &dn)) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn logistic_is_stable_at_extremes() {
        assert_eq!(logistic(1000.0), 1.0);
        assert_eq!(logistic(-1000.0), 0.0);
        assert!((logistic(0.0) - 0.5).abs() < 1e-16);
    }
}
