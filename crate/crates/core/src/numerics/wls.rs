//! Weighted least squares through a Householder QR of the row-scaled design.
//!
//! Rows are scaled by `sqrt(w)` so the problem becomes ordinary least squares.
//! Rank is checked column by column in the original order: a column whose
//! component orthogonal to all earlier columns is negligible relative to its
//! own norm is reported as collinear.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size below which a QR diagonal entry counts as rank loss.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct WlsProblem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub weights: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct WlsFit {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
}

impl WlsProblem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, weights: DVector<f64>) -> Result<Self> {
        let (n, k) = x.shape();
        if k == 0 {
            return Err(Error::domain("regressor matrix has no columns"));
        }
        if y.len() != n || weights.len() != n {
            return Err(Error::domain(format!(
                "dimension mismatch: x is {n}x{k}, y has {}, weights has {}",
                y.len(),
                weights.len()
            )));
        }
        if n < k {
            return Err(Error::domain(format!("need n >= k, got n={n}, k={k}")));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::domain(format!("weight {i} is negative or not finite")));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite entry in regressors or outcome"));
        }
        Ok(Self { x, y, weights })
    }

    pub fn unweighted(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(x, y, DVector::from_element(n, 1.0))
    }
}

pub fn wls_solve(problem: &WlsProblem) -> Result<WlsFit> {
    let (n, k) = problem.x.shape();
    let sw = problem.weights.map(f64::sqrt);

    let mut a = problem.x.clone();
    for mut col in a.column_iter_mut() {
        col.component_mul_assign(&sw);
    }
    let b = problem.y.component_mul(&sw);

    let col_norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let qr = a.qr();
    let r = qr.r();
    for j in 0..k {
        let scale = col_norms[j];
        if scale == 0.0 || r[(j, j)].abs() <= RANK_TOL * scale {
            return Err(Error::Collinear { column: j });
        }
    }

    let qtb = qr.q().transpose() * &b;
    let coefficients = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Singular("triangular factor".into()))?;

    let residuals = &problem.y - &problem.x * &coefficients;
    debug_assert_eq!(residuals.len(), n);
    Ok(WlsFit {
        coefficients,
        residuals,
    })
}

/// `X' diag(w) e`, the normal-equation residual of a fit.
pub fn normal_equation_residual(problem: &WlsProblem, residuals: &DVector<f64>) -> DVector<f64> {
    problem.x.transpose() * residuals.component_mul(&problem.weights)
}
