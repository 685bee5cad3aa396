use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pieces of the cluster-robust sandwich, kept for inspection.
#[derive(Debug, Clone)]
pub struct SandwichParts {
    /// (X'WX)^-1
    pub bread: DMatrix<f64>,
    /// Sum over clusters of (X_g'W_g e_g)(X_g'W_g e_g)'.
    pub meat: DMatrix<f64>,
    /// G/(G-1) * (n-1)/(n-k), with k counting absorbed fixed effects.
    pub factor: f64,
    pub vcov: DMatrix<f64>,
    pub se: DVector<f64>,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub singleton_clusters: usize,
}

/// (A'A)^-1 from the triangular factor of A, without forming A'A.
fn bread_from_qr(a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = a.ncols();
    if a.nrows() < k {
        return Err(Error::Singular("fewer rows than regressors".into()));
    }
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let r = a.qr().r();
    for j in 0..k {
        if norms[j] == 0.0 || r[(j, j)].abs() <= 1e-12 * norms[j] {
            return Err(Error::Singular("X'WX is not positive definite".into()));
        }
    }
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Singular("triangular factor".into()))?;
    Ok(&r_inv * r_inv.transpose())
}

/// CR0 cluster-robust covariance with the usual small-sample factor.
///
/// Rows with zero weight are ignored. `absorbed` is the number of parameters
/// swept out before the regression (fixed-effect rank), which enters the
/// degrees-of-freedom count. Standard errors are NaN when `n <= k`.
pub fn cluster_robust_se(
    x: &DMatrix<f64>,
    residuals: &DVector<f64>,
    weights: &DVector<f64>,
    clusters: &[usize],
    absorbed: usize,
) -> Result<SandwichParts> {
    let (n_rows, k) = x.shape();
    if residuals.len() != n_rows || weights.len() != n_rows || clusters.len() != n_rows {
        return Err(Error::domain("sandwich inputs have mismatched lengths"));
    }
    let active: Vec<usize> = (0..n_rows).filter(|&i| weights[i] > 0.0).collect();
    let n_obs = active.len();

    let mut ids: Vec<usize> = active.iter().map(|&i| clusters[i]).collect();
    ids.sort_unstable();
    ids.dedup();
    let n_clusters = ids.len();
    if n_clusters < 2 {
        return Err(Error::InsufficientGroups(format!(
            "cluster-robust inference needs at least 2 clusters, found {n_clusters}"
        )));
    }

    let mut scores = DMatrix::<f64>::zeros(n_clusters, k);
    let mut sizes = vec![0usize; n_clusters];
    let mut scaled = DMatrix::<f64>::zeros(n_obs, k);
    for (r, &i) in active.iter().enumerate() {
        let w = weights[i];
        let row = x.row(i);
        let sw = w.sqrt();
        for a in 0..k {
            scaled[(r, a)] = row[a] * sw;
        }
        let g = ids.binary_search(&clusters[i]).expect("cluster id collected above");
        sizes[g] += 1;
        let we = w * residuals[i];
        for a in 0..k {
            scores[(g, a)] += row[a] * we;
        }
    }
    let bread = bread_from_qr(scaled)?;
    let meat = scores.transpose() * &scores;

    let g = n_clusters as f64;
    let n = n_obs as f64;
    let dof = n_obs as isize - (k + absorbed) as isize;
    let factor = if dof > 0 {
        g / (g - 1.0) * (n - 1.0) / dof as f64
    } else {
        f64::NAN
    };
    let vcov = (&bread * &meat * &bread) * factor;
    let se = DVector::from_iterator(k, (0..k).map(|j| vcov[(j, j)].max(0.0).sqrt()));
    Ok(SandwichParts {
        bread,
        meat,
        factor,
        vcov,
        se,
        n_obs,
        n_clusters,
        singleton_clusters: sizes.iter().filter(|&&s| s == 1).count(),
    })
}

/// Two-sided p-value under the normal approximation.
pub fn p_value(t: f64) -> f64 {
    libm::erfc(t.abs() / std::f64::consts::SQRT_2)
}

/// Conventional significance markers at 10%, 5% and 1%.
pub fn stars(coef: f64, se: f64) -> &'static str {
    if !(se > 0.0) || !coef.is_finite() {
        return "";
    }
    match p_value(coef / se) {
        p if p < 0.01 => "***",
        p if p < 0.05 => "**",
        p if p < 0.1 => "*",
        _ => "",
    }
}
