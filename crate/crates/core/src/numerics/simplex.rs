//! Least squares over the probability simplex:
//! `min_w ||target - donors * w||^2` subject to `w >= 0`, `sum(w) = 1`.
//!
//! Accelerated projected gradient with exact Euclidean projection, started from
//! uniform weights. Every few iterations the current support is re-solved
//! exactly (equality-constrained least squares, minimum-norm via SVD); the
//! corrected point is kept when it satisfies the KKT conditions. Starting from
//! uniform weights and solving the support problem in minimum-norm form makes
//! degenerate donors (equal columns) share weight deterministically.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_ITER: usize = 200_000;
const POLISH_EVERY: usize = 25;
const SUPPORT_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SimplexQpProblem {
    /// Matching vector of the treated unit (length K).
    pub target: DVector<f64>,
    /// One column per donor (K x J).
    pub donors: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SimplexQpSolution {
    pub weights: DVector<f64>,
    pub loss: f64,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
}

impl SimplexQpProblem {
    pub fn new(target: DVector<f64>, donors: DMatrix<f64>) -> Result<Self> {
        let (k, j) = donors.shape();
        if k == 0 || j == 0 {
            return Err(Error::domain("simplex problem needs K >= 1 and J >= 1"));
        }
        if target.len() != k {
            return Err(Error::domain(format!(
                "target length {} does not match donor rows {k}",
                target.len()
            )));
        }
        if target.iter().chain(donors.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite entry in simplex problem"));
        }
        Ok(Self { target, donors })
    }

    pub fn loss(&self, w: &DVector<f64>) -> f64 {
        (&self.target - &self.donors * w).norm_squared()
    }
}

/// Euclidean projection onto `{w >= 0, sum w = 1}` (sort-and-threshold).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

struct Quadratic {
    gram: DMatrix<f64>,
    cross: DVector<f64>,
    lipschitz: f64,
}

impl Quadratic {
    fn new(p: &SimplexQpProblem) -> Self {
        let gram = p.donors.transpose() * &p.donors;
        let cross = p.donors.transpose() * &p.target;
        let lipschitz = 2.0 * gram.clone().symmetric_eigen().eigenvalues.max().max(0.0);
        Self {
            gram,
            cross,
            lipschitz,
        }
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        (&self.gram * w - &self.cross) * 2.0
    }

    /// `L * ||w - P(w - grad/L)||_inf`, zero exactly at a KKT point.
    fn projected_gradient_norm(&self, w: &DVector<f64>) -> f64 {
        if self.lipschitz == 0.0 {
            return 0.0;
        }
        let g = self.gradient(w);
        let trial: Vec<f64> = w
            .iter()
            .zip(g.iter())
            .map(|(wi, gi)| wi - gi / self.lipschitz)
            .collect();
        let proj = project_to_simplex(&trial);
        w.iter()
            .zip(proj)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            * self.lipschitz
    }
}

/// Re-solve the equality-constrained problem on the support of `w`.
/// Returns `None` if the support solution leaves the simplex.
fn polish(p: &SimplexQpProblem, w: &DVector<f64>) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..w.len()).filter(|&j| w[j] > SUPPORT_EPS).collect();
    let s = support.len();
    if s == 0 {
        return None;
    }
    let k = p.donors.nrows();
    let a = DMatrix::from_fn(k, s, |r, c| p.donors[(r, support[c])]);
    let uniform = DVector::from_element(s, 1.0 / s as f64);
    // w_S = uniform + v with sum(v) = 0: solve min ||r - A P v|| for the min-norm v.
    let centering = DMatrix::from_fn(s, s, |i, j| {
        if i == j {
            1.0 - 1.0 / s as f64
        } else {
            -1.0 / s as f64
        }
    });
    let ap = &a * &centering;
    let rhs = &p.target - &a * &uniform;
    let svd = ap.svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(1e-300);
    let v = svd.solve(&rhs, eps).ok()?;
    let ws = uniform + centering * v;
    if ws.iter().any(|&x| x < -1e-12) {
        return None;
    }
    let mut out = DVector::zeros(w.len());
    for (c, &j) in support.iter().enumerate() {
        out[j] = ws[c].max(0.0);
    }
    let total = out.sum();
    Some(out / total)
}

fn renormalize(w: &mut DVector<f64>) {
    for x in w.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let total = w.sum();
    *w /= total;
}

pub fn simplex_qp_solve(problem: &SimplexQpProblem, tol: f64) -> Result<SimplexQpSolution> {
    let j = problem.donors.ncols();
    let quad = Quadratic::new(problem);
    let scale = quad.lipschitz.max(1.0);
    let target_gap = tol * scale;

    let finish = |mut w: DVector<f64>, iterations: usize| {
        renormalize(&mut w);
        SimplexQpSolution {
            loss: problem.loss(&w),
            projected_gradient_norm: quad.projected_gradient_norm(&w),
            weights: w,
            iterations,
        }
    };

    let mut w = DVector::from_element(j, 1.0 / j as f64);
    if j == 1 || quad.lipschitz == 0.0 {
        return Ok(finish(w, 0));
    }

    let step = 1.0 / quad.lipschitz;
    let mut y = w.clone();
    let mut t = 1.0f64;
    for iter in 1..=MAX_ITER {
        let g = quad.gradient(&y);
        let trial: Vec<f64> = y.iter().zip(g.iter()).map(|(a, b)| a - step * b).collect();
        let w_next = DVector::from_vec(project_to_simplex(&trial));

        // Gradient-based restart keeps the accelerated iteration monotone in practice.
        let restart = (&y - &w_next).dot(&(&w_next - &w)) > 0.0;
        let t_next = if restart {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
        };
        y = if restart {
            w_next.clone()
        } else {
            &w_next + (&w_next - &w) * ((t - 1.0) / t_next)
        };
        t = t_next;
        w = w_next;

        if iter % POLISH_EVERY == 0 {
            if let Some(pw) = polish(problem, &w) {
                if quad.projected_gradient_norm(&pw) <= target_gap
                    && problem.loss(&pw) <= problem.loss(&w) + 1e-12 * scale
                {
                    return Ok(finish(pw, iter));
                }
            }
        }
        if quad.projected_gradient_norm(&w) <= target_gap {
            // Prefer the exact support solution when it is at least as good.
            if let Some(pw) = polish(problem, &w) {
                if quad.projected_gradient_norm(&pw) <= target_gap {
                    return Ok(finish(pw, iter));
                }
            }
            return Ok(finish(w, iter));
        }
    }
    Err(Error::NonConvergence {
        what: "simplex QP",
        iterations: MAX_ITER,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive search over the 1-simplex at the given step.
    fn grid_two_donors(p: &SimplexQpProblem, step: f64) -> (f64, f64) {
        let n = (1.0 / step).round() as usize;
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=n {
            let a = i as f64 * step;
            let w = DVector::from_vec(vec![a, 1.0 - a]);
            let l = p.loss(&w);
            if l < best.0 {
                best = (l, a);
            }
        }
        (best.1, 1.0 - best.1)
    }

    fn problem(target: &[f64], cols: &[&[f64]]) -> SimplexQpProblem {
        let k = target.len();
        let donors = DMatrix::from_fn(k, cols.len(), |r, c| cols[c][r]);
        SimplexQpProblem::new(DVector::from_column_slice(target), donors).unwrap()
    }

    #[test]
    fn projection_basics() {
        assert_eq!(project_to_simplex(&[0.2, 0.8]), vec![0.2, 0.8]);
        assert_eq!(project_to_simplex(&[5.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
        let p = project_to_simplex(&[0.0, 0.0, 0.0]);
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn exact_donor_match_gets_unit_weight() {
        let p = problem(&[1.0, 2.0, 4.0], &[&[0.0, 1.0, 1.0], &[1.0, 2.0, 4.0], &[3.0, 0.0, 2.0]]);
        let s = simplex_qp_solve(&p, 1e-10).unwrap();
        assert_eq!(s.weights.as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(s.loss, 0.0);
    }

    #[test]
    fn midpoint_matches_grid_oracle() {
        let p = problem(&[2.0, 2.0], &[&[1.0, 1.0], &[3.0, 3.0]]);
        let s = simplex_qp_solve(&p, 1e-10).unwrap();
        let (a, b) = grid_two_donors(&p, 1e-4);
        assert!((s.weights[0] - a).abs() <= 1e-4 && (s.weights[1] - b).abs() <= 1e-4);
        assert!((s.weights[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn binding_corner() {
        let p = problem(&[0.0, 0.0], &[&[1.0, 1.0], &[2.0, 2.0]]);
        let s = simplex_qp_solve(&p, 1e-10).unwrap();
        let (a, _) = grid_two_donors(&p, 1e-4);
        assert_eq!(a, 1.0);
        assert_eq!(s.weights.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn identical_donors_split_evenly() {
        let p = problem(&[1.0, 1.5, 2.0], &[&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], &[0.0, 3.0, 5.0]]);
        let s = simplex_qp_solve(&p, 1e-10).unwrap();
        assert!((s.weights[0] - s.weights[1]).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_k_less_than_j() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let k = 3;
            let j = 8;
            let donors = DMatrix::from_fn(k, j, |_, _| rng.random_range(0.0..1.0));
            let target = DVector::from_fn(k, |_, _| rng.random_range(0.0..1.0));
            let p = SimplexQpProblem::new(target, donors).unwrap();
            let s = simplex_qp_solve(&p, 1e-10).unwrap();
            assert!(s.weights.iter().all(|&w| w >= 0.0));
            assert!((s.weights.sum() - 1.0).abs() < 1e-15);
            assert!(s.projected_gradient_norm < 1e-9 * 10.0);
        }
    }

    proptest::proptest! {
        #[test]
        fn never_worse_than_best_vertex_and_order_invariant(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = rng.random_range(2..8usize);
            let j = rng.random_range(2..6usize);
            let donors = DMatrix::from_fn(k, j, |_, _| rng.random_range(-1.0..1.0));
            let target = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
            let p = SimplexQpProblem::new(target.clone(), donors.clone()).unwrap();
            let s = simplex_qp_solve(&p, 1e-10).unwrap();

            let best_vertex = (0..j)
                .map(|c| (&target - donors.column(c)).norm_squared())
                .fold(f64::INFINITY, f64::min);
            proptest::prop_assert!(s.loss <= best_vertex + 1e-12);

            let perm: Vec<usize> = (0..j).rev().collect();
            let permuted = DMatrix::from_fn(k, j, |r, c| donors[(r, perm[c])]);
            let s2 = simplex_qp_solve(&SimplexQpProblem::new(target, permuted).unwrap(), 1e-10).unwrap();
            for c in 0..j {
                proptest::prop_assert!((s2.weights[c] - s.weights[perm[c]]).abs() < 1e-7);
            }
        }
    }
}
