//! Projection onto `{x : D x >= 0}` in the metric of `V^{-1}`.
//!
//! With `a = D z` and `Omega = D V D'` the problem reduces to
//! `min_{tau >= 0} (a - tau)' Omega^{-1} (a - tau)`, a non-negative least
//! squares problem in Gram form solved by an active-set method.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// Iterations after which the entering index is chosen by smallest index
/// rather than largest gradient, which rules out cycling.
const BLAND_AFTER: usize = 50;

/// Result of projecting `point` onto the cone.
#[derive(Debug, Clone)]
pub struct ConeProjection {
    pub point: Vector,
    pub projected: Vector,
    /// Constraint rows strictly positive at the projection.
    pub face: Vec<usize>,
    /// `(z - x)' V^{-1} (z - x)`.
    pub sqdist: f64,
}

impl ConeProjection {
    pub fn face_dim(&self) -> usize {
        self.face.len()
    }
}

/// Minimise `x'Qx/2 - c'x` over `x >= 0` for positive definite `Q`.
pub fn nnls_gram(q: &Matrix, c: &Vector) -> Result<Vector> {
    let k = c.len();
    let scale = c.amax().max(q.amax()).max(1e-300);
    let tol = 1e-13 * scale;
    let mut x = Vector::zeros(k);
    let mut passive = vec![false; k];
    let max_iter = 30 * k.max(1) + 100;

    for iter in 0..max_iter {
        let grad = c - q * &x;
        let entering = if iter < BLAND_AFTER {
            (0..k)
                .filter(|&j| !passive[j] && grad[j] > tol)
                .max_by(|&i, &j| grad[i].total_cmp(&grad[j]))
        } else {
            (0..k).find(|&j| !passive[j] && grad[j] > tol)
        };
        let Some(j) = entering else {
            return Ok(x);
        };
        passive[j] = true;

        loop {
            let p: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let s_p = solve_sub(q, c, &p)?;
            if s_p.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (idx, &i) in p.iter().enumerate() {
                    x[i] = s_p[idx];
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (idx, &i) in p.iter().enumerate() {
                if s_p[idx] <= 0.0 {
                    let denom = x[i] - s_p[idx];
                    if denom > 0.0 {
                        alpha = alpha.min(x[i] / denom);
                    }
                }
            }
            for (idx, &i) in p.iter().enumerate() {
                x[i] += alpha * (s_p[idx] - x[i]);
            }
            let mut removed = false;
            for &i in &p {
                if x[i] <= tol * 1e-3 {
                    x[i] = 0.0;
                    passive[i] = false;
                    removed = true;
                }
            }
            if !removed {
                // Degenerate step: drop the most negative coordinate.
                let (idx, _) = s_p
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .expect("non-empty passive set");
                x[p[idx]] = 0.0;
                passive[p[idx]] = false;
            }
            if !passive.iter().any(|&b| b) {
                break;
            }
        }
    }
    Err(Error::NonConvergence {
        what: "non-negative least squares",
        iterations: max_iter,
    })
}

fn solve_sub(q: &Matrix, c: &Vector, p: &[usize]) -> Result<Vec<f64>> {
    let qpp = linalg::submatrix(q, p, p);
    let cp = Vector::from_iterator(p.len(), p.iter().map(|&i| c[i]));
    let chol = qpp
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("cone metric"))?;
    Ok(chol.solve(&cp).iter().copied().collect())
}

/// Solution of the reduced problem: `tau`, the multipliers
/// `lambda = Q (tau - a)` and the squared distance.
#[derive(Debug, Clone)]
pub struct TauSolution {
    pub tau: Vector,
    pub lambda: Vector,
    pub sqdist: f64,
}

/// Minimise `(a - tau)' Q (a - tau)` over `tau` with the first `n_fixed`
/// coordinates held at zero and the rest non-negative.
pub fn solve_tau(a: &Vector, q: &Matrix, n_fixed: usize) -> Result<TauSolution> {
    let m = a.len();
    if q.nrows() != m || q.ncols() != m || n_fixed > m {
        return Err(Error::Dimension(
            "cone metric does not match constraint count".into(),
        ));
    }
    let free: Vec<usize> = (n_fixed..m).collect();
    let qa = q * a;
    let mut tau = Vector::zeros(m);
    if !free.is_empty() {
        let qff = linalg::submatrix(q, &free, &free);
        let cf = Vector::from_iterator(free.len(), free.iter().map(|&i| qa[i]));
        let tf = nnls_gram(&qff, &cf)?;
        for (idx, &i) in free.iter().enumerate() {
            tau[i] = tf[idx];
        }
    }
    let diff = a - &tau;
    let lambda = q * (&tau - a);
    let sqdist = diff.dot(&(q * &diff)).max(0.0);
    Ok(TauSolution {
        tau,
        lambda,
        sqdist,
    })
}

/// Project `z` onto `{x : D x >= 0}` in the `V^{-1}` metric. `D` must have
/// full row rank.
pub fn project_cone(z: &Vector, d: &Matrix, v: &Matrix) -> Result<ConeProjection> {
    let dim = z.len();
    if d.ncols() != dim || v.nrows() != dim || v.ncols() != dim {
        return Err(Error::Dimension("cone projection dimensions differ".into()));
    }
    if d.nrows() == 0 {
        return Ok(ConeProjection {
            point: z.clone(),
            projected: z.clone(),
            face: vec![],
            sqdist: 0.0,
        });
    }
    let omega = d * v * d.transpose();
    let q = linalg::spd_inverse(&omega, "D V D'")?;
    let a = d * z;
    let sol = solve_tau(&a, &q, 0)?;
    let projected = z - v * d.transpose() * (&q * (&a - &sol.tau));
    let tol = 1e-9 * (1.0 + z.norm());
    let face = (0..a.len()).filter(|&i| sol.tau[i] > tol).collect();
    Ok(ConeProjection {
        point: z.clone(),
        projected,
        face,
        sqdist: sol.sqdist,
    })
}
