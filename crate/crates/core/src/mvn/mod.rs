//! Multivariate normal rectangle probabilities and metric projection onto
//! polyhedral cones.

mod bvn;
mod cone;
mod rect;

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

pub use bvn::{bvn_rect, bvn_upper, orthant2};
pub use cone::{nnls_gram, project_cone, solve_tau, ConeProjection, TauSolution};

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }
}

/// Standard normal quantile.
#[inline]
pub fn norm_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// A rectangle `[lower, upper]` under `N(0, sigma)`. Bounds may be infinite.
#[derive(Debug, Clone)]
pub struct MvnRect {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub sigma: Matrix,
}

impl MvnRect {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, sigma: Matrix) -> Result<Self> {
        let k = lower.len();
        if upper.len() != k || sigma.nrows() != k || sigma.ncols() != k {
            return Err(Error::InvalidInput(
                "rectangle and covariance dimensions differ".into(),
            ));
        }
        if let Some(i) = (0..k).find(|&i| !(lower[i] < upper[i]) || lower[i].is_nan()) {
            return Err(Error::InvalidInput(format!(
                "lower bound {} is not below upper bound {} in coordinate {i}",
                lower[i], upper[i]
            )));
        }
        if (&sigma - sigma.transpose()).amax() > 1e-12 * sigma.amax().max(1.0) {
            return Err(Error::NotPositiveDefinite("covariance is not symmetric"));
        }
        if k > 0 && sigma.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("rectangle covariance"));
        }
        Ok(Self {
            lower,
            upper,
            sigma,
        })
    }

    /// `[0, inf)^k`.
    pub fn positive_orthant(sigma: Matrix) -> Result<Self> {
        let k = sigma.nrows();
        Self::new(vec![0.0; k], vec![f64::INFINITY; k], sigma)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Probability of the rectangle and an error estimate. One and two
/// dimensional problems are evaluated deterministically; higher dimensions
/// use randomised quasi-Monte Carlo and are reproducible for a fixed seed.
pub fn rect_prob(rect: &MvnRect, accuracy: f64, seed: u64) -> Result<(f64, f64)> {
    if !(accuracy >= 1e-6) {
        return Err(Error::InvalidInput(format!(
            "accuracy {accuracy} is below 1e-6"
        )));
    }
    // Coordinates unbounded on both sides integrate out.
    let keep: Vec<usize> = (0..rect.dim())
        .filter(|&i| rect.lower[i].is_finite() || rect.upper[i].is_finite())
        .collect();
    let k = keep.len();
    let sd: Vec<f64> = keep.iter().map(|&i| rect.sigma[(i, i)].sqrt()).collect();
    let lower: Vec<f64> = keep
        .iter()
        .zip(&sd)
        .map(|(&i, s)| rect.lower[i] / s)
        .collect();
    let upper: Vec<f64> = keep
        .iter()
        .zip(&sd)
        .map(|(&i, s)| rect.upper[i] / s)
        .collect();
    let corr = |a: usize, b: usize| rect.sigma[(keep[a], keep[b])] / (sd[a] * sd[b]);

    match k {
        0 => Ok((1.0, 0.0)),
        1 => Ok(((norm_cdf(upper[0]) - norm_cdf(lower[0])).max(0.0), 0.0)),
        2 => Ok((
            bvn_rect([lower[0], lower[1]], [upper[0], upper[1]], corr(0, 1)),
            1e-15,
        )),
        _ => {
            let mut r = vec![0.0; k * k];
            for a in 0..k {
                for b in 0..k {
                    r[a * k + b] = if a == b { 1.0 } else { corr(a, b) };
                }
            }
            let prep = rect::Prepared::new(&lower, &upper, &r);
            Ok(prep.integrate(accuracy, seed))
        }
    }
}

/// `P(X >= 0)` for `X ~ N(0, cov)`; closed forms up to three dimensions.
pub fn orthant_prob(cov: &Matrix, accuracy: f64, seed: u64) -> Result<f64> {
    let k = cov.nrows();
    let r = |i: usize, j: usize| cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt();
    match k {
        0 => Ok(1.0),
        1 => Ok(0.5),
        2 => Ok(orthant2(r(0, 1))),
        3 => Ok(0.125 + (r(0, 1).asin() + r(0, 2).asin() + r(1, 2).asin()) / (4.0 * PI)),
        _ => {
            let rect = MvnRect::positive_orthant(cov.clone())?;
            rect_prob(&rect, accuracy, seed).map(|(p, _)| p)
        }
    }
}

/// Correlation matrix check used by callers that pass correlations directly.
pub fn check_correlation(corr: &Matrix) -> Result<()> {
    let k = corr.nrows();
    if corr.ncols() != k {
        return Err(Error::InvalidInput(
            "correlation matrix is not square".into(),
        ));
    }
    for i in 0..k {
        if (corr[(i, i)] - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(
                "correlation matrix needs a unit diagonal".into(),
            ));
        }
    }
    if k > 0 && linalg::min_eigenvalue(corr) <= 0.0 {
        return Err(Error::NotPositiveDefinite("correlation matrix"));
    }
    Ok(())
}
