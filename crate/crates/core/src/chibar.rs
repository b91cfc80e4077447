//! Chi-bar-square weights, tail probabilities and the joint distribution of
//! the two likelihood-ratio statistics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::mvn::{self, nnls_gram};
use crate::params::ConeSpec;

/// Largest number of inequality rows accepted by [`exact_weights`].
pub const MAX_EXACT_K: usize = 15;
pub const MIN_MC_SAMPLES: usize = 1000;
/// Default absolute accuracy of orthant probabilities in exact weights.
pub const DEFAULT_ORTHANT_ACCURACY: f64 = 1e-5;

const MC_BLOCK: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMethod {
    Exact,
    #[serde(alias = "mc", alias = "monte-carlo")]
    MonteCarlo,
}

/// Mixing weights `w_j`, `j = q..=r`, stored from `j = q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiBarWeights {
    pub w: Vec<f64>,
    pub q: usize,
    pub r: usize,
    pub t: usize,
    pub method: WeightMethod,
    #[serde(default)]
    pub se: Option<Vec<f64>>,
}

impl ChiBarWeights {
    pub fn new(w: Vec<f64>, q: usize, r: usize, t: usize, method: WeightMethod) -> Result<Self> {
        let out = Self {
            w,
            q,
            r,
            t,
            method,
            se: None,
        };
        out.validate()?;
        Ok(out)
    }

    /// Number of inequality rows, `r - q`.
    pub fn k(&self) -> usize {
        self.r - self.q
    }

    /// `w_j` for `q <= j <= r`, zero elsewhere.
    pub fn weight(&self, j: usize) -> f64 {
        if j < self.q || j > self.r {
            0.0
        } else {
            self.w[j - self.q]
        }
    }

    /// Tolerance used by [`validate`](Self::validate).
    pub fn tolerance(&self) -> f64 {
        match (&self.method, &self.se) {
            (WeightMethod::MonteCarlo, Some(se)) => {
                (3.0 * se.iter().cloned().fold(0.0, f64::max)).max(1e-6)
            }
            _ => 1e-6,
        }
    }

    /// Structural checks plus the sum and half-sum identities.
    pub fn validate(&self) -> Result<()> {
        if self.r < self.q || self.w.len() != self.r - self.q + 1 {
            return Err(Error::InvalidInput(format!(
                "weights need r - q + 1 = {} entries, got {}",
                (self.r + 1).saturating_sub(self.q),
                self.w.len()
            )));
        }
        if self.r + 1 > self.t {
            return Err(Error::InvalidInput(
                "r must be below the number of cells".into(),
            ));
        }
        if let Some(se) = &self.se {
            if se.len() != self.w.len() {
                return Err(Error::InvalidInput(
                    "one standard error per weight is required".into(),
                ));
            }
        }
        if self.w.iter().any(|&x| !(x >= -1e-12) || !x.is_finite()) {
            return Err(Error::InvalidInput("weights must be non-negative".into()));
        }
        let tol = self.tolerance();
        let total: f64 = self.w.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, not 1"
            )));
        }
        if self.k() >= 1 {
            let even: f64 = self.w.iter().step_by(2).sum();
            if (even - 0.5).abs() > tol {
                return Err(Error::InvalidInput(format!(
                    "even-indexed weights sum to {even}, not 1/2"
                )));
            }
        }
        Ok(())
    }

    /// Weights in reverse order, the mixing distribution of `L12`.
    pub fn reversed(&self) -> Vec<f64> {
        self.w.iter().rev().copied().collect()
    }

    /// `P(L01 > c)`.
    pub fn tail(&self, c: f64) -> f64 {
        chibar_tail(c, self)
    }

    pub fn joint_cdf(&self, c1: f64, c2: f64) -> f64 {
        joint_cdf(c1, c2, self)
    }

    /// `P(L12 > c)`.
    pub fn l12_tail(&self, c: f64) -> f64 {
        1.0 - joint_cdf(f64::INFINITY, c, self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let w: Self = serde_json::from_str(s)?;
        w.validate()?;
        Ok(w)
    }
}

/// `P(chi2_df <= x)`; `df = 0` is the unit mass at zero.
pub fn chisq_cdf(df: usize, x: f64) -> f64 {
    if x < 0.0 || x.is_nan() {
        0.0
    } else if df == 0 || x == f64::INFINITY {
        1.0
    } else if x == 0.0 {
        0.0
    } else {
        gamma_lr(df as f64 / 2.0, x / 2.0)
    }
}

/// `P(chi2_df > x)`.
pub fn chisq_sf(df: usize, x: f64) -> f64 {
    if x < 0.0 || x.is_nan() {
        1.0
    } else if df == 0 || x == f64::INFINITY {
        0.0
    } else if x == 0.0 {
        1.0
    } else {
        gamma_ur(df as f64 / 2.0, x / 2.0)
    }
}

/// `sum_j w_j P(chi2_{j-q} > c)`.
pub fn chibar_tail(c: f64, w: &ChiBarWeights) -> f64 {
    w.w.iter()
        .enumerate()
        .map(|(i, wi)| wi * chisq_sf(i, c))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Coefficients of the weights in [`joint_cdf`]:
/// `P(chi2_{j-q} <= c1) P(chi2_{t-1-j} <= c2)`.
pub fn joint_cdf_coefficients(c1: f64, c2: f64, w: &ChiBarWeights) -> Vec<f64> {
    (0..w.w.len())
        .map(|i| {
            let j = w.q + i;
            chisq_cdf(i, c1) * chisq_cdf(w.t - 1 - j, c2)
        })
        .collect()
}

/// `P(L01 <= c1, L12 <= c2)` under the null.
pub fn joint_cdf(c1: f64, c2: f64, w: &ChiBarWeights) -> f64 {
    joint_cdf_coefficients(c1, c2, w)
        .iter()
        .zip(&w.w)
        .map(|(c, wi)| c * wi)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Which block of a subset probability is inverted directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockOrder {
    /// Pick the smaller block.
    Auto,
    /// Invert `Phi_ii`, get `(Psi_jj)^-1` as a Schur complement of `Phi`.
    InvertFace,
    /// Invert `Psi_jj`, get `(Phi_ii)^-1` as a Schur complement of `Psi`.
    InvertComplement,
}

/// `Psi = Omega` and `Phi = Omega^-1` for the constraint rows.
struct Blocks {
    psi: Matrix,
    phi: Matrix,
}

impl Blocks {
    fn new(omega: &Matrix) -> Result<Self> {
        let phi = linalg::spd_inverse(omega, "D V D'")?;
        Ok(Self {
            psi: omega.clone(),
            phi,
        })
    }

    /// Covariances `(Phi_ii)^-1` and `(Psi_jj)^-1` for face `i`, complement `j`.
    fn covariances(
        &self,
        face: &[usize],
        rest: &[usize],
        order: BlockOrder,
    ) -> Result<(Matrix, Matrix)> {
        let invert_face = match order {
            BlockOrder::Auto => face.len() <= rest.len(),
            BlockOrder::InvertFace => true,
            BlockOrder::InvertComplement => false,
        };
        let (a, b, m) = if invert_face {
            (face, rest, &self.phi)
        } else {
            (rest, face, &self.psi)
        };
        if a.is_empty() {
            return Ok(swap_if(
                !invert_face,
                Matrix::zeros(0, 0),
                linalg::submatrix(m, b, b),
            ));
        }
        let maa_inv = linalg::spd_inverse(&linalg::submatrix(m, a, a), "weight block")?;
        if b.is_empty() {
            return Ok(swap_if(!invert_face, maa_inv, Matrix::zeros(0, 0)));
        }
        let mab = linalg::submatrix(m, a, b);
        let mut schur = linalg::submatrix(m, b, b) - mab.transpose() * &maa_inv * &mab;
        linalg::symmetrize(&mut schur);
        Ok(swap_if(!invert_face, maa_inv, schur))
    }
}

fn swap_if(swap: bool, x: Matrix, y: Matrix) -> (Matrix, Matrix) {
    if swap {
        (y, x)
    } else {
        (x, y)
    }
}

fn mask_to_sets(mask: u32, k: usize) -> (Vec<usize>, Vec<usize>) {
    (0..k).partition(|&i| mask >> i & 1 == 1)
}

/// `P[face of the projection = face]` for `a ~ N(0, omega)` projected onto
/// the non-negative orthant in the `omega^-1` metric.
pub fn face_probability(
    omega: &Matrix,
    face: &[usize],
    order: BlockOrder,
    accuracy: f64,
    seed: u64,
) -> Result<f64> {
    let blocks = Blocks::new(omega)?;
    let rest: Vec<usize> = (0..omega.nrows()).filter(|i| !face.contains(i)).collect();
    subset_prob(&blocks, face, &rest, order, accuracy, seed)
}

fn subset_prob(
    blocks: &Blocks,
    face: &[usize],
    rest: &[usize],
    order: BlockOrder,
    accuracy: f64,
    seed: u64,
) -> Result<f64> {
    let (cf, cr) = blocks.covariances(face, rest, order)?;
    Ok(mvn::orthant_prob(&cf, accuracy, seed)?
        * mvn::orthant_prob(&cr, accuracy, seed ^ 0x9e37_79b9)?)
}

/// The two consecutive levels filled by the half-sum identity.
fn skipped_levels(k: usize) -> (usize, usize) {
    if k.is_multiple_of(2) {
        (k / 2 - 1, k / 2)
    } else {
        ((k - 1) / 2, k.div_ceil(2))
    }
}

/// Exact weights for `V0` and a cone.
pub fn exact_weights(v0: &Matrix, cone: &ConeSpec, accuracy: f64) -> Result<ChiBarWeights> {
    check_cov(v0, cone)?;
    let omega = cone.constrained_cov(v0)?;
    let t = cone.d.ncols() + 1;
    exact_weights_from_cov(&omega, cone.q, cone.r, t, accuracy)
}

/// Exact weights from the covariance `omega` of the constraint rows.
pub fn exact_weights_from_cov(
    omega: &Matrix,
    q: usize,
    r: usize,
    t: usize,
    accuracy: f64,
) -> Result<ChiBarWeights> {
    let k = omega.nrows();
    if omega.ncols() != k || r < q || r - q != k || r + 1 > t {
        return Err(Error::Dimension(format!(
            "covariance is {k}x{}, but r - q = {}",
            omega.ncols(),
            r.saturating_sub(q)
        )));
    }
    if k > MAX_EXACT_K {
        return Err(Error::TooManyConstraints(k));
    }
    if !(accuracy >= 1e-6) {
        return Err(Error::InvalidInput(format!(
            "accuracy {accuracy} is below 1e-6"
        )));
    }
    if k == 0 {
        return ChiBarWeights::new(vec![1.0], q, r, t, WeightMethod::Exact);
    }
    let blocks = Blocks::new(omega)?;
    let (s0, s1) = skipped_levels(k);
    let masks: Vec<u32> = (0u32..1 << k)
        .filter(|m| {
            let c = m.count_ones() as usize;
            c != s0 && c != s1
        })
        .collect();
    let probs: Vec<(usize, f64)> = masks
        .par_iter()
        .map(|&mask| {
            let (face, rest) = mask_to_sets(mask, k);
            let seed = 0x5eed_0000_u64 + mask as u64;
            subset_prob(&blocks, &face, &rest, BlockOrder::Auto, accuracy, seed)
                .map(|p| (face.len(), p))
        })
        .collect::<Result<_>>()?;

    let mut w = vec![0.0; k + 1];
    for (level, p) in probs {
        w[level] += p;
    }
    for s in [s0, s1] {
        let same_parity: f64 = (0..=k)
            .filter(|&i| i != s && i % 2 == s % 2)
            .map(|i| w[i])
            .sum();
        w[s] = (0.5 - same_parity).max(0.0);
    }
    Ok(ChiBarWeights {
        w,
        q,
        r,
        t,
        method: WeightMethod::Exact,
        se: None,
    })
}

fn check_cov(v0: &Matrix, cone: &ConeSpec) -> Result<()> {
    let dim = cone.d.ncols();
    if v0.nrows() != dim || v0.ncols() != dim {
        return Err(Error::Dimension(format!("V0 must be {dim}x{dim}")));
    }
    if v0.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("V0"));
    }
    Ok(())
}

/// Weights from the face dimensions of `nsamples` projected normal draws.
pub fn mc_weights(
    v0: &Matrix,
    cone: &ConeSpec,
    nsamples: usize,
    seed: u64,
) -> Result<ChiBarWeights> {
    check_cov(v0, cone)?;
    let omega = cone.constrained_cov(v0)?;
    let t = cone.d.ncols() + 1;
    mc_weights_from_cov(&omega, cone.q, cone.r, t, nsamples, seed)
}

pub fn mc_weights_from_cov(
    omega: &Matrix,
    q: usize,
    r: usize,
    t: usize,
    nsamples: usize,
    seed: u64,
) -> Result<ChiBarWeights> {
    let k = omega.nrows();
    if omega.ncols() != k || r < q || r - q != k || r + 1 > t {
        return Err(Error::Dimension("covariance does not match r - q".into()));
    }
    if nsamples < MIN_MC_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "at least {MIN_MC_SAMPLES} samples are required"
        )));
    }
    if k == 0 {
        let mut w = ChiBarWeights::new(vec![1.0], q, r, t, WeightMethod::MonteCarlo)?;
        w.se = Some(vec![0.0]);
        return Ok(w);
    }
    // a = H z with H = chol(omega); the NNLS linear term is omega^-1 a = H'^-1 z.
    let h = linalg::cholesky_lower(omega, "D V D'")?;
    let ht = h.transpose();
    let phi = linalg::spd_inverse(omega, "D V D'")?;

    let nblocks = nsamples.div_ceil(MC_BLOCK);
    let counts: Vec<Vec<u64>> = (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let n = MC_BLOCK.min(nsamples - b * MC_BLOCK);
            let mut tally = vec![0u64; k + 1];
            for _ in 0..n {
                let z = Vector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
                let c = ht
                    .solve_upper_triangular(&z)
                    .expect("triangular factor is non-singular");
                let tau = nnls_gram(&phi, &c)?;
                let a = &h * &z;
                let tol = 1e-9 * (1.0 + a.norm());
                tally[tau.iter().filter(|&&x| x > tol).count()] += 1;
            }
            Ok(tally)
        })
        .collect::<Result<_>>()?;

    let mut total = vec![0u64; k + 1];
    for c in counts {
        for (acc, x) in total.iter_mut().zip(c) {
            *acc += x;
        }
    }
    let n = nsamples as f64;
    let w: Vec<f64> = total.iter().map(|&c| c as f64 / n).collect();
    let se = w.iter().map(|&p| (p * (1.0 - p) / n).sqrt()).collect();
    Ok(ChiBarWeights {
        w,
        q,
        r,
        t,
        method: WeightMethod::MonteCarlo,
        se: Some(se),
    })
}

/// Number of projections needed so that the joint probability at
/// `(c1, c2)` is estimated to within `eps` with probability `1 - 2 delta`.
pub fn required_samples(w: &ChiBarWeights, c1: f64, c2: f64, eps: f64, delta: f64) -> Result<u64> {
    let c = joint_cdf_coefficients(c1, c2, w);
    required_samples_for_coefficients(&w.w, &c, eps, delta)
}

/// As [`required_samples`] with an explicit coefficient vector.
pub fn required_samples_for_coefficients(
    w: &[f64],
    c: &[f64],
    eps: f64,
    delta: f64,
) -> Result<u64> {
    if !(eps > 0.0) || !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidInput(
            "need eps > 0 and 0 < delta < 0.5".into(),
        ));
    }
    if w.len() != c.len() {
        return Err(Error::Dimension(
            "one coefficient per weight is required".into(),
        ));
    }
    let mean: f64 = w.iter().zip(c).map(|(w, c)| w * c).sum();
    let second: f64 = w.iter().zip(c).map(|(w, c)| w * c * c).sum();
    let v = (second - mean * mean).max(0.0);
    let z = mvn::norm_quantile(1.0 - delta);
    let n = v * (z / eps).powi(2);
    // Guard against 9603.999999 style rounding.
    let rounded = n.round();
    Ok(if (n - rounded).abs() < 1e-9 * n.max(1.0) {
        rounded
    } else {
        n.ceil()
    } as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn random_spd(k: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let a = Matrix::from_fn(k, k, |_, _| StandardNormal.sample(rng));
        &a * a.transpose() + Matrix::identity(k, k) * 0.2
    }

    fn identity_cone(k: usize) -> ConeSpec {
        ConeSpec::new(Matrix::identity(k, k), Matrix::zeros(0, k), k).unwrap()
    }

    #[test]
    fn trivial_cones() {
        let w = exact_weights(&(Matrix::identity(1, 1) * 3.0), &identity_cone(1), 1e-5).unwrap();
        assert_eq!(w.w, vec![0.5, 0.5]);
        let w = exact_weights(&Matrix::identity(2, 2), &identity_cone(2), 1e-5).unwrap();
        for (a, b) in w.w.iter().zip([0.25, 0.5, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }
        let cone = ConeSpec::new(Matrix::zeros(0, 3), Matrix::zeros(0, 3), 3).unwrap();
        let w = exact_weights(&Matrix::identity(3, 3), &cone, 1e-5).unwrap();
        assert_eq!((w.w.clone(), w.q, w.r), (vec![1.0], 3, 3));
        let w = mc_weights(&Matrix::identity(3, 3), &cone, 1000, 0).unwrap();
        assert_eq!(w.w, vec![1.0]);
    }

    #[test]
    fn two_constraints_with_correlation() {
        for rho in [-0.6, 0.3, 0.8] {
            let omega = Matrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
            let w = exact_weights_from_cov(&omega, 0, 2, 3, 1e-5).unwrap();
            let top = 0.25 + f64::asin(rho) / (2.0 * PI);
            let bottom = 0.25 - f64::asin(rho) / (2.0 * PI);
            assert!((w.w[2] - top).abs() < 1e-14);
            assert!((w.w[0] - bottom).abs() < 1e-14);
            let mc = mc_weights_from_cov(&omega, 0, 2, 3, 1_000_000, 4).unwrap();
            let se = mc.se.as_ref().unwrap();
            for i in 0..3 {
                assert!((mc.w[i] - w.w[i]).abs() < 4.0 * se[i], "rho {rho}, i {i}");
            }
        }
    }

    #[test]
    fn monte_carlo_agrees_with_exact_for_k4() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v = random_spd(6, &mut rng);
        let d = Matrix::from_fn(4, 6, |_, _| StandardNormal.sample(&mut rng));
        let cone = ConeSpec::new(d, Matrix::zeros(0, 6), 6).unwrap();
        let exact = exact_weights(&v, &cone, 1e-5).unwrap();
        let mc = mc_weights(&v, &cone, 1_000_000, 21).unwrap();
        let se = mc.se.as_ref().unwrap();
        for i in 0..=4 {
            assert!(
                (mc.w[i] - exact.w[i]).abs() < 4.0 * se[i] + 1e-5,
                "i {i}: {} vs {}",
                mc.w[i],
                exact.w[i]
            );
        }
        assert_eq!(mc, mc_weights(&v, &cone, 1_000_000, 21).unwrap());
        mc.validate().unwrap();
    }

    #[test]
    fn identities_and_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 1..=7 {
            let v = random_spd(k + 1, &mut rng);
            let d = Matrix::from_fn(k, k + 1, |_, _| StandardNormal.sample(&mut rng));
            let cone = ConeSpec::new(d, Matrix::zeros(0, k + 1), k + 1).unwrap();
            let w = exact_weights(&v, &cone, 1e-5).unwrap();
            w.validate().unwrap();
            let odd: f64 = w.w.iter().skip(1).step_by(2).sum();
            assert!((odd - 0.5).abs() < 1e-6);
            let scaled = exact_weights(&(&v * 7.5), &cone, 1e-5).unwrap();
            for (a, b) in w.w.iter().zip(&scaled.w) {
                assert!((a - b).abs() < 2e-5);
            }
        }
    }

    #[test]
    fn skipped_levels_agree_with_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for k in 1..=6 {
            let omega = random_spd(k, &mut rng);
            let w = exact_weights_from_cov(&omega, 0, k, k + 1, 1e-5).unwrap();
            let mut direct = vec![0.0; k + 1];
            for mask in 0u32..1 << k {
                let (face, _) = mask_to_sets(mask, k);
                direct[face.len()] +=
                    face_probability(&omega, &face, BlockOrder::Auto, 1e-5, mask as u64).unwrap();
            }
            for i in 0..=k {
                assert!((w.w[i] - direct[i]).abs() < 1e-4, "k {k} level {i}");
            }
        }
    }

    #[test]
    fn partitioned_inverses_and_block_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let k = rng.random_range(2..=6);
            let omega = random_spd(k, &mut rng);
            let blocks = Blocks::new(&omega).unwrap();
            let mask = rng.random_range(1..(1u32 << k) - 1);
            let (face, rest) = mask_to_sets(mask, k);
            let (f1, r1) = blocks
                .covariances(&face, &rest, BlockOrder::InvertFace)
                .unwrap();
            let (f2, r2) = blocks
                .covariances(&face, &rest, BlockOrder::InvertComplement)
                .unwrap();
            assert!((&f1 - &f2).amax() < 1e-10 * (1.0 + f1.amax()));
            assert!((&r1 - &r2).amax() < 1e-10 * (1.0 + r1.amax()));
            if face.len() <= 3 && rest.len() <= 3 {
                let p1 = face_probability(&omega, &face, BlockOrder::InvertFace, 1e-5, 0).unwrap();
                let p2 =
                    face_probability(&omega, &face, BlockOrder::InvertComplement, 1e-5, 0).unwrap();
                assert!((p1 - p2).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn too_many_constraints() {
        let omega = Matrix::identity(16, 16);
        assert!(matches!(
            exact_weights_from_cov(&omega, 0, 16, 17, 1e-5),
            Err(Error::TooManyConstraints(16))
        ));
        assert!(mc_weights_from_cov(&omega, 0, 16, 17, 999, 0).is_err());
    }

    #[test]
    fn tail_values() {
        let w = ChiBarWeights::new(vec![0.5, 0.5], 0, 1, 2, WeightMethod::Exact).unwrap();
        assert!((w.tail(3.841_458_820_694_124) - 0.025).abs() < 1e-12);
        assert!((w.tail(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(w.tail(-1e-300), 1.0);
        let w = ChiBarWeights::new(vec![0.2, 0.3, 0.3, 0.2], 2, 5, 6, WeightMethod::Exact).unwrap();
        let mut last = 1.0;
        for i in 1..100 {
            let v = w.tail(i as f64 * 0.2);
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn joint_cdf_margins() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let k = rng.random_range(1..=6);
            let q = rng.random_range(0..=3);
            let mut w: Vec<f64> = (0..=k).map(|_| rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            let cw = ChiBarWeights {
                w,
                q,
                r: q + k,
                t: q + k + 1,
                method: WeightMethod::Exact,
                se: None,
            };
            let (c1, c2) = (rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0);
            assert!((cw.joint_cdf(f64::INFINITY, f64::INFINITY) - 1.0).abs() < 1e-15);
            assert!((cw.joint_cdf(c1, f64::INFINITY) - (1.0 - cw.tail(c1))).abs() < 1e-14);
            let rev = cw.reversed();
            let rev_tail: f64 = rev
                .iter()
                .enumerate()
                .map(|(i, w)| w * chisq_sf(i, c2))
                .sum();
            assert!((cw.l12_tail(c2) - rev_tail).abs() < 1e-14);
            let j = cw.joint_cdf(c1, c2);
            assert!(j <= 1.0 - cw.tail(c1) + 1e-15 && j <= 1.0 - cw.l12_tail(c2) + 1e-15);
        }
    }

    #[test]
    fn sample_size_rule() {
        let w = ChiBarWeights::new(vec![0.5, 0.5], 0, 1, 2, WeightMethod::Exact).unwrap();
        let n = required_samples_for_coefficients(&w.w, &[1.0, 0.0], 0.01, 0.025).unwrap();
        assert_eq!(n, 9604);
        let n2 = required_samples_for_coefficients(&w.w, &[1.0, 0.0], 0.005, 0.025).unwrap();
        assert!((n2 as f64 / n as f64 - 4.0).abs() < 1e-3);
        let deg = ChiBarWeights {
            w: vec![1.0, 0.0],
            q: 0,
            r: 1,
            t: 2,
            method: WeightMethod::Exact,
            se: None,
        };
        assert_eq!(required_samples(&deg, 2.0, 3.0, 0.01, 0.025).unwrap(), 0);
        assert!(required_samples(&w, 1.0, 1.0, 0.0, 0.025).is_err());
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let w = exact_weights(&Matrix::identity(3, 3), &identity_cone(3), 1e-5).unwrap();
        let back = ChiBarWeights::from_json(&w.to_json().unwrap()).unwrap();
        assert_eq!(w, back);
        assert!(ChiBarWeights::new(vec![0.6, 0.6], 0, 1, 2, WeightMethod::Exact).is_err());
        assert!(ChiBarWeights::new(vec![0.7, 0.3], 0, 1, 2, WeightMethod::Exact).is_err());
    }
}
