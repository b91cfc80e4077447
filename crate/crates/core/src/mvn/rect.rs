//! Separation-of-variables integration of multivariate normal rectangle
//! probabilities with randomly shifted Richtmyer lattice points.
//!
//! Variables are reordered during the Cholesky factorisation so the
//! innermost integrals carry the most probability mass, and the integrand is
//! periodised with the baker's transform and averaged over antithetic pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{norm_cdf, norm_pdf, norm_quantile};

const PRIMES: [u32; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

const SHIFTS: usize = 12;
const START_POINTS: usize = 64;
const MAX_POINTS: usize = 1 << 17;
/// Error estimate is this many standard errors of the shift means.
const ERR_MULT: f64 = 3.0;

/// Standardised problem after variable reordering: bounds divided by the
/// diagonal of the Cholesky factor, which is stored row-major.
pub(crate) struct Prepared {
    k: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    chol: Vec<f64>,
}

impl Prepared {
    /// `corr` is a k x k correlation matrix, row-major; bounds are already
    /// scaled to unit variances.
    pub(crate) fn new(lower: &[f64], upper: &[f64], corr: &[f64]) -> Self {
        let k = lower.len();
        let mut a = lower.to_vec();
        let mut b = upper.to_vec();
        let mut sig = corr.to_vec();
        let mut l = vec![0.0; k * k];
        let mut y = vec![0.0; k];

        for i in 0..k {
            let mut best = i;
            let mut best_mass = f64::INFINITY;
            for j in i..k {
                let mut s = sig[j * k + j];
                let mut shift = 0.0;
                for m in 0..i {
                    s -= l[j * k + m] * l[j * k + m];
                    shift += l[j * k + m] * y[m];
                }
                let sd = s.max(1e-300).sqrt();
                let mass = norm_cdf((b[j] - shift) / sd) - norm_cdf((a[j] - shift) / sd);
                if mass < best_mass {
                    best_mass = mass;
                    best = j;
                }
            }
            if best != i {
                a.swap(i, best);
                b.swap(i, best);
                for c in 0..k {
                    sig.swap(i * k + c, best * k + c);
                }
                for r in 0..k {
                    sig.swap(r * k + i, r * k + best);
                }
                for m in 0..i {
                    l.swap(i * k + m, best * k + m);
                }
            }
            let mut s = sig[i * k + i];
            for m in 0..i {
                s -= l[i * k + m] * l[i * k + m];
            }
            let lii = s.max(1e-300).sqrt();
            l[i * k + i] = lii;
            for r in i + 1..k {
                let mut v = sig[r * k + i];
                for m in 0..i {
                    v -= l[r * k + m] * l[i * k + m];
                }
                l[r * k + i] = v / lii;
            }
            let mut shift = 0.0;
            for m in 0..i {
                shift += l[i * k + m] * y[m];
            }
            let lo = (a[i] - shift) / lii;
            let hi = (b[i] - shift) / lii;
            let mass = norm_cdf(hi) - norm_cdf(lo);
            y[i] = if mass > 1e-300 {
                (norm_pdf(lo) - norm_pdf(hi)) / mass
            } else if lo.is_finite() {
                lo
            } else {
                hi.min(0.0)
            };
        }

        // Scale so that the integrand needs no divisions.
        for i in 0..k {
            let lii = l[i * k + i];
            a[i] /= lii;
            b[i] /= lii;
            for m in 0..i {
                l[i * k + m] /= lii;
            }
        }
        Self {
            k,
            lower: a,
            upper: b,
            chol: l,
        }
    }

    #[inline]
    fn integrand(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let k = self.k;
        let mut prod = 1.0;
        for i in 0..k {
            let mut shift = 0.0;
            for m in 0..i {
                shift += self.chol[i * k + m] * y[m];
            }
            let d = norm_cdf(self.lower[i] - shift);
            let e = norm_cdf(self.upper[i] - shift);
            let mass = e - d;
            if mass <= 0.0 {
                return 0.0;
            }
            prod *= mass;
            if i + 1 < k {
                let u = (d + w[i] * mass).clamp(1e-300, 1.0 - f64::EPSILON / 2.0);
                y[i] = norm_quantile(u);
            }
        }
        prod
    }

    /// Integrate to absolute error `accuracy` (ERR_MULT standard errors).
    /// Returns the estimate and the error estimate.
    pub(crate) fn integrate(&self, accuracy: f64, seed: u64) -> (f64, f64) {
        let dim = self.k - 1;
        let gen: Vec<f64> = PRIMES[..dim]
            .iter()
            .map(|&p| (p as f64).sqrt().fract())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shifts: Vec<Vec<f64>> = (0..SHIFTS)
            .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
            .collect();

        let mut sums = [0.0f64; SHIFTS];
        let mut done = 0usize;
        let mut target = START_POINTS;
        let mut w = vec![0.0; dim];
        let mut w_anti = vec![0.0; dim];
        let mut y = vec![0.0; self.k];
        loop {
            for (s, shift) in shifts.iter().enumerate() {
                let mut acc = 0.0;
                for n in done..target {
                    let step = (n + 1) as f64;
                    for j in 0..dim {
                        let x = (step * gen[j] + shift[j]).fract();
                        let u = (2.0 * x - 1.0).abs();
                        w[j] = u;
                        w_anti[j] = 1.0 - u;
                    }
                    acc += 0.5 * (self.integrand(&w, &mut y) + self.integrand(&w_anti, &mut y));
                }
                sums[s] += acc;
            }
            done = target;
            let means: Vec<f64> = sums.iter().map(|s| s / done as f64).collect();
            let est = means.iter().sum::<f64>() / SHIFTS as f64;
            let var = means.iter().map(|m| (m - est).powi(2)).sum::<f64>()
                / (SHIFTS * (SHIFTS - 1)) as f64;
            let err = ERR_MULT * var.sqrt();
            if err <= accuracy || done >= MAX_POINTS {
                return (est.clamp(0.0, 1.0), err);
            }
            target *= 2;
        }
    }
}
