//! Generalised inverses of monotone functions on `[0, inf)`.

use crate::error::{Error, Result};

const MAX_BRACKET: f64 = 1e4;

#[derive(Debug, Clone, Copy)]
pub(crate) struct RootOptions {
    /// Stop when `|f(x) - target|` drops below this.
    pub ftol: f64,
    /// Stop when the bracket is narrower than this.
    pub xtol: f64,
    /// Initial bracket guess; widened as needed.
    pub hint: Option<(f64, f64)>,
    pub max_evals: usize,
}

impl RootOptions {
    pub fn precise() -> Self {
        Self {
            ftol: 1e-12,
            xtol: 1e-10,
            hint: None,
            max_evals: 400,
        }
    }
}

/// Smallest `c >= 0` with `f(c) >= target` for nondecreasing `f`, found by
/// bracketing and Illinois-modified regula falsi.
pub(crate) fn solve_nondecreasing<F>(mut f: F, target: f64, opts: RootOptions) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut evals = 0usize;
    let mut eval = |x: f64, evals: &mut usize| -> Result<f64> {
        *evals += 1;
        Ok(f(x)? - target)
    };

    let (mut lo, mut hi) = opts.hint.unwrap_or((0.0, 1.0));
    lo = lo.max(0.0);
    let mut glo = eval(lo, &mut evals)?;
    if glo >= 0.0 {
        if lo == 0.0 {
            return Ok(0.0);
        }
        // Hint was too high; fall back to zero as the lower end.
        hi = lo;
        lo = 0.0;
        glo = eval(lo, &mut evals)?;
        if glo >= 0.0 {
            return Ok(0.0);
        }
    }
    let f0 = glo + target;
    let mut ghi = eval(hi, &mut evals)?;
    while ghi < 0.0 {
        lo = hi;
        glo = ghi;
        hi = if hi <= 0.0 { 1.0 } else { hi * 2.0 };
        if hi > MAX_BRACKET {
            return Err(Error::UnreachableTarget {
                target,
                lo: f0,
                hi: ghi + target,
            });
        }
        ghi = eval(hi, &mut evals)?;
    }

    // Illinois iteration keeping glo < 0 <= ghi.
    let mut side = 0i8;
    while hi - lo > opts.xtol && evals < opts.max_evals {
        let mut x = lo - glo * (hi - lo) / (ghi - glo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let gx = eval(x, &mut evals)?;
        if gx.abs() < opts.ftol {
            return Ok(x);
        }
        if gx < 0.0 {
            lo = x;
            glo = gx;
            if side == -1 {
                ghi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            ghi = gx;
            if side == 1 {
                glo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_roots_of_monotone_functions() {
        let x =
            solve_nondecreasing(|c| Ok(1.0 - (-c).exp()), 0.95, RootOptions::precise()).unwrap();
        assert!((x - 20f64.ln()).abs() < 1e-9);
        let x = solve_nondecreasing(|c| Ok(c * c), 1e6, RootOptions::precise()).unwrap();
        assert!((x - 1000.0).abs() < 1e-7);
    }

    #[test]
    fn clamps_at_zero_and_reports_unreachable_targets() {
        assert_eq!(
            solve_nondecreasing(|_| Ok(0.7), 0.5, RootOptions::precise()).unwrap(),
            0.0
        );
        assert!(matches!(
            solve_nondecreasing(|c| Ok(c / (1.0 + c)), 1.5, RootOptions::precise()),
            Err(Error::UnreachableTarget { .. })
        ));
    }

    #[test]
    fn hints_that_miss_still_work() {
        let opts = RootOptions {
            hint: Some((5.0, 6.0)),
            ..RootOptions::precise()
        };
        let x = solve_nondecreasing(Ok, 2.0, opts).unwrap();
        assert!((x - 2.0).abs() < 1e-9);
        let opts = RootOptions {
            hint: Some((0.1, 0.2)),
            ..RootOptions::precise()
        };
        let x = solve_nondecreasing(Ok, 2.0, opts).unwrap();
        assert!((x - 2.0).abs() < 1e-9);
    }
}
