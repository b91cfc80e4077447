//! Maximum likelihood under `E eta = 0` together with `D eta = 0`
//! (equality), `D eta >= 0` (inequality), or no restriction (saturated).
//!
//! The constrained fits run a sequential quadratic method in the baseline
//! logit coordinates `theta_i = log(p_i / p_0)`, with Fisher information as
//! curvature and an exact active-set solve of each quadratic subproblem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::mvn::solve_tau;
use crate::params::{self, ConeSpec, MarginalParamSpec};
use crate::table::{ContingencyTable, ProbabilityVector};

pub const MAX_ITER: usize = 500;
/// Probabilities are floored here while iterating and for the saturated
/// parameter estimate of tables with empty cells.
pub const P_FLOOR: f64 = 1e-12;
const STEP_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-9;
const ACTIVE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    Equality,
    Inequality,
    Saturated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub mode: FitMode,
    pub p_hat: ProbabilityVector,
    pub eta_hat: Vec<f64>,
    pub loglik: f64,
    /// Inequality rows holding with equality at the solution.
    pub active: Vec<usize>,
    /// Multipliers of the `D` rows, with `grad(-loglik) = S' lambda` in eta
    /// coordinates; non-negative in inequality mode.
    pub multipliers: Vec<f64>,
    /// Multipliers of the `E` rows.
    pub eq_multipliers: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the stationarity residual in eta coordinates.
    pub kkt_residual: f64,
}

/// `L01`, `L12` and `L02`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrStatistics {
    #[serde(rename = "L01")]
    pub l01: f64,
    #[serde(rename = "L12")]
    pub l12: f64,
    #[serde(rename = "L02")]
    pub l02: f64,
}

/// Multinomial log-likelihood with `0 log 0 = 0`.
pub fn loglik(counts: &[f64], p: &[f64]) -> f64 {
    counts
        .iter()
        .zip(p)
        .filter(|(&c, _)| c > 0.0)
        .map(|(&c, &pi)| c * pi.max(P_FLOOR).ln())
        .sum()
}

fn check_inputs(table: &ContingencyTable, spec: &MarginalParamSpec, cone: &ConeSpec) -> Result<()> {
    if table.n() == 0 {
        return Err(Error::InvalidInput("table has zero total count".into()));
    }
    if spec.cells() != table.cells() {
        return Err(Error::Dimension(format!(
            "spec covers {} cells, table has {}",
            spec.cells(),
            table.cells()
        )));
    }
    if cone.d.ncols() != spec.dim() {
        return Err(Error::Dimension("cone and spec dimensions differ".into()));
    }
    if spec.dim() + 1 > table.cells() {
        return Err(Error::Dimension(
            "spec has more parameters than free cell probabilities".into(),
        ));
    }
    Ok(())
}

pub fn fit(
    table: &ContingencyTable,
    spec: &MarginalParamSpec,
    cone: &ConeSpec,
    mode: FitMode,
) -> Result<FitResult> {
    check_inputs(table, spec, cone)?;
    match mode {
        FitMode::Saturated => saturated(table, spec, cone),
        FitMode::Equality => {
            let t = table.cells();
            let sqp = Sqp::new(table, spec, cone, mode);
            sqp.run(Vector::zeros(t - 1))
        }
        FitMode::Inequality => {
            let h0 = fit(table, spec, cone, FitMode::Equality)?;
            fit_inequality_from(table, spec, cone, &h0)
        }
    }
}

/// Inequality fit started at a previously computed equality fit.
pub fn fit_inequality_from(
    table: &ContingencyTable,
    spec: &MarginalParamSpec,
    cone: &ConeSpec,
    h0: &FitResult,
) -> Result<FitResult> {
    check_inputs(table, spec, cone)?;
    // An interior saturated estimate is its own inequality fit.
    if cone.n_eq() == 0 && table.counts().iter().all(|&c| c > 0) {
        let sat = saturated(table, spec, cone)?;
        let d_eta = &cone.d * Vector::from_column_slice(&sat.eta_hat);
        if d_eta.iter().all(|&v| v >= 0.0) {
            return Ok(FitResult {
                mode: FitMode::Inequality,
                ..sat
            });
        }
    }
    let p = h0.p_hat.as_slice();
    let theta = Vector::from_iterator(p.len() - 1, p[1..].iter().map(|pi| (pi / p[0]).ln()));
    Sqp::new(table, spec, cone, FitMode::Inequality).run(theta)
}

fn saturated(
    table: &ContingencyTable,
    spec: &MarginalParamSpec,
    cone: &ConeSpec,
) -> Result<FitResult> {
    let p_hat = table.proportions(P_FLOOR)?;
    let eta_hat = params::eta(p_hat.as_slice(), spec)?;
    let n = table.n() as f64;
    let ll = table
        .counts()
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64 * (c as f64 / n).ln())
        .sum();
    Ok(FitResult {
        mode: FitMode::Saturated,
        p_hat,
        eta_hat: eta_hat.iter().copied().collect(),
        loglik: ll,
        active: Vec::new(),
        multipliers: vec![0.0; cone.k()],
        eq_multipliers: vec![0.0; cone.n_eq()],
        converged: true,
        iterations: 0,
        kkt_residual: 0.0,
    })
}

fn softmax_floored(theta: &Vector) -> Vec<f64> {
    let m = theta.iter().cloned().fold(0.0f64, f64::max);
    let mut p: Vec<f64> = std::iter::once(-m)
        .chain(theta.iter().map(|t| t - m))
        .map(f64::exp)
        .collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v = (*v / s).max(P_FLOOR));
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

struct Sqp<'a> {
    counts: Vec<f64>,
    n: f64,
    spec: &'a MarginalParamSpec,
    cone: &'a ConeSpec,
    s: Matrix,
    /// Rows of `s` held at zero in the subproblem.
    n_fixed: usize,
    mode: FitMode,
}

/// Quantities at one iterate.
struct Local {
    p: Vec<f64>,
    eta: Vector,
    ll: f64,
    g: Vector,
    viol: f64,
}

struct Step {
    delta: Vector,
    lambda: Vector,
    score: Vector,
    /// `theta`-space stationarity residual `s + A' lambda`.
    kkt: Vector,
    jtheta: Matrix,
    fisher_norm: f64,
}

impl<'a> Sqp<'a> {
    fn new(
        table: &ContingencyTable,
        spec: &'a MarginalParamSpec,
        cone: &'a ConeSpec,
        mode: FitMode,
    ) -> Self {
        let s = cone.stacked();
        let n_fixed = if mode == FitMode::Equality {
            s.nrows()
        } else {
            cone.n_eq()
        };
        Self {
            counts: table.counts_f64(),
            n: table.n() as f64,
            spec,
            cone,
            s,
            n_fixed,
            mode,
        }
    }

    fn violation(&self, g: &Vector) -> f64 {
        g.iter()
            .enumerate()
            .map(|(i, &v)| {
                if i < self.n_fixed {
                    v.abs()
                } else {
                    (-v).max(0.0)
                }
            })
            .sum()
    }

    fn local(&self, theta: &Vector) -> Result<Local> {
        let p = softmax_floored(theta);
        let eta = params::eta(&p, self.spec)?;
        let g = &self.s * &eta;
        let viol = self.violation(&g);
        let ll = loglik(&self.counts, &p);
        Ok(Local {
            p,
            eta,
            ll,
            g,
            viol,
        })
    }

    fn step(&self, at: &Local) -> Result<Step> {
        let t = at.p.len();
        let p = &at.p;
        // Columns 1.. of diag(p) - p p'.
        let dp = Matrix::from_fn(t, t - 1, |i, j| {
            let jj = j + 1;
            if i == jj {
                p[i] - p[i] * p[jj]
            } else {
                -p[i] * p[jj]
            }
        });
        let jp = params::jacobian(p, self.spec)?;
        let jtheta = &jp * &dp;
        let fisher = Matrix::from_fn(t - 1, t - 1, |i, j| self.n * dp[(i + 1, j)]);
        let chol = fisher
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("Fisher information"))?;
        let score = Vector::from_fn(t - 1, |i, _| self.counts[i + 1] - self.n * p[i + 1]);
        let y = chol.solve(&score);

        let m = self.s.nrows();
        let (delta, lambda) = if m == 0 {
            (y, Vector::zeros(0))
        } else {
            let a_mat = &self.s * &jtheta;
            let finv_at = chol.solve(&a_mat.transpose());
            let mut omega = &a_mat * &finv_at;
            linalg::symmetrize(&mut omega);
            let q = linalg::spd_inverse(&omega, "constraint Jacobian is rank deficient")?;
            let a = &a_mat * &y + &at.g;
            let sol = solve_tau(&a, &q, self.n_fixed)?;
            (&y + &finv_at * &sol.lambda, sol.lambda)
        };
        let kkt = if m == 0 {
            score.clone()
        } else {
            &score + (&self.s * &jtheta).transpose() * &lambda
        };
        let fisher_norm = delta.dot(&(&fisher * &delta));
        Ok(Step {
            delta,
            lambda,
            score,
            kkt,
            jtheta,
            fisher_norm,
        })
    }

    fn run(&self, mut theta: Vector) -> Result<FitResult> {
        let mut mu = 1.0f64;
        let mut at = self.local(&theta)?;
        let mut converged = false;
        let mut iterations = 0;
        let mut step = self.step(&at)?;
        while iterations < MAX_ITER {
            if step.fisher_norm < STEP_TOL && at.viol < FEAS_TOL {
                converged = true;
                break;
            }
            iterations += 1;
            mu = mu.max(1.5 * step.lambda.amax() + 1e-3);
            let phi0 = at.ll - mu * at.viol;
            let slope = step.score.dot(&step.delta) - mu * at.viol;
            let mut alpha = 1.0;
            let mut next = None;
            while alpha > 1e-12 {
                let cand = &theta + &step.delta * alpha;
                if let Ok(loc) = self.local(&cand) {
                    if loc.ll - mu * loc.viol >= phi0 + 1e-4 * alpha * slope.max(0.0) {
                        next = Some((cand, loc));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((cand, loc)) = next else {
                // No progress possible along the step: accept if stationary.
                let tol = 1e-6 * (1.0 + at.ll.abs());
                converged = at.viol < FEAS_TOL && step.kkt.amax() < tol;
                break;
            };
            let gain = (loc.ll - mu * loc.viol) - phi0;
            theta = cand;
            at = loc;
            step = self.step(&at)?;
            if gain.abs() < 1e-10 * (1.0 + at.ll.abs())
                && at.viol < FEAS_TOL
                && step.kkt.amax() < 1e-6 * (1.0 + at.ll.abs())
            {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                what: "constrained fit",
                iterations,
            });
        }
        self.finish(at, step, iterations)
    }

    fn finish(&self, at: Local, step: Step, iterations: usize) -> Result<FitResult> {
        let ne = self.cone.n_eq();
        let k = self.cone.k();
        let lambda = step.lambda;
        let eq_multipliers = (0..ne).map(|i| lambda[i]).collect();
        let multipliers = (0..k).map(|i| lambda[ne + i]).collect();
        let active = (0..k).filter(|&i| at.g[ne + i] <= ACTIVE_TOL).collect();
        // Stationarity in eta coordinates when theta -> eta is a bijection.
        let kkt_residual = if step.jtheta.is_square() {
            step.jtheta
                .transpose()
                .lu()
                .solve(&step.kkt)
                .map_or(step.kkt.amax(), |r| r.amax())
        } else {
            step.kkt.amax()
        };
        Ok(FitResult {
            mode: self.mode,
            p_hat: ProbabilityVector::normalized(at.p)?,
            eta_hat: at.eta.iter().copied().collect(),
            loglik: at.ll,
            active,
            multipliers,
            eq_multipliers,
            converged: true,
            iterations,
            kkt_residual,
        })
    }
}

/// The three fits and the statistics built from them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrAnalysis {
    pub stats: LrStatistics,
    pub h0: FitResult,
    pub h1: FitResult,
    pub saturated: FitResult,
}

pub fn lr_analysis(
    table: &ContingencyTable,
    spec: &MarginalParamSpec,
    cone: &ConeSpec,
) -> Result<LrAnalysis> {
    let h0 = fit(table, spec, cone, FitMode::Equality)?;
    let h1 = fit_inequality_from(table, spec, cone, &h0)?;
    let saturated = fit(table, spec, cone, FitMode::Saturated)?;
    let l01 = (2.0 * (h1.loglik - h0.loglik)).max(0.0);
    let l12 = (2.0 * (saturated.loglik - h1.loglik)).max(0.0);
    let stats = LrStatistics {
        l01,
        l12,
        l02: l01 + l12,
    };
    Ok(LrAnalysis {
        stats,
        h0,
        h1,
        saturated,
    })
}

pub fn lr_statistics(
    table: &ContingencyTable,
    spec: &MarginalParamSpec,
    cone: &ConeSpec,
) -> Result<LrStatistics> {
    lr_analysis(table, spec, cone).map(|a| a.stats)
}

/// Quadratic approximations of the statistics: squared `F0`-distances of
/// `eta_hat` from `{S eta = 0}` and from the cone, with `V0 = F0^-1`.
pub fn gaussian_stats_from_eta(
    eta_hat: &Vector,
    v0: &Matrix,
    cone: &ConeSpec,
) -> Result<LrStatistics> {
    let s = cone.stacked();
    if s.nrows() == 0 {
        return Ok(LrStatistics {
            l01: 0.0,
            l12: 0.0,
            l02: 0.0,
        });
    }
    let mut omega = &s * v0 * s.transpose();
    linalg::symmetrize(&mut omega);
    let q = linalg::spd_inverse(&omega, "S V0 S'")?;
    let a = &s * eta_hat;
    let l02 = a.dot(&(&q * &a));
    let l12 = solve_tau(&a, &q, cone.n_eq())?.sqdist;
    Ok(LrStatistics {
        l01: (l02 - l12).max(0.0),
        l12,
        l02,
    })
}

/// [`gaussian_stats_from_eta`] at the observed table with `V0` taken at the
/// equality fit.
pub fn gaussian_approx_stats(
    table: &ContingencyTable,
    spec: &MarginalParamSpec,
    cone: &ConeSpec,
) -> Result<LrStatistics> {
    let h0 = fit(table, spec, cone, FitMode::Equality)?;
    let v0 = params::eta_covariance(h0.p_hat.as_slice(), spec, table.n() as f64)?;
    let sat = table.proportions(P_FLOOR)?;
    let eta_hat = params::eta(sat.as_slice(), spec)?;
    gaussian_stats_from_eta(&eta_hat, &v0, cone)
}
