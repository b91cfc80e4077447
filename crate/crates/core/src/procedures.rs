//! Three-decision testing procedures: accept `H0`, reject towards `H1`, or
//! reject towards `H2`, based either on the two likelihood-ratio statistics
//! or on the extremes of the studentized constraint estimates.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::chibar::{ChiBarWeights, WeightMethod};
use crate::error::{Error, Result};
use crate::fit::{self, FitMode, LrStatistics};
use crate::linalg::{self, Matrix, Vector};
use crate::mvn::{rect_prob, MvnRect};
use crate::params::{self, ConeSpec, MarginalParamSpec};
use crate::roots::{solve_nondecreasing, RootOptions};
use crate::table::ContingencyTable;

/// Default accuracy of rectangle probabilities in MC critical values.
pub const MC_RECT_ACCURACY: f64 = 1e-4;
pub const DEFAULT_SEED: u64 = 20_240_601;
/// Draws used when MC critical values are read off a simulated sample.
pub const DEFAULT_MINMAX_DRAWS: usize = 100_000;

/// Error budgets: `alpha1` towards `H1`, `alpha2` towards `H2`, and the
/// tuning probability `alpha12` in `[0, alpha2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    #[serde(default)]
    pub alpha12: f64,
}

impl AlphaConfig {
    pub fn new(alpha1: f64, alpha2: f64, alpha12: f64) -> Result<Self> {
        let cfg = Self {
            alpha1,
            alpha2,
            alpha12,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `alpha1 = alpha * beta`, `alpha2 = alpha * (1 - beta)`.
    pub fn bennet(alpha: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidInput(format!(
                "beta = {beta} must lie in (0, 1)"
            )));
        }
        Self::new(alpha * beta, alpha * (1.0 - beta), 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.alpha1) || !unit(self.alpha2) {
            return Err(Error::InvalidInput(
                "alpha1 and alpha2 must lie in (0, 1)".into(),
            ));
        }
        if self.alpha1 + self.alpha2 >= 1.0 {
            return Err(Error::InvalidInput(
                "alpha1 + alpha2 must be below 1".into(),
            ));
        }
        if !(self.alpha12 >= 0.0 && self.alpha12 <= self.alpha2) {
            return Err(Error::InvalidInput(format!(
                "alpha12 = {} must lie in [0, alpha2 = {}]",
                self.alpha12, self.alpha2
            )));
        }
        Ok(())
    }

    pub fn with_alpha12(&self, alpha12: f64) -> Result<Self> {
        Self::new(self.alpha1, self.alpha2, alpha12)
    }
}

/// `c1`, `c2`, `c12`; `c2` and `c12` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalValues {
    pub c1: f64,
    #[serde(serialize_with = "ser_inf", deserialize_with = "de_inf")]
    pub c2: f64,
    #[serde(serialize_with = "ser_inf", deserialize_with = "de_inf")]
    pub c12: f64,
}

fn ser_inf<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_infinite() && *x > 0.0 {
        s.serialize_str("Inf")
    } else {
        s.serialize_f64(*x)
    }
}

fn de_inf<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum NumOrStr {
        Num(f64),
        Str(String),
    }
    match NumOrStr::deserialize(d)? {
        NumOrStr::Num(x) => Ok(x),
        NumOrStr::Str(s) if s.eq_ignore_ascii_case("inf") => Ok(f64::INFINITY),
        NumOrStr::Str(s) => Err(serde::de::Error::custom(format!(
            "expected a number or \"Inf\", got {s:?}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    AcceptH0,
    RejectToH1,
    RejectToH2,
}

impl Decision {
    pub fn index(self) -> usize {
        match self {
            Decision::AcceptH0 => 0,
            Decision::RejectToH1 => 1,
            Decision::RejectToH2 => 2,
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::AcceptH0 => "AcceptH0",
            Decision::RejectToH1 => "RejectToH1",
            Decision::RejectToH2 => "RejectToH2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrVariant {
    Naive,
    Basic,
    Tunable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McVariant {
    Naive,
    Bennet,
    Tunable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Procedure {
    LrNaive,
    LrBasic,
    LrTunable,
    McNaive,
    McBennet,
    McTunable,
}

impl Procedure {
    pub const ALL: [Procedure; 6] = [
        Procedure::LrNaive,
        Procedure::LrBasic,
        Procedure::LrTunable,
        Procedure::McNaive,
        Procedure::McBennet,
        Procedure::McTunable,
    ];

    pub fn is_lr(self) -> bool {
        matches!(
            self,
            Procedure::LrNaive | Procedure::LrBasic | Procedure::LrTunable
        )
    }

    pub fn lr_variant(self) -> Option<LrVariant> {
        match self {
            Procedure::LrNaive => Some(LrVariant::Naive),
            Procedure::LrBasic => Some(LrVariant::Basic),
            Procedure::LrTunable => Some(LrVariant::Tunable),
            _ => None,
        }
    }

    pub fn mc_variant(self) -> Option<McVariant> {
        match self {
            Procedure::McNaive => Some(McVariant::Naive),
            Procedure::McBennet => Some(McVariant::Bennet),
            Procedure::McTunable => Some(McVariant::Tunable),
            _ => None,
        }
    }

    /// Whether the procedure's critical values depend on `alpha12`.
    pub fn uses_alpha12(self) -> bool {
        matches!(self, Procedure::LrTunable | Procedure::McTunable)
    }

    pub fn name(self) -> &'static str {
        match self {
            Procedure::LrNaive => "lr-naive",
            Procedure::LrBasic => "lr-basic",
            Procedure::LrTunable => "lr-tunable",
            Procedure::McNaive => "mc-naive",
            Procedure::McBennet => "mc-bennet",
            Procedure::McTunable => "mc-tunable",
        }
    }
}

impl std::str::FromStr for Procedure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Procedure::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown procedure {s:?}")))
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Statistics a decision was based on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TestStatistics {
    Lr(LrStatistics),
    Mc { min_z: f64, max_z: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDecision {
    pub procedure: Procedure,
    pub alphas: AlphaConfig,
    pub statistics: TestStatistics,
    pub critical_values: CriticalValues,
    pub decision: Decision,
    pub weights_method: Option<WeightMethod>,
}

// ---------------------------------------------------------------------------
// Likelihood-ratio procedures

fn lr_tunable(w: &ChiBarWeights, a1: f64, a2: f64, a12: f64) -> Result<CriticalValues> {
    let opts = RootOptions::precise();
    let c2 = if a2 - a12 <= 0.0 {
        f64::INFINITY
    } else {
        solve_nondecreasing(
            |c| Ok(w.joint_cdf(f64::INFINITY, c)),
            1.0 - (a2 - a12),
            opts,
        )?
    };
    let c1 = solve_nondecreasing(|c| Ok(w.joint_cdf(c, c2)), 1.0 - a1 - a2, opts)?;
    let c12 = if a12 == 0.0 {
        c2
    } else {
        solve_nondecreasing(
            |c| Ok(w.joint_cdf(f64::INFINITY, c) - w.joint_cdf(c1, c)),
            a1,
            opts,
        )?
    };
    Ok(CriticalValues { c1, c2, c12 })
}

/// Tunable likelihood-ratio critical values.
pub fn lr_critical_values(w: &ChiBarWeights, cfg: &AlphaConfig) -> Result<CriticalValues> {
    lr_critical_values_for(w, cfg, LrVariant::Tunable)
}

/// The naive variant is the tunable one at `alpha12 = alpha2`, the basic
/// variant the tunable one at `alpha12 = 0`.
pub fn lr_critical_values_for(
    w: &ChiBarWeights,
    cfg: &AlphaConfig,
    variant: LrVariant,
) -> Result<CriticalValues> {
    cfg.validate()?;
    let a12 = match variant {
        LrVariant::Naive => cfg.alpha2,
        LrVariant::Basic => 0.0,
        LrVariant::Tunable => cfg.alpha12,
    };
    lr_tunable(w, cfg.alpha1, cfg.alpha2, a12)
}

pub fn lr_decide(stats: &LrStatistics, crit: &CriticalValues, variant: LrVariant) -> Decision {
    let (l01, l12) = (stats.l01, stats.l12);
    let CriticalValues { c1, c2, c12 } = *crit;
    match variant {
        LrVariant::Naive => {
            if l01 <= c1 {
                Decision::AcceptH0
            } else if l12 <= c12 {
                Decision::RejectToH1
            } else {
                Decision::RejectToH2
            }
        }
        LrVariant::Basic => {
            if l12 > c2 {
                Decision::RejectToH2
            } else if l01 <= c1 {
                Decision::AcceptH0
            } else {
                Decision::RejectToH1
            }
        }
        LrVariant::Tunable => {
            if l12 <= c2 && l01 <= c1 {
                Decision::AcceptH0
            } else if l01 > c1 && l12 <= c12 {
                Decision::RejectToH1
            } else {
                Decision::RejectToH2
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Multiple-comparison procedures

/// Studentized constraint estimates under the null fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McStatistics {
    pub z: Vec<f64>,
    pub min_z: f64,
    pub max_z: f64,
    /// Correlation matrix of `z` under `H0`, row-major.
    pub corr: Vec<Vec<f64>>,
}

impl McStatistics {
    pub fn corr_matrix(&self) -> Matrix {
        let k = self.z.len();
        Matrix::from_fn(k, k, |i, j| self.corr[i][j])
    }

    pub fn as_test_statistics(&self) -> TestStatistics {
        TestStatistics::Mc {
            min_z: self.min_z,
            max_z: self.max_z,
        }
    }
}

/// `z_i = (D eta_hat)_i / sd_i` with `sd` from `D V0 D'`.
pub fn mc_statistics_at(eta_hat: &Vector, v0: &Matrix, cone: &ConeSpec) -> Result<McStatistics> {
    if cone.n_eq() > 0 {
        return Err(Error::InvalidInput(
            "multiple-comparison procedures need a cone without equality rows".into(),
        ));
    }
    if cone.k() == 0 {
        return Err(Error::InvalidInput("cone has no inequality rows".into()));
    }
    let sigma = &cone.d * v0 * cone.d.transpose();
    let (corr, sd) = linalg::correlation(&sigma)?;
    let tau = &cone.d * eta_hat;
    let z: Vec<f64> = tau.iter().zip(&sd).map(|(t, s)| t / s).collect();
    let min_z = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_z = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(McStatistics {
        z,
        min_z,
        max_z,
        corr: linalg::to_rows(&corr),
    })
}

pub fn mc_statistics(
    table: &ContingencyTable,
    spec: &MarginalParamSpec,
    cone: &ConeSpec,
) -> Result<McStatistics> {
    let h0 = fit::fit(table, spec, cone, FitMode::Equality)?;
    let v0 = params::eta_covariance(h0.p_hat.as_slice(), spec, table.n() as f64)?;
    let sat = table.proportions(fit::P_FLOOR)?;
    let eta_hat = params::eta(sat.as_slice(), spec)?;
    mc_statistics_at(&eta_hat, &v0, cone)
}

/// Sampled `(-min z, max z)` pairs for `z ~ N(0, corr)`.
pub struct MinMaxSample {
    neg_min: Vec<f64>,
    max: Vec<f64>,
    neg_min_sorted: Vec<f64>,
}

impl MinMaxSample {
    pub fn draw(corr: &Matrix, draws: usize, seed: u64) -> Result<Self> {
        if draws < 1000 {
            return Err(Error::InvalidInput(
                "at least 1000 draws are required".into(),
            ));
        }
        let k = corr.nrows();
        let l = linalg::cholesky_lower(corr, "correlation matrix")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = vec![0.0; k];
        let mut neg_min = Vec::with_capacity(draws);
        let mut max = Vec::with_capacity(draws);
        for _ in 0..draws {
            g.iter_mut()
                .for_each(|x| *x = StandardNormal.sample(&mut rng));
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..k {
                let zi: f64 = (0..=i).map(|j| l[(i, j)] * g[j]).sum();
                lo = lo.min(zi);
                hi = hi.max(zi);
            }
            neg_min.push(-lo);
            max.push(hi);
        }
        let mut neg_min_sorted = neg_min.clone();
        neg_min_sorted.sort_by(f64::total_cmp);
        Ok(Self {
            neg_min,
            max,
            neg_min_sorted,
        })
    }

    fn len(&self) -> usize {
        self.max.len()
    }

    /// Smallest value `v` among `values` such that at least `prob * total`
    /// of the sample is counted at or below it; clamped at zero.
    fn order_stat(mut values: Vec<f64>, prob: f64, total: usize) -> Result<f64> {
        let need = ((prob * total as f64) - 1e-9).ceil().max(1.0) as usize;
        if need > values.len() {
            return Err(Error::UnreachableTarget {
                target: prob,
                lo: 0.0,
                hi: values.len() as f64 / total as f64,
            });
        }
        let (_, v, _) = values.select_nth_unstable_by(need - 1, f64::total_cmp);
        Ok(v.max(0.0))
    }

    /// `P(min z >= -c) = prob`.
    fn lower(&self, prob: f64) -> Result<f64> {
        let need = ((prob * self.len() as f64) - 1e-9).ceil().max(1.0) as usize;
        if need > self.len() {
            return Err(Error::UnreachableTarget {
                target: prob,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(self.neg_min_sorted[need - 1].max(0.0))
    }

    /// `P(max z <= c, min z >= -c2) = prob`.
    fn upper_given_lower(&self, c2: f64, prob: f64) -> Result<f64> {
        let vals = (0..self.len())
            .filter(|&i| self.neg_min[i] <= c2)
            .map(|i| self.max[i])
            .collect();
        Self::order_stat(vals, prob, self.len())
    }

    /// `P(max z > c1, min z >= -c) = prob`.
    fn lower_given_exceed(&self, c1: f64, prob: f64) -> Result<f64> {
        let vals = (0..self.len())
            .filter(|&i| self.max[i] > c1)
            .map(|i| self.neg_min[i])
            .collect();
        Self::order_stat(vals, prob, self.len())
    }

    /// `P(-c <= z <= c) = prob`.
    fn symmetric(&self, prob: f64) -> Result<f64> {
        let vals = (0..self.len())
            .map(|i| self.neg_min[i].max(self.max[i]))
            .collect();
        Self::order_stat(vals, prob, self.len())
    }

    /// Critical values read off the sample.
    pub fn critical_values(&self, cfg: &AlphaConfig, variant: McVariant) -> Result<CriticalValues> {
        cfg.validate()?;
        let (a1, a2, a12) = (cfg.alpha1, cfg.alpha2, cfg.alpha12);
        match variant {
            McVariant::Naive => {
                let c = self.symmetric(1.0 - a1 - a2)?;
                Ok(CriticalValues {
                    c1: c,
                    c2: c,
                    c12: c,
                })
            }
            McVariant::Bennet => {
                let c1 = self.symmetric(1.0 - a1 - a2)?;
                let c12 = self.lower_given_exceed(c1, a1)?;
                Ok(CriticalValues { c1, c2: c1, c12 })
            }
            McVariant::Tunable => {
                let c2 = if a2 - a12 <= 0.0 {
                    f64::INFINITY
                } else {
                    self.lower(1.0 - (a2 - a12))?
                };
                let c1 = self.upper_given_lower(c2, 1.0 - a1 - a2)?;
                let c12 = if a12 == 0.0 {
                    c2
                } else {
                    self.lower_given_exceed(c1, a1)?
                };
                Ok(CriticalValues { c1, c2, c12 })
            }
        }
    }
}

/// How MC critical values are computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum McSolver {
    /// Root-finding on rectangle probabilities.
    Rect { accuracy: f64, seed: u64 },
    /// Order statistics of sampled `(min z, max z)` pairs.
    Sampled { draws: usize, seed: u64 },
}

impl Default for McSolver {
    fn default() -> Self {
        McSolver::Rect {
            accuracy: MC_RECT_ACCURACY,
            seed: DEFAULT_SEED,
        }
    }
}

struct RectEval<'a> {
    corr: &'a Matrix,
    accuracy: f64,
    seed: u64,
}

impl RectEval<'_> {
    /// `P(-a <= z_i <= b for all i)`.
    fn boxed(&self, a: f64, b: f64) -> Result<f64> {
        let k = self.corr.nrows();
        let rect = MvnRect::new(vec![-a; k], vec![b; k], self.corr.clone())?;
        rect_prob(&rect, self.accuracy, self.seed).map(|(p, _)| p)
    }

    fn solve<F: FnMut(f64) -> Result<f64>>(&self, f: F, target: f64, guess: f64) -> Result<f64> {
        let opts = RootOptions {
            ftol: self.accuracy * 0.2,
            xtol: 1e-4,
            hint: Some(((guess - 0.05).max(0.0), guess + 0.05)),
            max_evals: 60,
        };
        solve_nondecreasing(f, target, opts)
    }
}

pub fn mc_critical_values(
    corr0: &Matrix,
    cfg: &AlphaConfig,
    variant: McVariant,
) -> Result<CriticalValues> {
    mc_critical_values_with(corr0, cfg, variant, McSolver::default())
}

pub fn mc_critical_values_with(
    corr0: &Matrix,
    cfg: &AlphaConfig,
    variant: McVariant,
    solver: McSolver,
) -> Result<CriticalValues> {
    cfg.validate()?;
    crate::mvn::check_correlation(corr0)?;
    match solver {
        McSolver::Sampled { draws, seed } => {
            MinMaxSample::draw(corr0, draws, seed)?.critical_values(cfg, variant)
        }
        McSolver::Rect { accuracy, seed } => {
            // A cheap sampled solution seeds each bracket.
            let guess = MinMaxSample::draw(corr0, 20_000, seed)?.critical_values(cfg, variant)?;
            let ev = RectEval {
                corr: corr0,
                accuracy,
                seed,
            };
            let inf = f64::INFINITY;
            let (a1, a2, a12) = (cfg.alpha1, cfg.alpha2, cfg.alpha12);
            let exceed = |c1: f64| {
                let ev = &ev;
                move |c: f64| Ok(ev.boxed(c, inf)? - ev.boxed(c, c1)?)
            };
            match variant {
                McVariant::Naive => {
                    let c = ev.solve(|c| ev.boxed(c, c), 1.0 - a1 - a2, guess.c1)?;
                    Ok(CriticalValues {
                        c1: c,
                        c2: c,
                        c12: c,
                    })
                }
                McVariant::Bennet => {
                    let c1 = ev.solve(|c| ev.boxed(c, c), 1.0 - a1 - a2, guess.c1)?;
                    let c12 = ev.solve(exceed(c1), a1, guess.c12)?;
                    Ok(CriticalValues { c1, c2: c1, c12 })
                }
                McVariant::Tunable => {
                    let c2 = if a2 - a12 <= 0.0 {
                        inf
                    } else {
                        ev.solve(|c| ev.boxed(c, inf), 1.0 - (a2 - a12), guess.c2)?
                    };
                    let c1 = ev.solve(|c| ev.boxed(c2, c), 1.0 - a1 - a2, guess.c1)?;
                    let c12 = if a12 == 0.0 {
                        c2
                    } else {
                        ev.solve(exceed(c1), a1, guess.c12)?
                    };
                    Ok(CriticalValues { c1, c2, c12 })
                }
            }
        }
    }
}

pub fn mc_decide(min_z: f64, max_z: f64, crit: &CriticalValues, variant: McVariant) -> Decision {
    let CriticalValues { c1, c2, c12 } = *crit;
    match variant {
        McVariant::Naive => {
            if max_z <= c1 && min_z >= -c1 {
                Decision::AcceptH0
            } else if max_z > c1 && min_z >= -c1 {
                Decision::RejectToH1
            } else {
                Decision::RejectToH2
            }
        }
        McVariant::Bennet => {
            if max_z <= c1 && min_z >= -c1 {
                Decision::AcceptH0
            } else if max_z > c1 && min_z > -c12 {
                Decision::RejectToH1
            } else {
                Decision::RejectToH2
            }
        }
        McVariant::Tunable => {
            if min_z >= -c2 && max_z <= c1 {
                Decision::AcceptH0
            } else if max_z > c1 && min_z >= -c12 {
                Decision::RejectToH1
            } else {
                Decision::RejectToH2
            }
        }
    }
}
