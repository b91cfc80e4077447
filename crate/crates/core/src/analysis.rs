//! One-call analysis of a table: fits, statistics, null weights, critical
//! values and decisions over a grid of `alpha12` values.

use serde::{Deserialize, Serialize};

use crate::chibar::{self, ChiBarWeights, WeightMethod, DEFAULT_ORTHANT_ACCURACY};
use crate::error::{Error, Result};
use crate::fit::{self, LrStatistics};
use crate::linalg::Matrix;
use crate::params::{self, ConeSpec, MarginalParamSpec};
use crate::procedures::{
    self, AlphaConfig, McSolver, McStatistics, Procedure, TestDecision, TestStatistics,
    DEFAULT_SEED,
};
use crate::table::ContingencyTable;

pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightOptions {
    pub method: WeightMethod,
    pub mc_samples: usize,
    pub seed: u64,
    /// Absolute accuracy of each orthant probability (exact method).
    pub accuracy: f64,
}

impl Default for WeightOptions {
    fn default() -> Self {
        Self {
            method: WeightMethod::Exact,
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: DEFAULT_SEED,
            accuracy: DEFAULT_ORTHANT_ACCURACY,
        }
    }
}

/// Weights of the null distribution for covariance `v0` of `eta_hat`.
pub fn null_weights(v0: &Matrix, cone: &ConeSpec, opts: &WeightOptions) -> Result<ChiBarWeights> {
    match opts.method {
        WeightMethod::Exact => chibar::exact_weights(v0, cone, opts.accuracy),
        WeightMethod::MonteCarlo => chibar::mc_weights(v0, cone, opts.mc_samples, opts.seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha12: Vec<f64>,
    /// `None` selects every procedure the cone supports.
    pub procedures: Option<Vec<Procedure>>,
    pub weights: WeightOptions,
    pub mc_solver: McSolver,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            alpha1: 0.02,
            alpha2: 0.03,
            alpha12: vec![0.0],
            procedures: None,
            weights: WeightOptions::default(),
            mc_solver: McSolver::default(),
        }
    }
}

impl AnalysisOptions {
    pub fn configs(&self) -> Result<Vec<AlphaConfig>> {
        if self.alpha12.is_empty() {
            return Err(Error::InvalidInput(
                "at least one alpha12 value is required".into(),
            ));
        }
        self.alpha12
            .iter()
            .map(|&a| AlphaConfig::new(self.alpha1, self.alpha2, a))
            .collect()
    }

    pub fn procedures_for(&self, cone: &ConeSpec) -> Vec<Procedure> {
        match &self.procedures {
            Some(p) => p.clone(),
            None if cone.n_eq() > 0 => Procedure::ALL.into_iter().filter(|p| p.is_lr()).collect(),
            None => Procedure::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Analysis {
    pub dims: Vec<usize>,
    pub n: u64,
    pub labels: Vec<String>,
    pub eta_hat: Vec<f64>,
    pub statistics: LrStatistics,
    pub h0_converged: bool,
    pub h1_converged: bool,
    pub active: Vec<usize>,
    pub weights: Option<ChiBarWeights>,
    pub mc_statistics: Option<McStatistics>,
    pub decisions: Vec<TestDecision>,
}

/// Effective `alpha12` of procedures that do not take it as a parameter.
fn effective_config(p: Procedure, cfg: &AlphaConfig) -> AlphaConfig {
    let alpha12 = match p {
        Procedure::LrNaive => cfg.alpha2,
        Procedure::LrTunable | Procedure::McTunable => cfg.alpha12,
        _ => 0.0,
    };
    AlphaConfig { alpha12, ..*cfg }
}

pub fn analyze(
    table: &ContingencyTable,
    spec: &MarginalParamSpec,
    cone: &ConeSpec,
    opts: &AnalysisOptions,
) -> Result<Analysis> {
    let configs = opts.configs()?;
    let procs = opts.procedures_for(cone);
    let lr = fit::lr_analysis(table, spec, cone)?;
    let n = table.n() as f64;
    let v0 = params::eta_covariance(lr.h0.p_hat.as_slice(), spec, n)?;

    let weights = if procs.iter().any(|p| p.is_lr()) {
        Some(null_weights(&v0, cone, &opts.weights)?)
    } else {
        None
    };
    let mc = if procs.iter().any(|p| !p.is_lr()) {
        let eta_hat = params::eta(table.proportions(fit::P_FLOOR)?.as_slice(), spec)?;
        Some(procedures::mc_statistics_at(&eta_hat, &v0, cone)?)
    } else {
        None
    };
    let corr = mc.as_ref().map(McStatistics::corr_matrix);

    let mut decisions = Vec::new();
    for &p in &procs {
        let grid: &[AlphaConfig] = if p.uses_alpha12() {
            &configs
        } else {
            &configs[..1]
        };
        for cfg in grid {
            let alphas = effective_config(p, cfg);
            let d = if let Some(v) = p.lr_variant() {
                let w = weights
                    .as_ref()
                    .expect("weights computed for LR procedures");
                let cv = procedures::lr_critical_values_for(w, &alphas, v)?;
                TestDecision {
                    procedure: p,
                    alphas,
                    statistics: TestStatistics::Lr(lr.stats),
                    critical_values: cv,
                    decision: procedures::lr_decide(&lr.stats, &cv, v),
                    weights_method: Some(w.method),
                }
            } else {
                let v = p.mc_variant().expect("MC procedure");
                let s = mc.as_ref().expect("statistics computed for MC procedures");
                let corr = corr
                    .as_ref()
                    .expect("correlation computed for MC procedures");
                let cv = procedures::mc_critical_values_with(corr, &alphas, v, opts.mc_solver)?;
                TestDecision {
                    procedure: p,
                    alphas,
                    statistics: s.as_test_statistics(),
                    critical_values: cv,
                    decision: procedures::mc_decide(s.min_z, s.max_z, &cv, v),
                    weights_method: None,
                }
            };
            decisions.push(d);
        }
    }

    let eta_hat = lr.saturated.eta_hat.clone();
    Ok(Analysis {
        dims: table.dims().to_vec(),
        n: table.n(),
        labels: spec.labels.clone(),
        eta_hat,
        statistics: lr.stats,
        h0_converged: lr.h0.converged,
        h1_converged: lr.h1.converged,
        active: lr.h1.active.clone(),
        weights,
        mc_statistics: mc,
        decisions,
    })
}
