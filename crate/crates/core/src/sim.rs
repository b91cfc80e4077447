//! Power and size simulations for two-way tables with uniform margins and
//! prescribed local log-odds ratios.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chibar::{self, DEFAULT_ORTHANT_ACCURACY};
use crate::error::{Error, Result};
use crate::fit::{self, FitMode};
use crate::params::{self, build_local_logodds, ConeSpec, MarginalParamSpec};
use crate::procedures::{
    self, AlphaConfig, Decision, MinMaxSample, Procedure, DEFAULT_MINMAX_DRAWS, DEFAULT_SEED,
};
use crate::table::{multinomial_counts, ContingencyTable, ProbabilityVector};

const IPF_TOL: f64 = 1e-12;
const IPF_MAX_SWEEPS: usize = 100_000;

/// Joint distribution of an `R x C` table with uniform margins and local
/// log-odds ratios `theta` (row-major over the `(R-1)(C-1)` adjacent
/// 2x2 subtables).
pub fn table_from_logodds(theta: &[f64], dims: &[usize]) -> Result<ProbabilityVector> {
    let (r, c) = match dims {
        [r, c] if *r >= 2 && *c >= 2 => (*r, *c),
        _ => {
            return Err(Error::InvalidInput(
                "dims must be two sizes of at least 2".into(),
            ))
        }
    };
    if theta.len() != (r - 1) * (c - 1) {
        return Err(Error::InvalidInput(format!(
            "{}x{} table needs {} log-odds ratios, got {}",
            r,
            c,
            (r - 1) * (c - 1),
            theta.len()
        )));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("log-odds ratios must be finite".into()));
    }
    // log K[i][j] = sum of theta[a][b] over a < i, b < j.
    let mut logk = vec![0.0; r * c];
    for i in 1..r {
        for j in 1..c {
            logk[i * c + j] =
                theta[(i - 1) * (c - 1) + (j - 1)] + logk[(i - 1) * c + j] + logk[i * c + j - 1]
                    - logk[(i - 1) * c + j - 1];
        }
    }
    let shift = logk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logk.iter().map(|l| (l - shift).exp()).collect();
    let (row_target, col_target) = (1.0 / r as f64, 1.0 / c as f64);
    for _ in 0..IPF_MAX_SWEEPS {
        for i in 0..r {
            let s: f64 = p[i * c..(i + 1) * c].iter().sum();
            p[i * c..(i + 1) * c]
                .iter_mut()
                .for_each(|x| *x *= row_target / s);
        }
        let mut err = 0.0f64;
        for j in 0..c {
            let s: f64 = (0..r).map(|i| p[i * c + j]).sum();
            (0..r).for_each(|i| p[i * c + j] *= col_target / s);
            err = err.max((s - col_target).abs());
        }
        if err < IPF_TOL {
            let row_err = (0..r)
                .map(|i| (p[i * c..(i + 1) * c].iter().sum::<f64>() - row_target).abs())
                .fold(0.0, f64::max);
            if row_err < IPF_TOL {
                return ProbabilityVector::normalized(p);
            }
        }
    }
    Err(Error::NonConvergence {
        what: "iterative proportional fitting",
        iterations: IPF_MAX_SWEEPS,
    })
}

/// Local log-odds ratios of a two-way joint distribution, row-major.
pub fn local_logodds(p: &[f64], dims: &[usize]) -> Vec<f64> {
    let (r, c) = (dims[0], dims[1]);
    let mut out = Vec::with_capacity((r - 1) * (c - 1));
    for i in 0..r - 1 {
        for j in 0..c - 1 {
            let v = p[i * c + j].ln() + p[(i + 1) * c + j + 1].ln()
                - p[i * c + j + 1].ln()
                - p[(i + 1) * c + j].ln();
            out.push(v);
        }
    }
    out
}

fn default_reps() -> usize {
    1000
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_procedures() -> Vec<Procedure> {
    Procedure::ALL.to_vec()
}

fn default_draws() -> usize {
    DEFAULT_MINMAX_DRAWS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub dims: Vec<usize>,
    pub theta: Vec<f64>,
    pub n: u64,
    #[serde(default = "default_reps", alias = "N")]
    pub reps: usize,
    pub configs: Vec<AlphaConfig>,
    #[serde(default = "default_procedures")]
    pub procedures: Vec<Procedure>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Draws used for the sampled MC critical values of each replication.
    #[serde(default = "default_draws")]
    pub mc_draws: usize,
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.reps == 0 {
            return Err(Error::InvalidInput("n and reps must be at least 1".into()));
        }
        if self.configs.is_empty() || self.procedures.is_empty() {
            return Err(Error::InvalidInput(
                "at least one config and one procedure are required".into(),
            ));
        }
        for cfg in &self.configs {
            cfg.validate()?;
        }
        if self.mc_draws < 1000 {
            return Err(Error::InvalidInput("mc_draws must be at least 1000".into()));
        }
        table_from_logodds(&self.theta, &self.dims).map(|_| ())
    }

    /// Report columns: tunable procedures once per config, the others once
    /// per distinct `(alpha1, alpha2)`.
    pub fn columns(&self) -> Vec<(Procedure, AlphaConfig)> {
        let mut cols: Vec<(Procedure, AlphaConfig)> = Vec::new();
        for &p in &self.procedures {
            for cfg in &self.configs {
                let alpha12 = match p {
                    Procedure::LrTunable | Procedure::McTunable => cfg.alpha12,
                    Procedure::LrNaive => cfg.alpha2,
                    _ => 0.0,
                };
                let col = (p, AlphaConfig { alpha12, ..*cfg });
                if !cols.contains(&col) {
                    cols.push(col);
                }
            }
        }
        cols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyColumn {
    pub procedure: Procedure,
    pub alphas: AlphaConfig,
    /// Counts of `H0`, `H1`, `H2` decisions.
    pub counts: [u64; 3],
    /// `counts` over successful replications.
    pub freq: [f64; 3],
}

impl FrequencyColumn {
    pub fn label(&self) -> String {
        format!(
            "{};{};{};{}",
            self.procedure, self.alphas.alpha1, self.alphas.alpha2, self.alphas.alpha12
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub name: Option<String>,
    pub dims: Vec<usize>,
    pub theta: Vec<f64>,
    pub n: u64,
    pub reps: usize,
    pub successful: usize,
    pub failures: usize,
    pub columns: Vec<FrequencyColumn>,
}

impl FrequencyReport {
    pub fn column(&self, p: Procedure, alpha12: f64) -> Option<&FrequencyColumn> {
        self.columns
            .iter()
            .find(|c| c.procedure == p && (c.alphas.alpha12 - alpha12).abs() < 1e-12)
    }
}

struct RepContext<'a> {
    p: &'a ProbabilityVector,
    spec: &'a MarginalParamSpec,
    cone: &'a ConeSpec,
    columns: &'a [(Procedure, AlphaConfig)],
    need_lr: bool,
    need_mc: bool,
    sc: &'a Scenario,
}

fn run_replication(ctx: &RepContext<'_>, rep: usize) -> Result<Vec<Decision>> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.sc.seed);
    rng.set_stream(rep as u64);
    let counts = multinomial_counts(ctx.p.as_slice(), ctx.sc.n, &mut rng);
    let mc_seed: u64 = rng.random();
    let table = ContingencyTable::new(ctx.sc.dims.clone(), counts)?;
    let n = table.n() as f64;

    let h0 = fit::fit(&table, ctx.spec, ctx.cone, FitMode::Equality)?;
    let v0 = params::eta_covariance(h0.p_hat.as_slice(), ctx.spec, n)?;

    let lr = if ctx.need_lr {
        let h1 = fit::fit_inequality_from(&table, ctx.spec, ctx.cone, &h0)?;
        let sat = fit::fit(&table, ctx.spec, ctx.cone, FitMode::Saturated)?;
        let l01 = (2.0 * (h1.loglik - h0.loglik)).max(0.0);
        let l12 = (2.0 * (sat.loglik - h1.loglik)).max(0.0);
        let w = chibar::exact_weights(&v0, ctx.cone, DEFAULT_ORTHANT_ACCURACY)?;
        Some((
            fit::LrStatistics {
                l01,
                l12,
                l02: l01 + l12,
            },
            w,
        ))
    } else {
        None
    };
    let mc = if ctx.need_mc {
        let eta_hat = params::eta(table.proportions(fit::P_FLOOR)?.as_slice(), ctx.spec)?;
        let s = procedures::mc_statistics_at(&eta_hat, &v0, ctx.cone)?;
        let sample = MinMaxSample::draw(&s.corr_matrix(), ctx.sc.mc_draws, mc_seed)?;
        Some((s, sample))
    } else {
        None
    };

    ctx.columns
        .iter()
        .map(|(p, cfg)| {
            if let Some(v) = p.lr_variant() {
                let (stats, w) = lr.as_ref().expect("LR quantities computed");
                let cv = procedures::lr_critical_values_for(w, cfg, v)?;
                Ok(procedures::lr_decide(stats, &cv, v))
            } else {
                let v = p.mc_variant().expect("MC procedure");
                let (s, sample) = mc.as_ref().expect("MC quantities computed");
                let cv = sample.critical_values(cfg, v)?;
                Ok(procedures::mc_decide(s.min_z, s.max_z, &cv, v))
            }
        })
        .collect()
}

/// Run every replication of `sc`. Results do not depend on `jobs`.
pub fn run_scenario(sc: &Scenario, jobs: Option<usize>) -> Result<FrequencyReport> {
    sc.validate()?;
    let p = table_from_logodds(&sc.theta, &sc.dims)?;
    let spec = build_local_logodds(sc.dims[0], sc.dims[1])?;
    let cone = ConeSpec::for_spec(&spec)?;
    let columns = sc.columns();
    let ctx = RepContext {
        p: &p,
        spec: &spec,
        cone: &cone,
        columns: &columns,
        need_lr: columns.iter().any(|(p, _)| p.is_lr()),
        need_mc: columns.iter().any(|(p, _)| !p.is_lr()),
        sc,
    };
    let run = || -> Vec<Result<Vec<Decision>>> {
        (0..sc.reps)
            .into_par_iter()
            .map(|rep| run_replication(&ctx, rep))
            .collect()
    };
    let results = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut counts = vec![[0u64; 3]; columns.len()];
    let mut failures = 0;
    for r in &results {
        match r {
            Ok(ds) => {
                for (c, d) in counts.iter_mut().zip(ds) {
                    c[d.index()] += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    let successful = sc.reps - failures;
    let cols = columns
        .iter()
        .zip(counts)
        .map(|(&(procedure, alphas), counts)| {
            let denom = successful.max(1) as f64;
            FrequencyColumn {
                procedure,
                alphas,
                counts,
                freq: counts.map(|c| c as f64 / denom),
            }
        })
        .collect();
    Ok(FrequencyReport {
        name: sc.name.clone(),
        dims: sc.dims.clone(),
        theta: sc.theta.clone(),
        n: sc.n,
        reps: sc.reps,
        successful,
        failures,
        columns: cols,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

const ROWS: [&str; 3] = ["H0", "H1", "H2"];

/// Procedures as columns, `H0`/`H1`/`H2` as rows.
pub fn emit_report(r: &FrequencyReport, format: ReportFormat) -> Result<String> {
    let mut out = String::new();
    match format {
        ReportFormat::Json => {
            out = serde_json::to_string_pretty(r)?;
            out.push('\n');
        }
        ReportFormat::Csv => {
            out.push_str("outcome");
            for c in &r.columns {
                let _ = write!(out, ",{}", c.label());
            }
            out.push('\n');
            if !r.columns.is_empty() {
                for (i, row) in ROWS.iter().enumerate() {
                    out.push_str(row);
                    for c in &r.columns {
                        let _ = write!(out, ",{}", c.freq[i]);
                    }
                    out.push('\n');
                }
            }
        }
        ReportFormat::Text => {
            if let Some(name) = &r.name {
                let _ = writeln!(out, "# {name}");
            }
            let _ = writeln!(
                out,
                "# dims {:?}  n {}  reps {}  successful {}  failures {}",
                r.dims, r.n, r.reps, r.successful, r.failures
            );
            let _ = write!(out, "{:<8}", "");
            for c in &r.columns {
                let _ = write!(out, " {:>16}", c.procedure.name());
            }
            out.push('\n');
            let _ = write!(out, "{:<8}", "alpha12");
            for c in &r.columns {
                let _ = write!(out, " {:>16}", format!("{:.3}", c.alphas.alpha12));
            }
            out.push('\n');
            if !r.columns.is_empty() {
                for (i, row) in ROWS.iter().enumerate() {
                    let _ = write!(out, "{row:<8}");
                    for c in &r.columns {
                        let _ = write!(out, " {:>16.3}", c.freq[i]);
                    }
                    out.push('\n');
                }
            }
        }
    }
    Ok(out)
}

/// Parse CSV produced by [`emit_report`] into `(procedure, alphas, freq)`.
pub fn parse_report_csv(text: &str) -> Result<Vec<(Procedure, AlphaConfig, [f64; 3])>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty report".into()))?;
    let mut cols = Vec::new();
    for label in header.split(',').skip(1) {
        let parts: Vec<&str> = label.split(';').collect();
        if parts.len() != 4 {
            return Err(Error::Parse(format!("bad column label {label:?}")));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {s:?}")))
        };
        let alphas = AlphaConfig {
            alpha1: num(parts[1])?,
            alpha2: num(parts[2])?,
            alpha12: num(parts[3])?,
        };
        cols.push((parts[0].parse::<Procedure>()?, alphas, [0.0; 3]));
    }
    for (i, row) in ROWS.iter().enumerate() {
        let Some(line) = lines.next() else {
            if cols.is_empty() {
                break;
            }
            return Err(Error::Parse(format!("missing row {row}")));
        };
        let mut fields = line.split(',');
        if fields.next() != Some(*row) {
            return Err(Error::Parse(format!("expected row {row}")));
        }
        for (col, f) in cols.iter_mut().zip(fields) {
            col.2[i] = f
                .parse()
                .map_err(|_| Error::Parse(format!("bad frequency {f:?}")))?;
        }
    }
    Ok(cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_theta_gives_uniform_table() {
        let p = table_from_logodds(&[0.0; 6], &[3, 4]).unwrap();
        assert!(p.as_slice().iter().all(|x| (x - 1.0 / 12.0).abs() < 1e-15));
    }

    #[test]
    fn margins_and_logodds_round_trip() {
        let theta = [0.08, 0.08, 0.08, 0.08];
        let p = table_from_logodds(&theta, &[3, 3]).unwrap();
        for i in 0..3 {
            let row: f64 = p.as_slice()[i * 3..i * 3 + 3].iter().sum();
            let col: f64 = (0..3).map(|r| p[r * 3 + i]).sum();
            assert!((row - 1.0 / 3.0).abs() < 1e-12 && (col - 1.0 / 3.0).abs() < 1e-12);
        }
        for (a, b) in local_logodds(p.as_slice(), &[3, 3]).iter().zip(theta) {
            assert!((a - b).abs() < 1e-10);
        }
        let theta = [0.5, -1.0, 0.2, 1.5, -0.3, 0.0, 0.7, -0.8];
        let p = table_from_logodds(&theta, &[3, 5]).unwrap();
        for (a, b) in local_logodds(p.as_slice(), &[3, 5]).iter().zip(theta) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn negated_theta_reverses_columns() {
        let theta = [0.3, -0.2, 0.1, 0.4, 0.0, -0.5];
        let (r, c) = (3, 4);
        let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
        let p = table_from_logodds(&theta, &[r, c]).unwrap();
        let q = table_from_logodds(&neg, &[r, c]).unwrap();
        // Reversing columns negates each log-odds ratio and mirrors its column.
        let mut mirrored = vec![0.0; theta.len()];
        for i in 0..r - 1 {
            for j in 0..c - 1 {
                mirrored[i * (c - 1) + j] = theta[i * (c - 1) + (c - 2 - j)];
            }
        }
        let pm =
            table_from_logodds(&mirrored.iter().map(|t| -t).collect::<Vec<_>>(), &[r, c]).unwrap();
        for i in 0..r {
            for j in 0..c {
                assert!((pm[i * c + j] - p[i * c + (c - 1 - j)]).abs() < 1e-12);
            }
        }
        // Symmetric theta: -theta is exactly the column reversal.
        let sym = [0.2; 6];
        let p = table_from_logodds(&sym, &[r, c]).unwrap();
        let q2 = table_from_logodds(&sym.map(|t| -t), &[r, c]).unwrap();
        for i in 0..r {
            for j in 0..c {
                assert!((q2[i * c + j] - p[i * c + (c - 1 - j)]).abs() < 1e-12);
            }
        }
        assert!(q.as_slice().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn rejects_bad_theta() {
        assert!(table_from_logodds(&[0.1; 3], &[3, 3]).is_err());
        assert!(table_from_logodds(&[f64::NAN; 4], &[3, 3]).is_err());
        assert!(table_from_logodds(&[0.0], &[1, 2]).is_err());
    }

    fn small_scenario(seed: u64) -> Scenario {
        Scenario {
            name: Some("small".into()),
            dims: vec![2, 3],
            theta: vec![0.3, 0.3],
            n: 500,
            reps: 24,
            configs: vec![
                AlphaConfig::new(0.02, 0.03, 0.0).unwrap(),
                AlphaConfig::new(0.02, 0.03, 0.015).unwrap(),
            ],
            procedures: Procedure::ALL.to_vec(),
            seed,
            mc_draws: 5000,
        }
    }

    #[test]
    fn reports_are_deterministic_across_worker_counts() {
        let sc = small_scenario(3);
        let a = run_scenario(&sc, Some(1)).unwrap();
        let b = run_scenario(&sc, Some(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.failures, 0);
        assert_eq!(a.columns.len(), 2 + 1 + 1 + 2 + 1 + 1);
        for c in &a.columns {
            assert_eq!(c.counts.iter().sum::<u64>(), 24);
            assert!((c.freq.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_ne!(a, run_scenario(&small_scenario(4), Some(2)).unwrap());
    }

    #[test]
    fn csv_round_trip_and_empty_reports() {
        let r = run_scenario(&small_scenario(9), None).unwrap();
        let csv = emit_report(&r, ReportFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 4);
        let parsed = parse_report_csv(&csv).unwrap();
        assert_eq!(parsed.len(), r.columns.len());
        for (c, (p, a, f)) in r.columns.iter().zip(parsed) {
            assert_eq!((c.procedure, c.alphas, c.freq), (p, a, f));
        }
        let empty = FrequencyReport {
            columns: vec![],
            ..r.clone()
        };
        assert_eq!(emit_report(&empty, ReportFormat::Csv).unwrap(), "outcome\n");
        assert!(parse_report_csv("outcome\n").unwrap().is_empty());
        let text = emit_report(&r, ReportFormat::Text).unwrap();
        assert!(text.contains("H2"));
        let json = emit_report(&r, ReportFormat::Json).unwrap();
        let back: FrequencyReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn scenario_json_defaults() {
        let s = Scenario::from_json(
            r#"{"dims":[3,3],"theta":[0,0,0,0],"n":10000,"N":50,
                "configs":[{"alpha1":0.02,"alpha2":0.03}]}"#,
        )
        .unwrap();
        assert_eq!(s.reps, 50);
        assert_eq!(s.procedures.len(), 6);
        assert_eq!(s.seed, DEFAULT_SEED);
        assert!(Scenario::from_json(r#"{"dims":[3,3],"theta":[0],"n":1,"configs":[]}"#).is_err());
    }
}
