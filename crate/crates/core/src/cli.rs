//! Command-line front end. Exit codes: 0 success, 1 pipeline failure,
//! 2 input error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Read;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{self, AnalysisOptions, WeightOptions, DEFAULT_MC_SAMPLES};
use crate::chibar::{self, ChiBarWeights, WeightMethod, DEFAULT_ORTHANT_ACCURACY};
use crate::error::{Error, Result};
use crate::fit::{self, FitMode};
use crate::linalg::{self, Matrix};
use crate::params::{self, ConeSpec, MarginalParamSpec, SpecFile};
use crate::procedures::{self, AlphaConfig, CriticalValues, McSolver, Procedure, DEFAULT_SEED};
use crate::sim::{self, ReportFormat, Scenario};
use crate::table::{parse_table, ContingencyTable};

#[derive(Debug, Parser)]
#[command(
    name = "chibar",
    version,
    about = "Order-restricted tests for contingency tables"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test a table: statistics, critical values and decisions.
    Test(TestArgs),
    /// Chi-bar-square weights of the null distribution.
    Weights(WeightsArgs),
    /// Critical values without a decision.
    Critvals(CritvalsArgs),
    /// Run a simulation scenario.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SpecKind {
    Local,
    Global,
    GlobalLogit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Exact,
    #[value(alias = "montecarlo")]
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// Table file, `-` for stdin.
    #[arg(long)]
    pub table: Option<String>,
    /// Table dimensions, e.g. `2,5`.
    #[arg(long, value_delimiter = ',')]
    pub dims: Vec<usize>,
    #[arg(long, value_enum, default_value = "local")]
    pub spec: SpecKind,
    /// JSON file with `C`, `M`, `D` and optional `E`.
    #[arg(long)]
    pub spec_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AlphaArgs {
    #[arg(long, default_value_t = 0.02)]
    pub alpha1: f64,
    #[arg(long, default_value_t = 0.03)]
    pub alpha2: f64,
    /// Comma-separated grid of alpha12 values.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub alpha12: Vec<f64>,
    /// Procedures to run (repeatable or comma-separated); default all.
    #[arg(long, value_delimiter = ',', value_parser = parse_procedure)]
    pub procedure: Vec<Procedure>,
}

#[derive(Debug, Args)]
pub struct MethodArgs {
    #[arg(long, value_enum, default_value = "exact")]
    pub method: MethodArg,
    /// Projections for Monte Carlo weights.
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    #[arg(long, value_enum, default_value = "text")]
    pub format: OutFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: TableArgs,
    #[command(flatten)]
    pub alphas: AlphaArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Debug, Args)]
pub struct CovArgs {
    /// JSON file holding the covariance matrix of the constrained estimates.
    #[arg(long, conflicts_with_all = ["table", "spec_file"])]
    pub cov: Option<PathBuf>,
    /// Dimension of the lineality space when `--cov` is used.
    #[arg(long, default_value_t = 0, requires = "cov")]
    pub q: usize,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[command(flatten)]
    pub input: TableArgs,
    #[command(flatten)]
    pub cov: CovArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Also compute the other method and report the agreement.
    #[arg(long)]
    pub compare: bool,
    /// Projections needed for accuracy EPS with probability 1 - 2 DELTA.
    #[arg(long, num_args = 2, value_names = ["EPS", "DELTA"], requires_all = ["c1", "c2"])]
    pub required_samples: Option<Vec<f64>>,
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Debug, Args)]
pub struct CritvalsArgs {
    #[command(flatten)]
    pub input: TableArgs,
    #[command(flatten)]
    pub cov: CovArgs,
    #[command(flatten)]
    pub alphas: AlphaArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Worker threads; default all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Override the scenario's replication count.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Override the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Validate the scenario and exit.
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_procedure(s: &str) -> std::result::Result<Procedure, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Whether an error stems from bad input rather than a failed computation.
pub fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Parse(_)
            | Error::CountMismatch { .. }
            | Error::Dimension(_)
            | Error::InvalidInput(_)
            | Error::RankDeficient
            | Error::TooManyConstraints(_)
            | Error::Io(_)
            | Error::Json(_)
    )
}

fn exit_code(e: &Error) -> i32 {
    if is_input_error(e) {
        2
    } else {
        1
    }
}

/// Parse `args` and run; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Test(a) => cmd_test(&a),
        Command::Weights(a) => cmd_weights(&a),
        Command::Critvals(a) => cmd_critvals(&a),
        Command::Simulate(a) => cmd_simulate(&a),
    }
}

fn read_source(path: &str) -> Result<String> {
    if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        Ok(std::fs::read_to_string(path)?)
    }
}

fn write_output(text: &str, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_input(a: &TableArgs) -> Result<(ContingencyTable, MarginalParamSpec, ConeSpec)> {
    let path = a
        .table
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("--table is required".into()))?;
    if a.dims.is_empty() {
        return Err(Error::InvalidInput(
            "--dims is required with --table".into(),
        ));
    }
    let table = parse_table(&read_source(path)?, &a.dims)?;
    let (spec, cone) = match &a.spec_file {
        Some(p) => {
            let file: SpecFile = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            let (spec, cone) = file.into_spec()?;
            if spec.cells() != table.cells() {
                return Err(Error::Dimension(format!(
                    "spec file describes {} cells, table has {}",
                    spec.cells(),
                    table.cells()
                )));
            }
            (spec, cone)
        }
        None => {
            let [r, c] = a.dims[..] else {
                return Err(Error::InvalidInput(
                    "built-in specs need two-way tables; use --spec-file".into(),
                ));
            };
            let spec = match a.spec {
                SpecKind::Local => params::build_local_logodds(r, c)?,
                SpecKind::Global => params::build_global_logodds(r, c)?,
                SpecKind::GlobalLogit => params::build_global_logit(r, c)?,
            };
            let cone = ConeSpec::for_spec(&spec)?;
            (spec, cone)
        }
    };
    Ok((table, spec, cone))
}

fn weight_options(m: &MethodArgs) -> Result<WeightOptions> {
    if m.mc_samples.is_some() && m.method != MethodArg::Mc {
        return Err(Error::InvalidInput(
            "--mc-samples requires --method mc".into(),
        ));
    }
    Ok(WeightOptions {
        method: match m.method {
            MethodArg::Exact => WeightMethod::Exact,
            MethodArg::Mc => WeightMethod::MonteCarlo,
        },
        mc_samples: m.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES),
        seed: m.seed,
        accuracy: DEFAULT_ORTHANT_ACCURACY,
    })
}

fn fmt_value(x: f64) -> String {
    if x.is_infinite() {
        "Inf".into()
    } else {
        format!("{x:.3}")
    }
}

fn fmt_weights(out: &mut String, w: &ChiBarWeights) {
    let method = match w.method {
        WeightMethod::Exact => "exact",
        WeightMethod::MonteCarlo => "mc",
    };
    let _ = writeln!(out, "weights ({method}), chi-square df {}..={}:", w.q, w.r);
    for (i, wi) in w.w.iter().enumerate() {
        match &w.se {
            Some(se) => {
                let _ = writeln!(out, "  w[{}] = {:.6}  (se {:.6})", w.q + i, wi, se[i]);
            }
            None => {
                let _ = writeln!(out, "  w[{}] = {:.6}", w.q + i, wi);
            }
        }
    }
    let sum: f64 = w.w.iter().sum();
    let even: f64 = w.w.iter().step_by(2).sum();
    let _ = writeln!(
        out,
        "  sum = {sum:.8}  even half-sum = {even:.8}  odd half-sum = {:.8}",
        sum - even
    );
}

fn cmd_test(a: &TestArgs) -> Result<i32> {
    let (table, spec, cone) = load_input(&a.input)?;
    let opts = AnalysisOptions {
        alpha1: a.alphas.alpha1,
        alpha2: a.alphas.alpha2,
        alpha12: a.alphas.alpha12.clone(),
        procedures: (!a.alphas.procedure.is_empty()).then(|| a.alphas.procedure.clone()),
        weights: weight_options(&a.method)?,
        mc_solver: McSolver::Rect {
            accuracy: procedures::MC_RECT_ACCURACY,
            seed: a.method.seed,
        },
    };
    opts.configs()?;
    let res = analysis::analyze(&table, &spec, &cone, &opts)?;
    let text = match a.output.format {
        OutFormat::Json => serde_json::to_string_pretty(&res)? + "\n",
        OutFormat::Text => {
            let mut out = String::new();
            let _ = writeln!(out, "table {:?}, n = {}", res.dims, res.n);
            let s = res.statistics;
            let _ = writeln!(
                out,
                "L01 = {:.4}  L12 = {:.4}  L02 = {:.4}",
                s.l01, s.l12, s.l02
            );
            if let Some(w) = &res.weights {
                fmt_weights(&mut out, w);
            }
            if let Some(m) = &res.mc_statistics {
                let _ = writeln!(out, "min z = {:.4}  max z = {:.4}", m.min_z, m.max_z);
            }
            let _ = writeln!(
                out,
                "{:<12} {:>8} {:>8} {:>8} {:>8}  decision",
                "procedure", "alpha12", "c2", "c1", "c12"
            );
            for d in &res.decisions {
                let cv = d.critical_values;
                let _ = writeln!(
                    out,
                    "{:<12} {:>8.3} {:>8} {:>8} {:>8}  {}",
                    d.procedure.name(),
                    d.alphas.alpha12,
                    fmt_value(cv.c2),
                    fmt_value(cv.c1),
                    fmt_value(cv.c12),
                    d.decision
                );
            }
            out
        }
    };
    write_output(&text, &a.output.out)?;
    Ok(0)
}

/// Covariance of the constrained estimates plus `(q, r, t)`, and the
/// correlation used by MC procedures when the cone has no equality rows.
struct WeightInput {
    omega: Matrix,
    q: usize,
    r: usize,
    t: usize,
    v0_cone: Option<(Matrix, ConeSpec)>,
}

fn weight_input(input: &TableArgs, cov: &CovArgs) -> Result<WeightInput> {
    if let Some(p) = &cov.cov {
        let rows: Vec<Vec<f64>> = serde_json::from_str(&std::fs::read_to_string(p)?)?;
        let omega = linalg::from_rows(&rows, 0)?;
        if omega.nrows() != omega.ncols() || omega.nrows() == 0 {
            return Err(Error::Dimension(
                "--cov must hold a non-empty square matrix".into(),
            ));
        }
        let k = omega.nrows();
        return Ok(WeightInput {
            omega,
            q: cov.q,
            r: cov.q + k,
            t: cov.q + k + 1,
            v0_cone: None,
        });
    }
    let (table, spec, cone) = load_input(input)?;
    let h0 = fit::fit(&table, &spec, &cone, FitMode::Equality)?;
    let v0 = params::eta_covariance(h0.p_hat.as_slice(), &spec, table.n() as f64)?;
    let omega = cone.constrained_cov(&v0)?;
    let t = spec.dim() + 1;
    Ok(WeightInput {
        omega,
        q: cone.q,
        r: cone.r,
        t,
        v0_cone: Some((v0, cone)),
    })
}

fn compute_weights(wi: &WeightInput, opts: &WeightOptions) -> Result<ChiBarWeights> {
    if let Some((v0, cone)) = &wi.v0_cone {
        return analysis::null_weights(v0, cone, opts);
    }
    match opts.method {
        WeightMethod::Exact => {
            chibar::exact_weights_from_cov(&wi.omega, wi.q, wi.r, wi.t, opts.accuracy)
        }
        WeightMethod::MonteCarlo => {
            chibar::mc_weights_from_cov(&wi.omega, wi.q, wi.r, wi.t, opts.mc_samples, opts.seed)
        }
    }
}

fn cmd_weights(a: &WeightsArgs) -> Result<i32> {
    let opts = weight_options(&a.method)?;
    let wi = weight_input(&a.input, &a.cov)?;
    let w = compute_weights(&wi, &opts)?;

    let other = if a.compare {
        let method = match opts.method {
            WeightMethod::Exact => WeightMethod::MonteCarlo,
            WeightMethod::MonteCarlo => WeightMethod::Exact,
        };
        Some(compute_weights(&wi, &WeightOptions { method, ..opts })?)
    } else {
        None
    };
    // Largest |exact - mc| in units of the MC standard error.
    let agreement = other.as_ref().map(|o| {
        let (mc, ex) = if w.method == WeightMethod::MonteCarlo {
            (&w, o)
        } else {
            (o, &w)
        };
        let se = mc.se.clone().unwrap_or_default();
        ex.w.iter()
            .zip(&mc.w)
            .zip(se)
            .map(|((e, m), s)| if s > 0.0 { (e - m).abs() / s } else { 0.0 })
            .fold(0.0, f64::max)
    });

    let required = match &a.required_samples {
        Some(v) => {
            let (c1, c2) = (a.c1.unwrap_or_default(), a.c2.unwrap_or_default());
            Some(chibar::required_samples(&w, c1, c2, v[0], v[1])?)
        }
        None => None,
    };

    let text = match a.output.format {
        OutFormat::Json => {
            let v = serde_json::json!({
                "weights": w,
                "compare": other,
                "max_abs_diff_in_se": agreement,
                "required_samples": required,
            });
            serde_json::to_string_pretty(&v)? + "\n"
        }
        OutFormat::Text => {
            let mut out = String::new();
            fmt_weights(&mut out, &w);
            if let Some(o) = &other {
                fmt_weights(&mut out, o);
                let _ = writeln!(
                    out,
                    "largest difference: {:.2} MC standard errors",
                    agreement.unwrap_or(0.0)
                );
            }
            if let Some(n) = required {
                let _ = writeln!(out, "required projections: {n}");
            }
            out
        }
    };
    write_output(&text, &a.output.out)?;
    Ok(0)
}

fn cmd_critvals(a: &CritvalsArgs) -> Result<i32> {
    let opts = weight_options(&a.method)?;
    let wi = weight_input(&a.input, &a.cov)?;
    let configs: Vec<AlphaConfig> = a
        .alphas
        .alpha12
        .iter()
        .map(|&x| AlphaConfig::new(a.alphas.alpha1, a.alphas.alpha2, x))
        .collect::<Result<_>>()?;
    if configs.is_empty() {
        return Err(Error::InvalidInput(
            "at least one alpha12 value is required".into(),
        ));
    }
    let has_eq = wi.v0_cone.as_ref().is_some_and(|(_, c)| c.n_eq() > 0);
    let procs: Vec<Procedure> = if a.alphas.procedure.is_empty() {
        Procedure::ALL
            .into_iter()
            .filter(|p| p.is_lr() || !has_eq)
            .collect()
    } else {
        a.alphas.procedure.clone()
    };
    if has_eq && procs.iter().any(|p| !p.is_lr()) {
        return Err(Error::InvalidInput(
            "multiple-comparison procedures need a cone without equality rows".into(),
        ));
    }
    let weights = if procs.iter().any(|p| p.is_lr()) {
        Some(compute_weights(&wi, &opts)?)
    } else {
        None
    };
    let corr = if procs.iter().any(|p| !p.is_lr()) {
        Some(linalg::correlation(&wi.omega)?.0)
    } else {
        None
    };
    let solver = McSolver::Rect {
        accuracy: procedures::MC_RECT_ACCURACY,
        seed: a.method.seed,
    };

    let mut rows: Vec<(Procedure, AlphaConfig, CriticalValues)> = Vec::new();
    for &p in &procs {
        let grid = if p.uses_alpha12() {
            &configs[..]
        } else {
            &configs[..1]
        };
        for cfg in grid {
            let cv = match (p.lr_variant(), p.mc_variant()) {
                (Some(v), _) => {
                    procedures::lr_critical_values_for(weights.as_ref().expect("weights"), cfg, v)?
                }
                (_, Some(v)) => procedures::mc_critical_values_with(
                    corr.as_ref().expect("corr"),
                    cfg,
                    v,
                    solver,
                )?,
                _ => unreachable!("every procedure is LR or MC"),
            };
            rows.push((p, *cfg, cv));
        }
    }

    let text = match a.output.format {
        OutFormat::Json => {
            let items: Vec<_> = rows
                .iter()
                .map(|(p, cfg, cv)| serde_json::json!({"procedure": p, "alphas": cfg, "critical_values": cv}))
                .collect();
            serde_json::to_string_pretty(
                &serde_json::json!({"weights": weights, "critical_values": items}),
            )? + "\n"
        }
        OutFormat::Text => {
            let mut out = String::new();
            if let Some(w) = &weights {
                fmt_weights(&mut out, w);
            }
            let _ = writeln!(
                out,
                "{:<12} {:>8} {:>8} {:>8} {:>8}",
                "procedure", "alpha12", "c2", "c1", "c12"
            );
            for (p, cfg, cv) in &rows {
                let _ = writeln!(
                    out,
                    "{:<12} {:>8.3} {:>8} {:>8} {:>8}",
                    p.name(),
                    cfg.alpha12,
                    fmt_value(cv.c2),
                    fmt_value(cv.c1),
                    fmt_value(cv.c12)
                );
            }
            out
        }
    };
    write_output(&text, &a.output.out)?;
    Ok(0)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let mut sc: Scenario = serde_json::from_str(&std::fs::read_to_string(&a.scenario)?)?;
    if let Some(r) = a.reps {
        sc.reps = r;
    }
    if let Some(s) = a.seed {
        sc.seed = s;
    }
    sc.validate()?;
    if a.dry_run {
        eprintln!(
            "scenario ok: dims {:?}, n {}, reps {}, {} report columns",
            sc.dims,
            sc.n,
            sc.reps,
            sc.columns().len()
        );
        return Ok(0);
    }
    let report = sim::run_scenario(&sc, a.jobs)?;
    write_output(&sim::emit_report(&report, a.format)?, &a.out)?;
    if report.failures > 0 {
        eprintln!(
            "error: {} of {} replications failed",
            report.failures, report.reps
        );
        return Ok(1);
    }
    Ok(0)
}
