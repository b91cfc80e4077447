//! C ABI for `chibar`.
//!
//! Objects are opaque handles created by `*_new`/`*_from_*` functions and
//! released with the matching `*_free`. Every fallible function returns a
//! [`ChibarStatus`]; on failure [`chibar_last_error`] describes the problem.
//! Strings returned through `char **` must be released with
//! [`chibar_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chibar::analysis::{self, AnalysisOptions, WeightOptions};
use chibar::chibar::{ChiBarWeights, WeightMethod};
use chibar::fit::{self, FitMode, LrStatistics};
use chibar::linalg::{self, Matrix};
use chibar::params::{self, ConeSpec, MarginalParamSpec, SpecFile};
use chibar::procedures::{
    self, AlphaConfig, CriticalValues, Decision, LrVariant, McSolver, McVariant,
};
use chibar::sim::{self, Scenario};
use chibar::table::{parse_table, ContingencyTable};
use chibar::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChibarStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    ParseError = 3,
    NumericalError = 4,
    NonConvergence = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChibarDecision {
    AcceptH0 = 0,
    RejectToH1 = 1,
    RejectToH2 = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChibarLrVariant {
    Naive = 0,
    Basic = 1,
    Tunable = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChibarMcVariant {
    Naive = 0,
    Bennet = 1,
    Tunable = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChibarWeightMethod {
    Exact = 0,
    MonteCarlo = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChibarAlphas {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha12: f64,
}

/// `c2` and `c12` are `INFINITY` when unbounded.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChibarCriticalValues {
    pub c1: f64,
    pub c2: f64,
    pub c12: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChibarLrStats {
    pub l01: f64,
    pub l12: f64,
    pub l02: f64,
}

/// A contingency table.
pub struct ChibarTable(ContingencyTable);

/// Parameterisation plus constraint cone.
pub struct ChibarModel {
    spec: MarginalParamSpec,
    cone: ConeSpec,
}

/// Chi-bar-square weights.
pub struct ChibarWeights(ChiBarWeights);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ChibarStatus {
    match e {
        Error::Parse(_) | Error::Json(_) => ChibarStatus::ParseError,
        Error::NonConvergence { .. } => ChibarStatus::NonConvergence,
        Error::NotPositiveDefinite(_)
        | Error::NonPositiveMargin(_)
        | Error::UnreachableTarget { .. } => ChibarStatus::NumericalError,
        _ => ChibarStatus::InvalidInput,
    }
}

struct Failure(ChibarStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ChibarStatus::NullPointer, format!("{what} is NULL"))
}

/// Run `f`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> ChibarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ChibarStatus::Ok,
        Ok(Err(Failure(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            ChibarStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ChibarStatus::ParseError, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    let c = CString::new(s)
        .map_err(|_| Failure(ChibarStatus::InvalidInput, "output holds NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn alphas(a: &ChibarAlphas) -> Result<AlphaConfig, Failure> {
    Ok(AlphaConfig::new(a.alpha1, a.alpha2, a.alpha12)?)
}

fn to_c(cv: CriticalValues) -> ChibarCriticalValues {
    ChibarCriticalValues {
        c1: cv.c1,
        c2: cv.c2,
        c12: cv.c12,
    }
}

fn from_c(cv: &ChibarCriticalValues) -> CriticalValues {
    CriticalValues {
        c1: cv.c1,
        c2: cv.c2,
        c12: cv.c12,
    }
}

fn decision_to_c(d: Decision) -> ChibarDecision {
    match d {
        Decision::AcceptH0 => ChibarDecision::AcceptH0,
        Decision::RejectToH1 => ChibarDecision::RejectToH1,
        Decision::RejectToH2 => ChibarDecision::RejectToH2,
    }
}

fn lr_variant(v: ChibarLrVariant) -> LrVariant {
    match v {
        ChibarLrVariant::Naive => LrVariant::Naive,
        ChibarLrVariant::Basic => LrVariant::Basic,
        ChibarLrVariant::Tunable => LrVariant::Tunable,
    }
}

fn mc_variant(v: ChibarMcVariant) -> McVariant {
    match v {
        ChibarMcVariant::Naive => McVariant::Naive,
        ChibarMcVariant::Bennet => McVariant::Bennet,
        ChibarMcVariant::Tunable => McVariant::Tunable,
    }
}

/// Message of the last failure on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn chibar_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn chibar_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn chibar_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Table from row-major counts (last index fastest).
#[no_mangle]
pub unsafe extern "C" fn chibar_table_new(
    dims: *const usize,
    ndims: usize,
    counts: *const u64,
    ncells: usize,
    out: *mut *mut ChibarTable,
) -> ChibarStatus {
    guard(|| {
        let dims = slice(dims, ndims, "dims")?.to_vec();
        let counts = slice(counts, ncells, "counts")?.to_vec();
        put(out, ChibarTable(ContingencyTable::new(dims, counts)?))
    })
}

/// Table from whitespace separated text.
#[no_mangle]
pub unsafe extern "C" fn chibar_table_parse(
    text: *const c_char,
    dims: *const usize,
    ndims: usize,
    out: *mut *mut ChibarTable,
) -> ChibarStatus {
    guard(|| {
        let text = string(text, "text")?;
        let dims = slice(dims, ndims, "dims")?;
        put(out, ChibarTable(parse_table(text, dims)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn chibar_table_free(t: *mut ChibarTable) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Local log-odds ratios of an `nrows x ncols` table, all constrained
/// non-negative.
#[no_mangle]
pub unsafe extern "C" fn chibar_model_local_logodds(
    nrows: usize,
    ncols: usize,
    out: *mut *mut ChibarModel,
) -> ChibarStatus {
    guard(|| {
        let spec = params::build_local_logodds(nrows, ncols)?;
        let cone = ConeSpec::for_spec(&spec)?;
        put(out, ChibarModel { spec, cone })
    })
}

/// Global log-odds ratios of an `nrows x ncols` table, all constrained
/// non-negative.
#[no_mangle]
pub unsafe extern "C" fn chibar_model_global_logodds(
    nrows: usize,
    ncols: usize,
    out: *mut *mut ChibarModel,
) -> ChibarStatus {
    guard(|| {
        let spec = params::build_global_logodds(nrows, ncols)?;
        let cone = ConeSpec::for_spec(&spec)?;
        put(out, ChibarModel { spec, cone })
    })
}

/// Model from JSON with `C`, `M`, `D` and optional `E` (row-major arrays).
#[no_mangle]
pub unsafe extern "C" fn chibar_model_from_json(
    json: *const c_char,
    out: *mut *mut ChibarModel,
) -> ChibarStatus {
    guard(|| {
        let file: SpecFile = serde_json::from_str(string(json, "json")?).map_err(Error::from)?;
        let (spec, cone) = file.into_spec()?;
        put(out, ChibarModel { spec, cone })
    })
}

/// Number of inequality constraints.
#[no_mangle]
pub unsafe extern "C" fn chibar_model_num_inequalities(m: *const ChibarModel) -> usize {
    m.as_ref().map_or(0, |m| m.cone.k())
}

#[no_mangle]
pub unsafe extern "C" fn chibar_model_free(m: *mut ChibarModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// `L01`, `L12`, `L02`.
#[no_mangle]
pub unsafe extern "C" fn chibar_lr_statistics(
    t: *const ChibarTable,
    m: *const ChibarModel,
    out: *mut ChibarLrStats,
) -> ChibarStatus {
    guard(|| {
        let (t, m) = (deref(t, "table")?, deref(m, "model")?);
        let s = fit::lr_statistics(&t.0, &m.spec, &m.cone)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ChibarLrStats {
            l01: s.l01,
            l12: s.l12,
            l02: s.l02,
        };
        Ok(())
    })
}

/// Weights of the null distribution at the equality-constrained fit.
#[no_mangle]
pub unsafe extern "C" fn chibar_weights_plugin(
    t: *const ChibarTable,
    m: *const ChibarModel,
    method: ChibarWeightMethod,
    mc_samples: usize,
    seed: u64,
    out: *mut *mut ChibarWeights,
) -> ChibarStatus {
    guard(|| {
        let (t, m) = (deref(t, "table")?, deref(m, "model")?);
        let h0 = fit::fit(&t.0, &m.spec, &m.cone, FitMode::Equality)?;
        let v0 = params::eta_covariance(h0.p_hat.as_slice(), &m.spec, t.0.n() as f64)?;
        let opts = WeightOptions {
            method: match method {
                ChibarWeightMethod::Exact => WeightMethod::Exact,
                ChibarWeightMethod::MonteCarlo => WeightMethod::MonteCarlo,
            },
            mc_samples,
            seed,
            ..WeightOptions::default()
        };
        put(
            out,
            ChibarWeights(analysis::null_weights(&v0, &m.cone, &opts)?),
        )
    })
}

/// Weights for the `k x k` covariance `cov` (row-major) of the constrained
/// estimates, with a lineality space of dimension `q`.
#[no_mangle]
pub unsafe extern "C" fn chibar_weights_from_cov(
    cov: *const f64,
    k: usize,
    q: usize,
    method: ChibarWeightMethod,
    mc_samples: usize,
    seed: u64,
    out: *mut *mut ChibarWeights,
) -> ChibarStatus {
    guard(|| {
        let c = slice(cov, k * k, "cov")?;
        let omega = Matrix::from_row_slice(k, k, c);
        let (r, tt) = (q + k, q + k + 1);
        let w = match method {
            ChibarWeightMethod::Exact => chibar::chibar::exact_weights_from_cov(
                &omega,
                q,
                r,
                tt,
                chibar::chibar::DEFAULT_ORTHANT_ACCURACY,
            )?,
            ChibarWeightMethod::MonteCarlo => {
                chibar::chibar::mc_weights_from_cov(&omega, q, r, tt, mc_samples, seed)?
            }
        };
        put(out, ChibarWeights(w))
    })
}

/// Number of weights, `k + 1`.
#[no_mangle]
pub unsafe extern "C" fn chibar_weights_len(w: *const ChibarWeights) -> usize {
    w.as_ref().map_or(0, |w| w.0.w.len())
}

/// Copy the weights into `buf` of length `len`.
#[no_mangle]
pub unsafe extern "C" fn chibar_weights_get(
    w: *const ChibarWeights,
    buf: *mut f64,
    len: usize,
) -> ChibarStatus {
    guard(|| {
        let w = &deref(w, "weights")?.0.w;
        if len < w.len() {
            return Err(Failure(
                ChibarStatus::BufferTooSmall,
                format!("need {} slots", w.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(w.as_ptr(), buf, w.len());
        Ok(())
    })
}

/// `P(chi-bar-square > c)`; NaN for a NULL handle.
#[no_mangle]
pub unsafe extern "C" fn chibar_weights_tail(w: *const ChibarWeights, c: f64) -> f64 {
    w.as_ref().map_or(f64::NAN, |w| w.0.tail(c))
}

/// `P(L01 <= c1, L12 <= c2)`; NaN for a NULL handle.
#[no_mangle]
pub unsafe extern "C" fn chibar_weights_joint_cdf(
    w: *const ChibarWeights,
    c1: f64,
    c2: f64,
) -> f64 {
    w.as_ref().map_or(f64::NAN, |w| w.0.joint_cdf(c1, c2))
}

#[no_mangle]
pub unsafe extern "C" fn chibar_weights_free(w: *mut ChibarWeights) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

#[no_mangle]
pub unsafe extern "C" fn chibar_lr_critical_values(
    w: *const ChibarWeights,
    a: *const ChibarAlphas,
    variant: ChibarLrVariant,
    out: *mut ChibarCriticalValues,
) -> ChibarStatus {
    guard(|| {
        let w = deref(w, "weights")?;
        let cfg = alphas(deref(a, "alphas")?)?;
        let cv = procedures::lr_critical_values_for(&w.0, &cfg, lr_variant(variant))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = to_c(cv);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn chibar_lr_decide(
    stats: *const ChibarLrStats,
    cv: *const ChibarCriticalValues,
    variant: ChibarLrVariant,
    out: *mut ChibarDecision,
) -> ChibarStatus {
    guard(|| {
        let s = deref(stats, "stats")?;
        let cv = from_c(deref(cv, "critical values")?);
        let s = LrStatistics {
            l01: s.l01,
            l12: s.l12,
            l02: s.l02,
        };
        if out.is_null() {
            return Err(null("out"));
        }
        *out = decision_to_c(procedures::lr_decide(&s, &cv, lr_variant(variant)));
        Ok(())
    })
}

/// Extremes of the studentized constraint estimates, and optionally their
/// `k x k` null correlation matrix (row-major) when `corr` is not NULL.
#[no_mangle]
pub unsafe extern "C" fn chibar_mc_statistics(
    t: *const ChibarTable,
    m: *const ChibarModel,
    min_z: *mut f64,
    max_z: *mut f64,
    corr: *mut f64,
    corr_len: usize,
) -> ChibarStatus {
    guard(|| {
        let (t, m) = (deref(t, "table")?, deref(m, "model")?);
        let s = procedures::mc_statistics(&t.0, &m.spec, &m.cone)?;
        if min_z.is_null() || max_z.is_null() {
            return Err(null("min_z/max_z"));
        }
        *min_z = s.min_z;
        *max_z = s.max_z;
        if !corr.is_null() {
            let flat: Vec<f64> = s.corr.iter().flatten().copied().collect();
            if corr_len < flat.len() {
                return Err(Failure(
                    ChibarStatus::BufferTooSmall,
                    format!("need {} slots", flat.len()),
                ));
            }
            ptr::copy_nonoverlapping(flat.as_ptr(), corr, flat.len());
        }
        Ok(())
    })
}

/// MC critical values for the `k x k` correlation matrix `corr`.
#[no_mangle]
pub unsafe extern "C" fn chibar_mc_critical_values(
    corr: *const f64,
    k: usize,
    a: *const ChibarAlphas,
    variant: ChibarMcVariant,
    accuracy: f64,
    seed: u64,
    out: *mut ChibarCriticalValues,
) -> ChibarStatus {
    guard(|| {
        let r = Matrix::from_row_slice(k, k, slice(corr, k * k, "corr")?);
        let cfg = alphas(deref(a, "alphas")?)?;
        let solver = McSolver::Rect { accuracy, seed };
        let cv = procedures::mc_critical_values_with(&r, &cfg, mc_variant(variant), solver)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = to_c(cv);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn chibar_mc_decide(
    min_z: f64,
    max_z: f64,
    cv: *const ChibarCriticalValues,
    variant: ChibarMcVariant,
    out: *mut ChibarDecision,
) -> ChibarStatus {
    guard(|| {
        let cv = from_c(deref(cv, "critical values")?);
        if out.is_null() {
            return Err(null("out"));
        }
        *out = decision_to_c(procedures::mc_decide(
            min_z,
            max_z,
            &cv,
            mc_variant(variant),
        ));
        Ok(())
    })
}

/// Full analysis as JSON. `options_json` may be NULL for defaults.
#[no_mangle]
pub unsafe extern "C" fn chibar_analyze_json(
    t: *const ChibarTable,
    m: *const ChibarModel,
    options_json: *const c_char,
    out: *mut *mut c_char,
) -> ChibarStatus {
    guard(|| {
        let (t, m) = (deref(t, "table")?, deref(m, "model")?);
        let opts: AnalysisOptions = if options_json.is_null() {
            AnalysisOptions::default()
        } else {
            serde_json::from_str(string(options_json, "options_json")?).map_err(Error::from)?
        };
        let res = analysis::analyze(&t.0, &m.spec, &m.cone, &opts)?;
        put_string(out, serde_json::to_string(&res).map_err(Error::from)?)
    })
}

/// Run a simulation scenario given as JSON; the report is JSON. `jobs = 0`
/// uses every core.
#[no_mangle]
pub unsafe extern "C" fn chibar_simulate_json(
    scenario_json: *const c_char,
    jobs: usize,
    out: *mut *mut c_char,
) -> ChibarStatus {
    guard(|| {
        let sc = Scenario::from_json(string(scenario_json, "scenario_json")?)?;
        let report = sim::run_scenario(&sc, (jobs > 0).then_some(jobs))?;
        put_string(out, serde_json::to_string(&report).map_err(Error::from)?)
    })
}

/// Correlation matrix of a `k x k` covariance, written into `out`.
#[no_mangle]
pub unsafe extern "C" fn chibar_correlation(
    cov: *const f64,
    k: usize,
    out: *mut f64,
) -> ChibarStatus {
    guard(|| {
        let c = Matrix::from_row_slice(k, k, slice(cov, k * k, "cov")?);
        let (r, _) = linalg::correlation(&c)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let flat: Vec<f64> = linalg::to_rows(&r).into_iter().flatten().collect();
        ptr::copy_nonoverlapping(flat.as_ptr(), out, flat.len());
        Ok(())
    })
}
