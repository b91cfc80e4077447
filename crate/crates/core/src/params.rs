//! Marginal log-linear parameterisations `eta = C log(M p)` and the cones
//! `{eta : D eta >= 0, E eta = 0}` that order restrictions are stated on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::table::{check_dims, linear_index, ProbabilityVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    LocalLogodds,
    GlobalLogodds,
    GlobalLogit,
    Custom,
}

/// Contrast matrix `C`, marginalisation matrix `M`, and row labels.
///
/// `interactions` lists the rows of `eta` that hold association parameters
/// (odds ratios); the default cone constrains exactly those rows.
#[derive(Debug, Clone)]
pub struct MarginalParamSpec {
    pub c: Matrix,
    pub m: Matrix,
    pub labels: Vec<String>,
    pub kind: ParamKind,
    pub interactions: Vec<usize>,
}

impl MarginalParamSpec {
    /// Validate a user supplied `(C, M)` pair.
    pub fn custom(
        c: Matrix,
        m: Matrix,
        labels: Vec<String>,
        interactions: Vec<usize>,
    ) -> Result<Self> {
        if c.ncols() != m.nrows() {
            return Err(Error::InvalidInput(format!(
                "C has {} columns but M has {} rows",
                c.ncols(),
                m.nrows()
            )));
        }
        if m.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput("M must contain only 0 and 1".into()));
        }
        for i in 0..c.nrows() {
            let s: f64 = c.row(i).iter().sum();
            if s.abs() > 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "row {i} of C is not a contrast (sums to {s})"
                )));
            }
        }
        if let Some(&bad) = interactions.iter().find(|&&r| r >= c.nrows()) {
            return Err(Error::InvalidInput(format!(
                "interaction row {bad} out of range"
            )));
        }
        let labels = if labels.is_empty() {
            (0..c.nrows()).map(|i| format!("eta[{i}]")).collect()
        } else if labels.len() != c.nrows() {
            return Err(Error::InvalidInput(
                "one label per row of C is required".into(),
            ));
        } else {
            labels
        };
        Ok(Self {
            c,
            m,
            labels,
            kind: ParamKind::Custom,
            interactions,
        })
    }

    /// Number of cells the spec applies to.
    pub fn cells(&self) -> usize {
        self.m.ncols()
    }

    /// Dimension of `eta`.
    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    /// Aggregated probabilities `M p`.
    pub fn aggregate(&self, p: &[f64]) -> Result<Vector> {
        if p.len() != self.cells() {
            return Err(Error::InvalidInput(format!(
                "probability vector has {} cells, spec expects {}",
                p.len(),
                self.cells()
            )));
        }
        let mp = &self.m * Vector::from_column_slice(p);
        if let Some((i, _)) = mp.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::NonPositiveMargin(i));
        }
        Ok(mp)
    }
}

/// `eta = C log(M p)`.
pub fn eta(p: &[f64], spec: &MarginalParamSpec) -> Result<Vector> {
    let mp = spec.aggregate(p)?;
    Ok(&spec.c * mp.map(f64::ln))
}

/// Derivative of `eta` with respect to `p`: `C diag(1 / M p) M`.
pub fn jacobian(p: &[f64], spec: &MarginalParamSpec) -> Result<Matrix> {
    let mp = spec.aggregate(p)?;
    let mut scaled = spec.m.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row /= mp[i];
    }
    Ok(&spec.c * scaled)
}

/// Expected information `F0` of `eta` at `p0` for sample size `n`, and its
/// inverse `V0`, the delta-method covariance `J (diag p0 - p0 p0') J' / n`.
pub fn fisher_info(
    p0: &ProbabilityVector,
    spec: &MarginalParamSpec,
    n: f64,
) -> Result<(Matrix, Matrix)> {
    let v0 = eta_covariance(p0.as_slice(), spec, n)?;
    let f0 = linalg::spd_inverse(&v0, "eta covariance is singular at p0")?;
    Ok((f0, v0))
}

/// Delta-method covariance of `eta(p_hat)` under multinomial sampling at `p`.
pub fn eta_covariance(p: &[f64], spec: &MarginalParamSpec, n: f64) -> Result<Matrix> {
    if !(n > 0.0) {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    let j = jacobian(p, spec)?;
    let pv = Vector::from_column_slice(p);
    let jp = &j * &pv;
    let mut jd = j.clone();
    for (c, mut col) in jd.column_iter_mut().enumerate() {
        col *= p[c];
    }
    let mut v = (&jd * j.transpose() - &jp * jp.transpose()) / n;
    linalg::symmetrize(&mut v);
    Ok(v)
}

struct Builder {
    t: usize,
    m_rows: Vec<Vec<f64>>,
    c_rows: Vec<Vec<(usize, f64)>>,
    labels: Vec<String>,
}

impl Builder {
    fn new(t: usize) -> Self {
        Self {
            t,
            m_rows: Vec::new(),
            c_rows: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn margin<F: Fn(usize) -> bool>(&mut self, select: F) -> usize {
        self.m_rows.push(
            (0..self.t)
                .map(|c| if select(c) { 1.0 } else { 0.0 })
                .collect(),
        );
        self.m_rows.len() - 1
    }

    fn param(&mut self, terms: Vec<(usize, f64)>, label: String) {
        self.c_rows.push(terms);
        self.labels.push(label);
    }

    fn finish(self, kind: ParamKind, interactions: Vec<usize>) -> MarginalParamSpec {
        let m = Matrix::from_fn(self.m_rows.len(), self.t, |i, j| self.m_rows[i][j]);
        let mut c = Matrix::zeros(self.c_rows.len(), self.m_rows.len());
        for (i, terms) in self.c_rows.iter().enumerate() {
            for &(col, v) in terms {
                c[(i, col)] += v;
            }
        }
        MarginalParamSpec {
            c,
            m,
            labels: self.labels,
            kind,
            interactions,
        }
    }
}

fn check_two_way(nrows: usize, ncols: usize) -> Result<()> {
    check_dims(&[nrows, ncols])
}

/// Baseline-category marginal logits plus the `(R-1)(C-1)` local log-odds
/// ratios `log(p[i,j] p[i+1,j+1] / (p[i,j+1] p[i+1,j]))`, in that order.
pub fn build_local_logodds(nrows: usize, ncols: usize) -> Result<MarginalParamSpec> {
    check_two_way(nrows, ncols)?;
    let t = nrows * ncols;
    let cell = |i: usize, j: usize| linear_index(&[nrows, ncols], &[i, j]);
    let mut b = Builder::new(t);

    let rows: Vec<usize> = (0..nrows).map(|i| b.margin(|c| c / ncols == i)).collect();
    let cols: Vec<usize> = (0..ncols).map(|j| b.margin(|c| c % ncols == j)).collect();
    let cells: Vec<usize> = (0..t).map(|k| b.margin(|c| c == k)).collect();

    for i in 1..nrows {
        b.param(
            vec![(rows[i], 1.0), (rows[0], -1.0)],
            format!("row logit {}:1", i + 1),
        );
    }
    for j in 1..ncols {
        b.param(
            vec![(cols[j], 1.0), (cols[0], -1.0)],
            format!("col logit {}:1", j + 1),
        );
    }
    let first = b.c_rows.len();
    for i in 0..nrows - 1 {
        for j in 0..ncols - 1 {
            b.param(
                vec![
                    (cells[cell(i, j)], 1.0),
                    (cells[cell(i + 1, j + 1)], 1.0),
                    (cells[cell(i, j + 1)], -1.0),
                    (cells[cell(i + 1, j)], -1.0),
                ],
                format!("local log-OR ({},{})", i + 1, j + 1),
            );
        }
    }
    let interactions = (first..b.c_rows.len()).collect();
    Ok(b.finish(ParamKind::LocalLogodds, interactions))
}

/// Global marginal logits `log P(X > i) / P(X <= i)` plus the global
/// log-odds ratios of the 2x2 collapsing at each cut point `(i, j)`.
pub fn build_global_logodds(nrows: usize, ncols: usize) -> Result<MarginalParamSpec> {
    check_two_way(nrows, ncols)?;
    let t = nrows * ncols;
    let mut b = Builder::new(t);
    let row_of = |c: usize| c / ncols;
    let col_of = |c: usize| c % ncols;

    let mut params = Vec::new();
    for i in 1..nrows {
        let lo = b.margin(|c| row_of(c) < i);
        let hi = b.margin(|c| row_of(c) >= i);
        params.push((
            vec![(hi, 1.0), (lo, -1.0)],
            format!("row global logit >{i}"),
        ));
    }
    for j in 1..ncols {
        let lo = b.margin(|c| col_of(c) < j);
        let hi = b.margin(|c| col_of(c) >= j);
        params.push((
            vec![(hi, 1.0), (lo, -1.0)],
            format!("col global logit >{j}"),
        ));
    }
    let first = params.len();
    for i in 1..nrows {
        for j in 1..ncols {
            let ll = b.margin(|c| row_of(c) < i && col_of(c) < j);
            let lh = b.margin(|c| row_of(c) < i && col_of(c) >= j);
            let hl = b.margin(|c| row_of(c) >= i && col_of(c) < j);
            let hh = b.margin(|c| row_of(c) >= i && col_of(c) >= j);
            params.push((
                vec![(ll, 1.0), (hh, 1.0), (lh, -1.0), (hl, -1.0)],
                format!("global log-OR ({i},{j})"),
            ));
        }
    }
    let total = params.len();
    for (terms, label) in params {
        b.param(terms, label);
    }
    Ok(b.finish(ParamKind::GlobalLogodds, (first..total).collect()))
}

/// Global logits of each variable's marginal distribution, completed by the
/// global log-odds ratios. Identical matrices to
/// [`build_global_logodds`]; the default cone constrains the logits of the
/// second variable to dominate those of the first, i.e. the column margin is
/// stochastically larger than the row margin (square tables only).
pub fn build_global_logit(nrows: usize, ncols: usize) -> Result<MarginalParamSpec> {
    if nrows != ncols {
        return Err(Error::Dimension(format!(
            "marginal stochastic ordering needs a square table, got {nrows}x{ncols}"
        )));
    }
    let mut spec = build_global_logodds(nrows, ncols)?;
    spec.kind = ParamKind::GlobalLogit;
    spec.interactions.clear();
    Ok(spec)
}

/// Inequality rows `D` (and optional equality rows `E`) on `eta`, with the
/// dimensions `q` of the lineality space and `r` of the linear span.
#[derive(Debug, Clone)]
pub struct ConeSpec {
    pub d: Matrix,
    pub e: Matrix,
    pub q: usize,
    pub r: usize,
}

impl ConeSpec {
    /// `E` may have zero rows. `dim` is the length of `eta` (t - 1).
    pub fn new(d: Matrix, e: Matrix, dim: usize) -> Result<Self> {
        if d.ncols() != dim || e.ncols() != dim {
            return Err(Error::InvalidInput(format!(
                "constraint matrices must have {dim} columns"
            )));
        }
        let k = d.nrows();
        let ne = e.nrows();
        if k + ne > dim {
            return Err(Error::RankDeficient);
        }
        let mut stacked = Matrix::zeros(k + ne, dim);
        stacked.rows_mut(0, ne).copy_from(&e);
        stacked.rows_mut(ne, k).copy_from(&d);
        if k + ne > 0 && linalg::numeric_rank(&stacked, 1e-10) < k + ne {
            return Err(Error::RankDeficient);
        }
        Ok(Self {
            d,
            e,
            q: dim - k - ne,
            r: dim - ne,
        })
    }

    /// `D` selects the spec's interaction rows; for global-logit specs it
    /// compares the two marginal logit blocks.
    pub fn for_spec(spec: &MarginalParamSpec) -> Result<Self> {
        let dim = spec.dim();
        match spec.kind {
            ParamKind::GlobalLogit => {
                let r = (dim as f64 + 1.0).sqrt().round() as usize;
                let cuts = r - 1;
                let mut d = Matrix::zeros(cuts, dim);
                for i in 0..cuts {
                    d[(i, cuts + i)] = 1.0;
                    d[(i, i)] = -1.0;
                }
                Self::new(d, Matrix::zeros(0, dim), dim)
            }
            _ => {
                let k = spec.interactions.len();
                let mut d = Matrix::zeros(k, dim);
                for (row, &col) in spec.interactions.iter().enumerate() {
                    d[(row, col)] = 1.0;
                }
                Self::new(d, Matrix::zeros(0, dim), dim)
            }
        }
    }

    /// Number of inequality constraints.
    pub fn k(&self) -> usize {
        self.d.nrows()
    }

    /// Number of equality constraints.
    pub fn n_eq(&self) -> usize {
        self.e.nrows()
    }

    /// `[E; D]`: equality rows first.
    pub fn stacked(&self) -> Matrix {
        let (ne, k) = (self.n_eq(), self.k());
        let mut s = Matrix::zeros(ne + k, self.d.ncols());
        s.rows_mut(0, ne).copy_from(&self.e);
        s.rows_mut(ne, k).copy_from(&self.d);
        s
    }

    /// Covariance of `D y` for `y ~ N(0, V)` after projecting `y` onto
    /// `{E eta = 0}`: `D V D' - D V E' (E V E')^-1 E V D'`.
    pub fn constrained_cov(&self, v: &Matrix) -> Result<Matrix> {
        let dvd = &self.d * v * self.d.transpose();
        let mut out = if self.n_eq() == 0 {
            dvd
        } else {
            let dve = &self.d * v * self.e.transpose();
            let eve = &self.e * v * self.e.transpose();
            let eve_inv = linalg::spd_inverse(&eve, "E V E' is singular")?;
            dvd - &dve * eve_inv * dve.transpose()
        };
        linalg::symmetrize(&mut out);
        Ok(out)
    }
}

/// JSON form of a spec and cone, row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecFile {
    #[serde(default = "custom_kind")]
    pub kind: ParamKind,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    #[serde(rename = "E", default)]
    pub e: Vec<Vec<f64>>,
    #[serde(default)]
    pub labels: Vec<String>,
}

fn custom_kind() -> ParamKind {
    ParamKind::Custom
}

impl SpecFile {
    pub fn export(spec: &MarginalParamSpec, cone: &ConeSpec) -> Self {
        Self {
            kind: spec.kind,
            c: linalg::to_rows(&spec.c),
            m: linalg::to_rows(&spec.m),
            d: linalg::to_rows(&cone.d),
            e: linalg::to_rows(&cone.e),
            labels: spec.labels.clone(),
        }
    }

    pub fn into_spec(self) -> Result<(MarginalParamSpec, ConeSpec)> {
        let c = linalg::from_rows(&self.c, 0)?;
        let m = linalg::from_rows(&self.m, 0)?;
        let dim = c.nrows();
        let d = linalg::from_rows(&self.d, dim)?;
        let e = linalg::from_rows(&self.e, dim)?;
        let mut spec = MarginalParamSpec::custom(c, m, self.labels, Vec::new())?;
        spec.kind = self.kind;
        let cone = ConeSpec::new(d, e, dim)?;
        Ok((spec, cone))
    }
}
