//! Contingency tables, cell probability vectors, and multinomial sampling.
//!
//! Cells are stored in lexicographic order of their index vectors with the
//! last variable varying fastest, so a 2x3 table is laid out as
//! `(0,0) (0,1) (0,2) (1,0) (1,1) (1,2)`. Every matrix builder in
//! [`crate::params`] assumes the same layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed counts on a d-way grid of cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    dims: Vec<usize>,
    counts: Vec<u64>,
    n: u64,
}

impl ContingencyTable {
    pub fn new(dims: Vec<usize>, counts: Vec<u64>) -> Result<Self> {
        check_dims(&dims)?;
        let expected: usize = dims.iter().product();
        if counts.len() != expected {
            return Err(Error::CountMismatch {
                dims,
                expected,
                found: counts.len(),
            });
        }
        let n = counts.iter().sum();
        Ok(Self { dims, counts, n })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Total count.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Number of cells.
    pub fn cells(&self) -> usize {
        self.counts.len()
    }

    /// Counts as floats, convenient for likelihood evaluation.
    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Observed proportions `counts / n`, floored at `floor` and renormalised
    /// so the result is a valid probability vector even with empty cells.
    pub fn proportions(&self, floor: f64) -> Result<ProbabilityVector> {
        if self.n == 0 {
            return Err(Error::InvalidInput("table has zero total count".into()));
        }
        let n = self.n as f64;
        let raw: Vec<f64> = self
            .counts
            .iter()
            .map(|&c| (c as f64 / n).max(floor))
            .collect();
        ProbabilityVector::normalized(raw)
    }

    /// Comma-separated counts, one row of the last dimension per line.
    pub fn to_text(&self) -> String {
        let width = *self.dims.last().unwrap_or(&1);
        self.counts
            .chunks(width)
            .map(|row| {
                row.iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }

    /// Row-major cell index of a multi-index.
    pub fn cell_index(&self, index: &[usize]) -> usize {
        linear_index(&self.dims, index)
    }
}

pub(crate) fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::Dimension("at least one variable is required".into()));
    }
    if let Some(d) = dims.iter().find(|&&d| d < 2) {
        return Err(Error::Dimension(format!(
            "every variable needs at least 2 categories, got {d} in {dims:?}"
        )));
    }
    Ok(())
}

pub(crate) fn linear_index(dims: &[usize], index: &[usize]) -> usize {
    dims.iter().zip(index).fold(0, |acc, (&d, &i)| acc * d + i)
}

/// Parse comma- or whitespace-separated non-negative integers into a table
/// with the given dimensions.
pub fn parse_table(text: &str, dims: &[usize]) -> Result<ContingencyTable> {
    check_dims(dims)?;
    let mut counts = Vec::new();
    for tok in text
        .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
    {
        if tok.starts_with('-') {
            return Err(Error::Parse(format!("negative count {tok:?}")));
        }
        let v: u64 = tok
            .parse()
            .map_err(|_| Error::Parse(format!("not a non-negative integer: {tok:?}")))?;
        counts.push(v);
    }
    ContingencyTable::new(dims.to_vec(), counts)
}

/// Strictly positive cell probabilities summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub const SUM_TOL: f64 = 1e-12;

    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidInput("empty probability vector".into()));
        }
        if let Some((i, v)) = p
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0) || !v.is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "probability {i} is {v}; all cell probabilities must be strictly positive"
            )));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {s}, not 1"
            )));
        }
        Ok(Self(p))
    }

    /// Divide by the sum before validating.
    pub fn normalized(mut p: Vec<f64>) -> Result<Self> {
        let s: f64 = p.iter().sum();
        if !(s > 0.0) {
            return Err(Error::InvalidInput("probabilities sum to zero".into()));
        }
        p.iter_mut().for_each(|v| *v /= s);
        Self::new(p)
    }

    pub fn uniform(t: usize) -> Self {
        Self(vec![1.0 / t as f64; t])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ProbabilityVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbabilityVector> for Vec<f64> {
    fn from(p: ProbabilityVector) -> Self {
        p.0
    }
}

impl std::ops::Index<usize> for ProbabilityVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Draw a multinomial table of size `n`; identical `(p, n, seed)` give
/// identical tables.
pub fn sample_multinomial(
    p: &ProbabilityVector,
    dims: &[usize],
    n: u64,
    seed: u64,
) -> Result<ContingencyTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = multinomial_counts(p.as_slice(), n, &mut rng);
    ContingencyTable::new(dims.to_vec(), counts)
}

/// Multinomial draw by sequential conditional binomials.
pub fn multinomial_counts<R: Rng + ?Sized>(p: &[f64], n: u64, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; p.len()];
    let mut remaining = n;
    let mut mass = 1.0f64;
    for (i, &pi) in p.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == p.len() {
            counts[i] = remaining;
            break;
        }
        let prob = (pi / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, prob)
            .expect("conditional probability lies in [0, 1]")
            .sample(rng);
        counts[i] = draw;
        remaining -= draw;
        mass -= pi;
        if mass <= 0.0 {
            break;
        }
    }
    counts
}
