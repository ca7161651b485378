//! Strength kernels for the six relation kinds.
//!
//! Domains: correlation [-1, 1]; similarity and causality [0, 1]; meta and
//! arithmetic {0, 1}. Lag is never scored on its own; it is carried by the
//! pairing of fragments.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use thiserror::Error;

use crate::datamodel::MetaLabels;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelationError {
    #[error("fragment lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("series of length {len} too short, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("unknown label key {0:?}")]
    UnknownKey(String),
    #[error("empty fragment")]
    Empty,
    #[error("{0} relation needs {1}")]
    MissingContext(RelationKind, &'static str),
    #[error("lag is not scored on its own")]
    LagNotScored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Correlation,
    Similarity,
    Causality,
    Lag,
    Meta,
    Arithmetic,
}

impl RelationKind {
    pub const ALL: [RelationKind; 6] = [
        RelationKind::Correlation,
        RelationKind::Similarity,
        RelationKind::Causality,
        RelationKind::Lag,
        RelationKind::Meta,
        RelationKind::Arithmetic,
    ];

    /// Closed strength domain `(lo, hi)`.
    pub fn domain(self) -> (f64, f64) {
        match self {
            RelationKind::Correlation => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }

    pub fn is_directed(self) -> bool {
        self == RelationKind::Causality
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Correlation => "correlation",
            RelationKind::Similarity => "similarity",
            RelationKind::Causality => "causality",
            RelationKind::Lag => "lag",
            RelationKind::Meta => "meta",
            RelationKind::Arithmetic => "arithmetic",
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Sum,
    Avg,
    Var,
    Min,
    Max,
}

impl Operator {
    pub fn apply(self, values: &[f64]) -> f64 {
        let n = values.len() as f64;
        match self {
            Operator::Sum => values.iter().sum(),
            Operator::Avg => values.iter().sum::<f64>() / n,
            Operator::Var => {
                let mean = values.iter().sum::<f64>() / n;
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
            }
            Operator::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
            Operator::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
}

pub const DEFAULT_EQ_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArithmeticSpec {
    pub op: Operator,
    pub cmp: Comparator,
    /// Relative tolerance for `=`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl ArithmeticSpec {
    pub fn new(op: Operator, cmp: Comparator) -> Self {
        Self { op, cmp, tol: None }
    }
}

/// Sample Pearson correlation. A constant argument yields 0.
pub fn pearson_strength(a: &[f64], b: &[f64]) -> Result<f64, RelationError> {
    check_lengths(a, b)?;
    if a.len() < 2 {
        return Err(RelationError::TooShort { len: a.len(), needed: 2 });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Ok(0.0);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// `1 - ED / sqrt(L)` on inputs already min-max-normalized into [0, 1].
pub fn similarity_strength(a: &[f64], b: &[f64]) -> Result<f64, RelationError> {
    check_lengths(a, b)?;
    if a.is_empty() {
        return Err(RelationError::Empty);
    }
    let ed = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    Ok((1.0 - ed / (a.len() as f64).sqrt()).clamp(0.0, 1.0))
}

/// Outcome of a Granger F-test. `singular` marks a rank-deficient design,
/// for which the strength is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrangerTest {
    pub f_statistic: f64,
    pub p_value: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub singular: bool,
}

impl GrangerTest {
    pub fn strength(&self) -> f64 {
        if self.singular {
            0.0
        } else {
            (1.0 - self.p_value).clamp(0.0, 1.0)
        }
    }
}

/// Minimum series length for a Granger test with `max_lag` lags: the
/// unrestricted model needs at least one residual degree of freedom.
pub fn granger_min_len(max_lag: usize) -> usize {
    3 * max_lag + 2
}

/// Largest lag order usable on a series of `len` samples, capped at `max_lag`.
pub fn effective_max_lag(len: usize, max_lag: usize) -> usize {
    max_lag.min(len.saturating_sub(2) / 3)
}

/// F-test of `effect_t ~ effect lags` against `effect_t ~ effect lags + cause lags`,
/// both with intercept.
pub fn granger_test(cause: &[f64], effect: &[f64], max_lag: usize) -> Result<GrangerTest, RelationError> {
    check_lengths(cause, effect)?;
    let needed = granger_min_len(max_lag.max(1));
    if max_lag == 0 || cause.len() < needed {
        return Err(RelationError::TooShort { len: cause.len(), needed });
    }
    let p = max_lag;
    let n = effect.len() - p;
    let restricted = DMatrix::from_fn(n, 1 + p, |row, col| match col {
        0 => 1.0,
        lag => effect[row + p - lag],
    });
    let unrestricted = DMatrix::from_fn(n, 1 + 2 * p, |row, col| match col {
        0 => 1.0,
        c if c <= p => effect[row + p - c],
        c => cause[row + p - (c - p)],
    });
    let target = DVector::from_iterator(n, effect[p..].iter().copied());
    let df_num = p;
    let df_den = n - (1 + 2 * p);
    let singular = GrangerTest { f_statistic: 0.0, p_value: 1.0, df_num, df_den, singular: true };
    let (Some(rss_r), Some(rss_u)) = (least_squares_rss(restricted, &target), least_squares_rss(unrestricted, &target))
    else {
        return Ok(singular);
    };
    let scale = target.norm_squared().max(f64::MIN_POSITIVE);
    if rss_u <= 1e-24 * scale {
        // exact fit of the unrestricted model
        let improves = rss_r > 1e-24 * scale;
        return Ok(GrangerTest {
            f_statistic: if improves { f64::INFINITY } else { 0.0 },
            p_value: if improves { 0.0 } else { 1.0 },
            df_num,
            df_den,
            singular: !improves,
        });
    }
    let f = ((rss_r - rss_u).max(0.0) / df_num as f64) / (rss_u / df_den as f64);
    let dist = FisherSnedecor::new(df_num as f64, df_den as f64).expect("positive degrees of freedom");
    Ok(GrangerTest { f_statistic: f, p_value: dist.sf(f), df_num, df_den, singular: false })
}

/// `1 - p` of the Granger F-test; rank-deficient designs give 0.
pub fn granger_strength(cause: &[f64], effect: &[f64], max_lag: usize) -> Result<f64, RelationError> {
    granger_test(cause, effect, max_lag).map(|t| t.strength())
}

/// Residual sum of squares of an OLS fit, `None` when the design is rank deficient.
fn least_squares_rss(design: DMatrix<f64>, target: &DVector<f64>) -> Option<f64> {
    let col_scale: f64 = design.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let qr = design.clone().qr();
    let r = qr.r();
    let tol = 1e-10 * col_scale.max(f64::MIN_POSITIVE) * (design.nrows() as f64).sqrt();
    if r.diagonal().iter().any(|d| d.abs() <= tol) {
        return None;
    }
    let qty = qr.q().transpose() * target;
    let beta = r.solve_upper_triangular(&qty)?;
    Some((target - design * beta).norm_squared())
}

/// 1 iff both series carry `key` with equal values.
pub fn meta_strength(labels: &MetaLabels, series_a: &str, series_b: &str, key: &str) -> Result<f64, RelationError> {
    if !labels.has_key(key) {
        return Err(RelationError::UnknownKey(key.to_string()));
    }
    Ok(match (labels.get(series_a, key), labels.get(series_b, key)) {
        (Some(x), Some(y)) if x == y => 1.0,
        _ => 0.0,
    })
}

/// 1 iff `op(a) cmp op(b)`, with `=` under relative tolerance `tol`.
pub fn arithmetic_strength(a: &[f64], b: &[f64], spec: ArithmeticSpec, tol: f64) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (x, y) = (spec.op.apply(a), spec.op.apply(b));
    let holds = match spec.cmp {
        Comparator::Ge => x >= y,
        Comparator::Le => x <= y,
        Comparator::Eq => (x - y).abs() <= tol * x.abs().max(y.abs()),
    };
    if holds {
        1.0
    } else {
        0.0
    }
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<(), RelationError> {
    if a.len() != b.len() {
        return Err(RelationError::LengthMismatch { left: a.len(), right: b.len() });
    }
    Ok(())
}

/// One side of a pairwise evaluation, in the three value spaces the kernels use.
#[derive(Debug, Clone, Copy)]
pub struct FragmentView<'a> {
    pub series: &'a str,
    /// Compressed values, original units.
    pub raw: &'a [f64],
    /// Compressed values after series-level min-max normalization.
    pub normalized: &'a [f64],
    /// Original samples covered by the fragment.
    pub original: &'a [f64],
}

#[derive(Debug, Clone, Copy)]
pub struct StrengthContext<'a> {
    pub labels: Option<&'a MetaLabels>,
    pub meta_key: Option<&'a str>,
    pub arithmetic: Option<ArithmeticSpec>,
    pub max_lag: usize,
}

pub const DEFAULT_MAX_LAG: usize = 4;

impl Default for StrengthContext<'_> {
    fn default() -> Self {
        Self { labels: None, meta_key: None, arithmetic: None, max_lag: DEFAULT_MAX_LAG }
    }
}

/// Dispatch to the kernel for `kind`. Causality treats `a` as the cause.
/// Correlation and causality use raw compressed values, similarity the
/// normalized ones, arithmetic the original samples. The Granger lag order
/// is reduced to what the fragment length supports.
pub fn strength(kind: RelationKind, a: &FragmentView, b: &FragmentView, ctx: &StrengthContext) -> Result<f64, RelationError> {
    match kind {
        RelationKind::Correlation => pearson_strength(a.raw, b.raw),
        RelationKind::Similarity => similarity_strength(a.normalized, b.normalized),
        RelationKind::Causality => {
            let lag = effective_max_lag(a.raw.len(), ctx.max_lag);
            if lag == 0 {
                return Err(RelationError::TooShort { len: a.raw.len(), needed: granger_min_len(1) });
            }
            granger_strength(a.raw, b.raw, lag)
        }
        RelationKind::Meta => {
            let labels = ctx.labels.ok_or(RelationError::MissingContext(kind, "labels"))?;
            let key = ctx.meta_key.ok_or(RelationError::MissingContext(kind, "a label key"))?;
            meta_strength(labels, a.series, b.series, key)
        }
        RelationKind::Arithmetic => {
            let spec = ctx.arithmetic.ok_or(RelationError::MissingContext(kind, "an operator and comparator"))?;
            Ok(arithmetic_strength(a.original, b.original, spec, spec.tol.unwrap_or(DEFAULT_EQ_TOLERANCE)))
        }
        RelationKind::Lag => Err(RelationError::LagNotScored),
    }
}
