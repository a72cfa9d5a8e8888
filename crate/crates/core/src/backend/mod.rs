//! Quantile-capable regressors.
//!
//! Every backend answers the same question: given a labelled context and a
//! batch of test rows, return a point estimate plus the requested quantiles
//! for each test row. Outputs are validated before they leave this module,
//! whatever produced them.

mod external;
mod knn;
pub mod protocol;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

pub use external::{Endpoint, ExternalBackend, DEFAULT_TIMEOUT};
pub use knn::{weighted_quantile, KnnQuantile};

/// Default lower/upper band used for the IQR.
pub const DEFAULT_QUANTILES: [f64; 2] = [0.15, 0.85];

/// Two quantile levels closer than this are the same level.
pub const LEVEL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("backend reported failure: {0}")]
    Remote(String),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, BackendError> {
        if data.len() != rows * cols {
            return Err(BackendError::InvalidInput(format!(
                "{} values do not fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, BackendError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(BackendError::InvalidInput(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics; an empty-width matrix has no usable rows anyway
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// New matrix holding the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// The labelled examples a model conditions on.
#[derive(Debug, Clone)]
pub struct TrainingContext {
    features: Matrix,
    labels: Vec<f64>,
}

impl TrainingContext {
    pub fn new(features: Matrix, labels: Vec<f64>) -> Result<Self, BackendError> {
        if features.rows() == 0 {
            return Err(BackendError::InvalidInput("empty training context".into()));
        }
        if features.rows() != labels.len() {
            return Err(BackendError::InvalidInput(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if !features.all_finite() || !labels.iter().all(|v| v.is_finite()) {
            return Err(BackendError::InvalidInput(
                "non-finite value in training context".into(),
            ));
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Test rows plus the quantile levels wanted for each.
#[derive(Debug, Clone)]
pub struct QuantileRequest {
    test_features: Matrix,
    levels: Vec<f64>,
}

impl QuantileRequest {
    pub fn new(test_features: Matrix, levels: Vec<f64>) -> Result<Self, BackendError> {
        if test_features.rows() == 0 {
            return Err(BackendError::InvalidInput("no test rows".into()));
        }
        if !test_features.all_finite() {
            return Err(BackendError::InvalidInput(
                "non-finite value in test features".into(),
            ));
        }
        validate_levels(&levels)?;
        Ok(Self {
            test_features,
            levels,
        })
    }

    /// Request with the default 0.15/0.85 band.
    pub fn with_default_levels(test_features: Matrix) -> Result<Self, BackendError> {
        Self::new(test_features, DEFAULT_QUANTILES.to_vec())
    }

    pub fn test_features(&self) -> &Matrix {
        &self.test_features
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}

pub fn validate_levels(levels: &[f64]) -> Result<(), BackendError> {
    if levels.is_empty() {
        return Err(BackendError::InvalidInput("no quantile levels".into()));
    }
    if let Some(bad) = levels.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(BackendError::InvalidInput(format!(
            "quantile level {bad} outside (0, 1)"
        )));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BackendError::InvalidInput(
            "quantile levels must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Point estimates and per-level quantiles for a batch of test rows.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantilePrediction {
    pub mean: Vec<f64>,
    /// `(level, values)` sorted by level.
    pub quantiles: Vec<(f64, Vec<f64>)>,
}

impl QuantilePrediction {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn levels(&self) -> Vec<f64> {
        self.quantiles.iter().map(|(l, _)| *l).collect()
    }

    pub fn quantile(&self, level: f64) -> Option<&[f64]> {
        self.quantiles
            .iter()
            .find(|(l, _)| (l - level).abs() < LEVEL_TOLERANCE)
            .map(|(_, v)| v.as_slice())
    }

    /// Per-point width of the `[lower, upper]` band.
    pub fn band_width(&self, lower: f64, upper: f64) -> Option<Vec<f64>> {
        let lo = self.quantile(lower)?;
        let hi = self.quantile(upper)?;
        Some(hi.iter().zip(lo).map(|(h, l)| h - l).collect())
    }

    /// Per-point IQR for the default 0.15/0.85 band.
    pub fn iqr(&self) -> Option<Vec<f64>> {
        self.band_width(DEFAULT_QUANTILES[0], DEFAULT_QUANTILES[1])
    }

    /// Check shape, finiteness and per-point monotonicity against the
    /// levels that were requested.
    pub fn validate(&self, n_test: usize, levels: &[f64]) -> Result<(), BackendError> {
        let fail = |msg: String| Err(BackendError::ProtocolError(msg));
        if self.mean.len() != n_test {
            return fail(format!(
                "mean has {} values, expected {n_test}",
                self.mean.len()
            ));
        }
        if self.quantiles.len() != levels.len() {
            return fail(format!(
                "{} quantile levels returned, {} requested",
                self.quantiles.len(),
                levels.len()
            ));
        }
        for ((got, values), want) in self.quantiles.iter().zip(levels) {
            if (got - want).abs() >= LEVEL_TOLERANCE {
                return fail(format!("unexpected quantile level {got}, wanted {want}"));
            }
            if values.len() != n_test {
                return fail(format!(
                    "quantile {got} has {} values, expected {n_test}",
                    values.len()
                ));
            }
        }
        if !self.mean.iter().all(|v| v.is_finite())
            || !self
                .quantiles
                .iter()
                .all(|(_, v)| v.iter().all(|x| x.is_finite()))
        {
            return fail("non-finite value in prediction".into());
        }
        for pair in self.quantiles.windows(2) {
            let (lo_level, lo) = &pair[0];
            let (hi_level, hi) = &pair[1];
            if let Some(i) = lo.iter().zip(hi).position(|(a, b)| b < a) {
                return fail(format!(
                    "quantile {hi_level} below quantile {lo_level} at test row {i}"
                ));
            }
        }
        Ok(())
    }
}

/// Anything that can turn a context plus a request into quantile predictions.
pub trait QuantileRegressor: Send + Sync {
    fn predict_raw(
        &self,
        ctx: &TrainingContext,
        req: &QuantileRequest,
        seed: u64,
    ) -> Result<QuantilePrediction, BackendError>;
}

/// Run a regressor and validate its output at the boundary.
pub fn predict(
    regressor: &dyn QuantileRegressor,
    ctx: &TrainingContext,
    req: &QuantileRequest,
    seed: u64,
) -> Result<QuantilePrediction, BackendError> {
    if ctx.features().cols() != req.test_features().cols() {
        return Err(BackendError::DimensionMismatch {
            expected: ctx.features().cols(),
            actual: req.test_features().cols(),
        });
    }
    let out = regressor.predict_raw(ctx, req, seed)?;
    out.validate(req.test_features().rows(), req.levels())?;
    Ok(out)
}

/// Predicts the context label mean for every row, with a fixed-width band
/// `mean + (level - 0.5) * band_width` around it. Test double.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EchoBackend {
    pub band_width: f64,
}

impl QuantileRegressor for EchoBackend {
    fn predict_raw(
        &self,
        ctx: &TrainingContext,
        req: &QuantileRequest,
        _seed: u64,
    ) -> Result<QuantilePrediction, BackendError> {
        let n = req.test_features().rows();
        let mean = ctx.labels().iter().sum::<f64>() / ctx.len() as f64;
        Ok(QuantilePrediction {
            mean: vec![mean; n],
            quantiles: req
                .levels()
                .iter()
                .map(|&l| (l, vec![mean + (l - 0.5) * self.band_width; n]))
                .collect(),
        })
    }
}

/// Backend selection as written on the command line or in a config file:
/// `builtin`, `echo`, or `external:<endpoint>`.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Builtin,
    Echo,
    External(Endpoint),
}

impl FromStr for BackendSpec {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "builtin" => Ok(Self::Builtin),
            "echo" => Ok(Self::Echo),
            other => match other.strip_prefix("external:") {
                Some(ep) => Ok(Self::External(ep.parse()?)),
                None => Err(BackendError::InvalidInput(format!(
                    "unknown backend {other:?}; expected builtin, echo or external:<endpoint>"
                ))),
            },
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Builtin => f.write_str("builtin"),
            Self::Echo => f.write_str("echo"),
            Self::External(ep) => write!(f, "external:{ep}"),
        }
    }
}

/// A configured, ready-to-call backend.
#[derive(Debug, Clone)]
pub enum Backend {
    Builtin(KnnQuantile),
    Echo(EchoBackend),
    External(ExternalBackend),
}

impl Backend {
    pub fn from_spec(spec: &BackendSpec, knn: KnnQuantile, timeout: Duration) -> Self {
        match spec {
            BackendSpec::Builtin => Self::Builtin(knn),
            BackendSpec::Echo => Self::Echo(EchoBackend::default()),
            BackendSpec::External(ep) => Self::External(ExternalBackend::new(ep.clone(), timeout)),
        }
    }

    pub fn predict(
        &self,
        ctx: &TrainingContext,
        req: &QuantileRequest,
        seed: u64,
    ) -> Result<QuantilePrediction, BackendError> {
        predict(self, ctx, req, seed)
    }
}

impl QuantileRegressor for Backend {
    fn predict_raw(
        &self,
        ctx: &TrainingContext,
        req: &QuantileRequest,
        seed: u64,
    ) -> Result<QuantilePrediction, BackendError> {
        match self {
            Self::Builtin(b) => b.predict_raw(ctx, req, seed),
            Self::Echo(b) => b.predict_raw(ctx, req, seed),
            Self::External(b) => b.predict_raw(ctx, req, seed),
        }
    }
}
