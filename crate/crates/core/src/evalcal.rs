//! Accuracy metrics, uncertainty/error diagnostics and quantile calibration.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::backend::{BackendError, QuantilePrediction};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("input is constant; correlation is undefined")]
    ConstantInput,
    #[error("prediction lacks quantile level {0}")]
    MissingLevel(f64),
    #[error("invalid coverage level {0}; must lie in (0, 1)")]
    InvalidLevel(f64),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<(), EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_lengths(pred, truth)?;
    if pred.is_empty() {
        return Err(EvalError::TooFewPoints { needed: 1, got: 0 });
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Sample Pearson correlation. Constant inputs are an error, never 0.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_lengths(x, y)?;
    if x.len() < 2 {
        return Err(EvalError::TooFewPoints {
            needed: 2,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(EvalError::ConstantInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankCorrelation {
    pub rho: f64,
    /// Two-sided p-value from the t approximation with n - 2 degrees of freedom.
    pub p_value: f64,
    pub n: usize,
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<RankCorrelation, EvalError> {
    check_lengths(x, y)?;
    if x.len() < 3 {
        return Err(EvalError::TooFewPoints {
            needed: 3,
            got: x.len(),
        });
    }
    let rho = pearson(&average_ranks(x), &average_ranks(y))?;
    let n = x.len();
    let df = (n - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        2.0 * dist.sf(t.abs())
    };
    Ok(RankCorrelation { rho, p_value, n })
}

/// A correlation that may be undefined for constant inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correlation {
    Value(f64),
    Undefined,
}

impl Correlation {
    pub fn of(x: &[f64], y: &[f64]) -> Result<Self, EvalError> {
        match pearson(x, y) {
            Ok(r) => Ok(Self::Value(r)),
            Err(EvalError::ConstantInput) => Ok(Self::Undefined),
            Err(e) => Err(e),
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Self::Value(r) => Some(r),
            Self::Undefined => None,
        }
    }
}

impl fmt::Display for Correlation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Value(r) => write!(f, "{r}"),
            Self::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Correlation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Value(r) => s.serialize_f64(*r),
            Self::Undefined => s.serialize_str("undefined"),
        }
    }
}

/// MAE and Pearson r of one prediction vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub mae: f64,
    pub pearson: Correlation,
}

impl Metrics {
    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<Self, EvalError> {
        Ok(Self {
            mae: mae(pred, truth)?,
            pearson: Correlation::of(pred, truth)?,
        })
    }
}

/// Mean with a two-sided 95% Student-t interval half-width; no interval for
/// a single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci95: Option<f64>,
    pub n: usize,
}

pub fn mean_ci95(values: &[f64]) -> Option<MeanCi> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ci95 = (n >= 2).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("df > 0")
            .inverse_cdf(0.975);
        t * (var / n as f64).sqrt()
    });
    Some(MeanCi { mean, ci95, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoveragePoint {
    /// Nominal probability mass `upper - lower`.
    pub expected: f64,
    pub lower: f64,
    pub upper: f64,
    pub empirical: f64,
    pub n: usize,
    /// Bands whose width is numerically zero.
    pub degenerate_bands: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageCurve {
    pub points: Vec<CoveragePoint>,
}

impl CoverageCurve {
    pub fn max_abs_error(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p.empirical - p.expected).abs())
            .fold(0.0, f64::max)
    }
}

/// Expected coverage levels 0.1, 0.2, ..., 0.9.
pub fn default_coverage_grid() -> Vec<f64> {
    (1..=9).map(|i| f64::from(i) / 10.0).collect()
}

fn round_level(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Symmetric band `((1 - c) / 2, 1 - (1 - c) / 2)` for coverage `c`.
pub fn symmetric_band(coverage: f64) -> (f64, f64) {
    let lower = round_level((1.0 - coverage) / 2.0);
    (lower, round_level(1.0 - lower))
}

/// All band edges needed for a coverage grid, sorted and de-duplicated.
pub fn coverage_levels(grid: &[f64]) -> Result<Vec<f64>, EvalError> {
    let mut levels = Vec::with_capacity(2 * grid.len());
    for &c in grid {
        if !(c > 0.0 && c < 1.0) {
            return Err(EvalError::InvalidLevel(c));
        }
        let (l, u) = symmetric_band(c);
        levels.extend([l, u]);
    }
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    Ok(levels)
}

/// Fraction of labels strictly inside each band of a prediction.
pub fn coverage_from_prediction(
    pred: &QuantilePrediction,
    truth: &[f64],
    grid: &[f64],
) -> Result<CoverageCurve, EvalError> {
    check_lengths(&pred.mean, truth)?;
    if truth.is_empty() {
        return Err(EvalError::TooFewPoints { needed: 1, got: 0 });
    }
    let mut points = Vec::with_capacity(grid.len());
    for &c in grid {
        if !(c > 0.0 && c < 1.0) {
            return Err(EvalError::InvalidLevel(c));
        }
        let (l, u) = symmetric_band(c);
        let lo = pred.quantile(l).ok_or(EvalError::MissingLevel(l))?;
        let hi = pred.quantile(u).ok_or(EvalError::MissingLevel(u))?;
        let inside = truth
            .iter()
            .zip(lo.iter().zip(hi))
            .filter(|&(&y, (&a, &b))| a < y && y < b)
            .count();
        let degenerate_bands = lo.iter().zip(hi).filter(|&(&a, &b)| (b - a).abs() < 1e-12).count();
        points.push(CoveragePoint {
            expected: round_level(u - l),
            lower: l,
            upper: u,
            empirical: inside as f64 / truth.len() as f64,
            n: truth.len(),
            degenerate_bands,
        });
    }
    Ok(CoverageCurve { points })
}

/// Ask `predict` for every band edge of the grid at once and measure
/// coverage against `truth`.
pub fn coverage_curve<F>(mut predict: F, truth: &[f64], grid: &[f64]) -> Result<CoverageCurve, EvalError>
where
    F: FnMut(&[f64]) -> Result<QuantilePrediction, BackendError>,
{
    let levels = coverage_levels(grid)?;
    let pred = predict(&levels)?;
    coverage_from_prediction(&pred, truth, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IqrBin {
    pub iqr_min: f64,
    pub iqr_max: f64,
    pub count: usize,
    /// Mean absolute error of the bin.
    pub mae: f64,
    pub error_q1: f64,
    pub error_median: f64,
    pub error_q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IqrErrorBins {
    pub bins: Vec<IqrBin>,
    /// Rank correlation of per-point IQR with absolute error.
    pub spearman: Option<RankCorrelation>,
}

/// Linear-interpolation quantile of sorted data.
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-count bins over IQR with absolute-error summaries per bin.
pub fn iqr_error_bins(iqr: &[f64], point: &[f64], truth: &[f64], n_bins: usize) -> Result<IqrErrorBins, EvalError> {
    check_lengths(iqr, truth)?;
    check_lengths(point, truth)?;
    let n = truth.len();
    if n_bins == 0 || n < n_bins {
        return Err(EvalError::TooFewPoints {
            needed: n_bins.max(1),
            got: n,
        });
    }
    let abs_err: Vec<f64> = point.iter().zip(truth).map(|(p, t)| (p - t).abs()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| iqr[a].total_cmp(&iqr[b]).then(a.cmp(&b)));

    let mut bins = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let members = &order[b * n / n_bins..(b + 1) * n / n_bins];
        let mut errs: Vec<f64> = members.iter().map(|&i| abs_err[i]).collect();
        errs.sort_by(f64::total_cmp);
        bins.push(IqrBin {
            iqr_min: iqr[members[0]],
            iqr_max: iqr[members[members.len() - 1]],
            count: members.len(),
            mae: errs.iter().sum::<f64>() / errs.len() as f64,
            error_q1: sorted_quantile(&errs, 0.25),
            error_median: sorted_quantile(&errs, 0.5),
            error_q3: sorted_quantile(&errs, 0.75),
        });
    }
    let spearman = spearman(iqr, &abs_err).ok();
    Ok(IqrErrorBins { bins, spearman })
}

/// IQR-vs-error analysis of a 0.15/0.85 quantile prediction.
pub fn iqr_error_analysis(pred: &QuantilePrediction, truth: &[f64], n_bins: usize) -> Result<IqrErrorBins, EvalError> {
    let iqr = pred.iqr().ok_or(EvalError::MissingLevel(crate::backend::DEFAULT_QUANTILES[0]))?;
    iqr_error_bins(&iqr, &pred.mean, truth, n_bins)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterFit {
    /// `(mean_iqr, correlation)` per model.
    pub pairs: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub pearson: f64,
}

/// Least-squares line and Pearson r through `(mean IQR, correlation)` pairs.
pub fn iqr_correlation_fit(pairs: Vec<(f64, f64)>) -> Result<ScatterFit, EvalError> {
    if pairs.len() < 3 {
        return Err(EvalError::TooFewPoints {
            needed: 3,
            got: pairs.len(),
        });
    }
    let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let r = pearson(&x, &y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(ScatterFit {
        pairs,
        slope,
        intercept: my - slope * mx,
        pearson: r,
    })
}

/// Train and test row indices.
pub type Split = (Vec<usize>, Vec<usize>);

/// Shuffle `0..n` with `seed` and deal it into `k` folds whose sizes differ
/// by at most one. Returns `(train, test)` index pairs, each sorted.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Split>, EvalError> {
    if k < 2 || n < k {
        return Err(EvalError::TooFewPoints {
            needed: k.max(2),
            got: n,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let folds: Vec<Vec<usize>> = (0..k)
        .map(|f| {
            let mut test = idx[f * n / k..(f + 1) * n / k].to_vec();
            test.sort_unstable();
            test
        })
        .collect();
    Ok(folds
        .iter()
        .map(|test| {
            let mut in_test = vec![false; n];
            test.iter().for_each(|&i| in_test[i] = true);
            let train = (0..n).filter(|&i| !in_test[i]).collect();
            (train, test.clone())
        })
        .collect())
}

/// Seeded split into `(train, test)` with `round(train_fraction * n)` train rows.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EvalError::InvalidLevel(train_fraction));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(EvalError::TooFewPoints { needed: 2, got: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
