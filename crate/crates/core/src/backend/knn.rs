//! Distance-weighted k-nearest-neighbour quantile regression.
//!
//! Features are z-scored with context statistics (constant columns are left
//! unscaled). For each test row the `k` nearest context rows under Euclidean
//! distance are weighted by a Gaussian kernel, and the prediction is the
//! weighted label mean plus quantiles read off the weighted empirical CDF.
//!
//! The CDF places each sorted label at the midpoint of its weight step and
//! interpolates linearly between those knots, clamping to the smallest and
//! largest neighbour label outside them. With equal weights this is the
//! usual `(i - 0.5) / n` plotting-position quantile.

use std::cmp::Ordering;
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};

use log::{debug, warn};

use super::{BackendError, Matrix, QuantilePrediction, QuantileRegressor, QuantileRequest, TrainingContext};

/// Rows used when estimating the default bandwidth; larger contexts are
/// subsampled with an even stride.
pub const MAX_BANDWIDTH_ROWS: usize = 3000;

/// Columns with standard deviation below this are treated as constant.
const MIN_SCALE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnQuantile {
    pub k_neighbors: usize,
    /// Kernel bandwidth in standardized units; `None` uses the median
    /// pairwise distance of the context.
    pub bandwidth: Option<f64>,
}

impl Default for KnnQuantile {
    fn default() -> Self {
        Self {
            k_neighbors: 64,
            bandwidth: None,
        }
    }
}

impl KnnQuantile {
    pub fn new(k_neighbors: usize, bandwidth: Option<f64>) -> Result<Self, BackendError> {
        if k_neighbors == 0 {
            return Err(BackendError::InvalidInput("k_neighbors must be >= 1".into()));
        }
        if let Some(h) = bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(BackendError::InvalidInput(format!(
                    "bandwidth must be positive, got {h}"
                )));
            }
        }
        Ok(Self {
            k_neighbors,
            bandwidth,
        })
    }
}

/// Per-column centering and scaling derived from a context.
#[derive(Debug, Clone)]
pub(crate) struct Standardizer {
    mean: Vec<f64>,
    inv_scale: Vec<f64>,
}

impl Standardizer {
    pub(crate) fn fit(x: &Matrix) -> Self {
        let n = x.rows() as f64;
        let d = x.cols();
        let mut mean = vec![0.0; d];
        for row in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > MIN_SCALE {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, inv_scale }
    }

    pub(crate) fn transform(&self, x: &Matrix) -> Matrix {
        let mut data = Vec::with_capacity(x.rows() * x.cols());
        for row in x.iter_rows() {
            data.extend(
                row.iter()
                    .zip(&self.mean)
                    .zip(&self.inv_scale)
                    .map(|((v, m), s)| (v - m) * s),
            );
        }
        Matrix::new(x.rows(), x.cols(), data).expect("shape preserved")
    }
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median Euclidean distance over all distinct row pairs; `None` with fewer
/// than two rows.
pub(crate) fn median_pairwise_distance(z: &Matrix) -> Option<f64> {
    let n = z.rows();
    if n < 2 {
        return None;
    }
    let rows: Vec<usize> = if n > MAX_BANDWIDTH_ROWS {
        (0..MAX_BANDWIDTH_ROWS)
            .map(|i| i * n / MAX_BANDWIDTH_ROWS)
            .collect()
    } else {
        (0..n).collect()
    };
    let mut d = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        let ri = z.row(i);
        for &j in &rows[a + 1..] {
            d.push(squared_distance(ri, z.row(j)).sqrt());
        }
    }
    Some(median_in_place(&mut d))
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, &mut upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Weighted sample `(label, weight)`; weights need not be normalized.
///
/// Zero-weight entries are ignored. Panics if no entry has positive weight.
pub fn weighted_quantile(samples: &[(f64, f64)], level: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = samples.iter().copied().filter(|&(_, w)| w > 0.0).collect();
    assert!(!pts.is_empty(), "weighted_quantile needs a positive weight");
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pts.iter().map(|p| p.1).sum();
    let knots = cdf_knots(&pts, total);
    interpolate(&knots, level)
}

fn cdf_knots(sorted: &[(f64, f64)], total: f64) -> Vec<(f64, f64)> {
    let mut cum = 0.0;
    sorted
        .iter()
        .map(|&(y, w)| {
            let p = (cum + 0.5 * w) / total;
            cum += w;
            (p, y)
        })
        .collect()
}

/// `knots` are `(cdf position, label)` with non-decreasing positions.
fn interpolate(knots: &[(f64, f64)], level: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if level <= first.0 {
        return first.1;
    }
    if level >= last.0 {
        return last.1;
    }
    // first knot whose position exceeds the level; 1 <= hi < len
    let hi = knots.partition_point(|k| k.0 <= level);
    let (p0, y0) = knots[hi - 1];
    let (p1, y1) = knots[hi];
    if p1 <= p0 {
        return y1;
    }
    y0 + (level - p0) / (p1 - p0) * (y1 - y0)
}

struct Neighbour {
    index: usize,
    d2: f64,
}

fn nearest(z_ctx: &Matrix, query: &[f64], k: usize, scratch: &mut Vec<Neighbour>) {
    scratch.clear();
    scratch.extend(z_ctx.iter_rows().enumerate().map(|(index, row)| Neighbour {
        index,
        d2: squared_distance(row, query),
    }));
    // ties go to the lower training row
    let order = |a: &Neighbour, b: &Neighbour| match a.d2.total_cmp(&b.d2) {
        Ordering::Equal => a.index.cmp(&b.index),
        o => o,
    };
    if k < scratch.len() {
        scratch.select_nth_unstable_by(k - 1, order);
        scratch.truncate(k);
    }
    scratch.sort_unstable_by(order);
}

impl QuantileRegressor for KnnQuantile {
    fn predict_raw(
        &self,
        ctx: &TrainingContext,
        req: &QuantileRequest,
        _seed: u64,
    ) -> Result<QuantilePrediction, BackendError> {
        let n_train = ctx.len();
        let k = if self.k_neighbors > n_train {
            // ensembles clamp on most small contexts; say so once per process
            static WARNED: AtomicBool = AtomicBool::new(false);
            let msg = format!("k_neighbors = {} exceeds context size {n_train}; using {n_train}", self.k_neighbors);
            if WARNED.swap(true, AtomicOrdering::Relaxed) {
                debug!("{msg}");
            } else {
                warn!("{msg}");
            }
            n_train
        } else {
            self.k_neighbors
        };

        let scaler = Standardizer::fit(ctx.features());
        let z_ctx = scaler.transform(ctx.features());
        let z_test = scaler.transform(req.test_features());
        let bandwidth = match self.bandwidth {
            Some(h) => h,
            None => median_pairwise_distance(&z_ctx)
                .filter(|h| *h > 0.0)
                .unwrap_or(1.0),
        };
        let two_h2 = 2.0 * bandwidth * bandwidth;

        let n_test = z_test.rows();
        let levels = req.levels();
        let mut mean = Vec::with_capacity(n_test);
        let mut quantiles: Vec<Vec<f64>> = vec![Vec::with_capacity(n_test); levels.len()];
        let mut scratch = Vec::with_capacity(n_train);
        let mut weighted: Vec<(f64, f64)> = Vec::with_capacity(k);

        for query in z_test.iter_rows() {
            nearest(&z_ctx, query, k, &mut scratch);
            // shift by the nearest distance so the closest weight is exactly 1
            let d2_min = scratch[0].d2;
            weighted.clear();
            weighted.extend(scratch.iter().map(|nb| {
                let w = (-(nb.d2 - d2_min) / two_h2).exp();
                (ctx.labels()[nb.index], w)
            }));
            weighted.retain(|&(_, w)| w > 0.0);
            let total: f64 = weighted.iter().map(|p| p.1).sum();
            mean.push(weighted.iter().map(|(y, w)| y * w).sum::<f64>() / total);

            weighted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let knots = cdf_knots(&weighted, total);
            for (out, &level) in quantiles.iter_mut().zip(levels) {
                out.push(interpolate(&knots, level));
            }
        }

        Ok(QuantilePrediction {
            mean,
            quantiles: levels.iter().copied().zip(quantiles).collect(),
        })
    }
}
