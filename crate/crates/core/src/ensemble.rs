//! Uncertainty-guided post-hoc ensembling.
//!
//! A population of models is built, each conditioned on a random handful of
//! training subsets. Every model is scored by the mean width of its
//! 0.15–0.85 quantile band on the test rows, which needs no labels. The
//! lowest-scoring fraction of models is averaged into the final prediction
//! and compared against the plain ensemble mean, a single model on all data,
//! and the best single member in hindsight.

use std::collections::HashMap;
use std::fmt;

use log::warn;
use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::backend::{
    predict, validate_levels, BackendError, Matrix, QuantilePrediction, QuantileRegressor,
    QuantileRequest, TrainingContext, DEFAULT_QUANTILES,
};
use crate::evalcal::{iqr_correlation_fit, mae, mean_ci95, EvalError, MeanCi, Metrics, ScatterFit};

pub const DEFAULT_N_MODELS: usize = 400;
pub const DEFAULT_K_MAX: usize = 20;
pub const DEFAULT_FRACTION: f64 = 0.10;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("subset pool is empty")]
    EmptyPool,
    #[error("subset {0:?} has no records")]
    EmptySubset(String),
    #[error("duplicate subset id {0:?}")]
    DuplicateSubset(String),
    #[error("unknown subset id {0:?}")]
    UnknownSubset(String),
    #[error("no model results to aggregate")]
    EmptyResults,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("truth labels are required for this step")]
    MissingTruth,
    #[error("the all-data strategy needs the all-data prediction")]
    MissingAllDataPrediction,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model {model_index}: {source}")]
    Model {
        model_index: usize,
        #[source]
        source: BackendError,
    },
    #[error("all-data model: {0}")]
    AllDataModel(#[source] BackendError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A named group of training records, e.g. one mRNA target from one source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subset {
    pub id: String,
    pub indices: Vec<usize>,
}

/// The sampling units for model contexts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetPool {
    subsets: Vec<Subset>,
    by_id: HashMap<String, usize>,
}

impl SubsetPool {
    pub fn new(subsets: Vec<Subset>) -> Result<Self, EnsembleError> {
        if subsets.is_empty() {
            return Err(EnsembleError::EmptyPool);
        }
        let mut by_id = HashMap::with_capacity(subsets.len());
        for (pos, s) in subsets.iter().enumerate() {
            if s.indices.is_empty() {
                return Err(EnsembleError::EmptySubset(s.id.clone()));
            }
            if by_id.insert(s.id.clone(), pos).is_some() {
                return Err(EnsembleError::DuplicateSubset(s.id.clone()));
            }
        }
        Ok(Self { subsets, by_id })
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn subsets(&self) -> &[Subset] {
        &self.subsets
    }

    pub fn get(&self, id: &str) -> Option<&Subset> {
        self.by_id.get(id).map(|&p| &self.subsets[p])
    }

    /// Every record index, subsets concatenated in pool order.
    pub fn all_indices(&self) -> Vec<usize> {
        self.subsets.iter().flat_map(|s| s.indices.iter().copied()).collect()
    }

    /// Record indices for a list of subset ids, in the order given.
    pub fn indices_for(&self, ids: &[String]) -> Result<Vec<usize>, EnsembleError> {
        let mut out = Vec::new();
        for id in ids {
            let s = self.get(id).ok_or_else(|| EnsembleError::UnknownSubset(id.clone()))?;
            out.extend_from_slice(&s.indices);
        }
        Ok(out)
    }

    /// Pool restricted to the given ids (kept in pool order), and the rest.
    pub fn partition(&self, ids: &[String]) -> Result<(Option<Self>, Option<Self>), EnsembleError> {
        for id in ids {
            if self.get(id).is_none() {
                return Err(EnsembleError::UnknownSubset(id.clone()));
            }
        }
        let (chosen, rest): (Vec<Subset>, Vec<Subset>) =
            self.subsets.iter().cloned().partition(|s| ids.contains(&s.id));
        let wrap = |v: Vec<Subset>| if v.is_empty() { Ok(None) } else { Self::new(v).map(Some) };
        Ok((wrap(chosen)?, wrap(rest)?))
    }
}

/// The context recipe of one ensemble member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelSpec {
    pub model_index: usize,
    /// Subset ids in pool order.
    pub subsets: Vec<String>,
    pub k: usize,
    pub seed: u64,
}

/// Draw `n_models` specs: `k` uniform in `[1, min(k_max, pool size)]`, then
/// `k` distinct subsets uniformly without replacement.
pub fn sample_model_specs(pool: &SubsetPool, n_models: usize, k_max: usize, seed: u64) -> Result<Vec<ModelSpec>, EnsembleError> {
    if pool.is_empty() {
        return Err(EnsembleError::EmptyPool);
    }
    if n_models == 0 || k_max == 0 {
        return Err(EnsembleError::InvalidConfig("n_models and k_max must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k_hi = k_max.min(pool.len());
    Ok((0..n_models)
        .map(|model_index| {
            let k = rng.random_range(1..=k_hi);
            let mut chosen = sample(&mut rng, pool.len(), k).into_vec();
            chosen.sort_unstable();
            ModelSpec {
                model_index,
                subsets: chosen.into_iter().map(|p| pool.subsets[p].id.clone()).collect(),
                k,
                seed: rng.next_u64(),
            }
        })
        .collect())
}

/// Models that grow their context one subset at a time along random
/// orderings of the pool: `n_permutations * pool size` specs.
pub fn progressive_specs(pool: &SubsetPool, n_permutations: usize, seed: u64) -> Vec<ModelSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut specs = Vec::with_capacity(n_permutations * pool.len());
    for _ in 0..n_permutations {
        let order = sample(&mut rng, pool.len(), pool.len()).into_vec();
        for prefix in 1..=order.len() {
            let subsets = order[..prefix].iter().map(|&p| pool.subsets[p].id.clone()).collect();
            specs.push(ModelSpec {
                model_index: specs.len(),
                subsets,
                k: prefix,
                seed: rng.next_u64(),
            });
        }
    }
    specs
}

/// Features and labels of every pool record, addressed by record index.
#[derive(Debug, Clone)]
pub struct PoolData {
    pub features: Matrix,
    pub labels: Vec<f64>,
}

impl PoolData {
    pub fn context(&self, indices: &[usize]) -> Result<TrainingContext, BackendError> {
        TrainingContext::new(
            self.features.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    #[default]
    Abort,
    Drop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Quantile levels requested from the backend.
    pub quantiles: Vec<f64>,
    /// Band whose width scores a model.
    pub iqr_band: (f64, f64),
    pub workers: usize,
    pub failure_policy: FailurePolicy,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            quantiles: DEFAULT_QUANTILES.to_vec(),
            iqr_band: (DEFAULT_QUANTILES[0], DEFAULT_QUANTILES[1]),
            workers: 1,
            failure_policy: FailurePolicy::Abort,
        }
    }
}

impl RunOptions {
    fn validate(&self) -> Result<(), EnsembleError> {
        validate_levels(&self.quantiles)?;
        let has = |l: f64| self.quantiles.iter().any(|q| (q - l).abs() < 1e-9);
        if !has(self.iqr_band.0) || !has(self.iqr_band.1) || self.iqr_band.0 >= self.iqr_band.1 {
            return Err(EnsembleError::InvalidConfig(format!(
                "IQR band {:?} must be two increasing requested quantile levels",
                self.iqr_band
            )));
        }
        if self.workers == 0 {
            return Err(EnsembleError::InvalidConfig("workers must be >= 1".into()));
        }
        Ok(())
    }

    fn thread_pool(&self) -> Result<rayon::ThreadPool, EnsembleError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| EnsembleError::InvalidConfig(format!("cannot start worker pool: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResult {
    pub spec: ModelSpec,
    pub prediction: QuantilePrediction,
    pub mean_iqr: f64,
}

fn mean_band_width(pred: &QuantilePrediction, band: (f64, f64)) -> Result<f64, BackendError> {
    let widths = pred.band_width(band.0, band.1).ok_or_else(|| {
        BackendError::ProtocolError(format!("prediction lacks the {band:?} band"))
    })?;
    Ok(widths.iter().sum::<f64>() / widths.len() as f64)
}

fn fit_one(
    spec: &ModelSpec,
    pool: &SubsetPool,
    data: &PoolData,
    req: &QuantileRequest,
    backend: &dyn QuantileRegressor,
    band: (f64, f64),
) -> Result<ModelResult, BackendError> {
    let indices = pool
        .indices_for(&spec.subsets)
        .map_err(|e| BackendError::InvalidInput(e.to_string()))?;
    let ctx = data.context(&indices)?;
    let prediction = predict(backend, &ctx, req, spec.seed)?;
    let mean_iqr = mean_band_width(&prediction, band)?;
    Ok(ModelResult {
        spec: spec.clone(),
        prediction,
        mean_iqr,
    })
}

/// Fit every spec against the test rows. Results come back ordered by
/// `model_index` whatever the execution order.
pub fn run_ensemble(
    specs: &[ModelSpec],
    pool: &SubsetPool,
    data: &PoolData,
    test_features: &Matrix,
    backend: &dyn QuantileRegressor,
    opts: &RunOptions,
) -> Result<Vec<ModelResult>, EnsembleError> {
    opts.validate()?;
    let threads = opts.thread_pool()?;
    run_ensemble_in(specs, pool, data, test_features, backend, opts, &threads)
}

fn run_ensemble_in(
    specs: &[ModelSpec],
    pool: &SubsetPool,
    data: &PoolData,
    test_features: &Matrix,
    backend: &dyn QuantileRegressor,
    opts: &RunOptions,
    threads: &rayon::ThreadPool,
) -> Result<Vec<ModelResult>, EnsembleError> {
    if test_features.rows() == 0 {
        return Err(EnsembleError::EmptyTestSet);
    }
    let req = QuantileRequest::new(test_features.clone(), opts.quantiles.clone())?;
    let outcomes: Vec<Result<ModelResult, BackendError>> = threads.install(|| {
        specs
            .par_iter()
            .map(|spec| fit_one(spec, pool, data, &req, backend, opts.iqr_band))
            .collect()
    });

    let mut results = Vec::with_capacity(outcomes.len());
    for (spec, outcome) in specs.iter().zip(outcomes) {
        match (outcome, opts.failure_policy) {
            (Ok(r), _) => results.push(r),
            (Err(source), FailurePolicy::Abort) => {
                return Err(EnsembleError::Model {
                    model_index: spec.model_index,
                    source,
                })
            }
            (Err(e), FailurePolicy::Drop) => {
                warn!("dropping model {}: {e}", spec.model_index);
            }
        }
    }
    results.sort_by_key(|r| r.spec.model_index);
    Ok(results)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// One model conditioned on every pool subset.
    AllDataSingle,
    /// Unweighted mean over all ensemble members.
    FullMean,
    /// Unweighted mean over the lowest-mean-IQR fraction of members.
    TopFractionMean(f64),
    /// The single member with the lowest MAE; needs labels.
    OracleBest,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::AllDataSingle => "all_data_single",
            Self::FullMean => "full_mean",
            Self::TopFractionMean(_) => "top_fraction_mean",
            Self::OracleBest => "oracle_best",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TopFractionMean(frac) => write!(f, "top_fraction_mean({frac})"),
            other => f.write_str(other.name()),
        }
    }
}

impl Serialize for Strategy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub prediction: Vec<f64>,
    /// Model indices averaged (empty for the all-data model).
    pub members: Vec<usize>,
    pub metrics: Option<Metrics>,
}

/// Number of members kept for a fraction: `ceil(fraction * n)`, at least one.
pub fn top_count(n: usize, fraction: f64) -> usize {
    // shave rounding noise so 0.1 * 400 stays 40
    let raw = fraction * n as f64;
    ((raw - 1e-9).ceil() as usize).clamp(1, n)
}

/// Model indices with the lowest mean IQR, ties to the lower index,
/// returned in ascending index order. Reads no labels.
pub fn select_top_fraction(results: &[ModelResult], fraction: f64) -> Result<Vec<usize>, EnsembleError> {
    if results.is_empty() {
        return Err(EnsembleError::EmptyResults);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EnsembleError::InvalidConfig(format!(
            "fraction {fraction} outside (0, 1]"
        )));
    }
    let mut ranked: Vec<&ModelResult> = results.iter().collect();
    ranked.sort_by(|a, b| {
        a.mean_iqr
            .total_cmp(&b.mean_iqr)
            .then(a.spec.model_index.cmp(&b.spec.model_index))
    });
    let mut chosen: Vec<usize> = ranked[..top_count(results.len(), fraction)]
        .iter()
        .map(|r| r.spec.model_index)
        .collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Average member point predictions, summing in ascending model index.
fn average(results: &[ModelResult], members: &[usize]) -> Vec<f64> {
    let mut picked: Vec<&ModelResult> = results
        .iter()
        .filter(|r| members.binary_search(&r.spec.model_index).is_ok())
        .collect();
    picked.sort_by_key(|r| r.spec.model_index);
    let n_test = picked[0].prediction.len();
    let mut acc = vec![0.0; n_test];
    for r in &picked {
        for (a, v) in acc.iter_mut().zip(&r.prediction.mean) {
            *a += v;
        }
    }
    let k = picked.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    acc
}

/// The best member by MAE against `truth`, ties to the lower index.
pub fn oracle_best(results: &[ModelResult], truth: &[f64]) -> Result<(usize, f64), EnsembleError> {
    let mut best: Option<(usize, f64)> = None;
    let mut ordered: Vec<&ModelResult> = results.iter().collect();
    ordered.sort_by_key(|r| r.spec.model_index);
    for r in ordered {
        let m = mae(&r.prediction.mean, truth)?;
        if best.is_none_or(|(_, b)| m < b) {
            best = Some((r.spec.model_index, m));
        }
    }
    best.ok_or(EnsembleError::EmptyResults)
}

pub fn aggregate(
    results: &[ModelResult],
    strategy: Strategy,
    all_data: Option<&QuantilePrediction>,
    truth: Option<&[f64]>,
) -> Result<StrategyOutcome, EnsembleError> {
    let (prediction, members) = match strategy {
        Strategy::AllDataSingle => {
            let p = all_data.ok_or(EnsembleError::MissingAllDataPrediction)?;
            (p.mean.clone(), Vec::new())
        }
        Strategy::FullMean => {
            if results.is_empty() {
                return Err(EnsembleError::EmptyResults);
            }
            let mut all: Vec<usize> = results.iter().map(|r| r.spec.model_index).collect();
            all.sort_unstable();
            (average(results, &all), all)
        }
        Strategy::TopFractionMean(fraction) => {
            let chosen = select_top_fraction(results, fraction)?;
            (average(results, &chosen), chosen)
        }
        Strategy::OracleBest => {
            let truth = truth.ok_or(EnsembleError::MissingTruth)?;
            let (idx, _) = oracle_best(results, truth)?;
            (average(results, &[idx]), vec![idx])
        }
    };
    let metrics = truth.map(|t| Metrics::compute(&prediction, t)).transpose()?;
    Ok(StrategyOutcome {
        strategy,
        prediction,
        members,
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_models: usize,
    pub k_max: usize,
    pub fraction: f64,
    /// One repeat per seed.
    pub seeds: Vec<u64>,
    pub run: RunOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_models: DEFAULT_N_MODELS,
            k_max: DEFAULT_K_MAX,
            fraction: DEFAULT_FRACTION,
            seeds: vec![0, 1, 2],
            run: RunOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model_index: usize,
    pub subsets: Vec<String>,
    pub k: usize,
    pub seed: u64,
    pub mean_iqr: f64,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatReport {
    pub seed: u64,
    pub models: Vec<ModelSummary>,
    pub strategies: Vec<StrategyOutcome>,
    /// Members of the top-fraction average.
    pub selected: Vec<usize>,
    pub oracle: Option<usize>,
    /// Per-model mean IQR against correlation, when labels are known.
    pub scatter: Option<ScatterFit>,
}

impl RepeatReport {
    pub fn outcome(&self, name: &str) -> Option<&StrategyOutcome> {
        self.strategies.iter().find(|s| s.strategy.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub mae: Option<MeanCi>,
    pub pearson: Option<MeanCi>,
    /// Repeats whose correlation was undefined and left out of `pearson`.
    pub pearson_undefined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleOverall {
    pub seed: u64,
    pub model_index: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub n_models: usize,
    pub k_max: usize,
    pub fraction: f64,
    pub n_test: usize,
    pub repeats: Vec<RepeatReport>,
    pub summary: Vec<StrategySummary>,
    /// Best single member across all repeats.
    pub oracle_overall: Option<OracleOverall>,
}

/// Strategy order used in reports.
pub fn report_strategies(fraction: f64, with_truth: bool) -> Vec<Strategy> {
    let mut s = vec![
        Strategy::TopFractionMean(fraction),
        Strategy::FullMean,
        Strategy::AllDataSingle,
    ];
    if with_truth {
        s.push(Strategy::OracleBest);
    }
    s
}

/// Repeat the full ensemble procedure once per seed and summarize every
/// strategy with a mean and 95% interval across repeats.
pub fn run_experiment(
    pool: &SubsetPool,
    data: &PoolData,
    test_features: &Matrix,
    truth: Option<&[f64]>,
    config: &ExperimentConfig,
    backend: &dyn QuantileRegressor,
) -> Result<ExperimentReport, EnsembleError> {
    if config.seeds.is_empty() {
        return Err(EnsembleError::InvalidConfig("at least one seed is required".into()));
    }
    if let Some(t) = truth {
        if t.len() != test_features.rows() {
            return Err(EnsembleError::Eval(EvalError::LengthMismatch {
                left: test_features.rows(),
                right: t.len(),
            }));
        }
    }
    config.run.validate()?;
    let threads = config.run.thread_pool()?;
    let all_indices = pool.all_indices();
    let strategies = report_strategies(config.fraction, truth.is_some());

    let mut repeats = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let specs = sample_model_specs(pool, config.n_models, config.k_max, seed)?;
        let results = run_ensemble_in(&specs, pool, data, test_features, backend, &config.run, &threads)?;
        if results.is_empty() {
            return Err(EnsembleError::EmptyResults);
        }

        let req = QuantileRequest::new(test_features.clone(), config.run.quantiles.clone())?;
        let all_ctx = data.context(&all_indices)?;
        let all_data = predict(backend, &all_ctx, &req, seed).map_err(EnsembleError::AllDataModel)?;

        let outcomes = strategies
            .iter()
            .map(|&s| aggregate(&results, s, Some(&all_data), truth))
            .collect::<Result<Vec<_>, _>>()?;
        let selected = outcomes[0].members.clone();
        let oracle = outcomes
            .iter()
            .find(|o| o.strategy == Strategy::OracleBest)
            .map(|o| o.members[0]);

        let models = results
            .iter()
            .map(|r| {
                Ok(ModelSummary {
                    model_index: r.spec.model_index,
                    subsets: r.spec.subsets.clone(),
                    k: r.spec.k,
                    seed: r.spec.seed,
                    mean_iqr: r.mean_iqr,
                    metrics: truth.map(|t| Metrics::compute(&r.prediction.mean, t)).transpose()?,
                })
            })
            .collect::<Result<Vec<_>, EnsembleError>>()?;
        let scatter = truth.and_then(|t| model_iqr_correlation_scatter(&results, t).ok());

        repeats.push(RepeatReport {
            seed,
            models,
            strategies: outcomes,
            selected,
            oracle,
            scatter,
        });
    }

    let summary = strategies
        .iter()
        .enumerate()
        .map(|(i, &strategy)| {
            let metrics: Vec<Metrics> = repeats
                .iter()
                .filter_map(|r| r.strategies[i].metrics)
                .collect();
            let maes: Vec<f64> = metrics.iter().map(|m| m.mae).collect();
            let rs: Vec<f64> = metrics.iter().filter_map(|m| m.pearson.value()).collect();
            StrategySummary {
                strategy,
                mae: mean_ci95(&maes),
                pearson: mean_ci95(&rs),
                pearson_undefined: metrics.len() - rs.len(),
            }
        })
        .collect();

    let oracle_overall = repeats
        .iter()
        .filter_map(|r| {
            let o = r.outcome(Strategy::OracleBest.name())?;
            Some(OracleOverall {
                seed: r.seed,
                model_index: o.members[0],
                metrics: o.metrics?,
            })
        })
        .fold(None, |best: Option<OracleOverall>, cand| match best {
            Some(b) if b.metrics.mae <= cand.metrics.mae => Some(b),
            _ => Some(cand),
        });

    Ok(ExperimentReport {
        n_models: config.n_models,
        k_max: config.k_max,
        fraction: config.fraction,
        n_test: test_features.rows(),
        repeats,
        summary,
        oracle_overall,
    })
}

/// Per-model `(mean IQR, Pearson r)` with a least-squares fit. Models whose
/// correlation is undefined are left out.
pub fn model_iqr_correlation_scatter(results: &[ModelResult], truth: &[f64]) -> Result<ScatterFit, EnsembleError> {
    let mut pairs = Vec::with_capacity(results.len());
    for r in results {
        if let Some(c) = crate::evalcal::Correlation::of(&r.prediction.mean, truth)?.value() {
            pairs.push((r.mean_iqr, c));
        }
    }
    Ok(iqr_correlation_fit(pairs)?)
}
