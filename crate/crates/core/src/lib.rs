//! siRNA knockdown-efficacy modelling with quantile uncertainty.
//!
//! - [`seqmodel`]: alphabets and normalization of raw siRNA / mRNA inputs.
//! - [`features`]: the fixed 574-column feature vector.
//! - [`backend`]: quantile regressors (built-in k-NN, external processes).
//! - [`ensemble`]: subset-context ensembles selected by mean IQR.
//! - [`evalcal`]: metrics, IQR/error analysis and coverage curves.
//! - [`dataio`]: CSV datasets and synthetic data.
//! - [`config`]: experiment configuration files.

pub mod backend;
pub mod config;
pub mod dataio;
pub mod ensemble;
pub mod evalcal;
pub mod features;
pub mod seqmodel;

pub use backend::{
    Backend, BackendError, BackendSpec, KnnQuantile, Matrix, QuantilePrediction, QuantileRegressor,
    QuantileRequest, TrainingContext,
};
pub use features::{featurize, FeatureVector, ThermoTables, FEATURE_LEN};
pub use seqmodel::{MrnaContext, SirnaRecord, SirnaSeq};
