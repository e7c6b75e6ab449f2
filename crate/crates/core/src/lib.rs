//! Uncertainty-aware scoring back-end for speaker verification.
//!
//! The pipeline runs from frame-level posteriors to scored trials:
//! [`pooling`] fuses frames into an utterance posterior, [`propagation`]
//! carries its covariance into embedding space, and [`scoring`] / [`plda`]
//! turn embedding pairs into verification scores. [`metrics`] and
//! [`corpus_stats`] evaluate the results; [`synth`] generates seeded corpora.

pub mod corpus_stats;
pub mod error;
pub mod metrics;
pub mod plda;
pub mod pooling;
pub mod propagation;
pub mod scoring;
pub mod synth;
pub mod trial;

pub use corpus_stats::{
    estimate_covariances, summarize_boxplot, BoxplotSummary, CovarianceReport, FiveNumber, Labels,
};
pub use error::{Error, Result};
pub use metrics::{compute_eer, compute_min_dcf, evaluate, pearson, DcfParams, DetMetrics};
pub use plda::{plda_fit, plda_score, PldaModel, PldaScorer};
pub use pooling::{
    posterior_covariance, posterior_pool, FramePosterior, GaussianPrior, PoolAccumulator,
    PooledPosterior,
};
pub use propagation::{
    batchnorm_apply, propagate, AffineLayer, BatchNormStats, UncertainEmbedding,
};
pub use scoring::{
    alpha, build_sigma, cosine, mahalanobis_length, score_trials, score_trials_with, up_cos_score,
    ScoreVariant, SigmaPair, TrialScorer, UpCosScorer,
};
pub use synth::{generate_corpus, generate_trials, SynthConfig, SynthCorpus};
pub use trial::{embedding_set, EmbeddingSet, Label, Trial, TrialScore};
