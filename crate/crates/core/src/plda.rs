//! Diagonal two-covariance PLDA and its uncertainty-propagated variant.
//!
//! Each dimension is modelled independently as `x = mu + y + e` with speaker
//! variable `y ~ N(0, b)` and residual `e ~ N(0, w)`. The log-likelihood
//! ratio compares the joint density of `(x_e, x_t)` under a shared `y` with
//! the product of the marginals. UP-PLDA adds each side's uncertainty to its
//! own residual variance.

use crate::corpus_stats::{estimate_covariances, Labels};
use crate::error::{check_finite, check_len, Error, Result};
use crate::propagation::UncertainEmbedding;
use crate::scoring::TrialScorer;
use crate::trial::{EmbeddingSet, TrialScore};

/// Relative floor applied to within-speaker variances estimated as zero.
pub const WITHIN_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel {
    pub mu: Vec<f64>,
    pub between: Vec<f64>,
    pub within: Vec<f64>,
}

impl PldaModel {
    pub fn new(mu: Vec<f64>, between: Vec<f64>, within: Vec<f64>) -> Result<Self> {
        check_len("plda between", mu.len(), between.len())?;
        check_len("plda within", mu.len(), within.len())?;
        check_finite("plda mean", &mu)?;
        check_finite("plda between", &between)?;
        check_finite("plda within", &within)?;
        if let Some((index, &value)) = between.iter().enumerate().find(|(_, b)| **b < 0.0) {
            return Err(Error::InvalidCovariance { index, value });
        }
        if let Some((index, &value)) = within.iter().enumerate().find(|(_, w)| **w <= 0.0) {
            return Err(Error::SingularCovariance { index, value });
        }
        Ok(Self {
            mu,
            between,
            within,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Fits the diagonal model from labelled embedding means.
///
/// Within-speaker variances use divisor `N - K`, between-speaker `K - 1`.
/// Within entries that come out below `WITHIN_FLOOR` times the mean total
/// variance are raised to that floor.
pub fn plda_fit(embeddings: &EmbeddingSet, labels: &Labels) -> Result<PldaModel> {
    let report = estimate_covariances(embeddings, labels)?;
    if report.n_speakers < 2 {
        return Err(Error::Estimation("plda needs at least two speakers".into()));
    }
    if report.n_utts <= report.n_speakers {
        return Err(Error::Estimation(
            "plda needs a speaker with at least two utterances".into(),
        ));
    }
    let d = report.total.len() as f64;
    let floor = WITHIN_FLOOR * report.total.iter().sum::<f64>() / d;
    if floor.is_nan() || floor <= 0.0 {
        return Err(Error::Estimation(
            "embeddings have zero total variance".into(),
        ));
    }
    let within = report.within.iter().map(|&w| w.max(floor)).collect();
    let between = report.between.iter().map(|&b| b.max(0.0)).collect();
    PldaModel::new(report.mean, between, within)
}

/// Per-dimension log-likelihood ratio.
fn llr_1d(x: f64, y: f64, b: f64, w_e: f64, w_t: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    let a = b + w_e;
    let c = b + w_t;
    // a*c - b^2 without cancellation
    let det = b * (w_e + w_t) + w_e * w_t;
    // grouped so that swapping the two sides is bitwise symmetric
    let joint = -0.5 * det.ln() - 0.5 * ((c * x * x + a * y * y) - 2.0 * b * x * y) / det;
    let marginal = -0.5 * ((a.ln() + x * x / a) + (c.ln() + y * y / c));
    joint - marginal
}

pub fn plda_score(
    e: &UncertainEmbedding,
    t: &UncertainEmbedding,
    model: &PldaModel,
    use_uncertainty: bool,
) -> Result<f64> {
    check_len("plda enrol", model.dim(), e.dim())?;
    check_len("plda test", model.dim(), t.dim())?;
    let mut llr = 0.0;
    for i in 0..model.dim() {
        let (mut w_e, mut w_t) = (model.within[i], model.within[i]);
        if use_uncertainty {
            w_e += e.sigma_u[i];
            w_t += t.sigma_u[i];
        }
        for w in [w_e, w_t] {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::SingularCovariance { index: i, value: w });
            }
        }
        llr += llr_1d(
            e.phi[i] - model.mu[i],
            t.phi[i] - model.mu[i],
            model.between[i],
            w_e,
            w_t,
        );
    }
    if llr.is_finite() {
        Ok(llr)
    } else {
        Err(Error::Overflow("plda score"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PldaScorer {
    pub model: PldaModel,
    pub use_uncertainty: bool,
}

impl TrialScorer for PldaScorer {
    fn score_pair(&self, e: &UncertainEmbedding, t: &UncertainEmbedding) -> Result<TrialScore> {
        Ok(TrialScore {
            enrol_id: e.id.clone(),
            test_id: t.id.clone(),
            score: plda_score(e, t, &self.model, self.use_uncertainty)?,
            alpha_e: None,
            alpha_t: None,
        })
    }
}
