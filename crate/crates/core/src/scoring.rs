//! Cosine and uncertainty-propagated cosine (UP-Cos) scoring.
//!
//! UP-Cos normalizes the inner product by Mahalanobis lengths instead of
//! Euclidean ones:
//!
//! ```text
//! s_up = <phi_e, phi_t> / (||phi_e||_ML,Se * ||phi_t||_ML,St)
//!      = alpha_e * alpha_t * cos(phi_e, phi_t)
//! alpha = sqrt(phi^T phi / phi^T S^-1 phi)
//! ```
//!
//! All covariances are diagonal, so every inverse is elementwise.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::propagation::UncertainEmbedding;
use crate::trial::{EmbeddingSet, Trial, TrialScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreVariant {
    Cos,
    UpCos1,
    UpCos2,
    UpCos3,
    UpCos4,
}

impl ScoreVariant {
    pub const ALL: [ScoreVariant; 5] = [
        ScoreVariant::Cos,
        ScoreVariant::UpCos1,
        ScoreVariant::UpCos2,
        ScoreVariant::UpCos3,
        ScoreVariant::UpCos4,
    ];

    pub const UP: [ScoreVariant; 4] = [
        ScoreVariant::UpCos1,
        ScoreVariant::UpCos2,
        ScoreVariant::UpCos3,
        ScoreVariant::UpCos4,
    ];

    /// Variants 2 and 4 add the corpus total covariance to the uncertainty.
    pub fn needs_total_covariance(self) -> bool {
        matches!(self, ScoreVariant::UpCos2 | ScoreVariant::UpCos4)
    }

    pub fn name(self) -> &'static str {
        match self {
            ScoreVariant::Cos => "cos",
            ScoreVariant::UpCos1 => "up1",
            ScoreVariant::UpCos2 => "up2",
            ScoreVariant::UpCos3 => "up3",
            ScoreVariant::UpCos4 => "up4",
        }
    }
}

impl fmt::Display for ScoreVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown score variant {s:?}")))
    }
}

/// Diagonal covariances used for the enrolment and test Mahalanobis lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPair {
    pub enrol: Vec<f64>,
    pub test: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `phi^T S^-1 phi` for diagonal `S`.
fn quadratic_form(phi: &[f64], sigma: &[f64]) -> Result<f64> {
    check_len("covariance diagonal", phi.len(), sigma.len())?;
    let mut q = 0.0;
    for (index, (&p, &s)) in phi.iter().zip(sigma).enumerate() {
        if s.is_nan() || s <= 0.0 || s.is_infinite() {
            return Err(Error::SingularCovariance { index, value: s });
        }
        q += p * p / s;
    }
    Ok(q)
}

// Shared by cosine and UP-Cos so that identical quadratic forms give
// bitwise-identical scores.
fn normalized_dot(num: f64, q_e: f64, q_t: f64) -> Result<f64> {
    if q_e == 0.0 || q_t == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    let s = num / (q_e * q_t).sqrt();
    if s.is_finite() {
        Ok(s)
    } else {
        Err(Error::Overflow("score"))
    }
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(phi_e: &[f64], phi_t: &[f64]) -> Result<f64> {
    check_len("cosine", phi_e.len(), phi_t.len())?;
    if phi_e.is_empty() {
        return Err(Error::DegenerateEmbedding);
    }
    let s = normalized_dot(dot(phi_e, phi_t), dot(phi_e, phi_e), dot(phi_t, phi_t))?;
    Ok(s.clamp(-1.0, 1.0))
}

/// Mahalanobis distance between the origin and `phi`.
pub fn mahalanobis_length(phi: &[f64], sigma: &[f64]) -> Result<f64> {
    Ok(quadratic_form(phi, sigma)?.sqrt())
}

/// Ratio of the Euclidean length to the Mahalanobis length.
pub fn alpha(phi: &[f64], sigma: &[f64]) -> Result<f64> {
    let q = quadratic_form(phi, sigma)?;
    let nn = dot(phi, phi);
    if nn == 0.0 || q == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    Ok((nn / q).sqrt())
}

/// Builds the enrolment/test covariance diagonals for a variant.
///
/// | variant | enrol                  | test                   |
/// |---------|------------------------|------------------------|
/// | UpCos1  | Ue/d + I               | Ut/d + I               |
/// | UpCos2  | (Ue + Stot)/d          | (Ut + Stot)/d          |
/// | UpCos3  | (Ue + Ut)/d + I        | same                   |
/// | UpCos4  | (Ue + Ut + Stot)/d     | same                   |
///
/// `Cos` yields the identity on both sides.
pub fn build_sigma(
    variant: ScoreVariant,
    su_e: &[f64],
    su_t: &[f64],
    sigma_tot: Option<&[f64]>,
) -> Result<SigmaPair> {
    let dim = su_e.len();
    check_len("test uncertainty", dim, su_t.len())?;
    let d = dim as f64;
    let tot = if variant.needs_total_covariance() {
        let tot = sigma_tot.ok_or_else(|| {
            Error::Config(format!("variant {variant} requires a total covariance"))
        })?;
        check_len("total covariance", dim, tot.len())?;
        tot
    } else {
        &[][..]
    };

    let pair = match variant {
        ScoreVariant::Cos => SigmaPair {
            enrol: vec![1.0; dim],
            test: vec![1.0; dim],
        },
        ScoreVariant::UpCos1 => SigmaPair {
            enrol: su_e.iter().map(|u| u / d + 1.0).collect(),
            test: su_t.iter().map(|u| u / d + 1.0).collect(),
        },
        ScoreVariant::UpCos2 => SigmaPair {
            enrol: su_e.iter().zip(tot).map(|(u, s)| (u + s) / d).collect(),
            test: su_t.iter().zip(tot).map(|(u, s)| (u + s) / d).collect(),
        },
        ScoreVariant::UpCos3 => {
            let shared: Vec<f64> = su_e
                .iter()
                .zip(su_t)
                .map(|(a, b)| (a + b) / d + 1.0)
                .collect();
            SigmaPair {
                enrol: shared.clone(),
                test: shared,
            }
        }
        ScoreVariant::UpCos4 => {
            let shared: Vec<f64> = su_e
                .iter()
                .zip(su_t)
                .zip(tot)
                .map(|((a, b), s)| (a + b + s) / d)
                .collect();
            SigmaPair {
                enrol: shared.clone(),
                test: shared,
            }
        }
    };
    for side in [&pair.enrol, &pair.test] {
        if let Some((index, &value)) = side
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::SingularCovariance { index, value });
        }
    }
    Ok(pair)
}

/// Scores one trial. For `Cos` the alphas are recorded as 1.
pub fn up_cos_score(
    e: &UncertainEmbedding,
    t: &UncertainEmbedding,
    variant: ScoreVariant,
    sigma_tot: Option<&[f64]>,
) -> Result<TrialScore> {
    check_len("trial embeddings", e.dim(), t.dim())?;
    let (score, alpha_e, alpha_t) = if variant == ScoreVariant::Cos {
        (cosine(&e.phi, &t.phi)?, 1.0, 1.0)
    } else {
        let sigma = build_sigma(variant, &e.sigma_u, &t.sigma_u, sigma_tot)?;
        let q_e = quadratic_form(&e.phi, &sigma.enrol)?;
        let q_t = quadratic_form(&t.phi, &sigma.test)?;
        let score = normalized_dot(dot(&e.phi, &t.phi), q_e, q_t)?;
        let alpha_e = (dot(&e.phi, &e.phi) / q_e).sqrt();
        let alpha_t = (dot(&t.phi, &t.phi) / q_t).sqrt();
        (score, alpha_e, alpha_t)
    };
    Ok(TrialScore {
        enrol_id: e.id.clone(),
        test_id: t.id.clone(),
        score,
        alpha_e: Some(alpha_e),
        alpha_t: Some(alpha_t),
    })
}

/// Anything that can score an (enrolment, test) embedding pair.
pub trait TrialScorer: Sync {
    fn score_pair(&self, e: &UncertainEmbedding, t: &UncertainEmbedding) -> Result<TrialScore>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpCosScorer {
    pub variant: ScoreVariant,
    pub sigma_tot: Option<Vec<f64>>,
}

impl UpCosScorer {
    pub fn new(variant: ScoreVariant, sigma_tot: Option<Vec<f64>>) -> Result<Self> {
        if variant.needs_total_covariance() && sigma_tot.is_none() {
            return Err(Error::Config(format!(
                "variant {variant} requires a total covariance"
            )));
        }
        Ok(Self { variant, sigma_tot })
    }
}

impl TrialScorer for UpCosScorer {
    fn score_pair(&self, e: &UncertainEmbedding, t: &UncertainEmbedding) -> Result<TrialScore> {
        up_cos_score(e, t, self.variant, self.sigma_tot.as_deref())
    }
}

/// Scores every trial, resolving enrolment ids in `enrol` and test ids in `test`.
///
/// All unresolved ids are reported together before any scoring happens.
/// Trials are scored in parallel on the current rayon pool; the output is in
/// trial order and each score depends only on its own trial.
pub fn score_trials_with<S: TrialScorer>(
    trials: &[Trial],
    enrol: &EmbeddingSet,
    test: &EmbeddingSet,
    scorer: &S,
) -> Result<Vec<TrialScore>> {
    let mut missing: Vec<String> = Vec::new();
    for trial in trials {
        for (id, set) in [(&trial.enrol, enrol), (&trial.test, test)] {
            if !set.contains_key(id) && !missing.contains(id) {
                missing.push(id.clone());
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingEmbeddings(missing));
    }

    let results: Vec<Result<TrialScore>> = trials
        .par_iter()
        .map(|trial| scorer.score_pair(&enrol[&trial.enrol], &test[&trial.test]))
        .collect();
    results.into_iter().collect()
}

/// Scores trials whose enrolment and test ids live in one collection.
pub fn score_trials(
    trials: &[Trial],
    embeddings: &EmbeddingSet,
    variant: ScoreVariant,
    sigma_tot: Option<&[f64]>,
) -> Result<Vec<TrialScore>> {
    let scorer = UpCosScorer::new(variant, sigma_tot.map(<[f64]>::to_vec))?;
    score_trials_with(trials, embeddings, embeddings, &scorer)
}
