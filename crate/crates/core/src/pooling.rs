//! Gaussian posterior-inference pooling.
//!
//! Frame-level features are treated as noisy observations of a latent
//! utterance vector with a Gaussian prior. With diagonal precisions the
//! posterior factorizes per dimension:
//!
//! ```text
//! L_s   = sum_t L_t + L_p
//! phi_s = L_s^-1 (sum_t L_t z_t + L_p z_p)
//! ```

use crate::error::{check_finite, check_len, Error, Result};

/// Above this many frames the accumulators switch to compensated summation.
pub const COMPENSATED_SUM_THRESHOLD: usize = 1024;

/// One frame-level observation: latent feature and the diagonal of its precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePosterior {
    pub z: Vec<f64>,
    pub prec: Vec<f64>,
}

impl FramePosterior {
    pub fn new(z: Vec<f64>, prec: Vec<f64>) -> Result<Self> {
        let frame = Self { z, prec };
        frame.validate()?;
        Ok(frame)
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    fn validate(&self) -> Result<()> {
        check_len("frame precision", self.z.len(), self.prec.len())?;
        check_finite("frame mean", &self.z)?;
        check_finite("frame precision", &self.prec)?;
        if let Some((index, &value)) = self.prec.iter().enumerate().find(|(_, p)| **p < 0.0) {
            return Err(Error::InvalidCovariance { index, value });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    pub mean: Vec<f64>,
    pub prec: Vec<f64>,
}

impl GaussianPrior {
    /// A proper prior: every precision entry must be finite and strictly positive.
    pub fn new(mean: Vec<f64>, prec: Vec<f64>) -> Result<Self> {
        check_len("prior precision", mean.len(), prec.len())?;
        check_finite("prior mean", &mean)?;
        check_finite("prior precision", &prec)?;
        if let Some((index, &value)) = prec.iter().enumerate().find(|(_, p)| **p <= 0.0) {
            return Err(Error::SingularPrecision { index, value });
        }
        Ok(Self { mean, prec })
    }

    /// Isotropic prior `N(0, var * I)`.
    pub fn isotropic(dim: usize, var: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0 / var; dim])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledPosterior {
    pub mean: Vec<f64>,
    pub prec: Vec<f64>,
}

impl PooledPosterior {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> Result<Vec<f64>> {
        posterior_covariance(self)
    }
}

/// Running per-dimension sums with optional compensation.
///
/// The compensated path uses Knuth's branch-free two-sum, so the exact
/// rounding error of every addition is carried in `comp`.
#[derive(Debug, Clone)]
struct Accumulator {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl Accumulator {
    fn new(dim: usize) -> Self {
        Self {
            sum: vec![0.0; dim],
            comp: vec![0.0; dim],
        }
    }

    fn add_all(&mut self, xs: impl Iterator<Item = f64>, compensated: bool) {
        let parts = self.sum.iter_mut().zip(self.comp.iter_mut()).zip(xs);
        if compensated {
            for ((s, c), x) in parts {
                let t = *s + x;
                let bp = t - *s;
                *c += (*s - (t - bp)) + (x - bp);
                *s = t;
            }
        } else {
            for ((s, _), x) in parts {
                *s += x;
            }
        }
    }

    fn value(&self, i: usize) -> f64 {
        self.sum[i] + self.comp[i]
    }
}

/// Streaming form of [`posterior_pool`].
///
/// Frames are accumulated in push order; compensated summation is used when
/// the expected frame count exceeds [`COMPENSATED_SUM_THRESHOLD`].
#[derive(Debug, Clone)]
pub struct PoolAccumulator<'a> {
    prior: &'a GaussianPrior,
    prec: Accumulator,
    weighted: Accumulator,
    compensated: bool,
}

impl<'a> PoolAccumulator<'a> {
    pub fn new(prior: &'a GaussianPrior, expected_frames: usize) -> Result<Self> {
        check_finite("prior mean", &prior.mean)?;
        if let Some((index, &value)) = prior
            .prec
            .iter()
            .enumerate()
            .find(|(_, p)| p.is_nan() || **p <= 0.0)
        {
            return Err(if value.is_finite() {
                Error::SingularPrecision { index, value }
            } else {
                Error::NonFinite("prior precision")
            });
        }
        check_finite("prior precision", &prior.prec)?;
        let dim = prior.dim();
        Ok(Self {
            prior,
            prec: Accumulator::new(dim),
            weighted: Accumulator::new(dim),
            compensated: expected_frames > COMPENSATED_SUM_THRESHOLD,
        })
    }

    /// Adds one frame. On error the accumulator is left unchanged.
    pub fn push(&mut self, z: &[f64], prec: &[f64]) -> Result<()> {
        check_len("frame dimension", self.prec.sum.len(), z.len())?;
        check_len("frame precision", z.len(), prec.len())?;
        let ok = z.iter().zip(prec).fold(true, |ok, (z, p)| {
            ok & z.is_finite() & p.is_finite() & (*p >= 0.0)
        });
        if !ok {
            if let Some(index) = prec.iter().position(|&p| p < 0.0) {
                return Err(Error::InvalidCovariance {
                    index,
                    value: prec[index],
                });
            }
            return Err(Error::NonFinite("frame"));
        }
        self.prec.add_all(prec.iter().copied(), self.compensated);
        self.weighted
            .add_all(prec.iter().zip(z).map(|(p, z)| p * z), self.compensated);
        Ok(())
    }

    pub fn finish(self) -> Result<PooledPosterior> {
        let dim = self.prec.sum.len();
        let mut mean = Vec::with_capacity(dim);
        let mut prec = Vec::with_capacity(dim);
        for i in 0..dim {
            let p = self.prec.value(i) + self.prior.prec[i];
            let m = (self.weighted.value(i) + self.prior.prec[i] * self.prior.mean[i]) / p;
            if !p.is_finite() || !m.is_finite() {
                return Err(Error::Overflow("posterior pooling"));
            }
            prec.push(p);
            mean.push(m);
        }
        Ok(PooledPosterior { mean, prec })
    }
}

/// Fuses frame posteriors with the prior into the utterance-level posterior.
///
/// Frames are accumulated in input order. An empty frame list returns the prior.
pub fn posterior_pool(frames: &[FramePosterior], prior: &GaussianPrior) -> Result<PooledPosterior> {
    let mut acc = PoolAccumulator::new(prior, frames.len())?;
    for frame in frames {
        acc.push(&frame.z, &frame.prec)?;
    }
    acc.finish()
}

/// Diagonal of the posterior covariance `L_s^-1`.
pub fn posterior_covariance(posterior: &PooledPosterior) -> Result<Vec<f64>> {
    posterior
        .prec
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value > 0.0 {
                Ok(1.0 / value)
            } else {
                Err(Error::SingularPrecision { index, value })
            }
        })
        .collect()
}
