//! Propagation of the pooled posterior through inference-mode batch
//! normalization and the first fully-connected layer.
//!
//! Only diagonals are carried. The FC output covariance `W S W^T` is reduced
//! to its diagonal `sum_i W_ji^2 s_i` without forming the dense product.

use crate::error::{check_finite, check_len, Error, Result};
use crate::pooling::{posterior_covariance, PooledPosterior};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormStats {
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub eps: f64,
}

impl BatchNormStats {
    pub fn new(
        mu: Vec<f64>,
        var: Vec<f64>,
        gamma: Vec<f64>,
        beta: Vec<f64>,
        eps: f64,
    ) -> Result<Self> {
        let bn = Self {
            mu,
            var,
            gamma,
            beta,
            eps,
        };
        bn.validate()?;
        Ok(bn)
    }

    /// `mu = 0, var = 1, gamma = 1, beta = 0, eps = 0`.
    pub fn identity(dim: usize) -> Self {
        Self {
            mu: vec![0.0; dim],
            var: vec![1.0; dim],
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            eps: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn validate(&self) -> Result<()> {
        let dim = self.dim();
        check_len("batchnorm variance", dim, self.var.len())?;
        check_len("batchnorm gamma", dim, self.gamma.len())?;
        check_len("batchnorm beta", dim, self.beta.len())?;
        check_finite("batchnorm mean", &self.mu)?;
        check_finite("batchnorm variance", &self.var)?;
        check_finite("batchnorm gamma", &self.gamma)?;
        check_finite("batchnorm beta", &self.beta)?;
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!(
                "batchnorm eps must be >= 0, got {}",
                self.eps
            )));
        }
        for (index, &v) in self.var.iter().enumerate() {
            if v < 0.0 {
                return Err(Error::InvalidCovariance { index, value: v });
            }
            if v + self.eps <= 0.0 {
                return Err(Error::SingularCovariance {
                    index,
                    value: v + self.eps,
                });
            }
        }
        Ok(())
    }
}

/// Dense `d_out x d_in` weight matrix (row-major) and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    weights: Vec<f64>,
    bias: Vec<f64>,
    d_in: usize,
}

impl AffineLayer {
    pub fn new(weights: Vec<f64>, bias: Vec<f64>, d_in: usize) -> Result<Self> {
        let d_out = bias.len();
        if d_out == 0 || d_in == 0 {
            return Err(Error::Config(
                "affine layer needs d_out >= 1 and d_in >= 1".into(),
            ));
        }
        check_len("affine weights", d_out * d_in, weights.len())?;
        check_finite("affine weights", &weights)?;
        check_finite("affine bias", &bias)?;
        Ok(Self {
            weights,
            bias,
            d_in,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        Self {
            weights,
            bias: vec![0.0; dim],
            d_in: dim,
        }
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.bias.len()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.d_in..(j + 1) * self.d_in]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

/// An embedding mean together with the diagonal of its uncertainty covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainEmbedding {
    pub id: String,
    pub phi: Vec<f64>,
    pub sigma_u: Vec<f64>,
    pub duration_s: Option<f64>,
}

impl UncertainEmbedding {
    pub fn new(
        id: impl Into<String>,
        phi: Vec<f64>,
        sigma_u: Vec<f64>,
        duration_s: Option<f64>,
    ) -> Result<Self> {
        check_len("uncertainty diagonal", phi.len(), sigma_u.len())?;
        check_finite("embedding mean", &phi)?;
        check_finite("uncertainty diagonal", &sigma_u)?;
        if let Some((index, &value)) = sigma_u.iter().enumerate().find(|(_, s)| **s < 0.0) {
            return Err(Error::InvalidCovariance { index, value });
        }
        if let Some(d) = duration_s {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::Config(format!(
                    "duration must be a nonnegative number, got {d}"
                )));
            }
        }
        Ok(Self {
            id: id.into(),
            phi,
            sigma_u,
            duration_s,
        })
    }

    /// Embedding without uncertainty (all-zero covariance diagonal).
    pub fn certain(id: impl Into<String>, phi: Vec<f64>) -> Result<Self> {
        let d = phi.len();
        Self::new(id, phi, vec![0.0; d], None)
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }
}

/// Applies inference-mode batch normalization to a mean and diagonal covariance.
pub fn batchnorm_apply(
    mean: &[f64],
    cov: &[f64],
    bn: &BatchNormStats,
) -> Result<(Vec<f64>, Vec<f64>)> {
    bn.validate()?;
    check_len("batchnorm input mean", bn.dim(), mean.len())?;
    check_len("batchnorm input covariance", bn.dim(), cov.len())?;
    check_finite("batchnorm input mean", mean)?;
    check_finite("batchnorm input covariance", cov)?;
    if let Some((index, &value)) = cov.iter().enumerate().find(|(_, c)| **c < 0.0) {
        return Err(Error::InvalidCovariance { index, value });
    }
    let mut out_mean = Vec::with_capacity(mean.len());
    let mut out_cov = Vec::with_capacity(cov.len());
    for i in 0..mean.len() {
        let denom = bn.var[i] + bn.eps;
        out_mean.push(bn.gamma[i] * (mean[i] - bn.mu[i]) / denom.sqrt() + bn.beta[i]);
        out_cov.push(bn.gamma[i] * bn.gamma[i] / denom * cov[i]);
    }
    Ok((out_mean, out_cov))
}

/// Maps a pooled posterior to an [`UncertainEmbedding`].
pub fn propagate(
    posterior: &PooledPosterior,
    bn: &BatchNormStats,
    layer: &AffineLayer,
    id: impl Into<String>,
    duration_s: Option<f64>,
) -> Result<UncertainEmbedding> {
    let cov = posterior_covariance(posterior)?;
    let (bn_mean, bn_cov) = batchnorm_apply(&posterior.mean, &cov, bn)?;
    check_len("affine input", layer.d_in(), bn_mean.len())?;

    let mut phi = Vec::with_capacity(layer.d_out());
    let mut sigma_u = Vec::with_capacity(layer.d_out());
    for j in 0..layer.d_out() {
        let row = layer.row(j);
        let mut m = layer.bias[j];
        let mut s = 0.0;
        for i in 0..row.len() {
            m += row[i] * bn_mean[i];
            s += row[i] * row[i] * bn_cov[i];
        }
        phi.push(m);
        sigma_u.push(s);
    }
    if !phi.iter().chain(&sigma_u).all(|v| v.is_finite()) {
        return Err(Error::Overflow("uncertainty propagation"));
    }
    Ok(UncertainEmbedding {
        id: id.into(),
        phi,
        sigma_u,
        duration_s,
    })
}
