//! Detection metrics over scored trials.
//!
//! Operating points are taken at every distinct score value plus `+inf`
//! (reject everything). At threshold `th`:
//!
//! ```text
//! FAR(th) = #{nontarget >= th} / N_n
//! FRR(th) = #{target    <  th} / N_t
//! ```
//!
//! Thresholds strictly between two consecutive distinct scores give the same
//! operating point as the upper one, so this sweep is exhaustive.

use crate::error::{Error, Result};
use crate::propagation::UncertainEmbedding;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            p_target: 0.01,
            c_miss: 1.0,
            c_fa: 1.0,
        }
    }
}

impl DcfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(Error::Config(format!(
                "p_target must lie in (0, 1), got {}",
                self.p_target
            )));
        }
        if !(self.c_miss > 0.0 && self.c_fa > 0.0)
            || !self.c_miss.is_finite()
            || !self.c_fa.is_finite()
        {
            return Err(Error::Config("detection costs must be positive".into()));
        }
        Ok(())
    }

    /// DCF normalized by the cost of the better trivial system.
    pub fn normalized_cost(&self, frr: f64, far: f64) -> f64 {
        let miss = self.c_miss * self.p_target;
        let fa = self.c_fa * (1.0 - self.p_target);
        (miss * frr + fa * far) / miss.min(fa)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetMetrics {
    pub eer: f64,
    pub threshold_eer: f64,
    pub min_dcf: f64,
    pub threshold_dcf: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
    pub dcf_params: DcfParams,
}

fn check_scores(targets: &[f64], nontargets: &[f64]) -> Result<()> {
    if targets.is_empty() || nontargets.is_empty() {
        return Err(Error::Metric(
            "need at least one target and one nontarget score".into(),
        ));
    }
    if !targets.iter().chain(nontargets).all(|s| s.is_finite()) {
        return Err(Error::Metric("scores must be finite".into()));
    }
    Ok(())
}

/// Every operating point of the sweep, in increasing threshold order, ending
/// with the reject-all point at `+inf`.
pub fn det_sweep(targets: &[f64], nontargets: &[f64]) -> Result<Vec<OperatingPoint>> {
    check_scores(targets, nontargets)?;
    let mut t = targets.to_vec();
    let mut n = nontargets.to_vec();
    t.sort_by(f64::total_cmp);
    n.sort_by(f64::total_cmp);
    let (nt, nn) = (t.len() as f64, n.len() as f64);

    let mut points = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    while i < t.len() || j < n.len() {
        let th = match (t.get(i), n.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        // i targets and j nontargets lie strictly below th
        points.push(OperatingPoint {
            threshold: th,
            far: (n.len() - j) as f64 / nn,
            frr: i as f64 / nt,
        });
        while i < t.len() && t[i] == th {
            i += 1;
        }
        while j < n.len() && n[j] == th {
            j += 1;
        }
    }
    points.push(OperatingPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    });
    Ok(points)
}

/// Equal error rate, interpolated linearly between the two operating points
/// where `FAR - FRR` changes sign. Returns `(eer, threshold)`.
pub fn compute_eer(targets: &[f64], nontargets: &[f64]) -> Result<(f64, f64)> {
    Ok(eer_from_sweep(&det_sweep(targets, nontargets)?))
}

pub(crate) fn eer_from_sweep(points: &[OperatingPoint]) -> (f64, f64) {
    for w in points.windows(2) {
        let (p, q) = (w[0], w[1]);
        let dp = p.far - p.frr;
        let dq = q.far - q.frr;
        if dp > 0.0 && dq <= 0.0 {
            let lambda = dp / (dp - dq);
            let eer = p.frr + lambda * (q.frr - p.frr);
            let threshold = if q.threshold.is_finite() {
                p.threshold + lambda * (q.threshold - p.threshold)
            } else {
                p.threshold
            };
            return (eer, threshold);
        }
    }
    // The sweep always ends at FAR = 0, FRR = 1, so a sign change exists.
    unreachable!("detection sweep without FAR/FRR crossing")
}

/// Minimum normalized detection cost over the sweep. Returns `(min_dcf, threshold)`.
pub fn compute_min_dcf(
    targets: &[f64],
    nontargets: &[f64],
    params: DcfParams,
) -> Result<(f64, f64)> {
    params.validate()?;
    Ok(min_dcf_from_sweep(&det_sweep(targets, nontargets)?, params))
}

pub(crate) fn min_dcf_from_sweep(points: &[OperatingPoint], params: DcfParams) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::INFINITY);
    for p in points {
        let c = params.normalized_cost(p.frr, p.far);
        if c < best.0 {
            best = (c, p.threshold);
        }
    }
    best
}

pub fn evaluate(targets: &[f64], nontargets: &[f64], params: DcfParams) -> Result<DetMetrics> {
    params.validate()?;
    let sweep = det_sweep(targets, nontargets)?;
    let (eer, threshold_eer) = eer_from_sweep(&sweep);
    let (min_dcf, threshold_dcf) = min_dcf_from_sweep(&sweep, params);
    Ok(DetMetrics {
        eer,
        threshold_eer,
        min_dcf,
        threshold_dcf,
        n_target: targets.len(),
        n_nontarget: nontargets.len(),
        dcf_params: params,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            context: "pearson",
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation(
            "need at least two points".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// `(duration, average uncertainty)` for every embedding, in set order.
pub fn duration_uncertainty(embeddings: &crate::trial::EmbeddingSet) -> Result<Vec<(f64, f64)>> {
    embeddings
        .values()
        .map(|e| {
            let d = e
                .duration_s
                .ok_or_else(|| Error::Config(format!("embedding {} has no duration", e.id)))?;
            Ok((d, avg_uncertainty_scalar(e)))
        })
        .collect()
}

/// Mean of the uncertainty diagonal.
pub fn avg_uncertainty_scalar(e: &UncertainEmbedding) -> f64 {
    e.sigma_u.iter().sum::<f64>() / e.sigma_u.len() as f64
}
