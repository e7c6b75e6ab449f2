//! Within-, between- and total covariance diagonals of labelled embedding
//! means, plus the average uncertainty diagonal.

use std::collections::BTreeMap;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::propagation::UncertainEmbedding;
use crate::trial::EmbeddingSet;

/// Utterance id to speaker id.
pub type Labels = IndexMap<String, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport {
    pub mean: Vec<f64>,
    pub within: Vec<f64>,
    pub between: Vec<f64>,
    pub total: Vec<f64>,
    pub avg_uncertainty: Vec<f64>,
    pub n_utts: usize,
    pub n_speakers: usize,
}

/// Groups embeddings by speaker: speakers sorted by id, utterances sorted by id.
fn group_by_speaker<'a>(
    embeddings: &'a EmbeddingSet,
    labels: &'a Labels,
) -> Result<Vec<Vec<&'a UncertainEmbedding>>> {
    let mut missing = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&UncertainEmbedding>> = BTreeMap::new();
    for (id, e) in embeddings {
        match labels.get(id) {
            Some(spk) => groups.entry(spk.as_str()).or_default().push(e),
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingLabels(missing));
    }
    Ok(groups
        .into_values()
        .map(|mut g| {
            g.sort_by(|a, b| a.id.cmp(&b.id));
            g
        })
        .collect())
}

fn scale(v: &mut [f64], divisor: usize) {
    if divisor == 0 {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        v.iter_mut().for_each(|x| *x /= divisor as f64);
    }
}

/// Estimates the covariance diagonals.
///
/// Divisors: within `N - K`, between `K - 1`, total `N - 1`. A quantity with a
/// zero divisor is reported as the zero vector. The result does not depend
/// on the order of `embeddings`.
pub fn estimate_covariances(
    embeddings: &EmbeddingSet,
    labels: &Labels,
) -> Result<CovarianceReport> {
    if embeddings.is_empty() {
        return Err(Error::Estimation("no embeddings".into()));
    }
    let groups = group_by_speaker(embeddings, labels)?;
    let d = embeddings[0].dim();
    let n = embeddings.len();
    let k = groups.len();

    let mut mean = vec![0.0; d];
    let mut avg_uncertainty = vec![0.0; d];
    let mut class_means = Vec::with_capacity(k);
    for group in &groups {
        let mut m = vec![0.0; d];
        for e in group {
            for i in 0..d {
                m[i] += e.phi[i];
                mean[i] += e.phi[i];
                avg_uncertainty[i] += e.sigma_u[i];
            }
        }
        m.iter_mut().for_each(|x| *x /= group.len() as f64);
        class_means.push(m);
    }
    mean.iter_mut().for_each(|x| *x /= n as f64);
    avg_uncertainty.iter_mut().for_each(|x| *x /= n as f64);

    let mut within = vec![0.0; d];
    let mut total = vec![0.0; d];
    let mut between = vec![0.0; d];
    for (group, m) in groups.iter().zip(&class_means) {
        for e in group {
            for i in 0..d {
                let dw = e.phi[i] - m[i];
                let dt = e.phi[i] - mean[i];
                within[i] += dw * dw;
                total[i] += dt * dt;
            }
        }
        for i in 0..d {
            let db = m[i] - mean[i];
            between[i] += db * db;
        }
    }
    scale(&mut within, n - k);
    scale(&mut between, k - 1);
    scale(&mut total, n - 1);

    Ok(CovarianceReport {
        mean,
        within,
        between,
        total,
        avg_uncertainty,
        n_utts: n,
        n_speakers: k,
    })
}

/// Minimum, quartiles and maximum; quartiles by linear interpolation
/// between order statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Estimation(
                "five-number summary of an empty vector".into(),
            ));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            min: sorted[0],
            q1: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q3: quantile_sorted(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        })
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.min, self.q1, self.median, self.q3, self.max]
    }

    /// Whether the `[min, max]` ranges of two summaries intersect.
    pub fn overlaps(&self, other: &FiveNumber) -> bool {
        self.min <= other.max && other.min <= self.max
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxplotSummary {
    pub within: FiveNumber,
    pub between: FiveNumber,
    pub total: FiveNumber,
    pub avg_uncertainty: FiveNumber,
}

pub fn summarize_boxplot(report: &CovarianceReport) -> Result<BoxplotSummary> {
    Ok(BoxplotSummary {
        within: FiveNumber::of(&report.within)?,
        between: FiveNumber::of(&report.between)?,
        total: FiveNumber::of(&report.total)?,
        avg_uncertainty: FiveNumber::of(&report.avg_uncertainty)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::embedding_set;

    fn data(points: &[(&str, &str, &[f64])]) -> (EmbeddingSet, Labels) {
        let set = embedding_set(points.iter().map(|(id, _, x)| {
            UncertainEmbedding::new(*id, x.to_vec(), vec![0.5; x.len()], None).unwrap()
        }))
        .unwrap();
        let labels = points
            .iter()
            .map(|(id, s, _)| (id.to_string(), s.to_string()))
            .collect();
        (set, labels)
    }

    #[test]
    fn single_speaker_has_no_between_scatter() {
        let (set, labels) = data(&[
            ("a", "s", &[1.0, 2.0]),
            ("b", "s", &[3.0, -1.0]),
            ("c", "s", &[0.0, 0.0]),
        ]);
        let r = estimate_covariances(&set, &labels).unwrap();
        assert_eq!(r.between, vec![0.0, 0.0]);
        assert_eq!(r.n_speakers, 1);
        assert!(r.within.iter().all(|w| *w > 0.0));
    }

    #[test]
    fn identical_embeddings_have_no_scatter() {
        let (set, labels) = data(&[("a", "s", &[1.0]), ("b", "t", &[1.0]), ("c", "t", &[1.0])]);
        let r = estimate_covariances(&set, &labels).unwrap();
        assert_eq!(
            (r.within.clone(), r.between.clone(), r.total.clone()),
            (vec![0.0], vec![0.0], vec![0.0])
        );
        assert_eq!(r.avg_uncertainty, vec![0.5]);
    }

    #[test]
    fn two_by_two_hand_values() {
        let (set, labels) = data(&[
            ("a1", "A", &[-1.0]),
            ("a2", "A", &[1.0]),
            ("b1", "B", &[3.0]),
            ("b2", "B", &[5.0]),
        ]);
        let r = estimate_covariances(&set, &labels).unwrap();
        assert_eq!(r.mean, vec![2.0]);
        assert_eq!(r.within, vec![2.0]);
        assert_eq!(r.between, vec![8.0]);
        assert!((r.total[0] - 20.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn missing_labels_and_empty_input() {
        let (set, mut labels) = data(&[("a", "s", &[1.0]), ("b", "s", &[2.0])]);
        labels.shift_remove("b");
        assert_eq!(
            estimate_covariances(&set, &labels),
            Err(Error::MissingLabels(vec!["b".into()]))
        );
        assert!(matches!(
            estimate_covariances(&EmbeddingSet::new(), &Labels::new()),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn report_ignores_input_order() {
        let pts: Vec<(String, String, Vec<f64>)> = (0..12)
            .map(|i| {
                let x = (i as f64 * 0.37).sin() * 3.0;
                (
                    format!("u{i:02}"),
                    format!("s{}", i % 3),
                    vec![x, x * x - 1.0, 0.1 * i as f64],
                )
            })
            .collect();
        let build = |order: &[usize]| {
            let set = embedding_set(order.iter().map(|&i| {
                UncertainEmbedding::new(
                    pts[i].0.clone(),
                    pts[i].2.clone(),
                    vec![0.1 * i as f64; 3],
                    None,
                )
                .unwrap()
            }))
            .unwrap();
            let labels: Labels = order
                .iter()
                .map(|&i| (pts[i].0.clone(), pts[i].1.clone()))
                .collect();
            estimate_covariances(&set, &labels).unwrap()
        };
        let forward: Vec<usize> = (0..12).collect();
        let shuffled = [7, 2, 11, 0, 5, 9, 1, 3, 10, 4, 8, 6];
        assert_eq!(build(&forward), build(&shuffled));
    }

    #[test]
    fn five_number_examples() {
        let c = FiveNumber::of(&[2.5; 6]).unwrap();
        assert_eq!(c.as_array(), [2.5; 5]);
        let s = FiveNumber::of(&[5.0, 3.0, 1.0, 4.0, 2.0]).unwrap();
        assert_eq!(s.as_array(), [1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(FiveNumber::of(&[7.0]).unwrap().as_array(), [7.0; 5]);
        let even = FiveNumber::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((even.q1, even.median, even.q3), (1.75, 2.5, 3.25));
        assert!(FiveNumber::of(&[]).is_err());
    }
}
