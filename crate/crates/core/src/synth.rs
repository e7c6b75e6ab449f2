//! Deterministic synthetic corpora standing in for a trained encoder.
//!
//! Each speaker has a latent mean `m ~ N(0, between_var I)`. Each utterance
//! adds a session offset `w ~ N(0, within_var I)` and emits
//! `T = round(duration * frames_per_second)` frames
//! `z_t = m + w + sqrt(v) eps_t` where `v = frame_noise_var * h` and
//! `h = exp(heteroscedasticity * g)`, `g ~ N(0, 1)`, is drawn per utterance.
//! Frames carry precision `precision_scale / v`. They are pooled (streaming,
//! without materializing the frame list) under the
//! honest prior `N(0, (between_var + within_var) I)` and propagated through
//! identity batch normalization and a seeded random affine layer.
//!
//! Random streams: every consumer gets its own ChaCha8 stream derived from
//! the corpus seed, a domain tag and an index (see [`substream`]). Results do
//! not depend on how many threads run the generation.

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::corpus_stats::Labels;
use crate::error::{Error, Result};
use crate::pooling::{GaussianPrior, PoolAccumulator};
use crate::propagation::{propagate, AffineLayer, BatchNormStats, UncertainEmbedding};
use crate::trial::{embedding_set, EmbeddingSet, Label, Trial};

const DOMAIN_LAYER: u64 = 1;
const DOMAIN_SPEAKER: u64 = 2;
const DOMAIN_UTTERANCE: u64 = 3;
const DOMAIN_TRIALS: u64 = 4;

/// Independent stream `index` of domain `domain` under `seed`.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 56) ^ index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub d_z: usize,
    pub d: usize,
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub duration_range_s: (f64, f64),
    pub frames_per_second: f64,
    pub between_var: f64,
    pub within_var: f64,
    pub frame_noise_var: f64,
    pub heteroscedasticity: f64,
    /// Multiplies the reported frame precision; 1 means honest.
    pub precision_scale: f64,
    pub seed: u64,
}

/// Frame noise such that the prior weighs as much as this many seconds of
/// speech. Smaller values make long utterances dominate the prior sooner.
const PRIOR_WEIGHT_S: f64 = 15.0;

impl Default for SynthConfig {
    fn default() -> Self {
        let (between_var, within_var, fps) = (16.0, 2.0, 100.0);
        Self {
            d_z: 32,
            d: 16,
            n_speakers: 50,
            utts_per_speaker: 10,
            duration_range_s: (2.0, 60.0),
            frames_per_second: fps,
            between_var,
            within_var,
            frame_noise_var: PRIOR_WEIGHT_S * fps * (between_var + within_var),
            heteroscedasticity: 0.1,
            precision_scale: 1.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    /// 192-dimensional embeddings from a 128-dimensional latent space.
    pub fn full_scale() -> Self {
        let base = Self::default();
        let (between_var, within_var) = (192.0, 24.0);
        Self {
            d_z: 128,
            d: 192,
            between_var,
            within_var,
            frame_noise_var: PRIOR_WEIGHT_S * base.frames_per_second * (between_var + within_var),
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.d_z == 0 || self.d == 0 {
            return bad("dimensions must be >= 1".into());
        }
        if self.n_speakers == 0 || self.utts_per_speaker == 0 {
            return bad("speaker and utterance counts must be >= 1".into());
        }
        let (lo, hi) = self.duration_range_s;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("invalid duration range ({lo}, {hi})"));
        }
        for (name, v) in [
            ("frames_per_second", self.frames_per_second),
            ("between_var", self.between_var),
            ("within_var", self.within_var),
            ("frame_noise_var", self.frame_noise_var),
            ("precision_scale", self.precision_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.heteroscedasticity >= 0.0 && self.heteroscedasticity.is_finite()) {
            return bad(format!(
                "heteroscedasticity must be >= 0, got {}",
                self.heteroscedasticity
            ));
        }
        Ok(())
    }

    pub fn speaker_id(s: usize) -> String {
        format!("spk{s:04}")
    }

    pub fn utterance_id(s: usize, u: usize) -> String {
        format!("spk{s:04}-utt{u:03}")
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub embeddings: EmbeddingSet,
    pub labels: Labels,
    pub layer: AffineLayer,
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, var: f64) -> Vec<f64> {
    let sd = var.sqrt();
    (0..n)
        .map(|_| {
            let g: f64 = StandardNormal.sample(rng);
            sd * g
        })
        .collect()
}

fn random_layer(cfg: &SynthConfig) -> Result<AffineLayer> {
    let mut rng = substream(cfg.seed, DOMAIN_LAYER, 0);
    let weights = normal_vec(&mut rng, cfg.d * cfg.d_z, 1.0 / cfg.d_z as f64);
    let bias = normal_vec(&mut rng, cfg.d, 0.01);
    AffineLayer::new(weights, bias, cfg.d_z)
}

fn utterance(
    cfg: &SynthConfig,
    speaker_mean: &[f64],
    s: usize,
    u: usize,
    prior: &GaussianPrior,
    layer: &AffineLayer,
) -> Result<UncertainEmbedding> {
    let mut rng = substream(
        cfg.seed,
        DOMAIN_UTTERANCE,
        (s * cfg.utts_per_speaker + u) as u64,
    );
    let (lo, hi) = cfg.duration_range_s;
    let duration = if lo < hi {
        rng.random_range(lo..hi)
    } else {
        lo
    };
    let n_frames = ((duration * cfg.frames_per_second).round() as usize).max(1);
    let g: f64 = StandardNormal.sample(&mut rng);
    let noise_var = cfg.frame_noise_var * (cfg.heteroscedasticity * g).exp();
    let session = normal_vec(&mut rng, cfg.d_z, cfg.within_var);
    let centre: Vec<f64> = speaker_mean
        .iter()
        .zip(&session)
        .map(|(m, w)| m + w)
        .collect();

    let noise_sd = noise_var.sqrt();
    let prec = vec![cfg.precision_scale / noise_var; cfg.d_z];
    let mut acc = PoolAccumulator::new(prior, n_frames)?;
    let mut z = vec![0.0; cfg.d_z];
    for _ in 0..n_frames {
        for (zi, c) in z.iter_mut().zip(&centre) {
            let g: f64 = StandardNormal.sample(&mut rng);
            *zi = c + noise_sd * g;
        }
        acc.push(&z, &prec)?;
    }
    let pooled = acc.finish()?;
    propagate(
        &pooled,
        &BatchNormStats::identity(cfg.d_z),
        layer,
        SynthConfig::utterance_id(s, u),
        Some(duration),
    )
}

/// Generates embeddings, speaker labels and durations for `cfg`.
///
/// Output is ordered by speaker, then utterance index.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let layer = random_layer(cfg)?;
    let prior = GaussianPrior::isotropic(cfg.d_z, cfg.between_var + cfg.within_var)?;
    let speaker_means: Vec<Vec<f64>> = (0..cfg.n_speakers)
        .map(|s| {
            normal_vec(
                &mut substream(cfg.seed, DOMAIN_SPEAKER, s as u64),
                cfg.d_z,
                cfg.between_var,
            )
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..cfg.n_speakers)
        .flat_map(|s| (0..cfg.utts_per_speaker).map(move |u| (s, u)))
        .collect();
    let embeddings = jobs
        .par_iter()
        .map(|&(s, u)| utterance(cfg, &speaker_means[s], s, u, &prior, &layer))
        .collect::<Result<Vec<_>>>()?;

    let labels = jobs
        .iter()
        .map(|&(s, u)| (SynthConfig::utterance_id(s, u), SynthConfig::speaker_id(s)))
        .collect();
    Ok(SynthCorpus {
        embeddings: embedding_set(embeddings)?,
        labels,
        layer,
    })
}

/// Utterances regrouped so each speaker's utterances are contiguous.
struct Grouping<'a> {
    utts: Vec<&'a str>,
    start: Vec<usize>,
    size: Vec<usize>,
    speaker_of: Vec<usize>,
}

impl<'a> Grouping<'a> {
    fn new(labels: &'a Labels) -> Self {
        let mut order: indexmap::IndexMap<&str, Vec<&str>> = indexmap::IndexMap::new();
        for (utt, spk) in labels {
            order.entry(spk.as_str()).or_default().push(utt.as_str());
        }
        let mut g = Grouping {
            utts: Vec::new(),
            start: Vec::new(),
            size: Vec::new(),
            speaker_of: Vec::new(),
        };
        for (k, members) in order.values().enumerate() {
            g.start.push(g.utts.len());
            g.size.push(members.len());
            g.speaker_of.extend(std::iter::repeat_n(k, members.len()));
            g.utts.extend(members);
        }
        g
    }

    /// Prefix sums of per-enrolment pair counts.
    fn prefix(&self, count: impl Fn(usize) -> usize) -> Vec<usize> {
        let mut acc = Vec::with_capacity(self.utts.len() + 1);
        acc.push(0);
        for e in 0..self.utts.len() {
            acc.push(acc[e] + count(e));
        }
        acc
    }

    fn locate(prefix: &[usize], idx: usize) -> (usize, usize) {
        let e = prefix.partition_point(|&p| p <= idx) - 1;
        (e, idx - prefix[e])
    }
}

/// Samples ordered same-speaker and cross-speaker trials without replacement.
///
/// No trial pairs an utterance with itself; `(a, b)` and `(b, a)` are
/// distinct trials. The output is shuffled and fully determined by `seed`.
pub fn generate_trials(
    labels: &Labels,
    n_target: usize,
    n_nontarget: usize,
    seed: u64,
) -> Result<Vec<Trial>> {
    let g = Grouping::new(labels);
    let n = g.utts.len();
    let target_prefix = g.prefix(|e| g.size[g.speaker_of[e]] - 1);
    let nontarget_prefix = g.prefix(|e| n - g.size[g.speaker_of[e]]);
    let (avail_t, avail_n) = (target_prefix[n], nontarget_prefix[n]);
    if n_target > avail_t {
        return Err(Error::Sampling(format!(
            "requested {n_target} target trials, only {avail_t} available"
        )));
    }
    if n_nontarget > avail_n {
        return Err(Error::Sampling(format!(
            "requested {n_nontarget} nontarget trials, only {avail_n} available"
        )));
    }

    let mut rng = substream(seed, DOMAIN_TRIALS, 0);
    let mut trials = Vec::with_capacity(n_target + n_nontarget);
    for idx in index::sample(&mut rng, avail_t, n_target) {
        let (e, j) = Grouping::locate(&target_prefix, idx);
        let k = g.speaker_of[e];
        let pos = e - g.start[k];
        let t = g.start[k] + if j < pos { j } else { j + 1 };
        trials.push(Trial::new(g.utts[e], g.utts[t], Some(Label::Target)));
    }
    for idx in index::sample(&mut rng, avail_n, n_nontarget) {
        let (e, j) = Grouping::locate(&nontarget_prefix, idx);
        let k = g.speaker_of[e];
        let t = if j < g.start[k] { j } else { j + g.size[k] };
        trials.push(Trial::new(g.utts[e], g.utts[t], Some(Label::Nontarget)));
    }
    trials.shuffle(&mut rng);
    Ok(trials)
}
