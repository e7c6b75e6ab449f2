use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use clap::ValueEnum;
use upcos_core::metrics::{det_sweep, duration_uncertainty};
use upcos_core::{
    estimate_covariances, evaluate, generate_corpus, generate_trials, pearson, plda_fit,
    score_trials_with, summarize_boxplot, DcfParams, EmbeddingSet, Label, PldaScorer, ScoreVariant,
    SynthConfig, TrialScore, UpCosScorer,
};

use crate::error::{CliError, CliResult, Kind};
use crate::formats::{self, fmt_f64, read_text, write_text, Stats};
use crate::{
    AnalyzeArgs, GenArgs, GenSettings, MetricsArgs, Profile, ScoreArgs, StatsArgs, Variant,
};

/// Trials sampled per label when no count is requested.
const DEFAULT_TRIALS: usize = 1000;

/// Reads and parses `path`, naming the file in any parse error.
fn load<T>(path: &Path, parse: fn(&str) -> CliResult<T>) -> CliResult<T> {
    parse(&read_text(path)?).map_err(|e| {
        if e.kind == Kind::Io {
            e
        } else {
            e.context(path.display())
        }
    })
}

impl GenSettings {
    /// Field-wise `self` if set, otherwise `fallback`.
    fn or(self, fallback: GenSettings) -> GenSettings {
        GenSettings {
            profile: self.profile.or(fallback.profile),
            seed: self.seed.or(fallback.seed),
            speakers: self.speakers.or(fallback.speakers),
            utts: self.utts.or(fallback.utts),
            latent_dim: self.latent_dim.or(fallback.latent_dim),
            dim: self.dim.or(fallback.dim),
            min_duration: self.min_duration.or(fallback.min_duration),
            max_duration: self.max_duration.or(fallback.max_duration),
            frames_per_second: self.frames_per_second.or(fallback.frames_per_second),
            between_var: self.between_var.or(fallback.between_var),
            within_var: self.within_var.or(fallback.within_var),
            frame_noise_var: self.frame_noise_var.or(fallback.frame_noise_var),
            heteroscedasticity: self.heteroscedasticity.or(fallback.heteroscedasticity),
            precision_scale: self.precision_scale.or(fallback.precision_scale),
            targets: self.targets.or(fallback.targets),
            nontargets: self.nontargets.or(fallback.nontargets),
        }
    }

    fn config(&self) -> SynthConfig {
        let base = match self.profile.unwrap_or(Profile::Default) {
            Profile::Default => SynthConfig::default(),
            Profile::Full => SynthConfig::full_scale(),
        };
        SynthConfig {
            d_z: self.latent_dim.unwrap_or(base.d_z),
            d: self.dim.unwrap_or(base.d),
            n_speakers: self.speakers.unwrap_or(base.n_speakers),
            utts_per_speaker: self.utts.unwrap_or(base.utts_per_speaker),
            duration_range_s: (
                self.min_duration.unwrap_or(base.duration_range_s.0),
                self.max_duration.unwrap_or(base.duration_range_s.1),
            ),
            frames_per_second: self.frames_per_second.unwrap_or(base.frames_per_second),
            between_var: self.between_var.unwrap_or(base.between_var),
            within_var: self.within_var.unwrap_or(base.within_var),
            frame_noise_var: self.frame_noise_var.unwrap_or(base.frame_noise_var),
            heteroscedasticity: self.heteroscedasticity.unwrap_or(base.heteroscedasticity),
            precision_scale: self.precision_scale.unwrap_or(base.precision_scale),
            seed: self.seed.unwrap_or(base.seed),
        }
    }
}

pub fn gen(args: GenArgs) -> CliResult<()> {
    let from_file = match &args.config {
        Some(path) => toml::from_str::<GenSettings>(&read_text(path)?)
            .map_err(|e| CliError::usage(format!("{}: {}", path.display(), e.message())))?,
        None => GenSettings::default(),
    };
    let settings = args.settings.or(from_file);
    let cfg = settings.config();
    cfg.validate()?;

    let n = cfg.n_speakers.saturating_mul(cfg.utts_per_speaker);
    let available_targets = n.saturating_mul(cfg.utts_per_speaker - 1);
    let available_nontargets = n.saturating_mul(n - cfg.utts_per_speaker);
    let n_target = settings
        .targets
        .unwrap_or(DEFAULT_TRIALS.min(available_targets));
    let n_nontarget = settings
        .nontargets
        .unwrap_or(DEFAULT_TRIALS.min(available_nontargets));

    let corpus = generate_corpus(&cfg)?;
    let trials = generate_trials(&corpus.labels, n_target, n_nontarget, cfg.seed)?;

    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    write_text(
        &args.out.join("embeddings.txt"),
        &formats::format_embeddings(&corpus.embeddings),
    )?;
    write_text(
        &args.out.join("labels.txt"),
        &formats::format_labels(&corpus.labels),
    )?;
    write_text(
        &args.out.join("trials.txt"),
        &formats::format_trials(&trials),
    )?;
    println!(
        "wrote {} embeddings, {} trials to {}",
        corpus.embeddings.len(),
        trials.len(),
        args.out.display()
    );
    Ok(())
}

pub fn score(args: ScoreArgs) -> CliResult<()> {
    let name = args
        .variant
        .to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default();
    let is_plda = matches!(args.variant, Variant::Plda | Variant::UpPlda);
    let cos_variant = match args.variant {
        Variant::Cos => Some(ScoreVariant::Cos),
        Variant::Up1 => Some(ScoreVariant::UpCos1),
        Variant::Up2 => Some(ScoreVariant::UpCos2),
        Variant::Up3 => Some(ScoreVariant::UpCos3),
        Variant::Up4 => Some(ScoreVariant::UpCos4),
        Variant::Plda | Variant::UpPlda => None,
    };
    let needs_stats = is_plda || cos_variant.is_some_and(ScoreVariant::needs_total_covariance);
    if needs_stats && args.stats.is_none() {
        return Err(CliError::usage(format!("variant {name} requires --stats")));
    }
    if is_plda && args.alphas.is_some() {
        return Err(CliError::usage(format!(
            "variant {name} has no alpha factors"
        )));
    }

    let stats = args
        .stats
        .as_deref()
        .map(|p| load(p, formats::parse_stats))
        .transpose()?;
    let enrol = load(&args.enrol, formats::parse_embeddings)?;
    let separate_test = match &args.test {
        Some(p) if *p != args.enrol => Some(load(p, formats::parse_embeddings)?),
        _ => None,
    };
    let test: &EmbeddingSet = separate_test.as_ref().unwrap_or(&enrol);
    let trials = load(&args.trials, formats::parse_trials)?;

    let scores: Vec<TrialScore> = match cos_variant {
        Some(variant) => {
            let total = stats
                .as_ref()
                .map(|s| s.report.total.clone())
                .filter(|_| variant.needs_total_covariance());
            let scorer = UpCosScorer::new(variant, total)?;
            score_trials_with(&trials, &enrol, test, &scorer)?
        }
        None => {
            let stats = stats.as_ref().expect("checked above");
            let model = stats.plda.clone().ok_or_else(|| {
                CliError::usage(format!(
                    "variant {name} requires a stats file with a [plda] section"
                ))
            })?;
            let scorer = PldaScorer {
                model,
                use_uncertainty: args.variant == Variant::UpPlda,
            };
            score_trials_with(&trials, &enrol, test, &scorer)?
        }
    };

    write_text(&args.out, &formats::format_scores(&scores))?;
    if let Some(path) = &args.alphas {
        write_text(path, &formats::format_alphas(&scores))?;
    }
    Ok(())
}

pub fn metrics(args: MetricsArgs) -> CliResult<()> {
    let params = DcfParams {
        p_target: args.dcf_ptarget,
        c_miss: args.dcf_cmiss,
        c_fa: args.dcf_cfa,
    };
    params.validate()?;
    let scores = load(&args.scores, formats::parse_scores)?;
    let trials = load(&args.trials, formats::parse_trials)?;

    let mut labels: HashMap<(&str, &str), Option<Label>> = HashMap::with_capacity(trials.len());
    for t in &trials {
        if let Some(prev) = labels.insert((&t.enrol, &t.test), t.label) {
            if prev != t.label {
                return Err(CliError::data(format!(
                    "trial {} {} appears with conflicting labels",
                    t.enrol, t.test
                )));
            }
        }
    }
    let (mut targets, mut nontargets) = (Vec::new(), Vec::new());
    for (e, t, s) in &scores {
        match labels.get(&(e.as_str(), t.as_str())) {
            Some(Some(Label::Target)) => targets.push(*s),
            Some(Some(Label::Nontarget)) => nontargets.push(*s),
            Some(None) | None => {
                return Err(CliError::usage(format!(
                    "scored trial {e} {t} is unlabeled"
                )))
            }
        }
    }

    let m = evaluate(&targets, &nontargets, params)?;
    if let Some(path) = &args.sweep {
        let mut csv = String::from("threshold,far,frr\n");
        for p in det_sweep(&targets, &nontargets)? {
            let _ = writeln!(
                csv,
                "{},{},{}",
                fmt_f64(p.threshold),
                fmt_f64(p.far),
                fmt_f64(p.frr)
            );
        }
        write_text(path, &csv)?;
    }
    println!(
        "# p_target={} c_miss={} c_fa={}",
        fmt_f64(params.p_target),
        fmt_f64(params.c_miss),
        fmt_f64(params.c_fa)
    );
    println!(
        "eer={} min_dcf={} n_target={} n_nontarget={}",
        fmt_f64(m.eer),
        fmt_f64(m.min_dcf),
        m.n_target,
        m.n_nontarget
    );
    Ok(())
}

pub fn stats(args: StatsArgs) -> CliResult<()> {
    let embeddings = load(&args.embeddings, formats::parse_embeddings)?;
    let labels = load(&args.labels, formats::parse_labels)?;
    let report = estimate_covariances(&embeddings, &labels)?;
    let boxplot = summarize_boxplot(&report)?;
    let plda = if args.no_plda {
        None
    } else {
        Some(
            plda_fit(&embeddings, &labels)
                .map_err(|e| CliError::from(e).context("plda fit (--no-plda skips it)"))?,
        )
    };
    write_text(
        &args.out,
        &formats::format_stats(&Stats {
            report,
            boxplot,
            plda,
        }),
    )
}

pub fn analyze(args: AnalyzeArgs) -> CliResult<()> {
    let embeddings = load(&args.embeddings, formats::parse_embeddings)?;
    if embeddings.is_empty() {
        return Err(CliError::usage(format!(
            "{}: no embeddings",
            args.embeddings.display()
        )));
    }
    let pairs = duration_uncertainty(&embeddings)?;
    let (durations, uncertainty): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let r = pearson(&durations, &uncertainty)?;

    let mut csv = String::from("id,duration_s,avg_uncertainty\n");
    for (id, (d, u)) in embeddings.keys().zip(&pairs) {
        let _ = writeln!(csv, "{id},{},{}", fmt_f64(*d), fmt_f64(*u));
    }
    write_text(&args.out, &csv)?;
    println!("pearson={}", fmt_f64(r));
    Ok(())
}
