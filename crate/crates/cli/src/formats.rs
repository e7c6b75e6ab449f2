//! Text file formats.
//!
//! Every format is line-oriented and whitespace-separated. Blank lines are
//! ignored. Floats are written in the shortest form that parses back to the
//! identical value.
//!
//! ```text
//! embeddings  UPEMB1 <d> <count>
//!             <id> [<duration_s>] <phi x d> <sigma_u x d>
//! trials      <enrol_id> <test_id> [target|nontarget]
//! scores      <enrol_id> <test_id> <score>
//! alphas      <enrol_id> <test_id> <alpha_e> <alpha_t>
//! labels      <utt_id> <speaker_id>
//! stats       UPSTATS1 <d>, counts, then [mean] [within] [between] [total]
//!             [avg_uncertainty] [boxplot] and optionally [plda]
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use upcos_core::{
    embedding_set, BoxplotSummary, CovarianceReport, EmbeddingSet, FiveNumber, Label, Labels,
    PldaModel, Trial, TrialScore, UncertainEmbedding,
};

use crate::error::{CliError, CliResult};

pub const EMBEDDING_MAGIC: &str = "UPEMB1";
pub const STATS_MAGIC: &str = "UPSTATS1";

/// Shortest round-trip decimal; scientific notation for very small or large magnitudes.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) || !a.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn push_values(out: &mut String, values: &[f64]) {
    for v in values {
        out.push(' ');
        out.push_str(&fmt_f64(*v));
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, t)| !t.is_empty())
}

fn parse_f64(token: &str, line: usize) -> CliResult<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| CliError::data(format!("line {line}: {token:?} is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::data(format!(
            "line {line}: non-finite value {token:?}"
        )))
    }
}

fn parse_usize(token: &str, line: usize) -> CliResult<usize> {
    token
        .parse()
        .map_err(|_| CliError::data(format!("line {line}: {token:?} is not a count")))
}

fn parse_values(tokens: &[&str], line: usize) -> CliResult<Vec<f64>> {
    tokens.iter().map(|t| parse_f64(t, line)).collect()
}

pub fn format_embeddings(set: &EmbeddingSet) -> String {
    let d = set.values().next().map_or(0, UncertainEmbedding::dim);
    let mut out = format!("{EMBEDDING_MAGIC} {d} {}\n", set.len());
    for e in set.values() {
        out.push_str(&e.id);
        if let Some(dur) = e.duration_s {
            out.push(' ');
            out.push_str(&fmt_f64(dur));
        }
        push_values(&mut out, &e.phi);
        push_values(&mut out, &e.sigma_u);
        out.push('\n');
    }
    out
}

/// Parses an embedding file. A file with no content is an empty set.
pub fn parse_embeddings(text: &str) -> CliResult<EmbeddingSet> {
    let mut it = lines(text);
    let Some((n, header)) = it.next() else {
        return Ok(EmbeddingSet::new());
    };
    if header.len() != 3 || header[0] != EMBEDDING_MAGIC {
        return Err(CliError::data(format!(
            "line {n}: expected header \"{EMBEDDING_MAGIC} <d> <count>\""
        )));
    }
    let d = parse_usize(header[1], n)?;
    let count = parse_usize(header[2], n)?;
    if d == 0 {
        return Err(CliError::data(format!(
            "line {n}: dimension must be at least 1"
        )));
    }
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(count);
    for (n, t) in it {
        let duration = match t.len() {
            l if l == 1 + 2 * d => None,
            l if l == 2 + 2 * d => Some(parse_f64(t[1], n)?),
            l => {
                return Err(CliError::data(format!(
                    "line {n}: expected {} or {} fields for dimension {d}, found {l}",
                    1 + 2 * d,
                    2 + 2 * d
                )))
            }
        };
        if duration.is_some_and(|x| x < 0.0) {
            return Err(CliError::data(format!("line {n}: negative duration")));
        }
        let values = parse_values(&t[t.len() - 2 * d..], n)?;
        if !seen.insert(t[0]) {
            return Err(CliError::data(format!("line {n}: duplicate id {}", t[0])));
        }
        let (phi, sigma) = values.split_at(d);
        let e = UncertainEmbedding::new(t[0], phi.to_vec(), sigma.to_vec(), duration)
            .map_err(|e| CliError::data(format!("line {n}: {e}")))?;
        records.push(e);
    }
    if records.len() != count {
        return Err(CliError::data(format!(
            "header declares {count} records, found {}",
            records.len()
        )));
    }
    Ok(embedding_set(records)?)
}

pub fn format_trials(trials: &[Trial]) -> String {
    let mut out = String::new();
    for t in trials {
        out.push_str(&t.enrol);
        out.push(' ');
        out.push_str(&t.test);
        if let Some(label) = t.label {
            out.push(' ');
            out.push_str(label.as_str());
        }
        out.push('\n');
    }
    out
}

pub fn parse_trials(text: &str) -> CliResult<Vec<Trial>> {
    lines(text)
        .map(|(n, t)| {
            let label = match t.len() {
                2 => None,
                3 => Some(t[2].parse::<Label>().map_err(|_| {
                    CliError::data(format!(
                        "line {n}: label must be target or nontarget, found {:?}",
                        t[2]
                    ))
                })?),
                l => {
                    return Err(CliError::data(format!(
                        "line {n}: expected 2 or 3 fields, found {l}"
                    )))
                }
            };
            Ok(Trial::new(t[0], t[1], label))
        })
        .collect()
}

pub fn format_scores(scores: &[TrialScore]) -> String {
    let mut out = String::new();
    for s in scores {
        let _ = writeln!(out, "{} {} {}", s.enrol_id, s.test_id, fmt_f64(s.score));
    }
    out
}

pub fn parse_scores(text: &str) -> CliResult<Vec<(String, String, f64)>> {
    lines(text)
        .map(|(n, t)| {
            if t.len() != 3 {
                return Err(CliError::data(format!(
                    "line {n}: expected 3 fields, found {}",
                    t.len()
                )));
            }
            Ok((t[0].to_string(), t[1].to_string(), parse_f64(t[2], n)?))
        })
        .collect()
}

pub fn format_alphas(scores: &[TrialScore]) -> String {
    let mut out = String::new();
    for s in scores {
        let (a, b) = (s.alpha_e.unwrap_or(f64::NAN), s.alpha_t.unwrap_or(f64::NAN));
        let _ = writeln!(
            out,
            "{} {} {} {}",
            s.enrol_id,
            s.test_id,
            fmt_f64(a),
            fmt_f64(b)
        );
    }
    out
}

pub fn format_labels(labels: &Labels) -> String {
    let mut out = String::new();
    for (utt, spk) in labels {
        let _ = writeln!(out, "{utt} {spk}");
    }
    out
}

pub fn parse_labels(text: &str) -> CliResult<Labels> {
    let mut labels = Labels::new();
    for (n, t) in lines(text) {
        if t.len() != 2 {
            return Err(CliError::data(format!(
                "line {n}: expected 2 fields, found {}",
                t.len()
            )));
        }
        if labels.insert(t[0].to_string(), t[1].to_string()).is_some() {
            return Err(CliError::data(format!(
                "line {n}: duplicate utterance {}",
                t[0]
            )));
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stats {
    pub report: CovarianceReport,
    pub boxplot: BoxplotSummary,
    pub plda: Option<PldaModel>,
}

const BOX_ROWS: [&str; 4] = ["within", "between", "total", "avg_uncertainty"];

pub fn format_stats(stats: &Stats) -> String {
    let r = &stats.report;
    let mut out = format!(
        "{STATS_MAGIC} {}\nn_utts {}\nn_speakers {}\n",
        r.mean.len(),
        r.n_utts,
        r.n_speakers
    );
    for (name, v) in [
        ("mean", &r.mean),
        ("within", &r.within),
        ("between", &r.between),
        ("total", &r.total),
        ("avg_uncertainty", &r.avg_uncertainty),
    ] {
        let _ = writeln!(out, "[{name}]");
        let line: Vec<String> = v.iter().map(|x| fmt_f64(*x)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.push_str("[boxplot]\n");
    let b = &stats.boxplot;
    for (name, f) in BOX_ROWS
        .iter()
        .zip([&b.within, &b.between, &b.total, &b.avg_uncertainty])
    {
        out.push_str(name);
        push_values(&mut out, &f.as_array());
        out.push('\n');
    }
    if let Some(m) = &stats.plda {
        out.push_str("[plda]\n");
        for (name, v) in [
            ("mu", &m.mu),
            ("between", &m.between),
            ("within", &m.within),
        ] {
            out.push_str(name);
            push_values(&mut out, v);
            out.push('\n');
        }
    }
    out
}

pub fn parse_stats(text: &str) -> CliResult<Stats> {
    let mut it = lines(text);
    let (n, header) = it
        .next()
        .ok_or_else(|| CliError::data("empty stats file"))?;
    if header.len() != 2 || header[0] != STATS_MAGIC {
        return Err(CliError::data(format!(
            "line {n}: expected header \"{STATS_MAGIC} <d>\""
        )));
    }
    let d = parse_usize(header[1], n)?;
    let (mut n_utts, mut n_speakers) = (None, None);
    let mut vectors: Vec<(String, Vec<f64>)> = Vec::new();
    let mut boxes: Vec<(String, FiveNumber)> = Vec::new();
    let mut plda: Vec<(String, Vec<f64>)> = Vec::new();
    let mut section: Option<String> = None;
    let expect = |values: &Vec<f64>, want: usize, n: usize| {
        if values.len() == want {
            Ok(())
        } else {
            Err(CliError::data(format!(
                "line {n}: expected {want} values, found {}",
                values.len()
            )))
        }
    };
    for (n, t) in it {
        if t.len() == 1 && t[0].starts_with('[') && t[0].ends_with(']') {
            section = Some(t[0][1..t[0].len() - 1].to_string());
            continue;
        }
        match section.as_deref() {
            None => match t.as_slice() {
                ["n_utts", v] => n_utts = Some(parse_usize(v, n)?),
                ["n_speakers", v] => n_speakers = Some(parse_usize(v, n)?),
                _ => {
                    return Err(CliError::data(format!(
                        "line {n}: unexpected {:?}",
                        t.join(" ")
                    )))
                }
            },
            Some("boxplot") => {
                let values = parse_values(&t[1..], n)?;
                expect(&values, 5, n)?;
                let f = FiveNumber {
                    min: values[0],
                    q1: values[1],
                    median: values[2],
                    q3: values[3],
                    max: values[4],
                };
                boxes.push((t[0].to_string(), f));
            }
            Some("plda") => {
                let values = parse_values(&t[1..], n)?;
                expect(&values, d, n)?;
                plda.push((t[0].to_string(), values));
            }
            Some(name) => {
                let values = parse_values(&t, n)?;
                expect(&values, d, n)?;
                vectors.push((name.to_string(), values));
            }
        }
    }
    let take = |list: &[(String, Vec<f64>)], key: &str, what: &str| {
        list.iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| CliError::data(format!("stats file lacks {what} {key}")))
    };
    let take_box = |key: &str| {
        boxes
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, f)| *f)
            .ok_or_else(|| CliError::data(format!("stats file lacks boxplot row {key}")))
    };
    let report = CovarianceReport {
        mean: take(&vectors, "mean", "section")?,
        within: take(&vectors, "within", "section")?,
        between: take(&vectors, "between", "section")?,
        total: take(&vectors, "total", "section")?,
        avg_uncertainty: take(&vectors, "avg_uncertainty", "section")?,
        n_utts: n_utts.ok_or_else(|| CliError::data("stats file lacks n_utts"))?,
        n_speakers: n_speakers.ok_or_else(|| CliError::data("stats file lacks n_speakers"))?,
    };
    let boxplot = BoxplotSummary {
        within: take_box("within")?,
        between: take_box("between")?,
        total: take_box("total")?,
        avg_uncertainty: take_box("avg_uncertainty")?,
    };
    let plda = if plda.is_empty() {
        None
    } else {
        let model = PldaModel::new(
            take(&plda, "mu", "plda row")?,
            take(&plda, "between", "plda row")?,
            take(&plda, "within", "plda row")?,
        )
        .map_err(|e| CliError::data(format!("plda section: {e}")))?;
        Some(model)
    };
    Ok(Stats {
        report,
        boxplot,
        plda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [
            0.0,
            -0.0,
            1.0,
            -2.5,
            0.1,
            1.0 / 3.0,
            1e-300,
            5e-324,
            1.7976931348623157e308,
            123456.789,
            1e-5,
            9.99e-6,
            1e16,
        ] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(1.0), "1");
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1e-7), "1e-7");
    }

    fn sample_set() -> EmbeddingSet {
        embedding_set([
            UncertainEmbedding::new("a", vec![0.1, -3.0], vec![1e-9, 2.0], Some(2.5)).unwrap(),
            UncertainEmbedding::new("b", vec![1.0 / 3.0, 7e20], vec![0.0, 0.5], None).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn embeddings_round_trip() {
        let set = sample_set();
        let text = format_embeddings(&set);
        assert!(text.starts_with("UPEMB1 2 2\n"));
        assert_eq!(parse_embeddings(&text).unwrap(), set);
        assert_eq!(format_embeddings(&parse_embeddings(&text).unwrap()), text);
    }

    #[test]
    fn embedding_errors() {
        assert!(parse_embeddings("").unwrap().is_empty());
        for bad in [
            "UPEMB2 2 1\na 1 2 3 4\n",
            "UPEMB1 2 2\na 1 2 3 4\n",
            "UPEMB1 2 1\na 1 2 3\n",
            "UPEMB1 2 2\na 1 2 3 4\na 1 2 3 4\n",
            "UPEMB1 2 1\na 1 2 -3 4\n",
            "UPEMB1 2 1\na 1 x 3 4\n",
            "UPEMB1 2 1\na 1 inf 3 4\n",
            "UPEMB1 2 1\na -1 1 2 3 4\n",
            "UPEMB1 0 0\n",
        ] {
            assert!(parse_embeddings(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn trials_and_scores_round_trip() {
        let trials = vec![
            Trial::new("a", "b", Some(Label::Target)),
            Trial::new("b", "c", Some(Label::Nontarget)),
            Trial::new("c", "a", None),
        ];
        assert_eq!(parse_trials(&format_trials(&trials)).unwrap(), trials);
        assert!(parse_trials("a b maybe\n").is_err());
        assert!(parse_trials("a\n").is_err());

        let scores = vec![TrialScore {
            enrol_id: "a".into(),
            test_id: "b".into(),
            score: -0.1,
            alpha_e: None,
            alpha_t: None,
        }];
        assert_eq!(
            parse_scores(&format_scores(&scores)).unwrap(),
            vec![("a".into(), "b".into(), -0.1)]
        );
    }

    #[test]
    fn labels_round_trip() {
        let labels: Labels = [
            ("u1".to_string(), "s1".to_string()),
            ("u2".to_string(), "s1".to_string()),
        ]
        .into_iter()
        .collect();
        assert_eq!(parse_labels(&format_labels(&labels)).unwrap(), labels);
        assert!(parse_labels("u1 s1\nu1 s2\n").is_err());
    }

    #[test]
    fn stats_round_trip() {
        let report = CovarianceReport {
            mean: vec![0.5, -1.0],
            within: vec![2.0, 0.25],
            between: vec![8.0, 1e-7],
            total: vec![20.0 / 3.0, 1.0],
            avg_uncertainty: vec![0.1, 0.2],
            n_utts: 4,
            n_speakers: 2,
        };
        let boxplot = upcos_core::summarize_boxplot(&report).unwrap();
        let plda = Some(PldaModel::new(vec![0.5, -1.0], vec![8.0, 0.0], vec![2.0, 0.25]).unwrap());
        for stats in [
            Stats {
                report: report.clone(),
                boxplot,
                plda,
            },
            Stats {
                report,
                boxplot,
                plda: None,
            },
        ] {
            let text = format_stats(&stats);
            assert_eq!(parse_stats(&text).unwrap(), stats);
        }
    }
}
