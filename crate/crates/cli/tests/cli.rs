use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn upcos(args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_upcos"));
    cmd.args(args);
    match threads {
        Some(n) => cmd.env("UPCOS_THREADS", n.to_string()),
        None => cmd.env_remove("UPCOS_THREADS"),
    };
    cmd.output().expect("failed to run upcos")
}

fn ok(args: &[&str]) -> String {
    let out = upcos(args, None);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Runs a failing command and checks the exit code and the one-line report.
fn fails(args: &[&str], code: i32) -> String {
    let out = upcos(args, None);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(out.status.code(), Some(code), "{args:?}: {stderr}");
    assert!(stderr.starts_with("error: "), "{stderr}");
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
    stderr
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn report_value(report: &str, key: &str) -> f64 {
    report
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("{key} missing in {report}"))
}

#[test]
fn gen_is_deterministic_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in [1, 4, 4, 8].into_iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let res = upcos(
            &[
                "gen",
                "--seed",
                "42",
                "--speakers",
                "12",
                "--utts",
                "5",
                "--out",
                s(&out),
            ],
            Some(threads),
        );
        assert!(res.status.success());
        let files: Vec<Vec<u8>> = ["embeddings.txt", "labels.txt", "trials.txt"]
            .iter()
            .map(|f| fs::read(out.join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    let trials = String::from_utf8(outputs[0][2].clone()).unwrap();
    assert_eq!(
        trials.lines().filter(|l| l.ends_with(" target")).count(),
        240
    );
    assert_eq!(
        trials.lines().filter(|l| l.ends_with("nontarget")).count(),
        1000
    );
}

#[test]
fn gen_rejects_bad_config() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("c");
    fails(&["gen", "--speakers", "0", "--out", s(&out)], 2);
    fails(
        &[
            "gen",
            "--speakers",
            "3",
            "--utts",
            "2",
            "--targets",
            "7",
            "--out",
            s(&out),
        ],
        2,
    );
    let cfg = write(&dir, "bad.toml", "speakerz = 3\n");
    fails(&["gen", "--config", s(&cfg), "--out", s(&out)], 2);
}

#[test]
fn gen_reads_toml_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "gen.toml",
        "seed = 7\nspeakers = 3\nutts = 4\ndim = 5\ntargets = 10\nnontargets = 12\n",
    );
    let out = dir.path().join("c");
    ok(&["gen", "--config", s(&cfg), "--out", s(&out)]);
    let emb = fs::read_to_string(out.join("embeddings.txt")).unwrap();
    assert!(emb.starts_with("UPEMB1 5 12\n"), "{}", &emb[..20]);
    // 3 speakers x 2 utterances allow only 6 ordered target pairs
    fails(
        &["gen", "--config", s(&cfg), "--utts", "2", "--out", s(&out)],
        2,
    );
    ok(&[
        "gen",
        "--config",
        s(&cfg),
        "--utts",
        "2",
        "--targets",
        "6",
        "--out",
        s(&out),
    ]);
    let trials = fs::read_to_string(out.join("trials.txt")).unwrap();
    assert_eq!(trials.lines().count(), 18);
}

const EMB: &str = "UPEMB1 2 3\na 1.5 0.6 0.8 0 0\nb 3 1 0 0 0\nc 0 1 0 0\n";

#[test]
fn cosine_self_trials_score_one() {
    let dir = TempDir::new().unwrap();
    let emb = write(&dir, "e.txt", "UPEMB1 2 2\na 0.6 0.8 0.1 0.1\nb -3 4 2 2\n");
    let trials = write(&dir, "t.txt", "a a target\nb b target\n");
    let out = dir.path().join("s.txt");
    ok(&[
        "score",
        "--enrol",
        s(&emb),
        "--test",
        s(&emb),
        "--trials",
        s(&trials),
        "--variant",
        "cos",
        "--out",
        s(&out),
    ]);
    assert_eq!(fs::read_to_string(&out).unwrap(), "a a 1\nb b 1\n");
}

#[test]
fn up1_without_uncertainty_matches_cosine_bitwise() {
    let dir = TempDir::new().unwrap();
    let emb = write(&dir, "e.txt", EMB);
    let trials = write(&dir, "t.txt", "a b\nb c\nc a\na a\n");
    let (cos, up1, up3) = (
        dir.path().join("cos"),
        dir.path().join("up1"),
        dir.path().join("up3"),
    );
    for (v, out) in [("cos", &cos), ("up1", &up1), ("up3", &up3)] {
        ok(&[
            "score",
            "--enrol",
            s(&emb),
            "--trials",
            s(&trials),
            "--variant",
            v,
            "--out",
            s(out),
        ]);
    }
    assert_eq!(fs::read(&cos).unwrap(), fs::read(&up1).unwrap());
    assert_eq!(fs::read(&cos).unwrap(), fs::read(&up3).unwrap());
}

#[test]
fn score_contract_errors() {
    let dir = TempDir::new().unwrap();
    let emb = write(&dir, "e.txt", EMB);
    let trials = write(&dir, "t.txt", "a b\nzz a\nb yy\nzz c\n");
    let out = dir.path().join("s");
    fails(
        &[
            "score",
            "--enrol",
            s(&emb),
            "--trials",
            s(&trials),
            "--variant",
            "up2",
            "--out",
            s(&out),
        ],
        2,
    );
    fails(
        &[
            "score",
            "--enrol",
            s(&emb),
            "--trials",
            s(&trials),
            "--variant",
            "plda",
            "--out",
            s(&out),
        ],
        2,
    );
    fails(
        &[
            "score",
            "--enrol",
            s(&emb),
            "--trials",
            s(&trials),
            "--variant",
            "up9",
            "--out",
            s(&out),
        ],
        2,
    );
    let msg = fails(
        &[
            "score",
            "--enrol",
            s(&emb),
            "--trials",
            s(&trials),
            "--variant",
            "cos",
            "--out",
            s(&out),
        ],
        4,
    );
    assert!(msg.contains("zz") && msg.contains("yy"), "{msg}");
    let missing = dir.path().join("nope.txt");
    fails(
        &[
            "score",
            "--enrol",
            s(&missing),
            "--trials",
            s(&trials),
            "--variant",
            "cos",
            "--out",
            s(&out),
        ],
        3,
    );
    let broken = write(&dir, "broken.txt", "UPEMB1 2 1\na 1 2 3\n");
    fails(
        &[
            "score",
            "--enrol",
            s(&broken),
            "--trials",
            s(&trials),
            "--variant",
            "cos",
            "--out",
            s(&out),
        ],
        4,
    );
}

#[test]
fn alphas_file_matches_scores() {
    let dir = TempDir::new().unwrap();
    let emb = write(&dir, "e.txt", "UPEMB1 2 2\na 1 0 2 2\nb 1 0 2 2\n");
    let trials = write(&dir, "t.txt", "a b\n");
    let (out, alphas) = (dir.path().join("s"), dir.path().join("a"));
    ok(&[
        "score",
        "--enrol",
        s(&emb),
        "--trials",
        s(&trials),
        "--variant",
        "up1",
        "--out",
        s(&out),
        "--alphas",
        s(&alphas),
    ]);
    assert_eq!(fs::read_to_string(&out).unwrap(), "a b 2\n");
    let sqrt2 = std::f64::consts::SQRT_2;
    assert_eq!(
        fs::read_to_string(&alphas).unwrap(),
        format!("a b {sqrt2} {sqrt2}\n")
    );
}

fn metrics_report(dir: &TempDir, scores: &str, trials: &str, extra: &[&str]) -> String {
    let s_path = write(dir, "scores.txt", scores);
    let t_path = write(dir, "trials.txt", trials);
    let mut args = vec!["metrics", "--scores", s(&s_path), "--trials", s(&t_path)];
    args.extend_from_slice(extra);
    ok(&args)
}

fn three_by_three(flip: bool) -> (String, String) {
    let (tgt, non) = if flip {
        ("nontarget", "target")
    } else {
        ("target", "nontarget")
    };
    let rows = [
        ("t1", 0.9, tgt),
        ("t2", 0.8, tgt),
        ("t3", 0.3, tgt),
        ("n1", 0.7, non),
        ("n2", 0.2, non),
        ("n3", 0.1, non),
    ];
    let scores = rows
        .iter()
        .map(|(id, sc, _)| format!("e {id} {sc}\n"))
        .collect();
    let trials = rows
        .iter()
        .map(|(id, _, l)| format!("e {id} {l}\n"))
        .collect();
    (scores, trials)
}

#[test]
fn metrics_reports() {
    let dir = TempDir::new().unwrap();
    let report = metrics_report(&dir, "a b 1\na c -1\n", "a b target\na c nontarget\n", &[]);
    assert_eq!(
        report,
        "# p_target=0.01 c_miss=1 c_fa=1\neer=0 min_dcf=0 n_target=1 n_nontarget=1\n"
    );

    let (scores, trials) = three_by_three(false);
    let sweep = dir.path().join("sweep.csv");
    let report = metrics_report(&dir, &scores, &trials, &["--sweep", s(&sweep)]);
    assert!(
        (report_value(&report, "eer") - 1.0 / 3.0).abs() < 1e-12,
        "{report}"
    );
    let csv = fs::read_to_string(&sweep).unwrap();
    assert!(
        csv.starts_with("threshold,far,frr\n") && csv.ends_with("inf,0,1\n"),
        "{csv}"
    );

    let report = metrics_report(&dir, &scores, &trials, &["--dcf-ptarget", "0.5"]);
    assert!(report.starts_with("# p_target=0.5 c_miss=1 c_fa=1\n"));
}

#[test]
fn label_flip_mirrors_eer() {
    let dir = TempDir::new().unwrap();
    let mut scores = String::new();
    let mut trials = String::new();
    let mut flipped = String::new();
    for i in 0..300 {
        let target = i % 3 == 0;
        let sc = ((i * 7919) % 1000) as f64 / 1000.0 + if target { 0.3 } else { 0.0 };
        scores.push_str(&format!("e u{i} {sc}\n"));
        let (l, f) = if target {
            ("target", "nontarget")
        } else {
            ("nontarget", "target")
        };
        trials.push_str(&format!("e u{i} {l}\n"));
        flipped.push_str(&format!("e u{i} {f}\n"));
    }
    let e = report_value(&metrics_report(&dir, &scores, &trials, &[]), "eer");
    let e_flip = report_value(&metrics_report(&dir, &scores, &flipped, &[]), "eer");
    assert!((e + e_flip - 1.0).abs() <= 1.0 / 100.0, "{e} {e_flip}");
}

#[test]
fn metrics_errors() {
    let dir = TempDir::new().unwrap();
    let s_path = write(&dir, "s.txt", "a b 0.5\na c 0.1\n");
    let t_path = write(&dir, "t.txt", "a b target\na c\n");
    fails(
        &["metrics", "--scores", s(&s_path), "--trials", s(&t_path)],
        2,
    );
    let t_path = write(&dir, "t2.txt", "a b target\na c nontarget\n");
    fails(
        &[
            "metrics",
            "--scores",
            s(&s_path),
            "--trials",
            s(&t_path),
            "--dcf-ptarget",
            "1.5",
        ],
        2,
    );
}

#[test]
fn stats_examples() {
    let dir = TempDir::new().unwrap();
    let emb = write(
        &dir,
        "e.txt",
        "UPEMB1 1 4\na1 -1 0.5\na2 1 0.5\nb1 3 0.5\nb2 5 0.5\n",
    );
    let labels = write(&dir, "l.txt", "a1 A\na2 A\nb1 B\nb2 B\n");
    let out = dir.path().join("stats.txt");
    ok(&[
        "stats",
        "--embeddings",
        s(&emb),
        "--labels",
        s(&labels),
        "--out",
        s(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(
        text.contains("[within]\n2\n[between]\n8\n[total]\n6.666666666666667\n"),
        "{text}"
    );
    assert!(
        text.contains("[plda]\nmu 2\nbetween 8\nwithin 2\n"),
        "{text}"
    );
    ok(&[
        "stats",
        "--embeddings",
        s(&emb),
        "--labels",
        s(&labels),
        "--out",
        s(&out),
        "--no-plda",
    ]);
    assert!(!fs::read_to_string(&out).unwrap().contains("[plda]"));

    let partial = write(&dir, "l2.txt", "a1 A\na2 A\nb1 B\n");
    fails(
        &[
            "stats",
            "--embeddings",
            s(&emb),
            "--labels",
            s(&partial),
            "--out",
            s(&out),
        ],
        2,
    );
}

#[test]
fn plda_variants_need_fitted_model() {
    let dir = TempDir::new().unwrap();
    let emb = write(
        &dir,
        "e.txt",
        "UPEMB1 1 4\na1 -1 0.5\na2 1 0.5\nb1 3 0.5\nb2 5 0.5\n",
    );
    let labels = write(&dir, "l.txt", "a1 A\na2 A\nb1 B\nb2 B\n");
    let trials = write(&dir, "t.txt", "a1 a2 target\na1 b1 nontarget\n");
    let stats = dir.path().join("stats.txt");
    let out = dir.path().join("s.txt");
    ok(&[
        "stats",
        "--embeddings",
        s(&emb),
        "--labels",
        s(&labels),
        "--out",
        s(&stats),
        "--no-plda",
    ]);
    fails(
        &[
            "score",
            "--enrol",
            s(&emb),
            "--trials",
            s(&trials),
            "--variant",
            "plda",
            "--stats",
            s(&stats),
            "--out",
            s(&out),
        ],
        2,
    );
    ok(&[
        "stats",
        "--embeddings",
        s(&emb),
        "--labels",
        s(&labels),
        "--out",
        s(&stats),
    ]);
    for v in ["plda", "up-plda", "up2", "up4"] {
        ok(&[
            "score",
            "--enrol",
            s(&emb),
            "--trials",
            s(&trials),
            "--variant",
            v,
            "--stats",
            s(&stats),
            "--out",
            s(&out),
        ]);
        assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 2);
    }
}

#[test]
fn analyze_examples() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("a.csv");
    let flat = write(&dir, "flat.txt", "UPEMB1 1 2\na 3 1 2\nb 3 2 2\n");
    let msg = fails(&["analyze", "--embeddings", s(&flat), "--out", s(&out)], 2);
    assert!(msg.contains("variance"), "{msg}");
    let empty = write(&dir, "empty.txt", "");
    fails(&["analyze", "--embeddings", s(&empty), "--out", s(&out)], 2);
    let no_dur = write(&dir, "nodur.txt", "UPEMB1 1 2\na 1 2\nb 2 2\n");
    fails(
        &["analyze", "--embeddings", s(&no_dur), "--out", s(&out)],
        2,
    );

    let two = write(&dir, "two.txt", "UPEMB1 1 2\na 2 1 4\nb 8 2 1\n");
    let report = ok(&["analyze", "--embeddings", s(&two), "--out", s(&out)]);
    assert_eq!(report, "pearson=-1\n");
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        "id,duration_s,avg_uncertainty\na,2,4\nb,8,1\n"
    );
}

#[test]
fn default_corpus_pipeline() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("c");
    ok(&[
        "gen",
        "--seed",
        "42",
        "--speakers",
        "50",
        "--utts",
        "10",
        "--out",
        s(&corpus),
    ]);
    let emb = corpus.join("embeddings.txt");
    let report = ok(&[
        "analyze",
        "--embeddings",
        s(&emb),
        "--out",
        s(&dir.path().join("a.csv")),
    ]);
    assert!(report_value(&report, "pearson") <= -0.5);
}

#[test]
fn usage_and_help() {
    assert!(ok(&["--help"]).contains("score"));
    assert!(ok(&["score", "--help"]).contains("up-plda"));
    fails(&[], 2);
    fails(&["frobnicate"], 2);
    let out = upcos(&["analyze", "--embeddings", "x", "--out", "y"], Some(0));
    assert_eq!(out.status.code(), Some(2));
}
