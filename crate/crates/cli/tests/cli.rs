//! The `amn` binary: exit codes, determinism, file formats and a small
//! end-to-end workflow.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use amn_core::audio::{write_wav_pcm16, SAMPLE_RATE};
use amn_core::data::{load_dataset, load_strong};
use amn_core::study::parse_study_csv;

fn amn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amn"))
        .args(args)
        .env("AMN_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = amn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    amn(args).status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("cli")
        .join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

/// 12 clips × 3 s, 3 classes, with train, val and eval clips.
fn dataset() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let d = scratch("data").join("d");
        ok(&[
            "gendata",
            "--out",
            p(&d),
            "--clips",
            "12",
            "--seconds",
            "3",
            "--classes",
            "3",
            "--events",
            "1..2",
            "--event-seconds",
            "0.5..1.5",
            "--splits",
            "0.5,0.25,0.25",
            "--seed",
            "7",
        ]);
        d
    })
}

/// A checkpoint trained for a few epochs on [`dataset`].
fn trained() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let run = scratch("trained");
        ok(&[
            "train",
            "--data",
            p(dataset()),
            "--out",
            p(&run),
            "--train.max_epochs",
            "3",
            "--seed",
            "1",
        ]);
        run
    })
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn help_exits_zero_for_every_command() {
    assert_eq!(code(&["--help"]), 0);
    for cmd in ["gendata", "train", "predict", "evaluate", "ablate", "plot"] {
        assert_eq!(code(&[cmd, "--help"]), 0, "{cmd}");
    }
    assert_eq!(code(&[]), 2);
}

#[test]
fn gendata_is_byte_deterministic_and_reports_counts() {
    let root = scratch("gendata");
    let args = |out: &Path| {
        vec![
            "gendata".to_string(),
            "--out".into(),
            p(out).into(),
            "--clips".into(),
            "6".into(),
            "--seconds".into(),
            "2".into(),
            "--classes".into(),
            "3".into(),
            "--event-seconds".into(),
            "0.3..1".into(),
            "--seed".into(),
            "7".into(),
        ]
    };
    let (a, b) = (root.join("a"), root.join("b"));
    let run = |out: &Path| ok(&args(out).iter().map(String::as_str).collect::<Vec<_>>());
    let printed = run(&a);
    run(&b);
    assert_eq!(tree(&a), tree(&b));
    assert!(a.join("spec.json").is_file());
    let lines: Vec<&str> = printed.lines().collect();
    assert!(lines[0].ends_with("manifest.jsonl"));
    assert_eq!(lines.len(), 4);
    let ds = load_dataset(&a).unwrap();
    let total: usize = ds
        .manifest
        .entries
        .iter()
        .map(|e| {
            load_strong(ds.path(e.strong.as_ref().unwrap()), &ds.manifest.classes)
                .unwrap()
                .len()
        })
        .sum();
    let printed_total: usize = lines[1..]
        .iter()
        .map(|l| l.split('\t').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(printed_total, total);
}

#[test]
fn usage_errors_exit_two() {
    let out = scratch("usage");
    let o = p(&out);
    assert_eq!(code(&["gendata", "--out", o, "--events", "3..1"]), 2);
    assert_eq!(code(&["gendata", "--out", o, "--event-seconds", "x..1"]), 2);
    // event longer than the clip
    assert_eq!(
        code(&[
            "gendata",
            "--out",
            o,
            "--seconds",
            "1",
            "--event-seconds",
            "2..3"
        ]),
        2
    );
    let d = p(dataset());
    assert_eq!(
        code(&["train", "--data", d, "--out", o, "--am.tau", "abc"]),
        2
    );
    assert_eq!(
        code(&["train", "--data", d, "--out", o, "--not.a.key", "1"]),
        2
    );
    assert_eq!(
        code(&[
            "train",
            "--data",
            d,
            "--out",
            o,
            "--eval.median_window",
            "4"
        ]),
        2
    );
    let cfg = out.join("bad.cfg");
    std::fs::write(&cfg, "seed = 1\nmystery = 2\n").unwrap();
    assert_eq!(
        code(&["train", "--data", d, "--out", o, "--config", p(&cfg)]),
        2
    );
    assert_eq!(
        code(&["ablate", "--data", d, "--out", o, "--study", "colour"]),
        2
    );
}

#[test]
fn runtime_failures_exit_one() {
    let out = scratch("runtime");
    assert_eq!(
        code(&["train", "--data", p(&out.join("missing")), "--out", p(&out)]),
        1
    );
    let junk = out.join("junk.amn");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    assert_eq!(
        code(&[
            "predict",
            p(&junk),
            "--data",
            p(dataset()),
            "--out",
            p(&out)
        ]),
        1
    );
    let csv = out.join("x.csv");
    std::fs::write(&csv, "a,b\n1,2\n").unwrap();
    assert_eq!(code(&["plot", p(&csv)]), 1);
}

#[test]
fn config_file_is_overridden_by_flags_and_echoed() {
    let run = scratch("precedence");
    let cfg = run.join("run.cfg");
    std::fs::write(
        &cfg,
        "# tiny run\ntrain.max_epochs = 1\nam.tau = 0.5\ntrain.lr = 0.01\n",
    )
    .unwrap();
    ok(&[
        "train",
        "--data",
        p(dataset()),
        "--out",
        p(&run),
        "--config",
        p(&cfg),
        "--train.lr",
        "0.002",
    ]);
    let echo = std::fs::read_to_string(run.join("config.txt")).unwrap();
    for line in [
        "am.tau = 0.5",
        "train.lr = 0.002",
        "train.max_epochs = 1",
        "preset = desk",
    ] {
        assert!(
            echo.lines().any(|l| l == line),
            "{line} missing from\n{echo}"
        );
    }
    let history = std::fs::read_to_string(run.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);
    assert!(history.lines().nth(1).unwrap().ends_with(",0.002"));
}

#[test]
fn training_writes_checkpoints_and_is_reproducible() {
    let run = trained();
    for f in ["best.amn", "last.amn", "history.csv", "config.txt"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let again = scratch("trained_again");
    let printed = ok(&[
        "train",
        "--data",
        p(dataset()),
        "--out",
        p(&again),
        "--train.max_epochs",
        "3",
        "--seed",
        "1",
    ]);
    assert!(printed.starts_with("final val loss: "));
    for f in ["best.amn", "last.amn", "history.csv"] {
        assert_eq!(
            std::fs::read(run.join(f)).unwrap(),
            std::fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn predict_outputs_close_over_their_formats() {
    let pred = scratch("predict");
    let ck = trained().join("best.amn");
    ok(&[
        "predict",
        p(&ck),
        "--data",
        p(dataset()),
        "--split",
        "all",
        "--out",
        p(&pred),
        "--probs",
    ]);
    let ds = load_dataset(dataset()).unwrap();
    let classes = &ds.manifest.classes;
    let clip_probs = std::fs::read_to_string(pred.join("clip_probs.csv")).unwrap();
    assert_eq!(clip_probs.lines().count(), 1 + ds.manifest.entries.len());
    for e in &ds.manifest.entries {
        load_strong(pred.join("events").join(format!("{}.tsv", e.id)), classes).unwrap();
        let probs =
            std::fs::read_to_string(pred.join("probs").join(format!("{}.csv", e.id))).unwrap();
        let rows: Vec<&str> = probs.lines().skip(1).collect();
        // 3 s at a 20 ms hop
        assert_eq!(rows.len(), 150);
        assert!(rows.iter().all(|r| r.split(',').count() == classes.len()));
    }
}

#[test]
fn silence_predictions_are_repeatable() {
    let dir = scratch("silence");
    let wav = dir.join("quiet.wav");
    write_wav_pcm16(&wav, &vec![0.0; SAMPLE_RATE as usize * 2], SAMPLE_RATE).unwrap();
    let ck = trained().join("best.amn");
    let (a, b) = (dir.join("a"), dir.join("b"));
    ok(&[
        "predict",
        p(&ck),
        "--audio",
        p(&wav),
        "--out",
        p(&a),
        "--probs",
    ]);
    ok(&[
        "predict",
        p(&ck),
        "--audio",
        p(&wav),
        "--out",
        p(&b),
        "--probs",
    ]);
    assert_eq!(tree(&a), tree(&b));
    let probs = std::fs::read_to_string(a.join("probs/quiet.csv")).unwrap();
    assert_eq!(probs.lines().count(), 1 + 100);

    let wrong_rate = dir.join("slow.wav");
    write_wav_pcm16(&wrong_rate, &vec![0.0; 16000], 16000).unwrap();
    assert_eq!(
        code(&["predict", p(&ck), "--audio", p(&wrong_rate), "--out", p(&a)]),
        1
    );
}

/// A prediction directory whose events and tags are copied from the truth.
fn oracle_predictions(dir: &Path, empty: bool) {
    let ds = load_dataset(dataset()).unwrap();
    let classes = &ds.manifest.classes;
    std::fs::create_dir_all(dir.join("events")).unwrap();
    let mut csv = format!("id,{}\n", classes.join(","));
    for e in &ds.manifest.entries {
        let tsv = if empty {
            String::new()
        } else {
            std::fs::read_to_string(ds.path(e.strong.as_ref().unwrap())).unwrap()
        };
        std::fs::write(dir.join("events").join(format!("{}.tsv", e.id)), tsv).unwrap();
        let row: Vec<&str> = (0..classes.len())
            .map(|k| {
                if !empty && e.labels.contains(&k) {
                    "1"
                } else {
                    "0"
                }
            })
            .collect();
        csv.push_str(&format!("{},{}\n", e.id, row.join(",")));
    }
    std::fs::write(dir.join("clip_probs.csv"), csv).unwrap();
}

fn macro_rows(scores: &Path) -> Vec<(String, f64, f64)> {
    std::fs::read_to_string(scores)
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(1) == Some("macro"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].to_string(),
                f[2].parse().unwrap(),
                f[4].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn evaluating_truth_against_itself_scores_one() {
    let dir = scratch("self_eval");
    oracle_predictions(&dir.join("pred"), false);
    let text = ok(&[
        "evaluate",
        "--pred",
        p(&dir.join("pred")),
        "--data",
        p(dataset()),
        "--split",
        "all",
        "--out",
        p(&dir.join("ev")),
    ]);
    assert!(text.contains("Precision") && text.contains("Recall"));
    let header = std::fs::read_to_string(dir.join("ev/scores.csv")).unwrap();
    assert!(header.starts_with("family,class,f1,precision,recall,tp,fp,fn\n"));
    let rows = macro_rows(&dir.join("ev/scores.csv"));
    assert_eq!(
        rows.iter().map(|r| r.0.as_str()).collect::<Vec<_>>(),
        ["tagging", "segment", "event"]
    );
    assert!(rows.iter().all(|r| r.1 == 1.0), "{rows:?}");
    assert!(dir.join("ev/scores.txt").is_file());
}

#[test]
fn empty_predictions_have_zero_recall() {
    let dir = scratch("empty_eval");
    oracle_predictions(&dir.join("pred"), true);
    ok(&[
        "evaluate",
        "--pred",
        p(&dir.join("pred")),
        "--data",
        p(dataset()),
        "--out",
        p(&dir.join("ev")),
    ]);
    let rows = macro_rows(&dir.join("ev/scores.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.2 == 0.0), "{rows:?}");
}

#[test]
fn evaluate_rejects_mismatched_ids() {
    let dir = scratch("mismatch");
    let pred = dir.join("pred");
    oracle_predictions(&pred, false);
    let args = |split: &str| {
        amn(&[
            "evaluate",
            "--pred",
            p(&pred),
            "--data",
            p(dataset()),
            "--split",
            split,
            "--out",
            p(&dir.join("ev")),
        ])
    };
    assert_eq!(args("eval").status.code(), Some(1));
    let csv = pred.join("clip_probs.csv");
    let mut text = std::fs::read_to_string(&csv).unwrap();
    text.push_str("stranger,0,0,0\n");
    std::fs::write(&csv, text).unwrap();
    let out = amn(&[
        "evaluate",
        "--pred",
        p(&pred),
        "--data",
        p(dataset()),
        "--out",
        p(&dir.join("ev")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stranger"));
}

#[test]
fn ablation_studies_have_their_row_sets() {
    let dir = scratch("ablate");
    let d = p(dataset());
    let base = [
        "--train.max_epochs",
        "1",
        "--seeds",
        "1",
        "--model.conv_channels",
        "4,4,4",
        "--model.gru_hidden",
        "4",
    ];
    let run = |study: &str, out: &Path| {
        let mut args = vec!["ablate", "--data", d, "--study", study, "--out", p(out)];
        args.extend(base);
        ok(&args);
        std::fs::read_to_string(out.join(format!("{study}.csv"))).unwrap()
    };
    let tau = parse_study_csv(&run("tau", &dir.join("tau"))).unwrap();
    assert_eq!(
        tau.iter().map(|r| r.row.as_str()).collect::<Vec<_>>(),
        ["tau=5", "tau=1", "tau=0.5", "tau=0.1", "tau=0.05"]
    );
    assert!(tau
        .iter()
        .all(|r| r.n == 1 && r.errors.is_empty() && r.event_ci95.is_nan()));
    assert!(dir.join("tau/config.txt").is_file());

    let a = run("placement", &dir.join("p1"));
    let b = run("placement", &dir.join("p2"));
    assert_eq!(a, b);
    assert_eq!(parse_study_csv(&a).unwrap().len(), 8);

    let grad = parse_study_csv(&run("grad", &dir.join("grad"))).unwrap();
    assert_eq!(
        grad.iter().map(|r| r.row.as_str()).collect::<Vec<_>>(),
        ["none", "enc_only", "dec_only", "full"]
    );
}

fn assert_well_formed_svg(path: &Path) -> usize {
    let text = std::fs::read_to_string(path).unwrap();
    let doc =
        roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    doc.descendants().filter(|n| n.has_tag_name("rect")).count()
}

#[test]
fn plots_are_well_formed_svg() {
    let dir = scratch("plot");
    let history = trained().join("history.csv");
    let out = dir.join("history.svg");
    ok(&[
        "plot",
        p(&history),
        "--out",
        p(&out),
        "--title",
        "loss <&> \"curves\"",
    ]);
    assert_well_formed_svg(&out);
    let svg = std::fs::read_to_string(&out).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);

    let study = dir.join("one.csv");
    std::fs::write(
        &study,
        "study,row,n,tagging_f1,tagging_ci95,segment_f1,segment_ci95,event_f1,event_ci95,errors\n\
         tau,tau=1 <x>,1,0.9,NaN,0.5,NaN,0.25,NaN,\n",
    )
    .unwrap();
    ok(&["plot", p(&study)]);
    // background, three bars and three legend swatches
    assert_eq!(assert_well_formed_svg(&dir.join("one.svg")), 7);

    let empty = dir.join("empty.csv");
    std::fs::write(&empty, "epoch,train_loss,val_loss,lr\n").unwrap();
    ok(&["plot", p(&empty)]);
    assert_well_formed_svg(&dir.join("empty.svg"));
}
