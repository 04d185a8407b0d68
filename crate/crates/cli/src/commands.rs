//! Subcommand implementations. Every output directory also receives the
//! effective configuration as `config.txt`.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use amn_core::audio::{load_wav, Frontend, MelSpectrogram, HOP_SECONDS};
use amn_core::data::{
    class_names, generate, load_dataset, load_examples, load_examples_cached, load_strong,
    write_strong, Dataset, ManifestEntry, ScapeSpec, Split, StrongEvent,
};
use amn_core::eval::{detect_from, score_clips, ClipPair, Scores};
use amn_core::metrics::ScoreReport;
use amn_core::model::{load_checkpoint, save_checkpoint, Checkpoint, Model};
use amn_core::study::{run_study, study_csv, StudyData, StudyKind, StudyRecord, STUDY_CSV_HEADER};
use amn_core::train::{history_csv, parse_history_csv, Example, Precision};
use amn_core::Error;
use amn_tensor::Real;
use anyhow::{bail, Context, Result};
use clap::Args;

use crate::config::{usage, RunConfig};
use crate::{plot as svg, ConfigArgs};

const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,lr";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn echo_config(dir: &Path, cfg: &RunConfig, extra: &[(&str, String)]) -> Result<()> {
    let mut s = String::new();
    for (k, v) in extra {
        let _ = writeln!(s, "# {k}: {v}");
    }
    s.push_str(&cfg.render());
    write(&dir.join("config.txt"), s)
}

/// `a..b`, `a,b` or a single value `a` (meaning `a..a`); `a` must not
/// exceed `b`.
fn range<T: FromStr + PartialOrd + Copy>(s: &str) -> Result<(T, T), String>
where
    T::Err: std::fmt::Display,
{
    let (a, b) = s
        .split_once("..")
        .or_else(|| s.split_once(','))
        .unwrap_or((s, s));
    let p = |x: &str| x.trim().parse::<T>().map_err(|e| format!("{x:?}: {e}"));
    let (a, b) = (p(a)?, p(b)?);
    if !(a <= b) {
        return Err(format!("range {s:?} is empty (expected low..high)"));
    }
    Ok((a, b))
}

fn splits(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [a, b, c] => Ok([a, b, c]),
        [a, b] => Ok([a, b, 0.0]),
        _ => Err(format!("expected train,val[,eval] fractions, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct GendataArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of clips.
    #[arg(long)]
    pub clips: Option<usize>,
    /// Clip duration in seconds.
    #[arg(long)]
    pub seconds: Option<f64>,
    /// Number of event classes.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Events per clip, `low..high`.
    #[arg(long, value_parser = range::<usize>)]
    pub events: Option<(usize, usize)>,
    /// Event duration in seconds, `low..high`.
    #[arg(long, value_parser = range::<f64>)]
    pub event_seconds: Option<(f64, f64)>,
    /// Event-to-background ratio in dB, `low..high`.
    #[arg(long, value_parser = range::<f64>)]
    pub snr: Option<(f64, f64)>,
    /// Maximum number of simultaneous events.
    #[arg(long)]
    pub polyphony: Option<usize>,
    /// Train,val,eval fractions.
    #[arg(long, value_parser = splits)]
    pub splits: Option<[f64; 3]>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl GendataArgs {
    pub fn spec(&self) -> ScapeSpec {
        let d = ScapeSpec::default();
        ScapeSpec {
            n_clips: self.clips.unwrap_or(d.n_clips),
            clip_seconds: self.seconds.unwrap_or(d.clip_seconds),
            classes: self.classes.unwrap_or(d.classes),
            events_per_clip: self.events.unwrap_or(d.events_per_clip),
            event_seconds: self.event_seconds.unwrap_or(d.event_seconds),
            snr_db: self.snr.unwrap_or(d.snr_db),
            max_polyphony: self.polyphony.unwrap_or(d.max_polyphony),
            split_fractions: self.splits.unwrap_or(d.split_fractions),
            sample_rate: d.sample_rate,
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

pub fn gendata(a: &GendataArgs) -> Result<()> {
    let spec = a.spec();
    // every field comes straight from a flag, so an invalid spec is a usage error
    spec.validate().map_err(|e| usage(e.to_string()))?;
    create_dir(&a.out)?;
    let manifest = generate(&spec, &a.out)?;
    let json = serde_json::to_string_pretty(&spec)?;
    write(&a.out.join("spec.json"), json + "\n")?;
    let mut counts = vec![0usize; manifest.classes.len()];
    for e in &manifest.entries {
        if let Some(s) = &e.strong {
            for ev in load_strong(a.out.join(s), &manifest.classes)? {
                counts[ev.event.label] += 1;
            }
        }
    }
    println!("{}", a.out.join("manifest.jsonl").display());
    for (name, n) in manifest.classes.iter().zip(&counts) {
        println!("{name}\t{n}");
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory or manifest file.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoints, history and config.
    #[arg(long)]
    pub out: PathBuf,
    /// Feature cache directory (created if missing).
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn dataset_config(config: &ConfigArgs, ds: &Dataset) -> Result<RunConfig> {
    let mut cfg = config.resolve()?;
    cfg.model.classes = ds.manifest.classes.len();
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let cfg = dataset_config(&a.config, &ds)?;
    create_dir(&a.out)?;
    if let Some(c) = &a.cache {
        create_dir(c)?;
    }
    echo_config(&a.out, &cfg, &[("data", a.data.display().to_string())])?;
    let threads = cfg.worker_threads();
    let load = |s| load_examples_cached(&ds, &ds.manifest.split(s), threads, a.cache.as_deref());
    let (train_set, val_set) = (load(Split::Train)?, load(Split::Val)?);
    if train_set.is_empty() {
        bail!("dataset has no training clips");
    }
    match cfg.train.precision {
        Precision::F32 => fit::<f32>(a, &ds, &cfg, &train_set, &val_set),
        Precision::F64 => fit::<f64>(a, &ds, &cfg, &train_set, &val_set),
    }
}

fn fit<T: Real>(
    a: &TrainArgs,
    ds: &Dataset,
    cfg: &RunConfig,
    train_set: &[Example],
    val_set: &[Example],
) -> Result<()> {
    let out = amn_core::train::train::<T>(train_set, val_set, &cfg.model, &cfg.train, |r, _| {
        eprintln!(
            "epoch {:>4}  train {:.6}  val {:.6}  lr {:e}",
            r.epoch, r.train_loss, r.val_loss, r.lr
        );
        true
    })?;
    let meta = |epoch: usize| {
        serde_json::json!({
            "classes": ds.manifest.classes,
            "train": cfg.train,
            "epoch": epoch,
        })
    };
    save_checkpoint(
        a.out.join("best.amn"),
        &Checkpoint::from_model(&out.best, meta(out.best_epoch)),
    )?;
    save_checkpoint(
        a.out.join("last.amn"),
        &Checkpoint::from_model(&out.last, meta(out.history.len())),
    )?;
    write(&a.out.join("history.csv"), history_csv(&out.history))?;
    let last = out.history.last().expect("at least one epoch ran");
    println!(
        "final val loss: {:.6} (epoch {})",
        last.val_loss, last.epoch
    );
    println!("best epoch: {}", out.best_epoch);
    Ok(())
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["audio", "data"]))]
pub struct PredictArgs {
    /// Checkpoint written by `train`.
    pub checkpoint: PathBuf,
    /// WAV files to process; the clip id is the file stem.
    #[arg(long, num_args = 1..)]
    pub audio: Vec<PathBuf>,
    /// Dataset directory or manifest file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Dataset split to process: train, val, eval or all.
    #[arg(long, default_value = "eval")]
    pub split: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-clip frame probabilities to probs/<id>.csv.
    #[arg(long)]
    pub probs: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn select<'a>(ds: &'a Dataset, split: &str) -> Result<Vec<&'a ManifestEntry>> {
    if split == "all" {
        return Ok(ds.manifest.entries.iter().collect());
    }
    let s = Split::from_str(split).map_err(|e| usage(e.to_string()))?;
    Ok(ds.manifest.split(s))
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains([',', '"', '\t', '\n', '/', '\\']) {
        bail!("clip id {id:?} cannot be used as a file name and CSV field");
    }
    Ok(())
}

fn checkpoint_classes(ck: &Checkpoint) -> Vec<String> {
    let names: Option<Vec<String>> = ck
        .meta
        .get("classes")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .filter(|v: &Vec<String>| v.len() == ck.config.classes);
    names.unwrap_or_else(|| class_names(ck.config.classes))
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    cfg.validate()?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let names = checkpoint_classes(&ck);
    let mut clips: Vec<(String, MelSpectrogram)> = Vec::new();
    if let Some(data) = &a.data {
        let ds = load_dataset(data)?;
        if ds.manifest.classes != names {
            bail!(Error::IdMismatch(format!(
                "dataset classes {:?} differ from checkpoint classes {:?}",
                ds.manifest.classes, names
            )));
        }
        let entries = select(&ds, &a.split)?;
        for e in load_examples(&ds, &entries, cfg.worker_threads())? {
            clips.push((e.id, e.features));
        }
    } else {
        let fe = Frontend::new();
        for p in &a.audio {
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let clip = load_wav(p)?;
            clips.push((
                id,
                fe.featurize(&clip)
                    .with_context(|| p.display().to_string())?,
            ));
        }
    }
    let mut seen = BTreeSet::new();
    for (id, _) in &clips {
        check_id(id)?;
        if !seen.insert(id.as_str()) {
            return Err(usage(format!("clip id {id:?} appears twice")));
        }
    }
    create_dir(&a.out.join("events"))?;
    if a.probs {
        create_dir(&a.out.join("probs"))?;
    }
    echo_config(
        &a.out,
        &cfg,
        &[("checkpoint", a.checkpoint.display().to_string())],
    )?;
    match ck
        .meta
        .get("train")
        .and_then(|t| t.get("precision"))
        .and_then(|p| p.as_str())
    {
        Some("f64") => infer::<f64>(a, ck, &names, &clips, &cfg),
        _ => infer::<f32>(a, ck, &names, &clips, &cfg),
    }
}

fn infer<T: Real>(
    a: &PredictArgs,
    ck: Checkpoint,
    names: &[String],
    clips: &[(String, MelSpectrogram)],
    cfg: &RunConfig,
) -> Result<()> {
    let model: Model<T> = ck.into_model()?;
    let mut clip_csv = format!("id,{}\n", names.join(","));
    for (id, features) in clips {
        let d = detect_from(model.predict(features)?, &cfg.eval)?;
        let events: Vec<StrongEvent> = d
            .events
            .iter()
            .map(|&event| StrongEvent {
                filename: format!("{id}.wav"),
                event,
            })
            .collect();
        write_strong(
            a.out.join("events").join(format!("{id}.tsv")),
            &events,
            names,
        )?;
        let p = d.prediction.clip_probs.to_f64_vec();
        let _ = writeln!(
            clip_csv,
            "{id},{}",
            p.iter()
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join(",")
        );
        if a.probs {
            let c = names.len();
            let mut s = format!("{}\n", names.join(","));
            for row in d.prediction.probs.to_f64_vec().chunks(c) {
                let _ = writeln!(
                    s,
                    "{}",
                    row.iter()
                        .map(|v| format!("{v:?}"))
                        .collect::<Vec<_>>()
                        .join(",")
                );
            }
            write(&a.out.join("probs").join(format!("{id}.csv")), s)?;
        }
        let tags: Vec<&str> = d.tags.iter().map(|&k| names[k].as_str()).collect();
        println!("{id}\t{} events\t[{}]", events.len(), tags.join(","));
    }
    write(&a.out.join("clip_probs.csv"), clip_csv)
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory written by `predict`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Dataset directory or manifest file holding the reference annotations.
    #[arg(long)]
    pub data: PathBuf,
    /// Require predictions for exactly this split: train, val, eval or all.
    #[arg(long)]
    pub split: Option<String>,
    /// Output directory for scores.csv and scores.txt.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// `clip_probs.csv` → `(id, probabilities)` in file order.
pub fn parse_clip_probs(
    text: &str,
    classes: &[String],
    origin: &str,
) -> Result<Vec<(String, Vec<f64>)>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.into(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let expected = format!("id,{}", classes.join(","));
    match lines.next() {
        Some((_, h)) if h.trim() == expected => {}
        _ => bail!(err(1, format!("expected header {expected:?}"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != classes.len() + 1 {
            bail!(err(
                i + 1,
                format!("expected {} fields, found {}", classes.len() + 1, f.len())
            ));
        }
        let probs = f[1..]
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(i + 1, format!("invalid probability {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push((f[0].to_string(), probs));
    }
    Ok(out)
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    cfg.validate()?;
    let ds = load_dataset(&a.data)?;
    let classes = &ds.manifest.classes;
    let probs_path = a.pred.join("clip_probs.csv");
    let text = fs::read_to_string(&probs_path)
        .with_context(|| format!("reading {}", probs_path.display()))?;
    let preds = parse_clip_probs(&text, classes, &probs_path.display().to_string())?;
    let by_id: HashMap<&str, &ManifestEntry> = ds
        .manifest
        .entries
        .iter()
        .map(|e| (e.id.as_str(), e))
        .collect();
    if let Some(split) = &a.split {
        let want: BTreeSet<&str> = select(&ds, split)?.iter().map(|e| e.id.as_str()).collect();
        let have: BTreeSet<&str> = preds.iter().map(|(id, _)| id.as_str()).collect();
        if want != have {
            let missing: Vec<_> = want.difference(&have).collect();
            let extra: Vec<_> = have.difference(&want).collect();
            bail!(Error::IdMismatch(format!(
                "missing {missing:?}, unexpected {extra:?}"
            )));
        }
    }
    let fe = Frontend::new();
    let mut items = Vec::with_capacity(preds.len());
    for (id, p) in &preds {
        let entry = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::IdMismatch(format!("clip {id:?} is not in the dataset")))?;
        let strong = entry
            .strong
            .as_ref()
            .ok_or_else(|| Error::IdMismatch(format!("clip {id:?} has no strong annotation")))?;
        let true_events = load_strong(ds.path(strong), classes)?
            .into_iter()
            .map(|s| s.event)
            .collect();
        let pred_path = a.pred.join("events").join(format!("{id}.tsv"));
        if !pred_path.is_file() {
            bail!(Error::IdMismatch(format!(
                "no event file {} for clip {id:?}",
                pred_path.display()
            )));
        }
        let pred_events = load_strong(&pred_path, classes)?
            .into_iter()
            .map(|s| s.event)
            .collect();
        let samples = load_wav(ds.path(&entry.audio))?.samples.len();
        items.push(ClipPair {
            pred_tags: p
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > cfg.eval.threshold)
                .map(|(k, _)| k)
                .collect(),
            pred_events,
            true_tags: entry.labels.iter().copied().collect(),
            true_events,
            duration: fe.frame_count(samples) as f64 * HOP_SECONDS,
        });
    }
    let scores = score_clips(&items, classes.len(), &cfg.eval)?;
    create_dir(&a.out)?;
    echo_config(
        &a.out,
        &cfg,
        &[
            ("pred", a.pred.display().to_string()),
            ("data", a.data.display().to_string()),
        ],
    )?;
    let (csv, txt) = render_scores(&scores, classes);
    write(&a.out.join("scores.csv"), csv)?;
    write(&a.out.join("scores.txt"), &txt)?;
    print!("{txt}");
    Ok(())
}

/// `(csv, text)` renderings of the three families.
pub fn render_scores(scores: &Scores, names: &[String]) -> (String, String) {
    let mut csv = format!("{}\n", ScoreReport::CSV_HEADER);
    let mut txt = String::new();
    for (family, report) in scores.families() {
        csv.push_str(&report.csv_rows(family, names));
        txt.push_str(&report.to_text(family, names));
        txt.push('\n');
    }
    (csv, txt)
}

fn parse_study(s: &str) -> Result<StudyKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Dataset directory or manifest file; needs train, val and eval clips.
    #[arg(long)]
    pub data: PathBuf,
    /// placement | tau | grad
    #[arg(long, value_parser = parse_study)]
    pub study: StudyKind,
    /// Output directory for <study>.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn ablate(a: &AblateArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let cfg = dataset_config(&a.config, &ds)?;
    create_dir(&a.out)?;
    echo_config(
        &a.out,
        &cfg,
        &[
            ("data", a.data.display().to_string()),
            ("study", a.study.to_string()),
        ],
    )?;
    let threads = cfg.worker_threads();
    let data = StudyData::from_dataset(&ds, threads)?;
    if data.eval.is_empty() {
        bail!("dataset has no eval clips to score");
    }
    let rows = a.study.rows(&cfg.model.am);
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|i| cfg.train.seed + i).collect();
    let outcomes = run_study(
        &rows,
        &seeds,
        &data,
        &cfg.model,
        &cfg.train,
        &cfg.eval,
        threads,
        |row, seed, res| match res {
            Ok(s) => {
                let [t, g, e] = s.macro_f1();
                eprintln!(
                    "{:<24} seed {seed:<4} tagging {t:.4}  segment {g:.4}  event {e:.4}",
                    row.label
                );
            }
            Err(e) => eprintln!("{:<24} seed {seed:<4} failed: {e}", row.label),
        },
    );
    let records: Vec<StudyRecord> = outcomes
        .iter()
        .map(|o| StudyRecord::from_outcome(a.study, o))
        .collect();
    let csv = study_csv(&records)?;
    write(&a.out.join(format!("{}.csv", a.study)), &csv)?;
    print!("{csv}");
    if outcomes.iter().all(|o| o.f1.is_empty()) {
        bail!("every run of the study failed");
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// history.csv from `train` or <study>.csv from `ablate`.
    pub input: PathBuf,
    /// Output SVG; defaults to the input path with an .svg extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Chart title; defaults to one derived from the input.
    #[arg(long)]
    pub title: Option<String>,
}

/// Renders a history or study CSV, picked by its header line.
pub fn plot_csv(text: &str, title: Option<&str>) -> Result<String> {
    let header = text.lines().next().unwrap_or("").trim();
    if header == HISTORY_HEADER {
        let history = parse_history_csv(text)?;
        Ok(svg::history_svg(
            &history,
            title.unwrap_or("training history"),
        ))
    } else if header == STUDY_CSV_HEADER {
        let records = amn_core::study::parse_study_csv(text)?;
        let default = records
            .first()
            .map_or_else(|| "study".to_string(), |r| format!("{} study", r.study));
        Ok(svg::study_svg(&records, title.unwrap_or(&default)))
    } else {
        bail!(Error::Parse {
            path: "plot input".into(),
            line: 1,
            msg: format!("unrecognised header {header:?}; expected {HISTORY_HEADER:?} or {STUDY_CSV_HEADER:?}"),
        })
    }
}

pub fn plot(a: &PlotArgs) -> Result<()> {
    let text =
        fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.input.with_extension("svg"));
    let doc = plot_csv(&text, a.title.as_deref()).with_context(|| a.input.display().to_string())?;
    write(&out, doc)?;
    println!("{}", out.display());
    Ok(())
}
