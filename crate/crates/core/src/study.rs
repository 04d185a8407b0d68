//! Ablation studies: a set of AM configurations, each trained over several
//! seeds and summarized as mean ± half-width of a Student-t 95% interval.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use amn_tensor::Real;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::affinity::{AmConfig, GradMode, Placement};
use crate::data::{load_examples, load_strong, Dataset, Split};
use crate::eval::{evaluate_model, EvalClip, EvalParams, Scores};
use crate::model::ModelConfig;
use crate::train::{train, Example, Precision, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Placement,
    Tau,
    Grad,
}

impl StudyKind {
    pub const TAUS: [f64; 5] = [5.0, 1.0, 0.5, 0.1, 0.05];

    /// The row set, each row a variation of `base`.
    pub fn rows(self, base: &AmConfig) -> Vec<StudyRow> {
        let row = |label: String, am: AmConfig| StudyRow { label, am };
        match self {
            StudyKind::Placement => {
                let e = |enc: [bool; 2], dec: [bool; 2]| Placement {
                    encoder: enc,
                    decoder: dec,
                };
                let (n, h, q, b) = ([false, false], [true, false], [false, true], [true, true]);
                [
                    e(n, n),
                    e(h, n),
                    e(q, n),
                    e(b, n),
                    e(n, h),
                    e(n, q),
                    e(n, b),
                    e(b, b),
                ]
                .into_iter()
                .map(|placement| row(placement.to_string(), AmConfig { placement, ..*base }))
                .collect()
            }
            StudyKind::Tau => Self::TAUS
                .iter()
                .map(|&tau| row(format!("tau={tau}"), AmConfig { tau, ..*base }))
                .collect(),
            StudyKind::Grad => GradMode::ALL
                .iter()
                .map(|&grad_mode| row(grad_mode.to_string(), AmConfig { grad_mode, ..*base }))
                .collect(),
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudyKind::Placement => "placement",
            StudyKind::Tau => "tau",
            StudyKind::Grad => "grad",
        })
    }
}

impl FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "placement" => Ok(StudyKind::Placement),
            "tau" => Ok(StudyKind::Tau),
            "grad" => Ok(StudyKind::Grad),
            other => Err(Error::config(format!("unknown study {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub label: String,
    pub am: AmConfig,
}

/// Training, validation and scored evaluation clips.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyData {
    pub classes: usize,
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub eval: Vec<EvalClip>,
}

impl StudyData {
    /// Featurizes the three splits; evaluation clips must carry strong
    /// annotations.
    pub fn from_dataset(ds: &Dataset, threads: usize) -> Result<Self> {
        let m = &ds.manifest;
        let train = load_examples(ds, &m.split(Split::Train), threads)?;
        let val = load_examples(ds, &m.split(Split::Val), threads)?;
        let eval_entries = m.split(Split::Eval);
        let examples = load_examples(ds, &eval_entries, threads)?;
        let mut eval = Vec::with_capacity(examples.len());
        for (entry, example) in eval_entries.iter().zip(examples) {
            let path = entry.strong.as_ref().ok_or_else(|| {
                Error::config(format!("eval clip {} has no strong annotation", entry.id))
            })?;
            let truth = load_strong(ds.path(path), &m.classes)?
                .into_iter()
                .map(|s| s.event)
                .collect();
            eval.push(EvalClip { example, truth });
        }
        Ok(Self {
            classes: m.classes.len(),
            train,
            val,
            eval,
        })
    }
}

/// Trains one configuration with one seed and scores its best model on the
/// evaluation clips.
pub fn run_once(
    data: &StudyData,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    params: &EvalParams,
) -> Result<Scores> {
    fn go<T: Real>(
        data: &StudyData,
        m: &ModelConfig,
        cfg: &TrainConfig,
        params: &EvalParams,
    ) -> Result<Scores> {
        let out = train::<T>(&data.train, &data.val, m, cfg, |_, _| true)?;
        evaluate_model(&out.best, &data.eval, params)
    }
    match cfg.precision {
        Precision::F32 => go::<f32>(data, model_cfg, cfg, params),
        Precision::F64 => go::<f64>(data, model_cfg, cfg, params),
    }
}

/// Mean and Student-t 95% half-width; the half-width is NaN for one value.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("degrees of freedom are positive")
        .inverse_cdf(0.975);
    (mean, t * (var / n as f64).sqrt())
}

/// Per-seed macro F1 triples (tagging, segment, event) of one row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowOutcome {
    pub label: String,
    pub am: AmConfig,
    pub seeds: Vec<u64>,
    pub f1: Vec<[f64; 3]>,
    pub errors: Vec<String>,
}

impl RowOutcome {
    /// `(mean, half_width)` for each family.
    pub fn summary(&self) -> [(f64, f64); 3] {
        std::array::from_fn(|i| mean_ci95(&self.f1.iter().map(|s| s[i]).collect::<Vec<_>>()))
    }
}

/// Runs every row × seed on up to `threads` workers. Results are ordered by
/// row then seed regardless of scheduling; a failed run is recorded in the
/// row's `errors` and the study carries on.
pub fn run_study(
    rows: &[StudyRow],
    seeds: &[u64],
    data: &StudyData,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    params: &EvalParams,
    threads: usize,
    progress: impl Fn(&StudyRow, u64, &Result<Scores>) + Sync,
) -> Vec<RowOutcome> {
    let jobs: Vec<(usize, u64)> = (0..rows.len())
        .flat_map(|r| seeds.iter().map(move |&s| (r, s)))
        .collect();
    let results: Vec<Mutex<Option<Result<Scores>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(r, seed)) = jobs.get(i) else { break };
        let row = &rows[r];
        let m = ModelConfig {
            am: row.am,
            ..model_cfg.clone()
        };
        let cfg = TrainConfig {
            seed,
            ..train_cfg.clone()
        };
        let res = run_once(data, &m, &cfg, params);
        progress(row, seed, &res);
        *results[i].lock().expect("result slot poisoned") = Some(res);
    };
    let threads = threads.clamp(1, jobs.len().max(1));
    if threads == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(worker);
            }
        });
    }
    let mut out: Vec<RowOutcome> = rows
        .iter()
        .map(|r| RowOutcome {
            label: r.label.clone(),
            am: r.am,
            seeds: Vec::new(),
            f1: Vec::new(),
            errors: Vec::new(),
        })
        .collect();
    for (&(r, seed), slot) in jobs.iter().zip(results) {
        match slot
            .into_inner()
            .expect("result slot poisoned")
            .expect("every job ran")
        {
            Ok(s) => {
                out[r].seeds.push(seed);
                out[r].f1.push(s.macro_f1());
            }
            Err(e) => out[r].errors.push(format!("seed {seed}: {e}")),
        }
    }
    out
}

pub const STUDY_CSV_HEADER: &str =
    "study,row,n,tagging_f1,tagging_ci95,segment_f1,segment_ci95,event_f1,event_ci95,errors";

/// One summary row per configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub study: String,
    pub row: String,
    pub n: usize,
    pub tagging_f1: f64,
    pub tagging_ci95: f64,
    pub segment_f1: f64,
    pub segment_ci95: f64,
    pub event_f1: f64,
    pub event_ci95: f64,
    pub errors: String,
}

impl StudyRecord {
    pub fn from_outcome(study: StudyKind, o: &RowOutcome) -> Self {
        let [t, s, e] = o.summary();
        Self {
            study: study.to_string(),
            row: o.label.clone(),
            n: o.f1.len(),
            tagging_f1: t.0,
            tagging_ci95: t.1,
            segment_f1: s.0,
            segment_ci95: s.1,
            event_f1: e.0,
            event_ci95: e.1,
            errors: o.errors.join("; "),
        }
    }
}

pub fn study_csv(records: &[StudyRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(true)
        .from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(|e| Error::config(e.to_string()))?;
    }
    if records.is_empty() {
        return Ok(format!("{STUDY_CSV_HEADER}\n"));
    }
    let bytes = w.into_inner().map_err(|e| Error::config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::config(e.to_string()))
}

pub fn parse_study_csv(text: &str) -> Result<Vec<StudyRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r
        .headers()
        .map_err(|e| parse_err(&e))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if headers != STUDY_CSV_HEADER {
        return Err(Error::Parse {
            path: "study csv".into(),
            line: 1,
            msg: format!("expected header {STUDY_CSV_HEADER:?}"),
        });
    }
    r.deserialize()
        .map(|rec| rec.map_err(|e| parse_err(&e)))
        .collect()
}

fn parse_err(e: &csv::Error) -> Error {
    Error::Parse {
        path: "study csv".into(),
        line: e.position().map_or(0, |p| p.line() as usize),
        msg: e.to_string(),
    }
}
