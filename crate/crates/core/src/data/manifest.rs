//! JSON-lines manifest: one `{"id", "audio", "labels", "split", "strong"}`
//! object per clip; paths are relative to the manifest's directory. Class
//! names live in a sibling `classes.txt`, one per line.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::load_strong;
use crate::audio::{load_wav, read_feature_cache, write_feature_cache, Frontend};
use crate::train::Example;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Eval,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Eval => "eval",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "eval" => Ok(Split::Eval),
            other => Err(Error::config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub audio: String,
    /// Sorted, de-duplicated class ids.
    pub labels: Vec<usize>,
    pub split: Split,
    pub strong: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    id: String,
    audio: String,
    labels: Vec<String>,
    split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    strong: Option<String>,
}

pub fn encode_manifest(m: &DatasetManifest) -> Result<String> {
    let mut s = String::new();
    for e in &m.entries {
        let labels = e
            .labels
            .iter()
            .map(|&k| {
                m.classes
                    .get(k)
                    .cloned()
                    .ok_or_else(|| Error::UnknownLabel {
                        label: k.to_string(),
                    })
            })
            .collect::<Result<_>>()?;
        let line = Line {
            id: e.id.clone(),
            audio: e.audio.clone(),
            labels,
            split: e.split,
            strong: e.strong.clone(),
        };
        s.push_str(&serde_json::to_string(&line).map_err(|e| Error::config(e.to_string()))?);
        s.push('\n');
    }
    Ok(s)
}

pub fn decode_manifest(text: &str, classes: &[String], origin: &str) -> Result<DatasetManifest> {
    let mut entries = Vec::new();
    let mut ids = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_owned(),
            line: i + 1,
            msg,
        };
        let line: Line = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        if !ids.insert(line.id.clone()) {
            return Err(err(format!("duplicate id {:?}", line.id)));
        }
        let mut labels = line
            .labels
            .iter()
            .map(|l| {
                classes
                    .iter()
                    .position(|c| c == l)
                    .ok_or_else(|| Error::UnknownLabel { label: l.clone() })
            })
            .collect::<Result<Vec<usize>>>()?;
        labels.sort_unstable();
        labels.dedup();
        entries.push(ManifestEntry {
            id: line.id,
            audio: line.audio,
            labels,
            split: line.split,
            strong: line.strong,
        });
    }
    Ok(DatasetManifest {
        classes: classes.to_vec(),
        entries,
    })
}

pub fn write_manifest(path: impl AsRef<Path>, m: &DatasetManifest) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_manifest(m)?).map_err(|e| Error::io(path, e))
}

pub fn load_manifest(path: impl AsRef<Path>, classes: &[String]) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_manifest(&text, classes, &path.display().to_string())
}

pub fn read_classes(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let classes: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect();
    let unique: BTreeSet<&String> = classes.iter().collect();
    if classes.is_empty() || unique.len() != classes.len() {
        return Err(Error::config(format!(
            "{}: class names must be non-empty and unique",
            path.display()
        )));
    }
    Ok(classes)
}

pub fn write_classes(path: impl AsRef<Path>, classes: &[String]) -> Result<()> {
    let path = path.as_ref();
    let mut s = classes.join("\n");
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// A manifest with the directory its relative paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Checks that each clip's weak labels equal the label set of its
    /// strong annotation file.
    pub fn check_strong_consistency(&self) -> Result<()> {
        for e in &self.manifest.entries {
            if let Some(s) = &e.strong {
                let events = load_strong(self.path(s), &self.manifest.classes)?;
                let mut labels: Vec<usize> = events.iter().map(|x| x.event.label).collect();
                labels.sort_unstable();
                labels.dedup();
                if labels != e.labels {
                    return Err(Error::config(format!(
                        "clip {}: weak labels {:?} differ from strong labels {:?}",
                        e.id, e.labels, labels
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Opens a dataset from its directory or its manifest file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::io(path, std::io::ErrorKind::NotFound.into()));
    }
    let manifest_path = if path.is_dir() {
        path.join("manifest.jsonl")
    } else {
        path.to_path_buf()
    };
    let root = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let classes = read_classes(root.join("classes.txt"))?;
    let manifest = load_manifest(&manifest_path, &classes)?;
    Ok(Dataset { root, manifest })
}

/// Loads and featurizes entries on up to `threads` workers; the result
/// keeps the input order.
pub fn load_examples(
    dataset: &Dataset,
    entries: &[&ManifestEntry],
    threads: usize,
) -> Result<Vec<Example>> {
    load_examples_cached(dataset, entries, threads, None)
}

/// [`load_examples`] backed by an LMS1 feature cache: `<cache>/<id>.lms`
/// is read when present and written after featurizing otherwise.
pub fn load_examples_cached(
    dataset: &Dataset,
    entries: &[&ManifestEntry],
    threads: usize,
    cache: Option<&Path>,
) -> Result<Vec<Example>> {
    let threads = threads.max(1).min(entries.len().max(1));
    let chunk = entries.len().div_ceil(threads).max(1);
    let work = |part: &[&ManifestEntry]| -> Result<Vec<Example>> {
        let fe = Frontend::new();
        part.iter()
            .map(|e| {
                let cached = cache.map(|dir| dir.join(format!("{}.lms", e.id)));
                let features = match &cached {
                    Some(path) if path.exists() => read_feature_cache(path)?,
                    _ => {
                        let mut clip = load_wav(dataset.path(&e.audio))?;
                        clip.id = e.id.clone();
                        let f = fe.featurize(&clip)?;
                        if let Some(path) = &cached {
                            write_feature_cache(path, &f)?;
                        }
                        f
                    }
                };
                Ok(Example {
                    id: e.id.clone(),
                    features,
                    labels: e.labels.clone(),
                })
            })
            .collect()
    };
    if let Some(dir) = cache {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    if threads == 1 {
        return work(entries);
    }
    let parts: Vec<Result<Vec<Example>>> = std::thread::scope(|s| {
        let handles: Vec<_> = entries
            .chunks(chunk)
            .map(|part| s.spawn(move || work(part)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("featurization worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(entries.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
