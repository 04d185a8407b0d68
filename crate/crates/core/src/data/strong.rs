//! Strong annotations: `filename<TAB>onset<TAB>offset<TAB>label` per line.

use std::fmt::Write as _;
use std::path::Path;

use crate::metrics::Event;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StrongEvent {
    pub filename: String,
    pub event: Event,
}

pub fn encode_strong(events: &[StrongEvent], classes: &[String]) -> Result<String> {
    let mut s = String::new();
    for e in events {
        let name = classes
            .get(e.event.label)
            .ok_or_else(|| Error::UnknownLabel {
                label: e.event.label.to_string(),
            })?;
        if e.filename.contains(['\t', '\n']) {
            return Err(Error::InvalidEvent(format!(
                "file name {:?} contains a tab or newline",
                e.filename
            )));
        }
        let _ = writeln!(
            s,
            "{}\t{:.3}\t{:.3}\t{}",
            e.filename, e.event.onset, e.event.offset, name
        );
    }
    Ok(s)
}

/// Parses annotation text. `origin` names the source in errors. A first
/// line starting with `filename<TAB>` is taken as a header and skipped;
/// blank lines are ignored.
pub fn decode_strong(text: &str, classes: &[String], origin: &str) -> Result<Vec<StrongEvent>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (i == 0 && line.starts_with("filename\t")) {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_owned(),
            line: lineno,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(err(format!(
                "expected 4 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("invalid time {s:?}")))
        };
        let (onset, offset) = (num(fields[1])?, num(fields[2])?);
        let label = fields[3].trim();
        let k = classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::UnknownLabel {
                label: label.to_owned(),
            })?;
        let event = Event::new(k, onset, offset).map_err(|e| err(e.to_string()))?;
        out.push(StrongEvent {
            filename: fields[0].to_owned(),
            event,
        });
    }
    Ok(out)
}

pub fn load_strong(path: impl AsRef<Path>, classes: &[String]) -> Result<Vec<StrongEvent>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_strong(&text, classes, &path.display().to_string())
}

pub fn write_strong(
    path: impl AsRef<Path>,
    events: &[StrongEvent],
    classes: &[String],
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_strong(events, classes)?).map_err(|e| Error::io(path, e))
}
