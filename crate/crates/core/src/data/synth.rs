use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{
    write_classes, write_manifest, write_strong, DatasetManifest, ManifestEntry, Split, StrongEvent,
};
use crate::audio::write_wav_pcm16;
use crate::metrics::Event;
use crate::{Error, Result};

const NAMES: [&str; 10] = [
    "hum", "hiss", "whistle", "rustle", "chime", "rumble", "beep", "crackle", "drone", "static",
];
const BASE_HZ: f64 = 200.0;
const SPACING: f64 = 1.55;
const FADE_SECONDS: f64 = 0.010;
const BACKGROUND_RMS: f64 = 0.003;

/// Display names for `classes` synthetic sources.
pub fn class_names(classes: usize) -> Vec<String> {
    (0..classes)
        .map(|k| {
            NAMES
                .get(k)
                .map_or_else(|| format!("class{k}"), |s| s.to_string())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScapeSpec {
    pub n_clips: usize,
    pub clip_seconds: f64,
    pub classes: usize,
    pub events_per_clip: (usize, usize),
    pub event_seconds: (f64, f64),
    pub snr_db: (f64, f64),
    pub max_polyphony: usize,
    /// Train / validation / evaluation shares.
    pub split_fractions: [f64; 3],
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for ScapeSpec {
    fn default() -> Self {
        Self {
            n_clips: 100,
            clip_seconds: 10.0,
            classes: 10,
            events_per_clip: (1, 5),
            event_seconds: (0.5, 3.0),
            snr_db: (10.0, 30.0),
            max_polyphony: 3,
            split_fractions: [0.6, 0.2, 0.2],
            sample_rate: crate::audio::SAMPLE_RATE,
            seed: 0,
        }
    }
}

impl ScapeSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        let (e0, e1) = self.events_per_clip;
        let (d0, d1) = self.event_seconds;
        let (s0, s1) = self.snr_db;
        if self.n_clips == 0 || self.classes == 0 {
            return bad("n_clips and classes must be positive".into());
        }
        if e0 > e1 {
            return bad(format!("events_per_clip range {e0}..{e1} is empty"));
        }
        if !(d0 > 0.0 && d0 <= d1 && d1.is_finite()) {
            return bad(format!("event_seconds range {d0}..{d1} is invalid"));
        }
        if !(s0 <= s1 && s0.is_finite() && s1.is_finite()) {
            return bad(format!("snr_db range {s0}..{s1} is invalid"));
        }
        if !(self.clip_seconds >= d1) {
            return bad(format!(
                "clip_seconds {} is shorter than the longest event {d1}",
                self.clip_seconds
            ));
        }
        if self.max_polyphony == 0 {
            return bad("max_polyphony must be at least 1".into());
        }
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        super::split_counts(self.n_clips, &self.split_fractions)?;
        Ok(())
    }
}

fn centre_hz(class_id: usize) -> f64 {
    BASE_HZ * SPACING.powi(class_id as i32)
}

fn apply_fades(x: &mut [f64], sr: u32) {
    let n = ((FADE_SECONDS * sr as f64).round() as usize).min(x.len() / 2);
    for i in 0..n {
        let g = 0.5 - 0.5 * (PI * i as f64 / n as f64).cos();
        x[i] *= g;
        let j = x.len() - 1 - i;
        x[j] *= g;
    }
}

fn normalize_rms(x: &mut [f64]) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
}

/// Unit-RMS source signal for one class: even ids are harmonic stacks
/// on a class-specific fundamental, odd ids are noise bands around a
/// class-specific centre. 10 ms raised-cosine fades at both ends.
pub fn synth_class_template(class_id: usize, duration: f64, sr: u32, seed: u64) -> Vec<f32> {
    let n = (duration * sr as f64).round() as usize;
    if n == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nyquist = sr as f64 / 2.0;
    let fc = centre_hz(class_id).min(0.8 * nyquist);
    let mut x = vec![0.0; n];
    if class_id.is_multiple_of(2) {
        let phase: f64 = rng.random_range(0.0..2.0 * PI);
        let mut h = 1;
        while (h as f64) * fc < 0.9 * nyquist && h <= 8 {
            let f = h as f64 * fc;
            let amp = 1.0 / h as f64;
            for (i, v) in x.iter_mut().enumerate() {
                *v += amp * (2.0 * PI * f * i as f64 / sr as f64 + phase * h as f64).sin();
            }
            h += 1;
        }
    } else {
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
            .collect();
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(n).process(&mut buf);
        let (lo, hi) = (fc * 0.8, fc * 1.25);
        for (k, c) in buf.iter_mut().enumerate() {
            let f = k.min(n - k) as f64 * sr as f64 / n as f64;
            if f < lo || f > hi {
                *c = Complex::new(0.0, 0.0);
            }
        }
        planner.plan_fft_inverse(n).process(&mut buf);
        for (v, c) in x.iter_mut().zip(&buf) {
            *v = c.re;
        }
    }
    normalize_rms(&mut x);
    apply_fades(&mut x, sr);
    x.into_iter().map(|v| v as f32).collect()
}

/// Event layout of one clip, sorted by onset.
fn place_events(spec: &ScapeSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Event>> {
    let count = rng.random_range(spec.events_per_clip.0..=spec.events_per_clip.1);
    let mut events: Vec<Event> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut placed = false;
        for _ in 0..1000 {
            let label = rng.random_range(0..spec.classes);
            let dur = rng.random_range(spec.event_seconds.0..=spec.event_seconds.1);
            let onset = rng.random_range(0.0..=(spec.clip_seconds - dur));
            let cand = Event::new(label, onset, onset + dur)?;
            // polyphony peaks at some event onset
            let fits = events
                .iter()
                .chain(std::iter::once(&cand))
                .map(|probe| {
                    events
                        .iter()
                        .chain(std::iter::once(&cand))
                        .filter(|e| e.onset <= probe.onset && probe.onset < e.offset)
                        .count()
                })
                .max()
                .unwrap_or(0)
                <= spec.max_polyphony;
            if fits {
                events.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::config(
                "could not place events within the polyphony limit",
            ));
        }
    }
    events.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.label.cmp(&b.label)));
    Ok(events)
}

fn render_clip(spec: &ScapeSpec, events: &[Event], rng: &mut ChaCha8Rng) -> Vec<f32> {
    let sr = spec.sample_rate;
    let n = (spec.clip_seconds * sr as f64).round() as usize;
    let mut x: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut *rng);
            BACKGROUND_RMS * z
        })
        .collect::<Vec<f64>>();
    for e in events {
        let snr = rng.random_range(spec.snr_db.0..=spec.snr_db.1);
        let gain = BACKGROUND_RMS * 10f64.powf(snr / 20.0);
        let tmpl = synth_class_template(e.label, e.duration(), sr, rng.random());
        let start = (e.onset * sr as f64).round() as usize;
        for (d, &s) in x[start.min(n)..].iter_mut().zip(&tmpl) {
            *d += gain * s as f64;
        }
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.99 {
        let g = 0.99 / peak;
        x.iter_mut().for_each(|v| *v *= g);
    }
    x.into_iter().map(|v| v as f32).collect()
}

/// Writes `audio/*.wav`, `strong/*.tsv`, `classes.txt` and
/// `manifest.jsonl` under `out_dir`. Every clip is a pure function of the
/// spec and its index.
pub fn generate(spec: &ScapeSpec, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    spec.validate()?;
    let out = out_dir.as_ref();
    for sub in ["audio", "strong"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let names = class_names(spec.classes);
    let splits = super::split_counts(spec.n_clips, &spec.split_fractions)?;
    let mut split_of = Vec::with_capacity(spec.n_clips);
    for (s, &count) in [Split::Train, Split::Val, Split::Eval].iter().zip(&splits) {
        split_of.extend(std::iter::repeat_n(*s, count));
    }
    let width = spec.n_clips.to_string().len().max(4);
    let mut entries = Vec::with_capacity(spec.n_clips);
    for (i, &split) in split_of.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64 + 1);
        let events = place_events(spec, &mut rng)?;
        let samples = render_clip(spec, &events, &mut rng);
        let id = format!("clip_{i:0width$}");
        let audio = format!("audio/{id}.wav");
        let strong = format!("strong/{id}.tsv");
        write_wav_pcm16(out.join(&audio), &samples, spec.sample_rate)?;
        let filename = format!("{id}.wav");
        let strong_events: Vec<StrongEvent> = events
            .iter()
            .map(|e| StrongEvent {
                filename: filename.clone(),
                event: *e,
            })
            .collect();
        write_strong(out.join(&strong), &strong_events, &names)?;
        let mut labels: Vec<usize> = events.iter().map(|e| e.label).collect();
        labels.sort_unstable();
        labels.dedup();
        entries.push(ManifestEntry {
            id,
            audio,
            labels,
            split,
            strong: Some(strong),
        });
    }
    let manifest = DatasetManifest {
        classes: names,
        entries,
    };
    write_classes(out.join("classes.txt"), &manifest.classes)?;
    write_manifest(out.join("manifest.jsonl"), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_length_and_determinism() {
        let a = synth_class_template(3, 0.5, 44100, 11);
        assert_eq!(a.len(), 22050);
        assert_eq!(a, synth_class_template(3, 0.5, 44100, 11));
        assert_ne!(a, synth_class_template(3, 0.5, 44100, 12));
    }

    #[test]
    fn templates_fade_in_and_out() {
        let a = synth_class_template(0, 0.2, 44100, 1);
        assert!(a[0].abs() < 1e-6 && a[a.len() - 1].abs() < 1e-3);
    }

    #[test]
    fn spec_validation() {
        ScapeSpec::default().validate().unwrap();
        let bad = ScapeSpec {
            events_per_clip: (3, 2),
            ..ScapeSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = ScapeSpec {
            clip_seconds: 2.0,
            ..ScapeSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn placement_respects_bounds_and_polyphony() {
        let spec = ScapeSpec {
            events_per_clip: (5, 5),
            max_polyphony: 1,
            event_seconds: (0.5, 1.0),
            ..ScapeSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let ev = place_events(&spec, &mut rng).unwrap();
            assert_eq!(ev.len(), 5);
            for w in ev.windows(2) {
                assert!(w[0].offset <= w[1].onset + 1e-12);
            }
            assert!(ev
                .iter()
                .all(|e| e.onset >= 0.0 && e.offset <= spec.clip_seconds));
        }
    }
}
