use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavSpec};

use crate::{Error, Result};

/// Mono waveform in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub id: String,
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Clip {
    pub fn new(id: impl Into<String>, samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Malformed {
                what: "clip",
                msg: "no samples".into(),
            });
        }
        if sample_rate == 0 {
            return Err(Error::Malformed {
                what: "clip",
                msg: "sample rate is zero".into(),
            });
        }
        Ok(Self {
            id: id.into(),
            samples,
            sample_rate,
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn map_hound(e: hound::Error) -> Error {
    match e {
        // decoding reads from memory, so an I/O failure means the data ran out
        hound::Error::IoError(io) => Error::Truncated {
            what: "wav",
            detail: io.to_string(),
        },
        hound::Error::Unsupported => {
            Error::UnsupportedEncoding("format not handled by the decoder".into())
        }
        hound::Error::FormatError(msg) => Error::Malformed {
            what: "wav",
            msg: msg.into(),
        },
        other => Error::Malformed {
            what: "wav",
            msg: other.to_string(),
        },
    }
}

/// Decodes a RIFF/WAVE byte stream: PCM16 or float32, one or two channels.
/// Stereo is averaged to mono.
pub fn decode_wav(id: impl Into<String>, bytes: &[u8]) -> Result<Clip> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedEncoding(format!("{channels} channels")));
    }
    let declared = reader.len() as usize;
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| {
                s.map(|v| {
                    if v.is_finite() {
                        v.clamp(-1.0, 1.0)
                    } else {
                        0.0
                    }
                })
            })
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => return Err(Error::UnsupportedEncoding(format!("{fmt:?} {bits}-bit"))),
    };
    if interleaved.len() != declared {
        return Err(Error::Truncated {
            what: "wav",
            detail: format!(
                "header declares {declared} samples, found {}",
                interleaved.len()
            ),
        });
    }
    if !interleaved.len().is_multiple_of(channels) {
        return Err(Error::Truncated {
            what: "wav",
            detail: "partial final frame".into(),
        });
    }
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(2)
            .map(|lr| 0.5 * (lr[0] + lr[1]))
            .collect()
    };
    Clip::new(id, samples, spec.sample_rate)
}

/// Reads a WAV file; the clip id is the file stem.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Clip> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_wav(id, &bytes)
}

/// Encodes mono PCM16. Samples are clipped to [-1, 1].
pub fn encode_wav_pcm16(samples: &[f32], sample_rate: u32) -> Result<Vec<u8>> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::with_capacity(44 + 2 * samples.len()));
    {
        let mut w = hound::WavWriter::new(&mut buf, spec).map_err(map_hound)?;
        let mut i16w = w.get_i16_writer(samples.len() as u32);
        for &s in samples {
            i16w.write_sample(quantize(s));
        }
        i16w.flush().map_err(map_hound)?;
        w.finalize().map_err(map_hound)?;
    }
    Ok(buf.into_inner())
}

fn quantize(s: f32) -> i16 {
    (s.clamp(-1.0, 1.0) * 32768.0)
        .round()
        .clamp(-32768.0, 32767.0) as i16
}

pub fn write_wav_pcm16(path: impl AsRef<Path>, samples: &[f32], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_wav_pcm16(samples, sample_rate)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
