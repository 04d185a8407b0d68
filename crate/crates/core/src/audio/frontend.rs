use std::f64::consts::PI;
use std::sync::Arc;

use amn_tensor::Tensor;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::Clip;
use crate::{Error, Result};

pub const SAMPLE_RATE: u32 = 44_100;
pub const HOP_SECONDS: f64 = 0.020;
pub const WINDOW_SECONDS: f64 = 0.040;
pub const N_FFT: usize = 2048;
pub const N_MELS: usize = 64;
pub const LOG_FLOOR: f64 = 1e-10;

/// Log-mel features, `[t, 64]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub frames: Tensor<f32>,
}

impl MelSpectrogram {
    pub fn frames_len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn bands(&self) -> usize {
        self.frames.shape()[1]
    }

    pub fn hop_seconds(&self) -> f64 {
        HOP_SECONDS
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters `[n_mels, n_fft/2 + 1]` spanning 0..sr/2. Each row
/// is scaled to unit sum, so every filter has the same discrete area.
pub fn mel_filterbank(sr: u32, n_fft: usize, n_mels: usize) -> Tensor<f64> {
    let bins = n_fft / 2 + 1;
    let fmax = sr as f64 / 2.0;
    let mel_max = hz_to_mel(fmax);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut fb = Tensor::zeros([n_mels, bins]);
    let data = fb.data_mut();
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut data[m * bins..(m + 1) * bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * sr as f64 / n_fft as f64;
            *w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
        }
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|w| *w /= s);
        }
    }
    fb
}

/// Reflects an out-of-range index back into `0..n` (edge sample not repeated).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Reusable analysis state for one sample rate.
pub struct Frontend {
    sr: u32,
    hop: usize,
    win: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filterbank: Tensor<f64>,
}

impl Frontend {
    pub fn new() -> Self {
        Self::with_rate(SAMPLE_RATE)
    }

    fn with_rate(sr: u32) -> Self {
        let hop = (HOP_SECONDS * sr as f64).round() as usize;
        let win = (WINDOW_SECONDS * sr as f64).round() as usize;
        // periodic Hann
        let window = (0..win)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / win as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(N_FFT);
        Self {
            sr,
            hop,
            win,
            window,
            fft,
            filterbank: mel_filterbank(sr, N_FFT, N_MELS),
        }
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn filterbank(&self) -> &Tensor<f64> {
        &self.filterbank
    }

    fn check_rate(&self, clip: &Clip) -> Result<()> {
        if clip.sample_rate != self.sr {
            return Err(Error::SampleRate {
                got: clip.sample_rate,
                expected: self.sr,
            });
        }
        Ok(())
    }

    /// Number of frames for `samples` under centered framing.
    pub fn frame_count(&self, samples: usize) -> usize {
        (samples as f64 / self.hop as f64).round() as usize
    }

    /// Power spectrogram `[t, 1025]`. Frame `i` is centered on sample
    /// `i·hop + hop/2`; out-of-range samples are mirrored at the clip edges.
    pub fn stft_power(&self, clip: &Clip) -> Result<Tensor<f64>> {
        self.check_rate(clip)?;
        let n = clip.samples.len();
        if n < self.hop {
            return Err(Error::ClipTooShort {
                samples: n,
                hop: self.hop,
            });
        }
        let t = self.frame_count(n);
        let bins = N_FFT / 2 + 1;
        let pad = (N_FFT - self.win) / 2;
        let mut out = vec![0.0; t * bins];
        let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for (i, row) in out.chunks_exact_mut(bins).enumerate() {
            let start = (i * self.hop + self.hop / 2) as isize - (self.win / 2) as isize;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (j, w) in self.window.iter().enumerate() {
                let s = clip.samples[reflect(start + j as isize, n)] as f64;
                buf[pad + j] = Complex::new(s * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (r, c) in row.iter_mut().zip(&buf[..bins]) {
                *r = c.norm_sqr();
            }
        }
        Ok(Tensor::new([t, bins], out)?)
    }

    pub fn featurize(&self, clip: &Clip) -> Result<MelSpectrogram> {
        let power = self.stft_power(clip)?;
        let mel = apply_filterbank(&power, &self.filterbank)?;
        Ok(log_compress(&mel))
    }
}

impl Default for Frontend {
    fn default() -> Self {
        Self::new()
    }
}

fn apply_filterbank(power: &Tensor<f64>, fb: &Tensor<f64>) -> Result<Tensor<f64>> {
    let (t, bins) = (power.shape()[0], power.shape()[1]);
    let mels = fb.shape()[0];
    if fb.shape()[1] != bins {
        return Err(amn_tensor::TensorError::ShapeMismatch {
            op: "mel_apply",
            lhs: power.shape().to_vec(),
            rhs: fb.shape().to_vec(),
        }
        .into());
    }
    let mut out = vec![0.0; t * mels];
    amn_tensor::gemm_nt(t, bins, mels, power.data(), fb.data(), &mut out, 0.0);
    // rounding in the product can leave tiny negatives next to exact zeros
    out.iter_mut().for_each(|v| *v = f64::max(*v, 0.0));
    Ok(Tensor::new([t, mels], out)?)
}

/// Power spectrogram at the fixed 44.1 kHz analysis rate.
pub fn stft_power(clip: &Clip) -> Result<Tensor<f64>> {
    Frontend::new().stft_power(clip)
}

/// Mel energies `[t, 64]` from a `[t, 1025]` power spectrogram.
pub fn mel_apply(power: &Tensor<f64>, sr: u32) -> Result<Tensor<f64>> {
    apply_filterbank(power, &mel_filterbank(sr, N_FFT, N_MELS))
}

pub fn log_compress(mel: &Tensor<f64>) -> MelSpectrogram {
    MelSpectrogram {
        frames: mel.map(|v| v.max(LOG_FLOOR).ln()).cast(),
    }
}

pub fn featurize(clip: &Clip) -> Result<MelSpectrogram> {
    Frontend::new().featurize(clip)
}
