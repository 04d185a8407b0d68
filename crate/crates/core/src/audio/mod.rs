//! Waveform input and the log-mel front end.

mod cache;
mod frontend;
mod wav;

pub use cache::{
    decode_feature_cache, encode_feature_cache, read_feature_cache, write_feature_cache,
};
pub use frontend::{
    featurize, log_compress, mel_apply, mel_filterbank, stft_power, Frontend, MelSpectrogram,
    HOP_SECONDS, LOG_FLOOR, N_FFT, N_MELS, SAMPLE_RATE, WINDOW_SECONDS,
};
pub use wav::{decode_wav, encode_wav_pcm16, load_wav, write_wav_pcm16, Clip};
