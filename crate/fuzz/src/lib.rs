//! Fuzz target bodies. Each decoder must reject bad input with an error,
//! never a panic, and whatever it accepts must survive a re-encode as a
//! fixed point.

use amn_cli::commands::plot_csv;
use amn_cli::config::{parse_pairs, RunConfig};
use amn_core::audio::{decode_feature_cache, decode_wav, encode_feature_cache, encode_wav_pcm16};
use amn_core::data::{decode_manifest, decode_strong, encode_manifest, encode_strong};
use amn_core::model::{decode_checkpoint, encode_checkpoint};
use amn_core::study::{parse_study_csv, study_csv};
use amn_core::train::{history_csv, parse_history_csv};

/// Class names the text formats are decoded against.
pub const CLASSES: [&str; 3] = ["hum", "hiss", "whistle"];

fn classes() -> Vec<String> {
    CLASSES.iter().map(|s| s.to_string()).collect()
}

pub fn wav(data: &[u8]) {
    let Ok(clip) = decode_wav("fuzz", data) else {
        return;
    };
    let Ok(once) = encode_wav_pcm16(&clip.samples, clip.sample_rate) else {
        return;
    };
    let again = decode_wav("fuzz", &once).expect("re-encoded wav decodes");
    assert_eq!(
        encode_wav_pcm16(&again.samples, again.sample_rate).unwrap(),
        once
    );
}

pub fn lms(data: &[u8]) {
    let Ok(mel) = decode_feature_cache(data) else {
        return;
    };
    let once = encode_feature_cache(&mel);
    let again = decode_feature_cache(&once).expect("re-encoded features decode");
    assert_eq!(encode_feature_cache(&again), once);
}

pub fn checkpoint(data: &[u8]) {
    let Ok(ck) = decode_checkpoint(data) else {
        return;
    };
    let Ok(once) = encode_checkpoint(&ck) else {
        return;
    };
    let again = decode_checkpoint(&once).expect("re-encoded checkpoint decodes");
    assert_eq!(encode_checkpoint(&again).unwrap(), once);
}

pub fn strong_tsv(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let classes = classes();
    let Ok(events) = decode_strong(text, &classes, "fuzz") else {
        return;
    };
    let Ok(once) = encode_strong(&events, &classes) else {
        return;
    };
    // three-decimal times can round an event to zero length, which is rejected
    let Ok(again) = decode_strong(&once, &classes, "fuzz") else {
        return;
    };
    assert_eq!(encode_strong(&again, &classes).unwrap(), once);
}

pub fn manifest(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let classes = classes();
    let Ok(m) = decode_manifest(text, &classes, "fuzz") else {
        return;
    };
    let once = encode_manifest(&m).expect("decoded manifest encodes");
    let again = decode_manifest(&once, &classes, "fuzz").expect("re-encoded manifest decodes");
    assert_eq!(again, m);
}

pub fn config(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(pairs) = parse_pairs(text, "fuzz") else {
        return;
    };
    let Ok(cfg) = RunConfig::from_pairs(&pairs) else {
        return;
    };
    let once = cfg.render();
    let again = RunConfig::from_pairs(&parse_pairs(&once, "echo").expect("echo parses"))
        .expect("echo applies");
    assert_eq!(again.render(), once);
}

pub fn csv(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(h) = parse_history_csv(text) {
        let once = history_csv(&h);
        assert_eq!(
            history_csv(&parse_history_csv(&once).expect("history re-parses")),
            once
        );
    }
    if let Ok(records) = parse_study_csv(text) {
        let once = study_csv(&records).expect("records serialize");
        let again = parse_study_csv(&once).expect("study re-parses");
        assert_eq!(study_csv(&again).unwrap(), once);
    }
    let _ = plot_csv(text, None);
}
