//! Synthetic soundscapes, manifests, strong annotations and splits.

mod manifest;
mod split;
mod strong;
mod synth;

pub use manifest::{
    decode_manifest, encode_manifest, load_dataset, load_examples, load_examples_cached,
    load_manifest, read_classes, write_classes, write_manifest, Dataset, DatasetManifest,
    ManifestEntry, Split,
};
pub use split::{split, split_counts};
pub use strong::{decode_strong, encode_strong, load_strong, write_strong, StrongEvent};
pub use synth::{class_names, generate, synth_class_template, ScapeSpec};
