//! Frame-to-event decoding and the tagging, segment and event scorers.

mod decode;
mod event;
mod report;
mod segment;
mod tagging;

pub use decode::{binarize, decode_events, Event, FrameMask};
pub use event::{event_counts, event_score, EventParams};
pub use report::{ClassCounts, Prf, ScoreReport};
pub use segment::{segment_counts, segment_score};
pub use tagging::{tagging_score, ClipTags};
