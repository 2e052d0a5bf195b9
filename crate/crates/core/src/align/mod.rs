//! Alignment ingestion, duration statistics, perturbation factors and
//! parallel utterance pairing.

mod ctm;
mod duration;
mod manifest;
mod pairs;

use thiserror::Error;

pub use ctm::{group_by_utterance, parse_ctm, AlignmentSegment};
pub use duration::{
    control_reference_duration, default_exclude, mean_phone_duration, pair_scale_factor, sd_factor,
    speaker_duration_stats, speech_durations, SpeakerDurationStats, DEFAULT_SILENCE_LABELS,
};
pub use manifest::{read_manifest, write_manifest, Block, ManifestRecord, Method, Provenance, Severity, SpeakerType};
pub use pairs::{build_parallel_pairs, PairingOptions, UtterancePair};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("CTM line {line}: {msg}")]
    Ctm { line: usize, msg: String },
    #[error("no qualifying segments for duration statistics")]
    NoSegments,
    #[error("durations must be positive, got {0} and {1}")]
    NonPositive(f64, f64),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("invalid manifest record {utt}: {msg}")]
    InvalidRecord { utt: String, msg: String },
    #[error("no word overlap between control speakers and {0}")]
    NoOverlap(String),
    #[error("missing duration for utterance {0}")]
    MissingDuration(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AlignError>;
