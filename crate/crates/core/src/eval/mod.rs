//! Downstream utility measurement: a small CTC word recogniser with a
//! severity head, WER scoring and N-best combination.

mod ctc;
mod decode;
mod model;
mod nbest;
mod report;
mod wer;

use thiserror::Error;

use crate::align::Severity;
use crate::autograd::AutogradError;

pub use ctc::{
    best_path_log_prob, ctc_loss, ctc_loss_and_grad, ctc_loss_on_tape, full_sum_log_prob, min_frames, BLANK,
};
pub use decode::{greedy_decode, mtl_loss, mtl_loss_on_tape, severity_loss, Vocab};
pub use model::{
    acoustic_features, train_ctc, CtcEpoch, CtcModel, CtcOutput, CtcTrainConfig, FeatureConfig, ScoreOptions,
    TrainExample,
};
pub use nbest::{
    nbest_interpolate, read_nbest, rescore_key, two_pass_rescore, write_nbest, Choice, HypothesisScorer, NBestEntry,
    NBestList, MAX_NBEST,
};
pub use report::{read_results, write_results, ReportRow, UtteranceResult, WerReport};
pub use wer::{corpus_wer, edit_counts, wer, EditCounts};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("labels need at least {required} frames, got {frames}")]
    Infeasible { frames: usize, required: usize },
    #[error("empty label sequence")]
    EmptyLabels,
    #[error("label {label} outside 1..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("empty reference")]
    EmptyReference,
    #[error("severity {0} is not a graded class")]
    InvalidSeverity(Severity),
    #[error("vocabulary: {0}")]
    Vocab(String),
    #[error("N-best list for {0} is empty")]
    EmptyNBest(String),
    #[error("N-best: {0}")]
    NBest(String),
    #[error("{utt} entry {entry} has no score from system {system}")]
    MissingScore { utt: String, entry: usize, system: String },
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("cannot score hypothesis: {0}")]
    Unscorable(String),
    #[error("results: {0}")]
    Results(String),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;
