use serde::{Deserialize, Serialize};

use super::ctc::BLANK;
use super::{EvalError, Result};
use crate::align::Severity;
use crate::autograd::{Tape, Var};

/// Closed word vocabulary; word `i` is CTC class `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    words: Vec<String>,
}

impl Vocab {
    pub fn new(words: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        if words.is_empty() || !words.iter().all(|w| !w.is_empty() && seen.insert(w.as_str())) {
            return Err(EvalError::Vocab("vocabulary must be non-empty with unique, non-empty words".into()));
        }
        Ok(Self { words })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Classes including the blank.
    pub fn classes(&self) -> usize {
        self.words.len() + 1
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn label(&self, word: &str) -> Result<usize> {
        self.words
            .iter()
            .position(|w| w == word)
            .map(|i| i + 1)
            .ok_or_else(|| EvalError::Vocab(format!("word {word:?} not in vocabulary")))
    }

    pub fn labels(&self, words: &[String]) -> Result<Vec<usize>> {
        words.iter().map(|w| self.label(w)).collect()
    }

    pub fn words_of(&self, labels: &[usize]) -> Vec<String> {
        labels.iter().filter_map(|&l| l.checked_sub(1).and_then(|i| self.words.get(i)).cloned()).collect()
    }
}

/// Per-frame argmax, then collapse repeats and drop blanks.
pub fn greedy_decode(log_probs: &[f64], classes: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = BLANK;
    for row in log_probs.chunks(classes) {
        let best = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0;
        if best != BLANK && best != prev {
            out.push(best);
        }
        prev = best;
    }
    out
}

/// Cross-entropy of `softmax(logits)` against a graded severity class.
pub fn severity_loss(logits: &[f64], label: Severity) -> Result<f64> {
    if logits.len() != Severity::GRADED.len() {
        return Err(EvalError::Shape(format!("severity head needs 4 logits, got {}", logits.len())));
    }
    let k = label.class_index().ok_or(EvalError::InvalidSeverity(label))?;
    let mut row = logits.to_vec();
    crate::autograd::log_softmax_row(&mut row);
    Ok(-row[k])
}

/// `beta1 * l_ctc + beta2 * l_seve`.
pub fn mtl_loss(l_ctc: f64, l_seve: f64, beta1: f64, beta2: f64) -> Result<f64> {
    if ![l_ctc, l_seve, beta1, beta2].iter().all(|v| v.is_finite()) {
        return Err(EvalError::NonFinite(format!("mtl inputs ({l_ctc}, {l_seve}, {beta1}, {beta2})")));
    }
    Ok(beta1 * l_ctc + beta2 * l_seve)
}

/// [`mtl_loss`] on recorded scalars.
pub fn mtl_loss_on_tape(tape: &mut Tape, l_ctc: Var, l_seve: Var, beta1: f64, beta2: f64) -> Result<Var> {
    mtl_loss(tape.scalar(l_ctc), tape.scalar(l_seve), beta1, beta2)?;
    let a = tape.scale(l_ctc, beta1)?;
    let b = tape.scale(l_seve, beta2)?;
    Ok(tape.add(a, b)?)
}
