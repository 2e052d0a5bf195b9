//! Connectionist temporal classification over a `T x C` matrix of per-frame
//! log-probabilities, class 0 being the blank.

use crate::autograd::{Tape, Var};

use super::{EvalError, Result};

pub const BLANK: usize = 0;

fn logsumexp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn logsumexp3(a: f64, b: f64, c: f64) -> f64 {
    logsumexp2(logsumexp2(a, b), c)
}

/// Fewest frames that can emit `labels`: one per label plus a blank between
/// each pair of equal neighbours.
pub fn min_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

fn validate(log_probs: &[f64], frames: usize, classes: usize, labels: &[usize]) -> Result<()> {
    if frames * classes != log_probs.len() || classes < 2 {
        return Err(EvalError::Shape(format!(
            "{} log-probs for {frames} frames of {classes} classes",
            log_probs.len()
        )));
    }
    if labels.is_empty() {
        return Err(EvalError::EmptyLabels);
    }
    if let Some(&bad) = labels.iter().find(|&&l| l == BLANK || l >= classes) {
        return Err(EvalError::LabelOutOfRange { label: bad, classes });
    }
    if let Some(i) = log_probs.iter().position(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite(format!("log-prob {i}")));
    }
    let need = min_frames(labels);
    if frames < need {
        return Err(EvalError::Infeasible { frames, required: need });
    }
    Ok(())
}

/// Extended label sequence with blanks around and between labels.
fn extend(labels: &[usize]) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * labels.len() + 1);
    ext.push(BLANK);
    for &l in labels {
        ext.push(l);
        ext.push(BLANK);
    }
    ext
}

/// Whether state `s` may be entered from `s - 2` (skipping a blank).
fn can_skip(ext: &[usize], s: usize) -> bool {
    s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2]
}

/// `alpha[t][s]`: log-probability of all prefixes ending in state `s` at `t`,
/// including the emission at `t`.
fn forward(lp: &[f64], frames: usize, classes: usize, ext: &[usize]) -> Vec<f64> {
    let n = ext.len();
    let mut alpha = vec![f64::NEG_INFINITY; frames * n];
    alpha[0] = lp[ext[0]];
    alpha[1] = lp[ext[1]];
    for t in 1..frames {
        let (prev, cur) = alpha.split_at_mut(t * n);
        let prev = &prev[(t - 1) * n..];
        for s in 0..n {
            let mut a = prev[s];
            if s >= 1 {
                a = logsumexp2(a, prev[s - 1]);
            }
            if can_skip(ext, s) {
                a = logsumexp2(a, prev[s - 2]);
            }
            cur[s] = a + lp[t * classes + ext[s]];
        }
    }
    alpha
}

/// `beta[t][s]`: log-probability of all suffixes after state `s` at `t`,
/// excluding the emission at `t`.
fn backward(lp: &[f64], frames: usize, classes: usize, ext: &[usize]) -> Vec<f64> {
    let n = ext.len();
    let mut beta = vec![f64::NEG_INFINITY; frames * n];
    beta[(frames - 1) * n + n - 1] = 0.0;
    beta[(frames - 1) * n + n - 2] = 0.0;
    for t in (0..frames - 1).rev() {
        let emit = |s: usize| lp[(t + 1) * classes + ext[s]];
        for s in 0..n {
            let next = &beta[(t + 1) * n..(t + 2) * n];
            let stay = next[s] + emit(s);
            let step = if s + 1 < n { next[s + 1] + emit(s + 1) } else { f64::NEG_INFINITY };
            let skip = if s + 2 < n && can_skip(ext, s + 2) { next[s + 2] + emit(s + 2) } else { f64::NEG_INFINITY };
            beta[t * n + s] = logsumexp3(stay, step, skip);
        }
    }
    beta
}

/// Negative log of the total probability of every alignment of `labels`.
pub fn ctc_loss(log_probs: &[f64], frames: usize, classes: usize, labels: &[usize]) -> Result<f64> {
    validate(log_probs, frames, classes, labels)?;
    let ext = extend(labels);
    let n = ext.len();
    let alpha = forward(log_probs, frames, classes, &ext);
    let last = &alpha[(frames - 1) * n..];
    Ok(-logsumexp2(last[n - 1], last[n - 2]))
}

/// Loss together with its gradient with respect to every log-probability,
/// which is minus the posterior occupancy of each (frame, class).
pub fn ctc_loss_and_grad(
    log_probs: &[f64],
    frames: usize,
    classes: usize,
    labels: &[usize],
) -> Result<(f64, Vec<f64>)> {
    validate(log_probs, frames, classes, labels)?;
    let ext = extend(labels);
    let n = ext.len();
    let alpha = forward(log_probs, frames, classes, &ext);
    let beta = backward(log_probs, frames, classes, &ext);
    let last = &alpha[(frames - 1) * n..];
    let log_p = logsumexp2(last[n - 1], last[n - 2]);
    let mut grad = vec![0.0; frames * classes];
    for t in 0..frames {
        for s in 0..n {
            let occ = alpha[t * n + s] + beta[t * n + s] - log_p;
            if occ > f64::NEG_INFINITY {
                grad[t * classes + ext[s]] -= occ.exp();
            }
        }
    }
    Ok((-log_p, grad))
}

/// Log-probability of the single most likely alignment of `labels`.
pub fn best_path_log_prob(log_probs: &[f64], frames: usize, classes: usize, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Ok((0..frames).map(|t| log_probs[t * classes + BLANK]).sum());
    }
    validate(log_probs, frames, classes, labels)?;
    let ext = extend(labels);
    let n = ext.len();
    let mut prev = vec![f64::NEG_INFINITY; n];
    prev[0] = log_probs[ext[0]];
    prev[1] = log_probs[ext[1]];
    let mut cur = prev.clone();
    for t in 1..frames {
        for s in 0..n {
            let mut a = prev[s];
            if s >= 1 {
                a = a.max(prev[s - 1]);
            }
            if can_skip(&ext, s) {
                a = a.max(prev[s - 2]);
            }
            cur[s] = a + log_probs[t * classes + ext[s]];
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[n - 1].max(prev[n - 2]))
}

/// Total log-probability of `labels`, allowing the empty sequence.
pub fn full_sum_log_prob(log_probs: &[f64], frames: usize, classes: usize, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Ok((0..frames).map(|t| log_probs[t * classes + BLANK]).sum());
    }
    ctc_loss(log_probs, frames, classes, labels).map(|l| -l)
}

/// Records the CTC loss of `log_probs` (`[T, C]`) on the tape so that it
/// back-propagates into whatever produced them.
pub fn ctc_loss_on_tape(tape: &mut Tape, log_probs: Var, labels: &[usize]) -> Result<Var> {
    let shape = tape.shape(log_probs);
    if shape.len() != 2 {
        return Err(EvalError::Shape(format!("CTC expects [frames, classes], got {shape:?}")));
    }
    let (frames, classes) = (shape[0], shape[1]);
    let (loss, grad) = ctc_loss_and_grad(tape.value(log_probs), frames, classes, labels)?;
    Ok(tape.custom_scalar(log_probs, loss, grad)?)
}
