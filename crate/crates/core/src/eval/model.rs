use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ctc::{best_path_log_prob, ctc_loss_on_tape, full_sum_log_prob};
use super::decode::{greedy_decode, mtl_loss_on_tape, Vocab};
use super::{EvalError, Result};
use crate::align::Severity;
use crate::autograd::{
    bind, load_checkpoint, save_checkpoint, Adam, Conv2d, Conv2dOptions, Linear, PaddingMode, ParamSet, Tape, Var,
};
use crate::signal::Spectrogram;

const CONV_CHANNELS: [usize; 2] = [8, 16];

/// Log-compressed magnitude averaged into equal-width frequency bands, with
/// optional per-utterance mean removal in each band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub bands: usize,
    pub mean_norm: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { bands: 32, mean_norm: true }
    }
}

/// `bands x T` features of a magnitude spectrogram. Bins are split into
/// `bands` contiguous groups of nearly equal size.
pub fn acoustic_features(spec: &Spectrogram, cfg: &FeatureConfig) -> Result<DMatrix<f64>> {
    let (f, t) = spec.mag.shape();
    if cfg.bands == 0 || cfg.bands > f || t == 0 {
        return Err(EvalError::Shape(format!("{} bands from a {f}x{t} spectrogram", cfg.bands)));
    }
    let mut out = DMatrix::zeros(cfg.bands, t);
    for b in 0..cfg.bands {
        let (lo, hi) = (b * f / cfg.bands, (b + 1) * f / cfg.bands);
        for j in 0..t {
            out[(b, j)] =
                spec.mag.view((lo, j), (hi - lo, 1)).iter().map(|v| v.ln_1p()).sum::<f64>() / (hi - lo) as f64;
        }
    }
    if cfg.mean_norm {
        for mut row in out.row_iter_mut() {
            let m = row.mean();
            row.add_scalar_mut(-m);
        }
    }
    Ok(out)
}

/// One training utterance: features, word labels and, for dysarthric
/// speakers, a severity class.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CtcTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Weights of the CTC and severity losses.
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for CtcTrainConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 8, lr: 3e-3, seed: 0, beta1: 0.5, beta2: 0.5 }
    }
}

/// Two strided convolutions over `(time, band)`, mean over bands, a
/// per-frame linear layer to word classes and a time-pooled severity head.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcModel {
    params: ParamSet,
    conv: [Conv2d; 2],
    out: Linear,
    severity: Linear,
    vocab: Vocab,
    bands: usize,
}

/// Forward results for one utterance.
pub struct CtcOutput {
    /// `[T, C]` per-frame log-probabilities.
    pub log_probs: Var,
    /// `[1, 4]` severity logits.
    pub severity_logits: Var,
}

/// How a model scores a hypothesis for N-best combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreOptions {
    /// Sum over all alignments instead of taking the best one.
    pub full_sum: bool,
    /// Divide by the number of frames.
    pub per_frame: bool,
}

impl CtcModel {
    pub fn new(vocab: Vocab, bands: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let opts = Conv2dOptions { stride: (1, 2), padding: (1, 1), mode: PaddingMode::Zero };
        let conv = [
            Conv2d::new(&mut params, "conv1", 1, CONV_CHANNELS[0], (3, 3), opts, &mut rng),
            Conv2d::new(&mut params, "conv2", CONV_CHANNELS[0], CONV_CHANNELS[1], (3, 3), opts, &mut rng),
        ];
        let out = Linear::new(&mut params, "out", CONV_CHANNELS[1], vocab.classes(), &mut rng);
        let severity = Linear::new(&mut params, "severity", CONV_CHANNELS[1], Severity::GRADED.len(), &mut rng);
        Self { params, conv, out, severity, vocab, bands }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], features: &DMatrix<f64>) -> Result<CtcOutput> {
        let (b, t) = features.shape();
        if b != self.bands || t == 0 {
            return Err(EvalError::Shape(format!("model takes {} bands, got {b}x{t} features", self.bands)));
        }
        // Column-major `bands x T` storage is row-major `[T, bands]`.
        let x = tape.constant(&[1, 1, t, b], features.as_slice().to_vec())?;
        let h = self.conv[0].forward(tape, vars, x)?;
        let h = tape.relu(h)?;
        let h = self.conv[1].forward(tape, vars, h)?;
        let h = tape.relu(h)?;
        let h = tape.mean_axis(h, 3)?;
        let h = tape.reshape(h, &[CONV_CHANNELS[1], t])?;
        let frames = tape.transpose(h)?;
        let logits = self.out.forward(tape, vars, frames)?;
        let log_probs = tape.log_softmax(logits)?;
        let pooled = tape.mean_axis(frames, 0)?;
        let pooled = tape.reshape(pooled, &[1, CONV_CHANNELS[1]])?;
        let severity_logits = self.severity.forward(tape, vars, pooled)?;
        Ok(CtcOutput { log_probs, severity_logits })
    }

    /// Per-frame log-probabilities, row-major `T x C`.
    pub fn log_probs(&self, features: &DMatrix<f64>) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &self.params, false);
        let out = self.forward(&mut tape, &vars, features)?;
        Ok(tape.value(out.log_probs).to_vec())
    }

    /// Greedy transcription.
    pub fn transcribe(&self, features: &DMatrix<f64>) -> Result<Vec<String>> {
        let lp = self.log_probs(features)?;
        Ok(self.vocab.words_of(&greedy_decode(&lp, self.vocab.classes())))
    }

    /// Most likely severity class.
    pub fn predict_severity(&self, features: &DMatrix<f64>) -> Result<Severity> {
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &self.params, false);
        let out = self.forward(&mut tape, &vars, features)?;
        let logits = tape.value(out.severity_logits);
        let best = (0..logits.len()).max_by(|&a, &b| logits[a].total_cmp(&logits[b])).unwrap_or(0);
        Ok(Severity::from_class_index(best).expect("four severity logits"))
    }

    /// Log-probability of `words` given the features.
    pub fn score(&self, features: &DMatrix<f64>, words: &[String], opts: ScoreOptions) -> Result<f64> {
        let labels = self.vocab.labels(words)?;
        let lp = self.log_probs(features)?;
        let frames = features.ncols();
        let classes = self.vocab.classes();
        let s = if opts.full_sum {
            full_sum_log_prob(&lp, frames, classes, &labels)?
        } else {
            best_path_log_prob(&lp, frames, classes, &labels)?
        };
        Ok(if opts.per_frame { s / frames as f64 } else { s })
    }

    /// The `n` highest-scoring single-word and empty hypotheses, best first.
    pub fn nbest_words(
        &self,
        features: &DMatrix<f64>,
        n: usize,
        opts: ScoreOptions,
    ) -> Result<Vec<(Vec<String>, f64)>> {
        let mut all: Vec<(Vec<String>, f64)> = std::iter::once(Vec::new())
            .chain(self.vocab.words().iter().map(|w| vec![w.clone()]))
            .map(|h| self.score(features, &h, opts).map(|s| (h, s)))
            .collect::<Result<_>>()?;
        all.sort_by(|a, b| b.1.total_cmp(&a.1));
        all.truncate(n);
        Ok(all)
    }

    pub fn save(&self, path: &Path, extra: &BTreeMap<String, String>) -> Result<()> {
        let mut h = extra.clone();
        h.insert("architecture".into(), "ctc-severity".into());
        h.insert("bands".into(), self.bands.to_string());
        h.insert("vocab".into(), self.vocab.words().join(","));
        Ok(save_checkpoint(path, &h, &self.params)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        if ck.header_value("architecture")? != "ctc-severity" {
            return Err(EvalError::Shape("checkpoint is not a CTC model".into()));
        }
        let bands = ck.header_value("bands")?.parse().map_err(|_| EvalError::Shape("bad bands header".into()))?;
        let vocab = Vocab::new(ck.header_value("vocab")?.split(',').map(String::from).collect())?;
        let mut m = Self::new(vocab, bands, 0);
        m.params.load(&ck.params)?;
        Ok(m)
    }
}

/// Mean training losses of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtcEpoch {
    pub epoch: usize,
    pub ctc: f64,
    pub severity: f64,
}

/// Trains with the weighted CTC and severity losses. Utterances without a
/// graded severity contribute only the CTC term.
pub fn train_ctc(vocab: Vocab, examples: &[TrainExample], cfg: &CtcTrainConfig) -> Result<(CtcModel, Vec<CtcEpoch>)> {
    let bands = examples.first().map(|e| e.features.nrows()).ok_or(EvalError::EmptyLabels)?;
    if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(EvalError::Shape("epochs, batch size and learning rate must be positive".into()));
    }
    let mut model = CtcModel::new(vocab, bands, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut opt = Adam::new(cfg.lr, 0.9, 0.999)?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut ctc_sum, mut sev_sum, mut sev_n) = (0.0, 0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &examples[i];
                let mut tape = Tape::new();
                let vars = bind(&mut tape, &model.params, true);
                let out = model.forward(&mut tape, &vars, &ex.features)?;
                let ctc = ctc_loss_on_tape(&mut tape, out.log_probs, &ex.labels)?;
                ctc_sum += tape.scalar(ctc);
                let loss = match ex.severity.class_index() {
                    Some(k) => {
                        let sev = tape.cross_entropy(out.severity_logits, &[k])?;
                        sev_sum += tape.scalar(sev);
                        sev_n += 1;
                        mtl_loss_on_tape(&mut tape, ctc, sev, cfg.beta1, cfg.beta2)?
                    }
                    None => tape.scale(ctc, cfg.beta1)?,
                };
                let loss = tape.scale(loss, scale)?;
                let grads = tape.backward(loss)?;
                grads.accumulate_into(&vars, model.params.tensors_mut())?;
            }
            opt.step(model.params.tensors_mut())?;
            model.params.zero_grad();
        }
        history.push(CtcEpoch {
            epoch,
            ctc: ctc_sum / examples.len() as f64,
            severity: if sev_n > 0 { sev_sum / sev_n as f64 } else { 0.0 },
        });
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::StftParams;

    fn vocab() -> Vocab {
        Vocab::new(vec!["up".into(), "down".into()]).unwrap()
    }

    fn pattern(word: usize, t: usize) -> DMatrix<f64> {
        DMatrix::from_fn(6, t, |b, j| {
            let on = j >= 2 && j + 2 < t;
            match (on, word) {
                (false, _) => 0.0,
                (true, 0) => {
                    if (b + j) % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                (true, _) => {
                    if b % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
            }
        })
    }

    #[test]
    fn features_average_bands_and_remove_means() {
        let mag = DMatrix::from_fn(4, 3, |i, j| (i + j) as f64);
        let s = Spectrogram::new(mag.clone(), StftParams::default(), 16_000).unwrap();
        let raw = acoustic_features(&s, &FeatureConfig { bands: 2, mean_norm: false }).unwrap();
        assert!((raw[(1, 2)] - (mag[(2, 2)].ln_1p() + mag[(3, 2)].ln_1p()) / 2.0).abs() < 1e-12);
        let norm = acoustic_features(&s, &FeatureConfig { bands: 2, mean_norm: true }).unwrap();
        assert!(norm.row(0).sum().abs() < 1e-12);
        assert!(acoustic_features(&s, &FeatureConfig { bands: 5, mean_norm: true }).is_err());
    }

    #[test]
    fn output_shapes() {
        let m = CtcModel::new(vocab(), 6, 1);
        let lp = m.log_probs(&pattern(0, 9)).unwrap();
        assert_eq!(lp.len(), 9 * 3);
        for row in lp.chunks(3) {
            assert!((row.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(m.log_probs(&DMatrix::zeros(5, 9)).is_err());
    }

    #[test]
    fn learns_two_words() {
        let examples: Vec<_> = (0..16)
            .map(|i| TrainExample {
                features: pattern(i % 2, 8 + i % 3),
                labels: vec![i % 2 + 1],
                severity: if i % 4 == 0 { Severity::M } else { Severity::None },
            })
            .collect();
        let cfg = CtcTrainConfig { epochs: 40, batch_size: 4, lr: 1e-2, ..Default::default() };
        let (model, hist) = train_ctc(vocab(), &examples, &cfg).unwrap();
        assert!(hist.last().unwrap().ctc < hist[0].ctc);
        assert_eq!(model.transcribe(&pattern(0, 10)).unwrap(), vec!["up"]);
        assert_eq!(model.transcribe(&pattern(1, 10)).unwrap(), vec!["down"]);
        let up = vec!["up".to_string()];
        let down = vec!["down".to_string()];
        let f = pattern(0, 10);
        assert!(
            model.score(&f, &up, ScoreOptions::default()).unwrap()
                > model.score(&f, &down, ScoreOptions::default()).unwrap()
        );
        let nb = model.nbest_words(&f, 2, ScoreOptions { full_sum: true, per_frame: true }).unwrap();
        assert_eq!(nb[0].0, up);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = CtcModel::new(vocab(), 6, 4);
        m.save(&dir.path().join("m.ckpt"), &BTreeMap::new()).unwrap();
        assert_eq!(CtcModel::load(&dir.path().join("m.ckpt")).unwrap(), m);
    }
}
