use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::history::EpochAccumulator;
use super::{GanError, GanTrainConfig, ModelOrigin, Result, TrainHistory};
use crate::autograd::{
    bind, load_checkpoint, save_checkpoint, Adam, Conv2d, Conv2dOptions, Linear, PaddingMode, ParamSet, Tape, Var,
};
use crate::signal::Spectrogram;

const G_CHANNELS: [usize; 5] = [1, 8, 8, 8, 1];
const D_CHANNELS: [usize; 5] = [1, 8, 16, 32, 64];
const LEAK: f64 = 0.2;

/// Four 3x3 stride-1 replicate-padded convolutions (8, 8, 8, 1 kernels),
/// ReLU after the first three. Maps an `F x W` magnitude chunk to the same
/// shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DcganGenerator {
    params: ParamSet,
    convs: Vec<Conv2d>,
    chunk_frames: usize,
    origin: ModelOrigin,
}

/// Four 2x2 stride-2 convolutions (8, 16, 32, 64 kernels), each input
/// zero-padded to even size, then a linear layer to one logit.
#[derive(Debug, Clone, PartialEq)]
pub struct DcganDiscriminator {
    params: ParamSet,
    convs: Vec<Conv2d>,
    fc: Linear,
    freq_bins: usize,
    chunk_frames: usize,
}

#[derive(Debug, Clone)]
pub struct DcganModel {
    pub generator: DcganGenerator,
    pub discriminator: DcganDiscriminator,
    pub history: TrainHistory,
}

fn to_batch(tape: &mut Tape, chunks: &[&DMatrix<f64>]) -> Result<Var> {
    let (f, w) = chunks[0].shape();
    let mut data = Vec::with_capacity(chunks.len() * f * w);
    for c in chunks {
        if c.shape() != (f, w) {
            return Err(GanError::Shape(format!("chunk {:?} in a batch of {:?}", c.shape(), (f, w))));
        }
        data.extend_from_slice(c.transpose().as_slice());
    }
    Ok(tape.constant(&[chunks.len(), 1, f, w], data)?)
}

fn from_batch(values: &[f64], n: usize, f: usize, w: usize) -> Vec<DMatrix<f64>> {
    (0..n).map(|i| DMatrix::from_row_slice(f, w, &values[i * f * w..(i + 1) * f * w])).collect()
}

/// Splits the columns of `m` into `width`-column chunks, zero-padding the
/// last one.
pub fn chunk_matrix(m: &DMatrix<f64>, width: usize) -> Vec<DMatrix<f64>> {
    let (f, t) = m.shape();
    (0..t.div_ceil(width))
        .map(|c| {
            let start = c * width;
            let take = width.min(t - start);
            let mut out = DMatrix::zeros(f, width);
            out.columns_mut(0, take).copy_from(&m.columns(start, take));
            out
        })
        .collect()
}

fn header(arch: &str, entries: &[(&str, String)], extra: &BTreeMap<String, String>) -> BTreeMap<String, String> {
    let mut h = extra.clone();
    h.insert("architecture".into(), arch.into());
    for (k, v) in entries {
        h.insert((*k).into(), v.clone());
    }
    h
}

fn parse_header<T: std::str::FromStr>(h: &BTreeMap<String, String>, key: &str) -> Result<T> {
    h.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| GanError::Checkpoint(format!("missing or invalid header {key:?}")))
}

fn expect_arch(h: &BTreeMap<String, String>, arch: &str) -> Result<()> {
    match h.get("architecture") {
        Some(a) if a == arch => Ok(()),
        other => Err(GanError::Checkpoint(format!("expected architecture {arch}, found {other:?}"))),
    }
}

fn loaded_origin(h: &BTreeMap<String, String>) -> ModelOrigin {
    if h.get("origin").map(String::as_str) == Some("initialized") {
        ModelOrigin::Initialized
    } else {
        ModelOrigin::Loaded
    }
}

impl DcganGenerator {
    pub fn new(chunk_frames: usize, seed: u64) -> Self {
        Self::with_rng(chunk_frames, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn with_rng(chunk_frames: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut params = ParamSet::new();
        let opts = Conv2dOptions::same((3, 3), PaddingMode::Replicate);
        let convs = (0..4)
            .map(|i| {
                Conv2d::new(&mut params, &format!("conv{}", i + 1), G_CHANNELS[i], G_CHANNELS[i + 1], (3, 3), opts, rng)
            })
            .collect();
        Self { params, convs, chunk_frames, origin: ModelOrigin::Initialized }
    }

    /// All kernels and biases zero.
    pub fn zeros(chunk_frames: usize) -> Self {
        let mut g = Self::new(chunk_frames, 0);
        g.params.tensors_mut().iter_mut().for_each(|t| t.data.fill(0.0));
        g.origin = ModelOrigin::Constructed;
        g
    }

    /// Passes non-negative inputs through unchanged: channel 0 of every
    /// layer copies the centre tap of channel 0 below it.
    pub fn identity(chunk_frames: usize) -> Self {
        let mut g = Self::zeros(chunk_frames);
        for conv in g.convs.clone() {
            let k = g.params.get_mut(conv.kernel);
            // Kernel layout [out, in, 3, 3]; centre of (0, 0) is index 4.
            k.data[4] = 1.0;
        }
        g
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn origin(&self) -> ModelOrigin {
        self.origin
    }

    pub fn chunk_frames(&self) -> usize {
        self.chunk_frames
    }

    pub(crate) fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        for (i, conv) in self.convs.iter().enumerate() {
            h = conv.forward(tape, vars, h)?;
            if i < 3 {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    /// Generator output for each equally shaped chunk.
    pub fn apply(&self, chunks: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
        if chunks.is_empty() {
            return Ok(Vec::new());
        }
        let (f, w) = chunks[0].shape();
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &self.params, false);
        let refs: Vec<&DMatrix<f64>> = chunks.iter().collect();
        let x = to_batch(&mut tape, &refs)?;
        let y = self.forward(&mut tape, &vars, x)?;
        Ok(from_batch(tape.value(y), chunks.len(), f, w))
    }

    pub fn save(&self, path: &Path, extra: &BTreeMap<String, String>) -> Result<()> {
        let h = header(
            "dcgan-generator",
            &[("chunk_frames", self.chunk_frames.to_string()), ("origin", self.origin.as_str().into())],
            extra,
        );
        Ok(save_checkpoint(path, &h, &self.params)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        expect_arch(&ck.header, "dcgan-generator")?;
        let mut g = Self::new(parse_header(&ck.header, "chunk_frames")?, 0);
        g.params.load(&ck.params)?;
        g.origin = loaded_origin(&ck.header);
        Ok(g)
    }
}

fn d_spatial(mut f: usize, mut w: usize) -> (usize, usize) {
    for _ in 0..4 {
        f = f.div_ceil(2);
        w = w.div_ceil(2);
    }
    (f, w)
}

impl DcganDiscriminator {
    pub fn new(freq_bins: usize, chunk_frames: usize, seed: u64) -> Self {
        Self::with_rng(freq_bins, chunk_frames, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn with_rng(freq_bins: usize, chunk_frames: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut params = ParamSet::new();
        let convs = (0..4)
            .map(|i| {
                let name = format!("conv{}", i + 1);
                Conv2d::new(
                    &mut params,
                    &name,
                    D_CHANNELS[i],
                    D_CHANNELS[i + 1],
                    (2, 2),
                    Conv2dOptions::patches((2, 2)),
                    rng,
                )
            })
            .collect();
        let (fh, fw) = d_spatial(freq_bins, chunk_frames);
        let fc = Linear::new(&mut params, "fc", D_CHANNELS[4] * fh * fw, 1, rng);
        Self { params, convs, fc, freq_bins, chunk_frames }
    }

    /// A discriminator that outputs `p` for every input.
    pub fn constant(freq_bins: usize, chunk_frames: usize, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(GanError::Config(format!("constant output {p} outside (0, 1)")));
        }
        let mut d = Self::new(freq_bins, chunk_frames, 0);
        d.params.tensors_mut().iter_mut().for_each(|t| t.data.fill(0.0));
        d.params.get_mut(d.fc.bias).data[0] = (p / (1.0 - p)).ln();
        Ok(d)
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// Logits `[N, 1]`.
    pub(crate) fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let s = tape.shape(x);
        if s[2] != self.freq_bins || s[3] != self.chunk_frames {
            return Err(GanError::Shape(format!(
                "discriminator built for {}x{} chunks, got {}x{}",
                self.freq_bins, self.chunk_frames, s[2], s[3]
            )));
        }
        let mut h = x;
        for conv in &self.convs {
            let s = tape.shape(h);
            h = tape.pad_zero2d(h, s[2] % 2, s[3] % 2)?;
            h = conv.forward(tape, vars, h)?;
            h = tape.leaky_relu(h, LEAK)?;
        }
        let flat = tape.flatten(h)?;
        Ok(self.fc.forward(tape, vars, flat)?)
    }

    /// Probability of "real dysarthric" for each chunk.
    pub fn probabilities(&self, chunks: &[DMatrix<f64>]) -> Result<Vec<f64>> {
        if chunks.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &self.params, false);
        let refs: Vec<&DMatrix<f64>> = chunks.iter().collect();
        let x = to_batch(&mut tape, &refs)?;
        let logits = self.forward(&mut tape, &vars, x)?;
        let p = tape.sigmoid(logits)?;
        Ok(tape.value(p).to_vec())
    }

    pub fn save(&self, path: &Path, extra: &BTreeMap<String, String>) -> Result<()> {
        let h = header(
            "dcgan-discriminator",
            &[("freq_bins", self.freq_bins.to_string()), ("chunk_frames", self.chunk_frames.to_string())],
            extra,
        );
        Ok(save_checkpoint(path, &h, &self.params)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        expect_arch(&ck.header, "dcgan-discriminator")?;
        let mut d = Self::new(parse_header(&ck.header, "freq_bins")?, parse_header(&ck.header, "chunk_frames")?, 0);
        d.params.load(&ck.params)?;
        Ok(d)
    }
}

/// Applies the generator to a spectrogram of any length: non-overlapping
/// chunks, the last zero-padded, outputs truncated and clamped at zero.
pub fn dcgan_transform(g: &DcganGenerator, spec: &Spectrogram) -> Result<Spectrogram> {
    let (f, t) = spec.mag.shape();
    if f == 0 || t == 0 {
        return Err(GanError::Empty);
    }
    let w = g.chunk_frames;
    let outs = g.apply(&chunk_matrix(&spec.mag, w))?;
    let mut mag = DMatrix::zeros(f, t);
    for (c, out) in outs.iter().enumerate() {
        let take = w.min(t - c * w);
        mag.columns_mut(c * w, take).copy_from(&out.columns(0, take));
    }
    mag.apply(|v| *v = v.max(0.0));
    Ok(Spectrogram::new(mag, spec.params, spec.sample_rate)?)
}

/// The value of the minimax objective, `E log D(dys) + E log(1 - D(G(control)))`,
/// over the given chunks.
pub fn minimax_value(
    g: &DcganGenerator,
    d: &DcganDiscriminator,
    control: &[DMatrix<f64>],
    dys: &[DMatrix<f64>],
) -> Result<f64> {
    if control.is_empty() || dys.is_empty() {
        return Err(GanError::Empty);
    }
    let mut tape = Tape::new();
    let gv = bind(&mut tape, &g.params, false);
    let dv = bind(&mut tape, &d.params, false);
    let (real, fake) =
        d_losses(&mut tape, g, d, &gv, &dv, &control.iter().collect::<Vec<_>>(), &dys.iter().collect::<Vec<_>>())?;
    Ok(-(tape.scalar(real.0) + tape.scalar(fake.0)))
}

/// Returns `((bce(D(dys), 1), logits), (bce(D(G(control)), 0), logits))`.
fn d_losses(
    tape: &mut Tape,
    g: &DcganGenerator,
    d: &DcganDiscriminator,
    gv: &[Var],
    dv: &[Var],
    control: &[&DMatrix<f64>],
    dys: &[&DMatrix<f64>],
) -> Result<((Var, Var), (Var, Var))> {
    let xc = to_batch(tape, control)?;
    let xd = to_batch(tape, dys)?;
    let fake = g.forward(tape, gv, xc)?;
    let lr = d.forward(tape, dv, xd)?;
    let lf = d.forward(tape, dv, fake)?;
    let real = tape.bce_with_logits(lr, &vec![1.0; dys.len()])?;
    let fake_loss = tape.bce_with_logits(lf, &vec![0.0; control.len()])?;
    Ok(((real, lr), (fake_loss, lf)))
}

type Chunks = Vec<(DMatrix<f64>, DMatrix<f64>)>;

fn prepare(pairs: &[(DMatrix<f64>, DMatrix<f64>)], cfg: &GanTrainConfig) -> Result<(Chunks, usize)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(GanError::Empty);
    }
    let f = pairs[0].0.nrows();
    let mut chunks = Vec::new();
    for (i, (c, d)) in pairs.iter().enumerate() {
        if c.shape() != d.shape() || c.nrows() != f || c.ncols() == 0 {
            return Err(GanError::Shape(format!("pair {i}: control {:?} vs dysarthric {:?}", c.shape(), d.shape())));
        }
        chunks.extend(chunk_matrix(c, cfg.chunk_frames).into_iter().zip(chunk_matrix(d, cfg.chunk_frames)));
    }
    Ok((chunks, f))
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn train_loop(
    g: &mut DcganGenerator,
    d: &mut DcganDiscriminator,
    chunks: &Chunks,
    cfg: &GanTrainConfig,
    update_g: bool,
    rng: &mut ChaCha8Rng,
) -> Result<TrainHistory> {
    let mut opt_g = Adam::new(cfg.lr, cfg.beta1, cfg.beta2)?;
    let mut opt_d = Adam::new(cfg.lr, cfg.beta1, cfg.beta2)?;
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        let mut acc = EpochAccumulator::default();
        for batch in order.chunks(cfg.batch_size) {
            let control: Vec<&DMatrix<f64>> = batch.iter().map(|&i| &chunks[i].0).collect();
            let dys: Vec<&DMatrix<f64>> = batch.iter().map(|&i| &chunks[i].1).collect();

            let mut tape = Tape::new();
            let gv = bind(&mut tape, &g.params, false);
            let dv = bind(&mut tape, &d.params, true);
            let ((real, lr), (fake, lf)) = d_losses(&mut tape, g, d, &gv, &dv, &control, &dys)?;
            let d_loss = tape.add(real, fake)?;
            let correct = tape.value(lr).iter().filter(|&&z| z > 0.0).count()
                + tape.value(lf).iter().filter(|&&z| z < 0.0).count();
            let d_loss_value = tape.scalar(d_loss);
            let mut g_loss_value = tape.value(lf).iter().map(|&z| softplus(-z)).sum::<f64>() / batch.len() as f64;
            let grads = tape.backward(d_loss)?;
            grads.accumulate_into(&dv, d.params.tensors_mut())?;
            opt_d.step(d.params.tensors_mut())?;
            d.params.zero_grad();

            if update_g {
                let mut tape = Tape::new();
                let gv = bind(&mut tape, &g.params, true);
                let dv = bind(&mut tape, &d.params, false);
                let xc = to_batch(&mut tape, &control)?;
                let fake = g.forward(&mut tape, &gv, xc)?;
                let logits = d.forward(&mut tape, &dv, fake)?;
                let mut loss = tape.bce_with_logits(logits, &vec![1.0; batch.len()])?;
                if cfg.l1_weight > 0.0 {
                    let xd = to_batch(&mut tape, &dys)?;
                    let diff = tape.sub(fake, xd)?;
                    let abs = tape.abs(diff)?;
                    let l1 = tape.mean(abs)?;
                    let l1 = tape.scale(l1, cfg.l1_weight)?;
                    loss = tape.add(loss, l1)?;
                }
                g_loss_value = tape.scalar(loss);
                let grads = tape.backward(loss)?;
                grads.accumulate_into(&gv, g.params.tensors_mut())?;
                opt_g.step(g.params.tensors_mut())?;
                g.params.zero_grad();
            }
            acc.add(d_loss_value, g_loss_value, correct, 2 * batch.len());
        }
        history.epochs.push(acc.finish(epoch));
    }
    Ok(history)
}

/// Adversarial training on paired, equally shaped `(control, dysarthric)`
/// magnitude matrices. The discriminator minimises the binary cross-entropy
/// form of the minimax objective; the generator minimises the non-saturating
/// loss plus `l1_weight` times the paired L1 distance.
pub fn dcgan_train(pairs: &[(DMatrix<f64>, DMatrix<f64>)], cfg: &GanTrainConfig) -> Result<DcganModel> {
    let (chunks, f) = prepare(pairs, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut g = DcganGenerator::with_rng(cfg.chunk_frames, &mut rng);
    let mut d = DcganDiscriminator::with_rng(f, cfg.chunk_frames, &mut rng);
    let history = train_loop(&mut g, &mut d, &chunks, cfg, true, &mut rng)?;
    g.origin = ModelOrigin::Trained;
    Ok(DcganModel { generator: g, discriminator: d, history })
}

/// Trains only a discriminator against a fixed generator.
pub fn dcgan_train_discriminator(
    g: &DcganGenerator,
    pairs: &[(DMatrix<f64>, DMatrix<f64>)],
    cfg: &GanTrainConfig,
) -> Result<(DcganDiscriminator, TrainHistory)> {
    let (chunks, f) = prepare(pairs, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut d = DcganDiscriminator::with_rng(f, cfg.chunk_frames, &mut rng);
    let mut g = g.clone();
    let history = train_loop(&mut g, &mut d, &chunks, cfg, false, &mut rng)?;
    Ok((d, history))
}
