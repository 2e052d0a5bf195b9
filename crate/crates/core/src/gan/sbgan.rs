use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::history::EpochAccumulator;
use super::{svd_bases, GanError, GanTrainConfig, ModelOrigin, Result, TrainHistory};
use crate::autograd::{bind, load_checkpoint, save_checkpoint, Adam, Linear, ParamSet, Tape, Var};
use crate::signal::Spectrogram;

const LEAK: f64 = 0.2;
const D_WIDTHS: [usize; 3] = [1024, 512, 256];

/// What one generator/discriminator input is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SbganMode {
    /// A whole flattened `F x k` block of spectral bases.
    #[default]
    Block,
    /// A single `F`-dimensional basis vector.
    Vector,
}

impl std::str::FromStr for SbganMode {
    type Err = GanError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" => Ok(Self::Block),
            "vector" => Ok(Self::Vector),
            other => Err(GanError::Config(format!("unknown spectral-basis mode {other:?}"))),
        }
    }
}

fn input_dim(mode: SbganMode, f: usize, k: usize) -> usize {
    match mode {
        SbganMode::Block => f * k,
        SbganMode::Vector => f,
    }
}

/// Rows fed to the networks: column-major flattening of each block, or each
/// basis vector on its own.
fn rows(mode: SbganMode, blocks: &[&DMatrix<f64>]) -> (usize, Vec<f64>) {
    let mut data = Vec::new();
    for b in blocks {
        data.extend_from_slice(b.as_slice());
    }
    let n = match mode {
        SbganMode::Block => blocks.len(),
        SbganMode::Vector => blocks.iter().map(|b| b.ncols()).sum(),
    };
    (n, data)
}

/// Three linear layers, leaky ReLU (0.2) after the first two, tanh output
/// scaled by `delta_scale`. The output is a spectral-basis perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct SbganGenerator {
    params: ParamSet,
    layers: [Linear; 3],
    freq_bins: usize,
    k: usize,
    mode: SbganMode,
    delta_scale: f64,
    origin: ModelOrigin,
}

/// Linear layers of 1024, 512 and 256 units with leaky ReLU (0.2), then a
/// single logit.
#[derive(Debug, Clone, PartialEq)]
pub struct SbganDiscriminator {
    params: ParamSet,
    layers: [Linear; 4],
    freq_bins: usize,
    k: usize,
    mode: SbganMode,
}

#[derive(Debug, Clone)]
pub struct SbganModel {
    pub generator: SbganGenerator,
    pub discriminator: SbganDiscriminator,
    pub history: TrainHistory,
}

impl SbganGenerator {
    pub fn new(freq_bins: usize, k: usize, hidden: [usize; 2], mode: SbganMode, delta_scale: f64, seed: u64) -> Self {
        Self::with_rng(freq_bins, k, hidden, mode, delta_scale, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn with_rng(
        freq_bins: usize,
        k: usize,
        hidden: [usize; 2],
        mode: SbganMode,
        delta_scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let dim = input_dim(mode, freq_bins, k);
        let mut params = ParamSet::new();
        let layers = [
            Linear::new(&mut params, "fc1", dim, hidden[0], rng),
            Linear::new(&mut params, "fc2", hidden[0], hidden[1], rng),
            Linear::new(&mut params, "fc3", hidden[1], dim, rng),
        ];
        Self { params, layers, freq_bins, k, mode, delta_scale, origin: ModelOrigin::Initialized }
    }

    /// A generator whose perturbation is identically zero.
    pub fn zero(freq_bins: usize, k: usize, mode: SbganMode) -> Self {
        let mut g = Self::new(freq_bins, k, [1, 1], mode, 0.0, 0);
        g.origin = ModelOrigin::Constructed;
        g
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn origin(&self) -> ModelOrigin {
        self.origin
    }

    pub fn delta_scale(&self) -> f64 {
        self.delta_scale
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> SbganMode {
        self.mode
    }

    fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var, scale: f64) -> Result<Var> {
        let h = self.layers[0].forward(tape, vars, x)?;
        let h = tape.leaky_relu(h, LEAK)?;
        let h = self.layers[1].forward(tape, vars, h)?;
        let h = tape.leaky_relu(h, LEAK)?;
        let h = self.layers[2].forward(tape, vars, h)?;
        let h = tape.tanh(h)?;
        Ok(tape.scale(h, scale)?)
    }

    fn check_block(&self, u: &DMatrix<f64>) -> Result<()> {
        let ok = u.nrows() == self.freq_bins && (self.mode == SbganMode::Vector || u.ncols() == self.k);
        if !ok {
            return Err(GanError::Shape(format!(
                "generator built for {}x{} bases, got {:?}",
                self.freq_bins,
                self.k,
                u.shape()
            )));
        }
        Ok(())
    }

    /// Perturbation `delta_scale * tanh(net(U))` for one block of bases,
    /// using `scale` in place of the trained scale when given.
    pub fn perturbation(&self, u: &DMatrix<f64>, scale: Option<f64>) -> Result<DMatrix<f64>> {
        self.check_block(u)?;
        let scale = scale.unwrap_or(self.delta_scale);
        if scale == 0.0 {
            return Ok(DMatrix::zeros(u.nrows(), u.ncols()));
        }
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &self.params, false);
        let (n, data) = rows(self.mode, &[u]);
        let x = tape.constant(&[n, data.len() / n], data)?;
        let y = self.forward(&mut tape, &vars, x, scale)?;
        Ok(DMatrix::from_column_slice(u.nrows(), u.ncols(), tape.value(y)))
    }

    pub fn save(&self, path: &Path, extra: &BTreeMap<String, String>) -> Result<()> {
        let mut h = extra.clone();
        for (k, v) in [
            ("architecture", "sbgan-generator".to_string()),
            ("freq_bins", self.freq_bins.to_string()),
            ("k", self.k.to_string()),
            ("hidden", format!("{},{}", self.layers[0].out_dim, self.layers[1].out_dim)),
            ("mode", format!("{:?}", self.mode).to_lowercase()),
            ("delta_scale", format!("{:.16e}", self.delta_scale)),
            ("origin", self.origin.as_str().to_string()),
        ] {
            h.insert(k.into(), v);
        }
        Ok(save_checkpoint(path, &h, &self.params)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        let h = &ck.header;
        let get = |key: &str| h.get(key).ok_or_else(|| GanError::Checkpoint(format!("missing header {key:?}")));
        if get("architecture")? != "sbgan-generator" {
            return Err(GanError::Checkpoint("not a spectral-basis generator".into()));
        }
        let bad = |key: &str| GanError::Checkpoint(format!("invalid header {key:?}"));
        let num = |key: &str| get(key)?.parse::<usize>().map_err(|_| bad(key));
        let hidden: Vec<usize> =
            get("hidden")?.split(',').map(|s| s.parse().map_err(|_| bad("hidden"))).collect::<Result<_>>()?;
        if hidden.len() != 2 {
            return Err(bad("hidden"));
        }
        let delta: f64 = get("delta_scale")?.parse().map_err(|_| bad("delta_scale"))?;
        let mut g = Self::new(num("freq_bins")?, num("k")?, [hidden[0], hidden[1]], get("mode")?.parse()?, delta, 0);
        g.params.load(&ck.params)?;
        g.origin = if get("origin")? == "initialized" { ModelOrigin::Initialized } else { ModelOrigin::Loaded };
        Ok(g)
    }
}

impl SbganDiscriminator {
    pub fn new(freq_bins: usize, k: usize, mode: SbganMode, seed: u64) -> Self {
        Self::with_rng(freq_bins, k, mode, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn with_rng(freq_bins: usize, k: usize, mode: SbganMode, rng: &mut ChaCha8Rng) -> Self {
        let dim = input_dim(mode, freq_bins, k);
        let mut params = ParamSet::new();
        let layers = [
            Linear::new(&mut params, "fc1", dim, D_WIDTHS[0], rng),
            Linear::new(&mut params, "fc2", D_WIDTHS[0], D_WIDTHS[1], rng),
            Linear::new(&mut params, "fc3", D_WIDTHS[1], D_WIDTHS[2], rng),
            Linear::new(&mut params, "out", D_WIDTHS[2], 1, rng),
        ];
        Self { params, layers, freq_bins, k, mode }
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// Logits `[N, 1]`.
    fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, vars, h)?;
            if i < 3 {
                h = tape.leaky_relu(h, LEAK)?;
            }
        }
        Ok(h)
    }

    /// Probability that each block is real dysarthric. In vector mode a
    /// block's probability is the mean over its basis vectors.
    pub fn probabilities(&self, blocks: &[DMatrix<f64>]) -> Result<Vec<f64>> {
        if blocks.is_empty() {
            return Ok(Vec::new());
        }
        let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
        check_blocks(&refs, self.freq_bins, self.k)?;
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &self.params, false);
        let (n, data) = rows(self.mode, &refs);
        let x = tape.constant(&[n, data.len() / n], data)?;
        let logits = self.forward(&mut tape, &vars, x)?;
        let p = tape.sigmoid(logits)?;
        let p = tape.value(p);
        Ok(match self.mode {
            SbganMode::Block => p.to_vec(),
            SbganMode::Vector => p.chunks(self.k).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect(),
        })
    }
}

fn check_blocks(blocks: &[&DMatrix<f64>], f: usize, k: usize) -> Result<()> {
    if let Some(b) = blocks.iter().find(|b| b.shape() != (f, k)) {
        return Err(GanError::Shape(format!("basis block {:?}, expected {:?}", b.shape(), (f, k))));
    }
    Ok(())
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Trains on non-parallel sets of `F x k` spectral-basis blocks. The
/// discriminator separates real dysarthric blocks from perturbed control
/// blocks `U + dU`; the generator minimises the non-saturating loss.
pub fn sbgan_train(control: &[DMatrix<f64>], dys: &[DMatrix<f64>], cfg: &GanTrainConfig) -> Result<SbganModel> {
    cfg.validate()?;
    if control.is_empty() || dys.is_empty() {
        return Err(GanError::Empty);
    }
    let (f, k) = control[0].shape();
    check_blocks(&control.iter().chain(dys).collect::<Vec<_>>(), f, k)?;
    let delta_scale = cfg.delta_scale.unwrap_or_else(|| {
        let norms: f64 = control.iter().flat_map(|b| b.column_iter().map(|c| c.norm())).sum();
        0.1 * norms / (control.len() * k) as f64
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut g = SbganGenerator::with_rng(f, k, cfg.hidden, cfg.sbgan_mode, delta_scale, &mut rng);
    let mut d = SbganDiscriminator::with_rng(f, k, cfg.sbgan_mode, &mut rng);
    let mut opt_g = Adam::new(cfg.lr, cfg.beta1, cfg.beta2)?;
    let mut opt_d = Adam::new(cfg.lr, cfg.beta1, cfg.beta2)?;
    let mut history = TrainHistory::default();
    let mut c_order: Vec<usize> = (0..control.len()).collect();
    let mut d_order: Vec<usize> = (0..dys.len()).collect();
    let steps = control.len().max(dys.len()).div_ceil(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        c_order.shuffle(&mut rng);
        d_order.shuffle(&mut rng);
        let mut acc = EpochAccumulator::default();
        for step in 0..steps {
            let pick = |order: &[usize], set: &[DMatrix<f64>]| -> Vec<usize> {
                (0..cfg.batch_size).map(|i| order[(step * cfg.batch_size + i) % set.len()]).collect()
            };
            let cb: Vec<&DMatrix<f64>> = pick(&c_order, control).into_iter().map(|i| &control[i]).collect();
            let db: Vec<&DMatrix<f64>> = pick(&d_order, dys).into_iter().map(|i| &dys[i]).collect();
            let (nc, xc_data) = rows(g.mode, &cb);
            let (nd, xd_data) = rows(g.mode, &db);
            let dim = xc_data.len() / nc;

            let mut tape = Tape::new();
            let gv = bind(&mut tape, &g.params, false);
            let dv = bind(&mut tape, &d.params, true);
            let xc = tape.constant(&[nc, dim], xc_data.clone())?;
            let xd = tape.constant(&[nd, dim], xd_data)?;
            let delta = g.forward(&mut tape, &gv, xc, delta_scale)?;
            let fake = tape.add(xc, delta)?;
            let lr = d.forward(&mut tape, &dv, xd)?;
            let lf = d.forward(&mut tape, &dv, fake)?;
            let real_loss = tape.bce_with_logits(lr, &vec![1.0; nd])?;
            let fake_loss = tape.bce_with_logits(lf, &vec![0.0; nc])?;
            let d_loss = tape.add(real_loss, fake_loss)?;
            let correct = tape.value(lr).iter().filter(|&&z| z > 0.0).count()
                + tape.value(lf).iter().filter(|&&z| z < 0.0).count();
            let d_loss_value = tape.scalar(d_loss);
            let grads = tape.backward(d_loss)?;
            grads.accumulate_into(&dv, d.params.tensors_mut())?;
            opt_d.step(d.params.tensors_mut())?;
            d.params.zero_grad();

            let mut tape = Tape::new();
            let gv = bind(&mut tape, &g.params, true);
            let dv = bind(&mut tape, &d.params, false);
            let xc = tape.constant(&[nc, dim], xc_data)?;
            let delta = g.forward(&mut tape, &gv, xc, delta_scale)?;
            let fake = tape.add(xc, delta)?;
            let lf = d.forward(&mut tape, &dv, fake)?;
            let g_loss = tape.bce_with_logits(lf, &vec![1.0; nc])?;
            let g_loss_value = tape.scalar(g_loss);
            debug_assert!(
                (g_loss_value - tape.value(lf).iter().map(|&z| softplus(-z)).sum::<f64>() / nc as f64).abs() < 1e-9
            );
            let grads = tape.backward(g_loss)?;
            grads.accumulate_into(&gv, g.params.tensors_mut())?;
            opt_g.step(g.params.tensors_mut())?;
            g.params.zero_grad();

            acc.add(d_loss_value, g_loss_value, correct, nc + nd);
        }
        history.epochs.push(acc.finish(epoch));
    }
    g.origin = ModelOrigin::Trained;
    Ok(SbganModel { generator: g, discriminator: d, history })
}

/// Perturbs the spectral bases of `spec` with the generator and recomposes
/// with the original singular values and temporal bases, clamped at zero.
/// `delta_scale` overrides the generator's trained scale when given.
pub fn sbgan_augment(
    g: &SbganGenerator,
    spec: &Spectrogram,
    k: usize,
    delta_scale: Option<f64>,
) -> Result<Spectrogram> {
    let basis = svd_bases(&spec.mag, k)?;
    let delta = g.perturbation(&basis.u, delta_scale)?;
    let mut mag = basis.recompose_perturbed(&delta)?;
    mag.apply(|v| *v = v.max(0.0));
    Ok(Spectrogram::new(mag, spec.params, spec.sample_rate)?)
}
