use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{dcgan_transform, sbgan_augment, DcganGenerator, GanError, ModelOrigin, Result, SbganGenerator};
use crate::signal::{
    griffin_lim, recompose_with_phase, resample_speed, stft, FeatureScale, Spectrogram, StftParams, Waveform,
    MAX_SPEED_FACTOR, MIN_SPEED_FACTOR,
};

/// Analysis settings shared by the augmentation pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub stft: StftParams,
    /// Amplitude scale the generator works in.
    pub scale: FeatureScale,
    /// Use Griffin-Lim with this many iterations instead of the source phase.
    pub griffin_lim_iters: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { stft: StftParams::default(), scale: FeatureScale::Linear, griffin_lim_iters: None }
    }
}

/// Truncates or zero-pads the columns of `m` to `frames`.
pub fn match_length(m: &DMatrix<f64>, frames: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), frames);
    let n = frames.min(m.ncols());
    out.columns_mut(0, n).copy_from(&m.columns(0, n));
    out
}

fn check_factor(factor: f64) -> Result<()> {
    if !(MIN_SPEED_FACTOR..=MAX_SPEED_FACTOR).contains(&factor) {
        return Err(GanError::Config(format!(
            "speed factor {factor} outside [{MIN_SPEED_FACTOR}, {MAX_SPEED_FACTOR}]"
        )));
    }
    Ok(())
}

fn check_origin(origin: ModelOrigin) -> Result<()> {
    if origin == ModelOrigin::Initialized {
        return Err(GanError::Untrained);
    }
    Ok(())
}

/// Speed-perturbs, maps the magnitude through `transform` in feature space,
/// and resynthesises at the perturbed length.
fn run(
    utt: &Waveform,
    factor: f64,
    cfg: &PipelineConfig,
    transform: impl FnOnce(&Spectrogram) -> Result<Spectrogram>,
) -> Result<Waveform> {
    check_factor(factor)?;
    let slowed = resample_speed(utt, factor)?;
    let complex = stft(&slowed, &cfg.stft)?;
    let mag = complex.magnitude();
    let feat = mag.with_mag(cfg.scale.forward(&mag.mag));
    let out = transform(&feat)?;
    let out = Spectrogram::new(cfg.scale.inverse(&out.mag), out.params, out.sample_rate)?;
    let mut wave = match cfg.griffin_lim_iters {
        Some(iters) => griffin_lim(&out, iters)?,
        None => recompose_with_phase(&out, &complex)?,
    };
    wave.samples.resize(slowed.len(), 0.0);
    Ok(wave)
}

/// Speed perturbation followed by the convolutional generator.
pub fn pipeline_speed_gan(
    utt: &Waveform,
    sd_factor: f64,
    g: &DcganGenerator,
    cfg: &PipelineConfig,
) -> Result<Waveform> {
    check_origin(g.origin())?;
    run(utt, sd_factor, cfg, |s| dcgan_transform(g, s))
}

/// Speed perturbation followed by spectral-basis perturbation with the
/// generator's own `k` and scale.
pub fn pipeline_sbgan(utt: &Waveform, factor: f64, g: &SbganGenerator, cfg: &PipelineConfig) -> Result<Waveform> {
    check_origin(g.origin())?;
    run(utt, factor, cfg, |s| sbgan_augment(g, s, g.k(), None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::SbganMode;
    use std::f64::consts::PI;

    fn tone(len: usize) -> Waveform {
        let s = (0..len)
            .map(|i| {
                let t = i as f64 / 16_000.0;
                0.3 * (2.0 * PI * 300.0 * t).sin() + 0.2 * (2.0 * PI * 1250.0 * t).sin() * (2.0 * PI * 4.0 * t).cos()
            })
            .collect();
        Waveform::new(s, 16_000).unwrap()
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn identity_generators_preserve_the_signal() {
        let x = tone(8000);
        let cfg = PipelineConfig::default();
        let g = DcganGenerator::identity(128);
        let y = pipeline_speed_gan(&x, 1.0, &g, &cfg).unwrap();
        assert_eq!(y.len(), x.len());
        assert!(corr(&x.samples, &y.samples) >= 0.99);

        let frames = cfg.stft.n_frames(x.len());
        let k = cfg.stft.n_bins().min(frames);
        let sg = SbganGenerator::zero(cfg.stft.n_bins(), k, SbganMode::Block);
        let y = pipeline_sbgan(&x, 1.0, &sg, &cfg).unwrap();
        assert!(corr(&x.samples, &y.samples) >= 0.99);
    }

    #[test]
    fn half_speed_doubles_duration() {
        let x = tone(4000);
        let cfg = PipelineConfig::default();
        let y = pipeline_speed_gan(&x, 0.5, &DcganGenerator::identity(128), &cfg).unwrap();
        assert!((y.len() as f64 - 2.0 * x.len() as f64).abs() <= cfg.stft.hop_len as f64);
    }

    #[test]
    fn untrained_and_out_of_range_are_rejected() {
        let x = tone(2000);
        let cfg = PipelineConfig::default();
        let g = DcganGenerator::new(128, 0);
        assert!(matches!(pipeline_speed_gan(&x, 1.0, &g, &cfg), Err(GanError::Untrained)));
        let id = DcganGenerator::identity(128);
        assert!(matches!(pipeline_speed_gan(&x, 0.0, &id, &cfg), Err(GanError::Config(_))));
        assert!(matches!(pipeline_speed_gan(&x, -1.0, &id, &cfg), Err(GanError::Config(_))));
    }

    #[test]
    fn match_length_pads_and_truncates() {
        let m = DMatrix::from_fn(2, 3, |i, j| (i + j) as f64 + 1.0);
        let p = match_length(&m, 5);
        assert_eq!(p.shape(), (2, 5));
        assert_eq!(p.columns(3, 2).sum(), 0.0);
        assert_eq!(match_length(&m, 2), m.columns(0, 2).into_owned());
    }
}
