//! Audio I/O, speed perturbation, STFT analysis/synthesis and phase
//! reconstruction.
//!
//! Everything here is a pure function of its inputs. Spectrogram matrices
//! are stored as `F x T` (frequency rows, one column per frame).

mod dump;
mod phase;
mod resample;
mod stft;
mod wav;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dump::{read_spectrogram_dump, write_spectrogram_dump};
pub use phase::{griffin_lim, griffin_lim_with_history, recompose_with_phase, spectral_convergence};
pub use resample::{resample_speed, MAX_SPEED_FACTOR, MIN_SPEED_FACTOR};
pub use stft::{interior_range, istft, stft, window_coefficients};
pub use wav::{read_wav, read_wav_from, wav_write, write_wav_to};

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("expected mono audio, found {0} channels")]
    NotMono(u16),
    #[error("unsupported sample format: {bits}-bit {format}")]
    UnsupportedBitDepth { bits: u16, format: &'static str },
    #[error("speed factor {0} outside [{min}, {max}]", min = MIN_SPEED_FACTOR, max = MAX_SPEED_FACTOR)]
    FactorOutOfRange(f64),
    #[error("empty input signal")]
    EmptyInput,
    #[error("input of {len} samples is shorter than one {window}-sample window")]
    TooShort { len: usize, window: usize },
    #[error("invalid STFT parameters: {0}")]
    InvalidParams(String),
    #[error("STFT parameters do not satisfy the overlap-add condition: {0}")]
    NotOverlapAdd(String),
    #[error("magnitude spectrogram has zero norm")]
    ZeroMagnitude,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("spectrogram dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// Mono audio with real amplitudes nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(SignalError::InvalidParams("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(SignalError::NonFinite(i));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Scales the waveform in place so that its peak magnitude is at most
    /// `peak`. Quiet signals are left untouched.
    pub fn limit_peak(&mut self, peak: f64) {
        let max = self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if max > peak {
            let g = peak / max;
            self.samples.iter_mut().for_each(|s| *s *= g);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Hann,
    Hamming,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftParams {
    pub window_len: usize,
    pub hop_len: usize,
    pub fft_len: usize,
    #[serde(default)]
    pub window: WindowKind,
}

impl Default for StftParams {
    /// 25 ms Hann window, 10 ms hop, 512-point FFT at 16 kHz (257 bins).
    fn default() -> Self {
        Self { window_len: 400, hop_len: 160, fft_len: 512, window: WindowKind::Hann }
    }
}

impl StftParams {
    pub fn new(window_len: usize, hop_len: usize, fft_len: usize, window: WindowKind) -> Result<Self> {
        let p = Self { window_len, hop_len, fft_len, window };
        p.validate()?;
        Ok(p)
    }

    /// Standard 25 ms / 10 ms framing for an arbitrary sample rate, with the
    /// FFT length rounded up to a power of two.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let window_len = (sample_rate as usize * 25) / 1000;
        let hop_len = (sample_rate as usize * 10) / 1000;
        Self { window_len, hop_len, fft_len: window_len.next_power_of_two(), window: WindowKind::Hann }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop_len == 0 || self.hop_len > self.window_len || self.window_len > self.fft_len {
            return Err(SignalError::InvalidParams(format!(
                "need 0 < hop ({}) <= window ({}) <= fft ({})",
                self.hop_len, self.window_len, self.fft_len
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Number of frames for a signal of `len` samples (no edge padding).
    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            1 + (len - self.window_len) / self.hop_len
        }
    }

    /// Length of the signal synthesised from `frames` frames.
    pub fn synthesis_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop_len + self.window_len
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    /// `(fft_len/2 + 1) x T`.
    pub bins: DMatrix<Complex64>,
    pub params: StftParams,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.bins.ncols()
    }

    pub fn magnitude(&self) -> Spectrogram {
        Spectrogram { mag: self.bins.map(|c| c.norm()), params: self.params, sample_rate: self.sample_rate }
    }
}

/// Nonnegative magnitude spectrogram, `F x T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub mag: DMatrix<f64>,
    pub params: StftParams,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn new(mag: DMatrix<f64>, params: StftParams, sample_rate: u32) -> Result<Self> {
        if let Some(i) = mag.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(SignalError::InvalidParams(format!("magnitude entry {i} is negative or non-finite")));
        }
        Ok(Self { mag, params, sample_rate })
    }

    pub fn n_bins(&self) -> usize {
        self.mag.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.mag.ncols()
    }

    pub fn with_mag(&self, mag: DMatrix<f64>) -> Self {
        Self { mag, params: self.params, sample_rate: self.sample_rate }
    }
}

/// Amplitude scale the GAN models operate in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FeatureScale {
    #[default]
    Linear,
    Log1p,
}

impl FeatureScale {
    pub fn forward(self, mag: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            FeatureScale::Linear => mag.clone(),
            FeatureScale::Log1p => mag.map(f64::ln_1p),
        }
    }

    /// Maps features back to linear magnitude, clamping at zero.
    pub fn inverse(self, feat: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            FeatureScale::Linear => feat.map(|v| v.max(0.0)),
            FeatureScale::Log1p => feat.map(|v| v.max(0.0).exp_m1()),
        }
    }
}
