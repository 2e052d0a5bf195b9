use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{ComplexSpectrogram, Result, SignalError, StftParams, Waveform, WindowKind};

/// Periodic window of length `len`.
pub fn window_coefficients(kind: WindowKind, len: usize) -> Vec<f64> {
    let n = len as f64;
    (0..len)
        .map(|i| {
            let x = 2.0 * PI * i as f64 / n;
            match kind {
                WindowKind::Hann => 0.5 - 0.5 * x.cos(),
                WindowKind::Hamming => 0.54 - 0.46 * x.cos(),
                WindowKind::Rectangular => 1.0,
            }
        })
        .collect()
}

/// Short-time Fourier transform without edge padding: frame `t` covers
/// samples `[t * hop, t * hop + window)`, zero-padded to `fft_len`.
pub fn stft(w: &Waveform, p: &StftParams) -> Result<ComplexSpectrogram> {
    p.validate()?;
    if w.len() < p.window_len {
        return Err(SignalError::TooShort { len: w.len(), window: p.window_len });
    }
    let n_frames = p.n_frames(w.len());
    let n_bins = p.n_bins();
    let win = window_coefficients(p.window, p.window_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(p.fft_len);

    let mut bins = DMatrix::<Complex64>::zeros(n_bins, n_frames);
    let mut buf = vec![Complex64::default(); p.fft_len];
    for t in 0..n_frames {
        let start = t * p.hop_len;
        buf.iter_mut().for_each(|c| *c = Complex64::default());
        for (i, (s, wv)) in w.samples[start..start + p.window_len].iter().zip(&win).enumerate() {
            buf[i].re = s * wv;
        }
        fft.process(&mut buf);
        bins.column_mut(t).copy_from_slice(&buf[..n_bins]);
    }
    Ok(ComplexSpectrogram { bins, params: *p, sample_rate: w.sample_rate })
}

/// Sum of squared windows at every output sample for `frames` frames.
fn window_power(p: &StftParams, win: &[f64], frames: usize) -> Vec<f64> {
    let mut acc = vec![0.0; p.synthesis_len(frames)];
    for t in 0..frames {
        let start = t * p.hop_len;
        for (a, w) in acc[start..start + p.window_len].iter_mut().zip(win) {
            *a += w * w;
        }
    }
    acc
}

/// Samples reconstructed from the maximal number of overlapping frames.
/// Outside this range only a partial set of frames contributes.
pub fn interior_range(p: &StftParams, frames: usize) -> std::ops::Range<usize> {
    let len = p.synthesis_len(frames);
    let lo = p.window_len.saturating_sub(p.hop_len).min(len);
    let hi = len.saturating_sub(p.window_len - p.hop_len).max(lo);
    lo..hi
}

/// Weighted overlap-add inverse: the least-squares signal whose STFT is
/// closest to `c`. Requires the squared-window sum to stay bounded away from
/// zero across the interior.
pub fn istft(c: &ComplexSpectrogram) -> Result<Waveform> {
    let p = &c.params;
    p.validate()?;
    let n_bins = p.n_bins();
    if c.bins.nrows() != n_bins {
        return Err(SignalError::ShapeMismatch(format!(
            "{} bins, expected {n_bins} for fft_len {}",
            c.bins.nrows(),
            p.fft_len
        )));
    }
    let frames = c.n_frames();
    let win = window_coefficients(p.window, p.window_len);
    let power = window_power(p, &win, frames);
    let interior = interior_range(p, frames);
    let peak = power.iter().cloned().fold(0.0, f64::max);
    if frames > 0 {
        if let Some(i) = power[interior.clone()].iter().position(|&v| v <= 1e-6 * peak) {
            return Err(SignalError::NotOverlapAdd(format!(
                "squared-window sum vanishes at sample {} (window {}, hop {})",
                interior.start + i,
                p.window_len,
                p.hop_len
            )));
        }
    }

    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(p.fft_len);
    let mut out = vec![0.0; p.synthesis_len(frames)];
    let mut buf = vec![Complex64::default(); p.fft_len];
    let scale = 1.0 / p.fft_len as f64;
    for t in 0..frames {
        let col = c.bins.column(t);
        buf[0] = Complex64::new(col[0].re, 0.0);
        for k in 1..n_bins {
            buf[k] = col[k];
        }
        if p.fft_len.is_multiple_of(2) {
            buf[n_bins - 1].im = 0.0;
        }
        for k in n_bins..p.fft_len {
            buf[k] = buf[p.fft_len - k].conj();
        }
        ifft.process(&mut buf);
        let start = t * p.hop_len;
        for (i, wv) in win.iter().enumerate() {
            out[start + i] += buf[i].re * scale * wv;
        }
    }
    let floor = 1e-12 * peak.max(f64::MIN_POSITIVE);
    for (o, pw) in out.iter_mut().zip(&power) {
        *o = if *pw > floor { *o / pw } else { 0.0 };
    }
    Ok(Waveform { samples: out, sample_rate: c.sample_rate })
}
