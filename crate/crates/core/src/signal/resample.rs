//! Speed perturbation `y(t) = x(alpha * t)` by bandlimited windowed-sinc
//! interpolation.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::{Result, SignalError, Waveform};

pub const MIN_SPEED_FACTOR: f64 = 0.25;
pub const MAX_SPEED_FACTOR: f64 = 4.0;

/// Zero crossings of the interpolation kernel on each side.
const HALF_TAPS: usize = 64;
const KAISER_BETA: f64 = 12.0;
/// Kernel table resolution, entries per zero crossing.
const OVERSAMPLE: usize = 512;

/// Modified Bessel function of the first kind, order zero.
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// `sinc(u) * kaiser(u / HALF_TAPS)` sampled at `u = i / OVERSAMPLE`, with a
/// trailing zero so that linear interpolation at the edge is well defined.
fn kernel_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = HALF_TAPS * OVERSAMPLE;
        let norm = bessel_i0(KAISER_BETA);
        let mut t: Vec<f64> = (0..=n)
            .map(|i| {
                let u = i as f64 / OVERSAMPLE as f64;
                let r = u / HALF_TAPS as f64;
                let win = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / norm;
                let sinc = if i == 0 { 1.0 } else { (PI * u).sin() / (PI * u) };
                sinc * win
            })
            .collect();
        // Exact zeros at the integer crossings keep alpha = 1 an identity.
        for z in 1..=HALF_TAPS {
            t[z * OVERSAMPLE] = 0.0;
        }
        t.push(0.0);
        t
    })
}

#[inline]
fn kernel(table: &[f64], u: f64) -> f64 {
    let pos = u.abs() * OVERSAMPLE as f64;
    let i = pos as usize;
    if i >= HALF_TAPS * OVERSAMPLE {
        return 0.0;
    }
    let frac = pos - i as f64;
    table[i] + frac * (table[i + 1] - table[i])
}

/// Resamples `w` along the time axis by `alpha`: output sample `n` is the
/// bandlimited value of the input at position `alpha * n`. The output has
/// `round(len / alpha)` samples at the input's sample rate, so `alpha < 1`
/// slows speech down and lowers its pitch.
pub fn resample_speed(w: &Waveform, alpha: f64) -> Result<Waveform> {
    if !(MIN_SPEED_FACTOR..=MAX_SPEED_FACTOR).contains(&alpha) || !alpha.is_finite() {
        return Err(SignalError::FactorOutOfRange(alpha));
    }
    if w.is_empty() {
        return Err(SignalError::EmptyInput);
    }
    let n_in = w.len();
    let n_out = (n_in as f64 / alpha).round() as usize;
    if alpha == 1.0 {
        return Ok(Waveform { samples: w.samples.clone(), sample_rate: w.sample_rate });
    }

    // Speeding up moves content above Nyquist, so the kernel is stretched
    // to low-pass at the output band edge.
    let cutoff = (1.0 / alpha).min(1.0);
    let support = HALF_TAPS as f64 / cutoff;
    let table = kernel_table();
    let x = &w.samples;

    let samples = (0..n_out)
        .map(|n| {
            let center = alpha * n as f64;
            let lo = (center - support).ceil().max(0.0) as usize;
            let hi = ((center + support).floor() as usize).min(n_in - 1);
            let mut acc = 0.0;
            if lo <= hi {
                for (k, &xk) in x.iter().enumerate().take(hi + 1).skip(lo) {
                    acc += xk * kernel(table, cutoff * (center - k as f64));
                }
            }
            cutoff * acc
        })
        .collect();
    Ok(Waveform { samples, sample_rate: w.sample_rate })
}
