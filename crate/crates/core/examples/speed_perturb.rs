//! Resamples a 440 Hz tone by several speed factors and reports the new
//! length and the dominant frequency.

use std::f64::consts::PI;

use dysaug::signal::{resample_speed, stft, StftParams, Waveform, WindowKind};

fn peak_hz(w: &Waveform) -> Result<f64, Box<dyn std::error::Error>> {
    let p = StftParams::new(4096, 4096, 4096, WindowKind::Hann)?;
    let mag = stft(w, &p)?.magnitude().mag;
    let bin = (0..mag.nrows()).max_by(|&a, &b| mag[(a, 0)].total_cmp(&mag[(b, 0)])).unwrap_or(0);
    Ok(bin as f64 * w.sample_rate as f64 / p.fft_len as f64)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sr = 16000;
    let tone =
        Waveform::new((0..sr).map(|n| 0.5 * (2.0 * PI * 440.0 * n as f64 / sr as f64).sin()).collect(), sr as u32)?;
    for alpha in [0.5, 0.8, 0.9, 1.0, 1.1, 1.25, 2.0] {
        let out = resample_speed(&tone, alpha)?;
        println!("alpha {alpha:4}  {:6} samples  peak {:6.1} Hz", out.len(), peak_hz(&out)?);
    }
    Ok(())
}
