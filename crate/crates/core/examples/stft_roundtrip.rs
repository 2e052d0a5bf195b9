//! STFT analysis and overlap-add resynthesis of a chirp, then Griffin-Lim
//! reconstruction from the magnitude alone.

use std::f64::consts::PI;

use dysaug::signal::{griffin_lim_with_history, interior_range, istft, stft, StftParams, Waveform, WindowKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sr = 8000;
    let x: Vec<f64> = (0..8000)
        .map(|n| {
            let t = n as f64 / sr as f64;
            0.4 * (2.0 * PI * (300.0 * t + 400.0 * t * t)).sin()
        })
        .collect();
    let w = Waveform::new(x, sr)?;
    let p = StftParams::new(256, 64, 256, WindowKind::Hann)?;
    let spec = stft(&w, &p)?;
    let y = istft(&spec)?;
    let err = interior_range(&p, spec.n_frames()).map(|i| (w.samples[i] - y.samples[i]).abs()).fold(0.0, f64::max);
    println!("{} bins x {} frames, round-trip max error {err:.2e}", spec.bins.nrows(), spec.n_frames());

    let (_, history) = griffin_lim_with_history(&spec.magnitude(), 60)?;
    for (i, sc) in history.iter().enumerate().filter(|(i, _)| i % 10 == 0 || *i == history.len() - 1) {
        println!("griffin-lim iter {i:2}  spectral convergence {sc:.4}");
    }
    Ok(())
}
