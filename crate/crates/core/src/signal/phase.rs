use rustfft::num_complex::Complex64;

use super::{istft, stft, ComplexSpectrogram, Result, SignalError, Spectrogram, Waveform};

/// `|| |STFT(x)| - target || / ||target||` over matching frames.
pub fn spectral_convergence(x: &Waveform, target: &Spectrogram) -> Result<f64> {
    let c = stft(x, &target.params)?;
    let frames = c.n_frames().min(target.n_frames());
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 0..frames {
        for f in 0..target.n_bins() {
            let m = target.mag[(f, t)];
            num += (c.bins[(f, t)].norm() - m).powi(2);
            den += m * m;
        }
    }
    if den == 0.0 {
        return Err(SignalError::ZeroMagnitude);
    }
    Ok((num / den).sqrt())
}

/// Griffin-Lim phase reconstruction starting from zero phase.
pub fn griffin_lim(mag: &Spectrogram, iters: usize) -> Result<Waveform> {
    griffin_lim_with_history(mag, iters).map(|(w, _)| w)
}

/// As [`griffin_lim`], also returning the spectral convergence after every
/// iteration.
pub fn griffin_lim_with_history(mag: &Spectrogram, iters: usize) -> Result<(Waveform, Vec<f64>)> {
    if iters == 0 {
        return Err(SignalError::InvalidParams("griffin_lim needs at least one iteration".into()));
    }
    if mag.mag.iter().all(|&v| v == 0.0) {
        return Err(SignalError::ZeroMagnitude);
    }
    let mut spec = ComplexSpectrogram {
        bins: mag.mag.map(|m| Complex64::new(m, 0.0)),
        params: mag.params,
        sample_rate: mag.sample_rate,
    };
    let mut history = Vec::with_capacity(iters);
    let mut x = istft(&spec)?;
    for _ in 0..iters {
        let c = stft(&x, &mag.params)?;
        spec.bins = mag.mag.zip_map(&c.bins, |m, z| {
            let n = z.norm();
            if n > 0.0 {
                z * (m / n)
            } else {
                Complex64::new(m, 0.0)
            }
        });
        x = istft(&spec)?;
        history.push(spectral_convergence(&x, mag)?);
    }
    Ok((x, history))
}

/// Combines `mag` with the phase angles of `phase_source` and inverts.
pub fn recompose_with_phase(mag: &Spectrogram, phase_source: &ComplexSpectrogram) -> Result<Waveform> {
    if mag.mag.shape() != phase_source.bins.shape() {
        return Err(SignalError::ShapeMismatch(format!(
            "magnitude {:?} vs phase source {:?}",
            mag.mag.shape(),
            phase_source.bins.shape()
        )));
    }
    let bins = mag.mag.zip_map(&phase_source.bins, |m, z| Complex64::from_polar(m, z.arg()));
    istft(&ComplexSpectrogram { bins, params: phase_source.params, sample_rate: phase_source.sample_rate })
}
