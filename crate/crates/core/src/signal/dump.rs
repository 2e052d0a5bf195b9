//! Plain-text spectrogram dump: a header line `F T window hop fft rate`
//! followed by `F` rows of `T` whitespace-separated magnitudes. The window
//! field is the window length; the window shape is always Hann.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::{Result, SignalError, Spectrogram, StftParams, WindowKind};

pub fn write_spectrogram_dump(s: &Spectrogram) -> String {
    let p = &s.params;
    let mut out =
        format!("{} {} {} {} {} {}\n", s.n_bins(), s.n_frames(), p.window_len, p.hop_len, p.fft_len, s.sample_rate);
    for f in 0..s.n_bins() {
        let row: Vec<String> = (0..s.n_frames()).map(|t| format!("{}", s.mag[(f, t)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn read_spectrogram_dump(text: &str) -> Result<Spectrogram> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| SignalError::Dump("missing header".into()))?;
    let fields: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| SignalError::Dump(format!("bad header field {t:?}"))))
        .collect::<Result<_>>()?;
    let [f, t, window, hop, fft, rate] = fields[..] else {
        return Err(SignalError::Dump(format!("header needs 6 fields, found {}", fields.len())));
    };
    let params = StftParams::new(window, hop, fft, WindowKind::Hann)?;
    let values: Vec<f64> = lines
        .flat_map(str::split_whitespace)
        .map(|v| v.parse::<f64>().map_err(|_| SignalError::Dump(format!("bad value {v:?}"))))
        .collect::<Result<_>>()?;
    if values.len() != f * t {
        return Err(SignalError::Dump(format!("expected {} values, found {}", f * t, values.len())));
    }
    Spectrogram::new(DMatrix::from_row_slice(f, t, &values), params, rate as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trips_exactly() {
        let mag = DMatrix::from_fn(257, 3, |f, t| (f as f64 * 0.1 + t as f64).sqrt() / 3.0);
        let s = Spectrogram::new(mag, StftParams::default(), 16_000).unwrap();
        let text = write_spectrogram_dump(&s);
        assert!(text.starts_with("257 3 400 160 512 16000\n"));
        assert_eq!(read_spectrogram_dump(&text).unwrap(), s);
    }

    #[test]
    fn rejects_truncated_body() {
        assert!(read_spectrogram_dump("2 2 400 160 512 16000\n1 2\n3\n").is_err());
        assert!(read_spectrogram_dump("2 2 400\n").is_err());
    }
}
