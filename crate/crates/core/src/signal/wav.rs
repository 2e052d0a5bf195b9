use std::io::{Read, Seek, Write};
use std::path::Path;

use super::{Result, SignalError, Waveform};

const PCM_SCALE: f64 = 32768.0;

fn map_hound(err: hound::Error) -> SignalError {
    match err {
        hound::Error::IoError(e) => SignalError::Io(e),
        hound::Error::Unsupported => SignalError::UnsupportedBitDepth { bits: 0, format: "encoding" },
        other => SignalError::MalformedHeader(other.to_string()),
    }
}

/// Reads a 16-bit PCM mono RIFF/WAVE file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let file = std::fs::File::open(path)?;
    read_wav_from(std::io::BufReader::new(file))
}

pub fn read_wav_from<R: Read>(reader: R) -> Result<Waveform> {
    let mut reader = hound::WavReader::new(reader).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(SignalError::NotMono(spec.channels));
    }
    match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => {}
        (hound::SampleFormat::Int, bits) => {
            return Err(SignalError::UnsupportedBitDepth { bits, format: "integer PCM" })
        }
        (hound::SampleFormat::Float, bits) => return Err(SignalError::UnsupportedBitDepth { bits, format: "float" }),
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / PCM_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(map_hound)?;
    Waveform::new(samples, spec.sample_rate)
}

/// Writes 16-bit PCM mono; samples are rounded and clipped to the i16 range.
pub fn wav_write(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_wav_to(w, std::io::BufWriter::new(file))
}

pub fn write_wav_to<W: Write + Seek>(w: &Waveform, writer: W) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut out = hound::WavWriter::new(writer, spec).map_err(map_hound)?;
    for &s in &w.samples {
        let q = (s * PCM_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        out.write_sample(q).map_err(map_hound)?;
    }
    out.finalize().map_err(map_hound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::io::Cursor;

    /// Canonical 44-byte header followed by `data`.
    fn pcm16_bytes(rate: u32, channels: u16, bits: u16, data: &[u8]) -> Vec<u8> {
        let block_align = channels * bits / 8;
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        b.extend_from_slice(b"WAVE");
        b.extend_from_slice(b"fmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&channels.to_le_bytes());
        b.extend_from_slice(&rate.to_le_bytes());
        b.extend_from_slice(&(rate * block_align as u32).to_le_bytes());
        b.extend_from_slice(&block_align.to_le_bytes());
        b.extend_from_slice(&bits.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&(data.len() as u32).to_le_bytes());
        b.extend_from_slice(data);
        b
    }

    #[test]
    fn hand_built_fixture_decodes_known_samples() {
        // 0x0000, 0x4000 (16384), 0xC000 (-16384), 0x7FFF (32767)
        let data = [0x00, 0x00, 0x00, 0x40, 0x00, 0xC0, 0xFF, 0x7F];
        let bytes = pcm16_bytes(16_000, 1, 16, &data);
        assert_eq!(bytes.len(), 44 + 8);
        let w = read_wav_from(Cursor::new(bytes)).unwrap();
        assert_eq!(w.sample_rate, 16_000);
        assert_eq!(w.samples, vec![0.0, 0.5, -0.5, 32767.0 / 32768.0]);
    }

    #[test]
    fn zero_length_data_chunk_gives_empty_waveform() {
        let w = read_wav_from(Cursor::new(pcm16_bytes(16_000, 1, 16, &[]))).unwrap();
        assert!(w.is_empty());
    }

    #[test]
    fn round_trip_within_quantization() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = Waveform::new(samples, 16_000).unwrap();
        let mut buf = Cursor::new(Vec::new());
        write_wav_to(&w, &mut buf).unwrap();
        buf.set_position(0);
        let back = read_wav_from(buf).unwrap();
        let max_err = w.samples.iter().zip(&back.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max_err <= 2f64.powi(-15), "max err {max_err}");
    }

    #[test]
    fn errors_are_distinct() {
        let stereo = pcm16_bytes(16_000, 2, 16, &[0; 8]);
        assert!(matches!(read_wav_from(Cursor::new(stereo)), Err(SignalError::NotMono(2))));
        let eight_bit = pcm16_bytes(16_000, 1, 8, &[0; 4]);
        assert!(matches!(read_wav_from(Cursor::new(eight_bit)), Err(SignalError::UnsupportedBitDepth { bits: 8, .. })));
        let mut garbage = pcm16_bytes(16_000, 1, 16, &[0; 4]);
        garbage[0..4].copy_from_slice(b"RIFX");
        assert!(matches!(read_wav_from(Cursor::new(garbage)), Err(SignalError::MalformedHeader(_))));
    }
}
