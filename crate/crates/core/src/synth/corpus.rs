use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::align::{AlignmentSegment, Block, ManifestRecord, Severity, SpeakerType};
use crate::signal::{
    recompose_with_phase, resample_speed, stft, wav_write, SignalError, StftParams, Waveform, WindowKind,
};

/// Sub-word sound classes. Every word is an ordered pair of two different
/// classes, giving 20 words.
const PHONES: [&str; 5] = ["NZ", "NB", "TN", "UP", "DN"];
const SILENCE: &str = "SIL";
const LEAD: f64 = 0.06;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub seed: u64,
    pub sample_rate: u32,
    pub control_speakers: usize,
    /// Recordings of each word per speaker and block.
    pub takes: usize,
    /// Words 0..n are recorded by dysarthric speakers in B1 and B3; B2
    /// always covers the whole vocabulary.
    pub dysarthric_train_words: usize,
    /// Mean phone duration of control speech in seconds.
    pub phone_dur: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { seed: 7, sample_rate: 4000, control_speakers: 2, takes: 1, dysarthric_train_words: 12, phone_dur: 0.2 }
    }
}

/// How a severity level distorts speech.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Impairment {
    /// Speed factor below one slows speech down.
    pub speed: f64,
    /// Standard deviation, in bins, of the Gaussian blur across frequency.
    pub smear_bins: f64,
    pub snr_db: f64,
    pub gain: f64,
}

impl Impairment {
    pub fn for_severity(s: Severity) -> Option<Self> {
        let (speed, smear_bins, snr_db, gain) = match s {
            Severity::H => (0.85, 1.0, 24.0, 0.8),
            Severity::M => (0.75, 2.0, 18.0, 0.65),
            Severity::L => (0.65, 3.0, 14.0, 0.5),
            Severity::VL => (0.55, 4.0, 10.0, 0.4),
            Severity::None => return None,
        };
        Some(Self { speed, smear_bins, snr_db, gain })
    }
}

/// An in-memory corpus: manifest, audio by utterance id and phone alignments.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub words: Vec<String>,
    pub records: Vec<ManifestRecord>,
    pub audio: HashMap<String, Waveform>,
    pub alignments: Vec<AlignmentSegment>,
    pub stft: StftParams,
}

pub fn corpus_words() -> Vec<String> {
    word_phones().into_iter().map(|(a, b)| format!("{}{}", PHONES[a], PHONES[b]).to_lowercase()).collect()
}

fn word_phones() -> Vec<(usize, usize)> {
    (0..PHONES.len()).flat_map(|a| (0..PHONES.len()).filter(move |&b| b != a).map(move |b| (a, b))).collect()
}

/// Analysis framing used for the corpus: 64 ms Hann windows with a 32 ms
/// hop.
pub fn corpus_stft(sample_rate: u32) -> StftParams {
    let window_len = (sample_rate as usize * 64 / 1000).next_power_of_two();
    StftParams { window_len, hop_len: window_len / 2, fft_len: window_len, window: WindowKind::Hann }
}

#[derive(Debug, Clone, Copy)]
struct Voice {
    /// Multiplies every frequency.
    pitch: f64,
    /// Multiplies every phone duration.
    tempo: f64,
}

struct Synth<'a> {
    sr: f64,
    rng: &'a mut ChaCha8Rng,
}

impl Synth<'_> {
    fn phone(&mut self, kind: usize, dur: f64, voice: Voice, out: &mut Vec<f64>) {
        let n = (dur * self.sr) as usize;
        // Frequencies are fractions of the Nyquist rate.
        let p = voice.pitch * self.rng.random_range(0.95..1.05) * self.sr / 2.0;
        let mut s = vec![0.0; n];
        match PHONES[kind] {
            "NZ" => {
                let g = Normal::new(0.0, 0.25).expect("valid deviation");
                s.iter_mut().for_each(|v| *v = g.sample(self.rng));
            }
            "NB" => {
                let centre = 0.55 * p;
                for _ in 0..24 {
                    let f = centre + self.rng.random_range(-0.0625..0.0625) * p;
                    let ph = self.rng.random_range(0.0..2.0 * PI);
                    for (i, v) in s.iter_mut().enumerate() {
                        *v += 0.06 * (2.0 * PI * f * i as f64 / self.sr + ph).sin();
                    }
                }
            }
            "TN" => {
                let f = 0.25 * p;
                for (i, v) in s.iter_mut().enumerate() {
                    let t = i as f64 / self.sr;
                    *v = 0.4 * (2.0 * PI * f * t + 0.3 * (2.0 * PI * 5.0 * t).sin()).sin();
                }
            }
            chirp => {
                let (lo, hi) = (0.15 * p, 0.65 * p);
                let (f0, f1) = if chirp == "UP" { (lo, hi) } else { (hi, lo) };
                let mut phase = 0.0;
                for (i, v) in s.iter_mut().enumerate() {
                    let f = f0 + (f1 - f0) * i as f64 / n as f64;
                    phase += 2.0 * PI * f / self.sr;
                    *v = 0.4 * phase.sin();
                }
            }
        }
        let ramp = ((0.01 * self.sr) as usize).min(n / 2);
        for i in 0..ramp {
            let g = 0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos();
            s[i] *= g;
            s[n - 1 - i] *= g;
        }
        out.extend(s);
    }

    fn silence(&mut self, dur: f64, out: &mut Vec<f64>) {
        let g = Normal::new(0.0, 1e-3).expect("valid deviation");
        out.extend((0..(dur * self.sr) as usize).map(|_| g.sample(self.rng)));
    }

    /// Samples and `(label, start, dur)` segments of one word.
    fn word(&mut self, phones: (usize, usize), voice: Voice, phone_dur: f64) -> (Vec<f64>, Vec<(String, f64, f64)>) {
        let mut out = Vec::new();
        let mut segs = Vec::new();
        let sr = self.sr;
        let push = |label: &str, start: usize, end: usize, segs: &mut Vec<(String, f64, f64)>| {
            segs.push((label.to_string(), start as f64 / sr, (end - start) as f64 / sr));
        };
        self.silence(LEAD, &mut out);
        push(SILENCE, 0, out.len(), &mut segs);
        for kind in [phones.0, phones.1] {
            let start = out.len();
            let dur = phone_dur * voice.tempo * self.rng.random_range(0.85..1.15);
            self.phone(kind, dur, voice, &mut out);
            push(PHONES[kind], start, out.len(), &mut segs);
        }
        let start = out.len();
        self.silence(LEAD, &mut out);
        push(SILENCE, start, out.len(), &mut segs);
        (out, segs)
    }
}

/// Slows, blurs across frequency, adds white noise and attenuates.
pub fn impair(w: &Waveform, imp: &Impairment, p: &StftParams, rng: &mut ChaCha8Rng) -> Result<Waveform, SignalError> {
    let slowed = resample_speed(w, imp.speed)?;
    let spec = stft(&slowed, p)?;
    let mut mag = spec.magnitude();
    if imp.smear_bins > 0.0 {
        let radius = (3.0 * imp.smear_bins).ceil() as isize;
        let kernel: Vec<f64> =
            (-radius..=radius).map(|d| (-(d * d) as f64 / (2.0 * imp.smear_bins.powi(2))).exp()).collect();
        let f = mag.mag.nrows() as isize;
        let src = mag.mag.clone();
        for j in 0..src.ncols() {
            for i in 0..f {
                let (mut acc, mut wsum) = (0.0, 0.0);
                for (k, &g) in kernel.iter().enumerate() {
                    let r = i + k as isize - radius;
                    if (0..f).contains(&r) {
                        acc += g * src[(r as usize, j)];
                        wsum += g;
                    }
                }
                mag.mag[(i as usize, j)] = acc / wsum;
            }
        }
    }
    let mut out = recompose_with_phase(&mag, &spec)?;
    out.samples.resize(slowed.len(), 0.0);
    let rms = (out.samples.iter().map(|v| v * v).sum::<f64>() / out.len().max(1) as f64).sqrt();
    let noise = Normal::new(0.0, rms * 10f64.powf(-imp.snr_db / 20.0)).expect("finite deviation");
    out.samples.iter_mut().for_each(|v| *v = imp.gain * (*v + noise.sample(rng)));
    Ok(out)
}

/// Speakers: `C01..` controls, then one dysarthric speaker per severity
/// class, `D01` (VL) to `D04` (H).
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<SynthCorpus, SignalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sr = cfg.sample_rate;
    let stft_params = corpus_stft(sr);
    let words = corpus_words();
    let phones = word_phones();
    let mut speakers: Vec<(String, Severity)> =
        (1..=cfg.control_speakers).map(|i| (format!("C{i:02}"), Severity::None)).collect();
    speakers.extend(Severity::GRADED.iter().enumerate().map(|(i, &s)| (format!("D{:02}", i + 1), s)));

    let mut corpus = SynthCorpus {
        words: words.clone(),
        records: Vec::new(),
        audio: HashMap::new(),
        alignments: Vec::new(),
        stft: stft_params,
    };
    for (spk, severity) in &speakers {
        let voice = Voice { pitch: rng.random_range(0.88..1.12), tempo: rng.random_range(0.92..1.08) };
        let imp = Impairment::for_severity(*severity);
        for block in [Block::B1, Block::B2, Block::B3] {
            let n_words = if imp.is_some() && block != Block::B2 { cfg.dysarthric_train_words } else { words.len() };
            for (w, word) in words.iter().enumerate().take(n_words) {
                for take in 0..cfg.takes {
                    let utt_id = format!("{spk}_{block:?}_{word}_{take}");
                    let (samples, segs) = Synth { sr: sr as f64, rng: &mut rng }.word(phones[w], voice, cfg.phone_dur);
                    let mut wave = Waveform::new(samples, sr)?;
                    let stretch = match &imp {
                        Some(imp) => {
                            let imp = Impairment { speed: imp.speed * rng.random_range(0.95..1.05), ..*imp };
                            wave = impair(&wave, &imp, &stft_params, &mut rng)?;
                            1.0 / imp.speed
                        }
                        None => 1.0,
                    };
                    corpus.alignments.extend(segs.into_iter().map(|(label, start, dur)| AlignmentSegment {
                        utt_id: utt_id.clone(),
                        label,
                        start: start * stretch,
                        dur: dur * stretch,
                    }));
                    corpus.records.push(ManifestRecord {
                        utt_id: utt_id.clone(),
                        speaker_id: spk.clone(),
                        speaker_type: if imp.is_some() { SpeakerType::Dysarthric } else { SpeakerType::Control },
                        block,
                        word_id: word.clone(),
                        transcript: vec![word.clone()],
                        severity: *severity,
                        audio_path: format!("wav/{utt_id}.wav"),
                        provenance: None,
                    });
                    corpus.audio.insert(utt_id, wave);
                }
            }
        }
    }
    Ok(corpus)
}

impl SynthCorpus {
    /// Writes `manifest.jsonl`, `alignments.ctm`, `vocab.txt` and
    /// `wav/*.wav` under `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir.join("wav"))?;
        let mut manifest = Vec::new();
        crate::align::write_manifest(&mut manifest, &self.records).map_err(std::io::Error::other)?;
        std::fs::write(dir.join("manifest.jsonl"), manifest)?;
        let ctm: String = self
            .alignments
            .iter()
            .map(|s| format!("{} 1 {:.4} {:.4} {}\n", s.utt_id, s.start, s.dur, s.label))
            .collect();
        std::fs::write(dir.join("alignments.ctm"), ctm)?;
        std::fs::write(dir.join("vocab.txt"), self.words.join("\n") + "\n")?;
        for r in &self.records {
            wav_write(&self.audio[&r.utt_id], dir.join(&r.audio_path)).map_err(std::io::Error::other)?;
        }
        Ok(())
    }
}
