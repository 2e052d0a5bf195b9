//! Augmentation utility on the synthetic corpus: the recogniser is trained
//! without augmentation, with speed+DCGAN data and with speed+spectral-basis
//! GAN data, and tested on the dysarthric speakers' B2 block.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{
    build_parallel_pairs, control_reference_duration, default_exclude, sd_factor, speaker_duration_stats,
    speech_durations, AlignError, AlignmentSegment, Block, ManifestRecord, PairingOptions, Severity, SpeakerType,
};
use crate::eval::{
    acoustic_features, corpus_wer, train_ctc, CtcModel, CtcTrainConfig, EvalError, FeatureConfig, TrainExample,
    UtteranceResult, Vocab, WerReport,
};
use crate::gan::{
    dcgan_train, match_length, pipeline_sbgan, pipeline_speed_gan, sbgan_train, svd_bases, GanError, GanTrainConfig,
    PipelineConfig,
};
use crate::signal::{resample_speed, stft, FeatureScale, SignalError, Waveform};
use crate::synth::{generate_corpus, CorpusConfig, SynthCorpus};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("{0}")]
    Setup(String),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// The systems compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum System {
    Baseline,
    /// Speaker-dependent speed perturbation alone.
    SpeedSd,
    SpeedGan,
    SpectralBasisGan,
}

impl System {
    pub const ALL: [System; 4] = [System::Baseline, System::SpeedSd, System::SpeedGan, System::SpectralBasisGan];

    pub fn name(self) -> &'static str {
        match self {
            System::Baseline => "baseline",
            System::SpeedSd => "S_sd",
            System::SpeedGan => "SG",
            System::SpectralBasisGan => "SBG",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityConfig {
    pub seeds: Vec<u64>,
    pub corpus: CorpusConfig,
    pub features: FeatureConfig,
    pub ctc: CtcTrainConfig,
    pub dcgan: GanTrainConfig,
    pub sbgan: GanTrainConfig,
    /// Blocks whose control utterances are converted towards each
    /// dysarthric speaker.
    pub augment_blocks: Vec<Block>,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2],
            corpus: CorpusConfig::default(),
            features: FeatureConfig::default(),
            ctc: CtcTrainConfig { epochs: 80, ..Default::default() },
            dcgan: GanTrainConfig { epochs: 15, chunk_frames: 32, l1_weight: 1.0, ..Default::default() },
            sbgan: GanTrainConfig { epochs: 20, k: 16, hidden: [128, 128], ..Default::default() },
            augment_blocks: vec![Block::B1, Block::B3],
        }
    }
}

/// Test WER of every system for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub wer: BTreeMap<String, f64>,
    pub train_utterances: BTreeMap<String, usize>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub seeds: Vec<SeedResult>,
    /// Mean test WER per system over seeds.
    pub mean_wer: BTreeMap<String, f64>,
    /// Per-severity table pooled over seeds.
    pub table_csv: String,
}

impl UtilityReport {
    pub fn mean(&self, s: System) -> f64 {
        self.mean_wer[s.name()]
    }
}

struct Prepared {
    corpus: SynthCorpus,
    vocab: Vocab,
    features: HashMap<String, DMatrix<f64>>,
    /// SD speed factor per dysarthric speaker.
    factors: BTreeMap<String, f64>,
    durations: HashMap<String, f64>,
    pipeline: PipelineConfig,
}

/// Speaker-dependent speed factor of every dysarthric speaker, relative to
/// the mean phone duration of the control speakers.
pub fn sd_factors(records: &[ManifestRecord], alignments: &[AlignmentSegment]) -> Result<BTreeMap<String, f64>> {
    let utt_speaker: HashMap<String, String> =
        records.iter().filter(|r| r.provenance.is_none()).map(|r| (r.utt_id.clone(), r.speaker_id.clone())).collect();
    let control_ids: HashSet<&str> =
        records.iter().filter(|r| r.speaker_type == SpeakerType::Control).map(|r| r.speaker_id.as_str()).collect();
    let stats = speaker_duration_stats(alignments, &utt_speaker, &default_exclude());
    let (control, dys): (Vec<_>, Vec<_>) = stats.into_iter().partition(|s| control_ids.contains(s.speaker_id.as_str()));
    let l_c = control_reference_duration(&control)?;
    dys.iter().map(|s| Ok((s.speaker_id.clone(), sd_factor(l_c, s.mean_phone_dur)?))).collect()
}

fn feature_mag(pipeline: &PipelineConfig, w: &Waveform) -> Result<DMatrix<f64>> {
    Ok(pipeline.scale.forward(&stft(w, &pipeline.stft)?.magnitude().mag))
}

fn audio_of<'a>(audio: &'a HashMap<String, Waveform>, utt: &str) -> Result<&'a Waveform> {
    audio.get(utt).ok_or_else(|| ExperimentError::Setup(format!("no audio for {utt}")))
}

/// Parallel (control, dysarthric) spectrogram pairs for the convolutional
/// GAN of `speaker`: each control utterance is resampled to its partner's
/// duration and cut or padded to the same frame count.
pub fn dcgan_pairs(
    records: &[ManifestRecord],
    audio: &HashMap<String, Waveform>,
    durations: &HashMap<String, f64>,
    speaker: &str,
    opts: &PairingOptions,
    pipeline: &PipelineConfig,
) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
    let pairs = build_parallel_pairs(records, speaker, opts, durations)?;
    let mut mats = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let control = resample_speed(audio_of(audio, &pair.control_utt)?, pair.scale_factor)?;
        let dys = feature_mag(pipeline, audio_of(audio, &pair.dysarthric_utt)?)?;
        let c = match_length(&feature_mag(pipeline, &control)?, dys.ncols());
        mats.push((c, dys));
    }
    Ok(mats)
}

/// Control and dysarthric spectral-basis blocks.
pub type BlockSets = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

/// Left singular bases of speed-perturbed control utterances and of the
/// utterances of `speaker`, both drawn from `blocks`.
pub fn sbgan_blocks(
    records: &[ManifestRecord],
    audio: &HashMap<String, Waveform>,
    speaker: &str,
    factor: f64,
    k: usize,
    blocks: &BTreeSet<Block>,
    pipeline: &PipelineConfig,
) -> Result<BlockSets> {
    let mut control = Vec::new();
    let mut dys = Vec::new();
    for r in records.iter().filter(|r| r.provenance.is_none() && blocks.contains(&r.block)) {
        if r.speaker_type == SpeakerType::Control {
            let w = resample_speed(audio_of(audio, &r.utt_id)?, factor)?;
            control.push(svd_bases(&feature_mag(pipeline, &w)?, k)?.u);
        } else if r.speaker_id == speaker {
            dys.push(svd_bases(&feature_mag(pipeline, audio_of(audio, &r.utt_id)?)?, k)?.u);
        }
    }
    Ok((control, dys))
}

fn prepare(cfg: &UtilityConfig) -> Result<Prepared> {
    let corpus = generate_corpus(&cfg.corpus)?;
    let vocab = Vocab::new(corpus.words.clone())?;
    let mut features = HashMap::new();
    for r in &corpus.records {
        let spec = stft(&corpus.audio[&r.utt_id], &corpus.stft)?.magnitude();
        features.insert(r.utt_id.clone(), acoustic_features(&spec, &cfg.features)?);
    }
    let factors = sd_factors(&corpus.records, &corpus.alignments)?;
    let durations = speech_durations(&corpus.alignments, &default_exclude());
    let pipeline = PipelineConfig { stft: corpus.stft, scale: FeatureScale::Log1p, griffin_lim_iters: None };
    Ok(Prepared { corpus, vocab, features, factors, durations, pipeline })
}

fn example(p: &Prepared, r: &ManifestRecord, features: DMatrix<f64>, severity: Severity) -> Result<TrainExample> {
    Ok(TrainExample { features, labels: p.vocab.labels(&r.transcript)?, severity })
}

fn is_train(r: &ManifestRecord) -> bool {
    r.speaker_type == SpeakerType::Control || r.block != Block::B2
}

/// Converts the augmentation-source control utterances towards `speaker`.
fn convert<F>(p: &Prepared, cfg: &UtilityConfig, speaker: &str, mut f: F) -> Result<Vec<TrainExample>>
where
    F: FnMut(&Waveform, f64) -> Result<Waveform>,
{
    let severity =
        p.corpus.records.iter().find(|r| r.speaker_id == speaker).map(|r| r.severity).unwrap_or(Severity::None);
    let factor = p.factors[speaker];
    let mut out = Vec::new();
    for r in p
        .corpus
        .records
        .iter()
        .filter(|r| r.speaker_type == SpeakerType::Control && cfg.augment_blocks.contains(&r.block))
    {
        let w = f(&p.corpus.audio[&r.utt_id], factor)?;
        let spec = stft(&w, &p.corpus.stft)?.magnitude();
        out.push(example(p, r, acoustic_features(&spec, &cfg.features)?, severity)?);
    }
    Ok(out)
}

fn train_blocks(cfg: &UtilityConfig) -> BTreeSet<Block> {
    cfg.augment_blocks.iter().copied().collect()
}

fn speed_gan_data(p: &Prepared, cfg: &UtilityConfig, seed: u64) -> Result<Vec<TrainExample>> {
    let opts = PairingOptions { blocks: train_blocks(cfg) };
    let mut out = Vec::new();
    for (i, speaker) in p.factors.keys().enumerate() {
        let mats = dcgan_pairs(&p.corpus.records, &p.corpus.audio, &p.durations, speaker, &opts, &p.pipeline)?;
        let gcfg = GanTrainConfig { seed: seed * 1000 + i as u64, ..cfg.dcgan.clone() };
        let g = dcgan_train(&mats, &gcfg)?.generator;
        out.extend(convert(p, cfg, speaker, |w, f| Ok(pipeline_speed_gan(w, f, &g, &p.pipeline)?))?);
    }
    Ok(out)
}

fn sbgan_data(p: &Prepared, cfg: &UtilityConfig, seed: u64) -> Result<Vec<TrainExample>> {
    let mut out = Vec::new();
    for (i, (speaker, &factor)) in p.factors.iter().enumerate() {
        let (control, dys) = sbgan_blocks(
            &p.corpus.records,
            &p.corpus.audio,
            speaker,
            factor,
            cfg.sbgan.k,
            &train_blocks(cfg),
            &p.pipeline,
        )?;
        let gcfg = GanTrainConfig { seed: seed * 1000 + 500 + i as u64, ..cfg.sbgan.clone() };
        let g = sbgan_train(&control, &dys, &gcfg)?.generator;
        out.extend(convert(p, cfg, speaker, |w, f| Ok(pipeline_sbgan(w, f, &g, &p.pipeline)?))?);
    }
    Ok(out)
}

fn test_results(p: &Prepared, model: &CtcModel, system: &str) -> Result<Vec<UtteranceResult>> {
    p.corpus
        .records
        .iter()
        .filter(|r| !is_train(r))
        .map(|r| {
            Ok(UtteranceResult {
                system: system.to_string(),
                utt_id: r.utt_id.clone(),
                severity: r.severity,
                reference: r.transcript.clone(),
                hypothesis: model.transcribe(&p.features[&r.utt_id])?,
            })
        })
        .collect()
}

/// Runs every seed and system. `progress` receives one line per step.
pub fn run_utility(cfg: &UtilityConfig, mut progress: impl FnMut(&str)) -> Result<UtilityReport> {
    if cfg.seeds.is_empty() {
        return Err(ExperimentError::Setup("no seeds".into()));
    }
    let t0 = Instant::now();
    let p = prepare(cfg)?;
    progress(&format!(
        "corpus: {} utterances, SD factors {:?} ({:.1?})",
        p.corpus.records.len(),
        p.factors,
        t0.elapsed()
    ));
    let base: Vec<TrainExample> = p
        .corpus
        .records
        .iter()
        .filter(|r| is_train(r))
        .map(|r| example(&p, r, p.features[&r.utt_id].clone(), r.severity))
        .collect::<Result<_>>()?;

    let mut seeds = Vec::new();
    let mut all_results = Vec::new();
    for &seed in &cfg.seeds {
        let ts = Instant::now();
        let mut wer = BTreeMap::new();
        let mut sizes = BTreeMap::new();
        for system in System::ALL {
            let t = Instant::now();
            let mut train = base.clone();
            match system {
                System::Baseline => {}
                System::SpeedSd => {
                    for speaker in p.factors.keys() {
                        train.extend(convert(&p, cfg, speaker, |w, f| Ok(resample_speed(w, f)?))?);
                    }
                }
                System::SpeedGan => train.extend(speed_gan_data(&p, cfg, seed)?),
                System::SpectralBasisGan => train.extend(sbgan_data(&p, cfg, seed)?),
            }
            let augmented_at = t.elapsed();
            let ctc_cfg = CtcTrainConfig { seed, ..cfg.ctc.clone() };
            let (model, _) = train_ctc(p.vocab.clone(), &train, &ctc_cfg)?;
            let results = test_results(&p, &model, system.name())?;
            let w = corpus_wer(results.iter().map(|r| (r.reference.as_slice(), r.hypothesis.as_slice())))?;
            progress(&format!(
                "seed {seed} {:<8} train {:4} utts  WER {w:6.2}%  (augment {:.1?}, total {:.1?})",
                system.name(),
                train.len(),
                augmented_at,
                t.elapsed()
            ));
            wer.insert(system.name().to_string(), w);
            sizes.insert(system.name().to_string(), train.len());
            all_results.extend(results);
        }
        seeds.push(SeedResult { seed, wer, train_utterances: sizes, seconds: ts.elapsed().as_secs_f64() });
    }
    let mean_wer = System::ALL
        .iter()
        .map(|s| (s.name().to_string(), seeds.iter().map(|r| r.wer[s.name()]).sum::<f64>() / seeds.len() as f64))
        .collect();
    let table_csv = WerReport::from_results(&all_results)?.to_csv();
    Ok(UtilityReport { seeds, mean_wer, table_csv })
}
