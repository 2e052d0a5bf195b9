use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::{CombineMode, LoadedConfig, RunConfig};
use super::plan::{augmented_record, job_seed, manifest_merge, plan_expansion, AugPlan, Job};
use super::{CliError, Command, Result};
use crate::align::{
    build_parallel_pairs, default_exclude, parse_ctm, read_manifest, speech_durations, write_manifest,
    AlignmentSegment, ManifestRecord, Method, PairingOptions, Severity, SpeakerType, UtterancePair,
};
use crate::autograd::gradcheck_suite;
use crate::eval::{
    acoustic_features, nbest_interpolate, read_nbest, read_results, train_ctc, two_pass_rescore, write_nbest,
    write_results, CtcTrainConfig, EvalError, NBestEntry, NBestList, ScoreOptions, TrainExample, UtteranceResult,
    Vocab, WerReport,
};
use crate::experiment::{dcgan_pairs, sbgan_blocks, sd_factors};
use crate::gan::{
    dcgan_train, pipeline_sbgan, pipeline_speed_gan, sbgan_train, DcganGenerator, GanTrainConfig, PipelineConfig,
    SbganGenerator,
};
use crate::signal::{read_wav, resample_speed, stft, wav_write, StftParams, Waveform};
use crate::synth::{corpus_stft, generate_corpus};

const META_FILE: &str = "run.json";

/// Record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub counts: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
}

impl RunMeta {
    pub fn summary(&self) -> String {
        let mut parts: Vec<String> = self.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        parts.extend(self.metrics.iter().map(|(k, v)| format!("{k}={v:.4}")));
        parts.join(", ")
    }
}

struct Ctx<'a> {
    loaded: &'a LoadedConfig,
    cfg: &'a RunConfig,
    out: &'a Path,
    meta: RunMeta,
}

impl Ctx<'_> {
    fn count(&mut self, key: &str, n: usize) {
        self.meta.counts.insert(key.to_string(), n);
    }
}

/// Refuses a non-empty output directory unless forced. A forced run clears
/// a directory that holds an earlier run's record, so no stale outputs
/// survive.
fn prepare_out(out: &Path, force: bool) -> Result<()> {
    let non_empty = out.is_dir() && std::fs::read_dir(out)?.next().is_some();
    if non_empty {
        if !force {
            return Err(CliError::Config(format!(
                "output directory {} is not empty; pass --force to overwrite",
                out.display()
            )));
        }
        if out.join(META_FILE).is_file() {
            std::fs::remove_dir_all(out)?;
        }
    }
    std::fs::create_dir_all(out)?;
    Ok(())
}

pub(super) fn run(command: Command, loaded: &LoadedConfig, out: &Path, force: bool) -> Result<RunMeta> {
    let cfg = &loaded.config;
    cfg.dcgan.validate()?;
    cfg.sbgan.validate()?;
    cfg.plan.validate()?;
    prepare_out(out, force)?;
    let meta = RunMeta {
        command: command.name().to_string(),
        seed: cfg.seed,
        config_sha256: loaded.hash.clone(),
        counts: BTreeMap::new(),
        metrics: BTreeMap::new(),
    };
    let mut ctx = Ctx { loaded, cfg, out, meta };
    match command {
        Command::Synth => synth(&mut ctx)?,
        Command::Perturb => perturb(&mut ctx)?,
        Command::Pair => pair(&mut ctx)?,
        Command::TrainDcgan => train_dcgan(&mut ctx)?,
        Command::TrainSbgan => train_sbgan(&mut ctx)?,
        Command::Augment => augment(&mut ctx, &cfg.plan)?,
        Command::Eval => eval(&mut ctx)?,
        Command::Combine => combine(&mut ctx)?,
        Command::Gradcheck => gradcheck(&mut ctx)?,
        Command::Report => report(&mut ctx)?,
    }
    let text = serde_json::to_string_pretty(&ctx.meta).expect("run record serializes");
    std::fs::write(out.join(META_FILE), text + "\n")?;
    Ok(ctx.meta)
}

/// Original recordings, their audio and alignments.
struct Corpus {
    records: Vec<ManifestRecord>,
    audio_root: PathBuf,
    audio: HashMap<String, Waveform>,
    stft: StftParams,
}

impl Corpus {
    fn audio_path(&self, r: &ManifestRecord) -> PathBuf {
        let p = Path::new(&r.audio_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.audio_root.join(p)
        }
    }

    fn pipeline(&self, cfg: &RunConfig) -> PipelineConfig {
        PipelineConfig { stft: self.stft, scale: cfg.scale, griffin_lim_iters: cfg.griffin_lim_iters }
    }

    fn wave(&self, utt: &str) -> Result<&Waveform> {
        self.audio.get(utt).ok_or_else(|| CliError::Data(format!("no audio loaded for {utt}")))
    }

    fn severities(&self) -> HashMap<String, Severity> {
        self.records
            .iter()
            .filter(|r| r.speaker_type == SpeakerType::Dysarthric)
            .map(|r| (r.speaker_id.clone(), r.severity))
            .collect()
    }
}

/// Loads the manifest and the audio of every record that passes `keep`.
fn load_corpus(ctx: &Ctx, keep: impl Fn(&ManifestRecord) -> bool) -> Result<Corpus> {
    let path = ctx.loaded.input("manifest", &ctx.cfg.paths.manifest)?;
    let records = read_manifest(BufReader::new(File::open(&path)?))?;
    if records.is_empty() {
        return Err(CliError::Data(format!("manifest {} has no records", path.display())));
    }
    let audio_root = match &ctx.cfg.paths.audio_root {
        Some(_) => ctx.loaded.input("audio_root", &ctx.cfg.paths.audio_root)?,
        None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let audio_root =
        std::fs::canonicalize(if audio_root.as_os_str().is_empty() { Path::new(".") } else { &audio_root })?;
    let mut corpus = Corpus { records, audio_root, audio: HashMap::new(), stft: StftParams::default() };
    let mut rate = None;
    for r in corpus.records.iter().filter(|r| keep(r)) {
        let p = corpus.audio_path(r);
        let w = read_wav(&p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        if *rate.get_or_insert(w.sample_rate) != w.sample_rate {
            return Err(CliError::Data(format!(
                "{}: sample rate {} differs from the corpus",
                p.display(),
                w.sample_rate
            )));
        }
        corpus.audio.insert(r.utt_id.clone(), w);
    }
    corpus.stft = match ctx.cfg.stft {
        Some(p) => {
            p.validate()?;
            p
        }
        None => corpus_stft(rate.unwrap_or(16_000)),
    };
    Ok(corpus)
}

fn originals(r: &ManifestRecord) -> bool {
    r.provenance.is_none()
}

fn load_alignments(ctx: &Ctx) -> Result<Vec<AlignmentSegment>> {
    let path = ctx.loaded.input("ctm", &ctx.cfg.paths.ctm)?;
    Ok(parse_ctm(&std::fs::read_to_string(path)?)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Target speakers: the configured list, or every dysarthric speaker with a
/// speed factor.
fn targets(cfg: &RunConfig, factors: &BTreeMap<String, f64>) -> Result<Vec<String>> {
    if cfg.targets.is_empty() {
        return Ok(factors.keys().cloned().collect());
    }
    for t in &cfg.targets {
        if !factors.contains_key(t) {
            return Err(CliError::Data(format!("target speaker {t} has no aligned dysarthric speech")));
        }
    }
    Ok(cfg.targets.clone())
}

fn synth(ctx: &mut Ctx) -> Result<()> {
    let corpus = generate_corpus(&ctx.cfg.corpus)?;
    corpus.write(ctx.out)?;
    ctx.count("utterances", corpus.records.len());
    ctx.count("words", corpus.words.len());
    ctx.count("segments", corpus.alignments.len());
    Ok(())
}

fn perturb(ctx: &mut Ctx) -> Result<()> {
    let speed_only = AugPlan {
        directives: ctx
            .cfg
            .plan
            .directives
            .iter()
            .filter(|d| matches!(d.method, Method::SpeedSi | Method::SpeedSd))
            .cloned()
            .collect(),
    };
    ctx.count("skipped_directives", ctx.cfg.plan.directives.len() - speed_only.directives.len());
    augment(ctx, &speed_only)
}

#[derive(Serialize)]
struct TargetPair<'a> {
    target: &'a str,
    #[serde(flatten)]
    pair: &'a UtterancePair,
}

fn pair(ctx: &mut Ctx) -> Result<()> {
    let path = ctx.loaded.input("manifest", &ctx.cfg.paths.manifest)?;
    let records = read_manifest(BufReader::new(File::open(&path)?))?;
    let alignments = load_alignments(ctx)?;
    let factors = sd_factors(&records, &alignments)?;
    let durations = speech_durations(&alignments, &default_exclude());
    let opts = PairingOptions { blocks: ctx.cfg.train_blocks.clone() };
    let mut w = BufWriter::new(File::create(ctx.out.join("pairs.jsonl"))?);
    let mut total = 0;
    let speakers = targets(ctx.cfg, &factors)?;
    for t in &speakers {
        let pairs = build_parallel_pairs(&records, t, &opts, &durations)?;
        for p in &pairs {
            serde_json::to_writer(&mut w, &TargetPair { target: t, pair: p })
                .map_err(|e| CliError::Data(e.to_string()))?;
            writeln!(w)?;
        }
        ctx.count(&format!("pairs_{t}"), pairs.len());
        total += pairs.len();
    }
    w.flush()?;
    write_json(&ctx.out.join("factors.json"), &factors)?;
    ctx.count("pairs", total);
    ctx.count("targets", speakers.len());
    Ok(())
}

fn gan_config(base: &GanTrainConfig, root: u64, id: &str) -> GanTrainConfig {
    GanTrainConfig { seed: job_seed(root, id), ..base.clone() }
}

fn checkpoint_header(ctx: &Ctx, target: &str, factor: f64) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("target".to_string(), target.to_string()),
        ("sd_factor".to_string(), format!("{factor:.17e}")),
        ("config_sha256".to_string(), ctx.loaded.hash.clone()),
    ])
}

fn train_dcgan(ctx: &mut Ctx) -> Result<()> {
    let alignments = load_alignments(ctx)?;
    let corpus = load_corpus(ctx, originals)?;
    let factors = sd_factors(&corpus.records, &alignments)?;
    let durations = speech_durations(&alignments, &default_exclude());
    let opts = PairingOptions { blocks: ctx.cfg.train_blocks.clone() };
    let pipeline = corpus.pipeline(ctx.cfg);
    let speakers = targets(ctx.cfg, &factors)?;
    for t in &speakers {
        let mats = dcgan_pairs(&corpus.records, &corpus.audio, &durations, t, &opts, &pipeline)?;
        let model = dcgan_train(&mats, &gan_config(&ctx.cfg.dcgan, ctx.cfg.seed, &format!("dcgan/{t}")))?;
        model.generator.save(&ctx.out.join(format!("dcgan_{t}.ckpt")), &checkpoint_header(ctx, t, factors[t]))?;
        model.history.write_csv(&ctx.out.join(format!("dcgan_{t}_history.csv")))?;
        ctx.count(&format!("pairs_{t}"), mats.len());
    }
    ctx.count("models", speakers.len());
    Ok(())
}

fn train_sbgan(ctx: &mut Ctx) -> Result<()> {
    let alignments = load_alignments(ctx)?;
    let corpus = load_corpus(ctx, originals)?;
    let factors = sd_factors(&corpus.records, &alignments)?;
    let pipeline = corpus.pipeline(ctx.cfg);
    let speakers = targets(ctx.cfg, &factors)?;
    for t in &speakers {
        let (control, dys) = sbgan_blocks(
            &corpus.records,
            &corpus.audio,
            t,
            factors[t],
            ctx.cfg.sbgan.k,
            &ctx.cfg.train_blocks,
            &pipeline,
        )?;
        let model = sbgan_train(&control, &dys, &gan_config(&ctx.cfg.sbgan, ctx.cfg.seed, &format!("sbgan/{t}")))?;
        model.generator.save(&ctx.out.join(format!("sbgan_{t}.ckpt")), &checkpoint_header(ctx, t, factors[t]))?;
        model.history.write_csv(&ctx.out.join(format!("sbgan_{t}_history.csv")))?;
        ctx.count(&format!("control_blocks_{t}"), control.len());
        ctx.count(&format!("dysarthric_blocks_{t}"), dys.len());
    }
    ctx.count("models", speakers.len());
    Ok(())
}

/// Trained generators, loaded on first use.
#[derive(Default)]
struct Models {
    dcgan: BTreeMap<String, DcganGenerator>,
    sbgan: BTreeMap<String, SbganGenerator>,
}

impl Models {
    fn load(ctx: &Ctx, jobs: &[Job]) -> Result<Self> {
        let mut m = Models::default();
        for j in jobs {
            let (Some(t), prefix) = (&j.target, model_prefix(j.method)) else { continue };
            let Some(prefix) = prefix else { continue };
            if m.dcgan.contains_key(t) && prefix == "dcgan" || m.sbgan.contains_key(t) && prefix == "sbgan" {
                continue;
            }
            let dir = if prefix == "dcgan" {
                ctx.loaded.input("dcgan_models", &ctx.cfg.paths.dcgan_models)?
            } else {
                ctx.loaded.input("sbgan_models", &ctx.cfg.paths.sbgan_models)?
            };
            let path = dir.join(format!("{prefix}_{t}.ckpt"));
            if !path.is_file() {
                return Err(CliError::Data(format!("missing checkpoint {}", path.display())));
            }
            if prefix == "dcgan" {
                m.dcgan.insert(t.clone(), DcganGenerator::load(&path)?);
            } else {
                m.sbgan.insert(t.clone(), SbganGenerator::load(&path)?);
            }
        }
        Ok(m)
    }
}

fn model_prefix(method: Method) -> Option<&'static str> {
    match method {
        Method::SpeedGan => Some("dcgan"),
        Method::SpectralBasisGan => Some("sbgan"),
        _ => None,
    }
}

fn model_id(job: &Job) -> Option<String> {
    Some(format!("{}_{}", model_prefix(job.method)?, job.target.as_ref()?))
}

fn generate(job: &Job, source: &Waveform, models: &Models, pipeline: &PipelineConfig) -> Result<Waveform> {
    let target = || job.target.as_deref().unwrap_or_default();
    Ok(match job.method {
        Method::SpeedSi | Method::SpeedSd => resample_speed(source, job.factor)?,
        Method::SpeedGan => pipeline_speed_gan(source, job.factor, &models.dcgan[target()], pipeline)?,
        Method::SpectralBasisGan => pipeline_sbgan(source, job.factor, &models.sbgan[target()], pipeline)?,
    })
}

/// Runs `jobs` on all cores. Each job writes only its own file and carries
/// no shared state, so the outputs do not depend on scheduling.
fn run_jobs(jobs: &[Job], corpus: &Corpus, models: &Models, pipeline: &PipelineConfig, out: &Path) -> Result<()> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    let chunk = jobs.len().div_ceil(threads).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || -> Result<()> {
                    for job in part {
                        let w = generate(job, corpus.wave(&job.source_utt)?, models, pipeline)?;
                        wav_write(&w, out.join(job.audio_path()))?;
                    }
                    Ok(())
                })
            })
            .collect();
        handles.into_iter().try_for_each(|h| h.join().expect("augmentation worker panicked"))
    })
}

fn augment(ctx: &mut Ctx, plan: &AugPlan) -> Result<()> {
    let corpus = load_corpus(ctx, originals)?;
    // Speed factors come from the alignments and only targeted methods use them.
    let factors = if plan.directives.iter().any(|d| d.target.is_some()) {
        let f = sd_factors(&corpus.records, &load_alignments(ctx)?)?;
        write_json(&ctx.out.join("factors.json"), &f)?;
        f
    } else {
        BTreeMap::new()
    };
    let jobs = plan_expansion(&corpus.records, plan, &factors, ctx.cfg.seed)?;
    let models = Models::load(ctx, &jobs)?;
    std::fs::create_dir_all(ctx.out.join("aug"))?;
    run_jobs(&jobs, &corpus, &models, &corpus.pipeline(ctx.cfg), ctx.out)?;

    let by_id: HashMap<&str, &ManifestRecord> = corpus.records.iter().map(|r| (r.utt_id.as_str(), r)).collect();
    let severities = corpus.severities();
    let augmented = jobs
        .iter()
        .map(|j| augmented_record(j, by_id[j.source_utt.as_str()], &severities, model_id(j)))
        .collect::<Result<Vec<_>>>()?;
    let originals: Vec<ManifestRecord> = corpus
        .records
        .iter()
        .map(|r| ManifestRecord { audio_path: corpus.audio_path(r).to_string_lossy().into_owned(), ..r.clone() })
        .collect();
    let merged = manifest_merge(&originals, &augmented)?;
    write_manifest(BufWriter::new(File::create(ctx.out.join("manifest.jsonl"))?), &merged)?;
    let mut w = BufWriter::new(File::create(ctx.out.join("jobs.jsonl"))?);
    for j in &jobs {
        serde_json::to_writer(&mut w, j).map_err(|e| CliError::Data(e.to_string()))?;
        writeln!(w)?;
    }
    w.flush()?;
    ctx.count("jobs", jobs.len());
    ctx.count("original_utterances", originals.len());
    ctx.count("manifest_utterances", merged.len());
    Ok(())
}

fn vocabulary(records: &[ManifestRecord]) -> Result<Vocab> {
    let mut words: Vec<String> = records.iter().flat_map(|r| r.transcript.iter().cloned()).collect();
    words.sort();
    words.dedup();
    Ok(Vocab::new(words)?)
}

fn eval(ctx: &mut Ctx) -> Result<()> {
    let corpus = load_corpus(ctx, |_| true)?;
    let ecfg = &ctx.cfg.eval;
    let vocab = vocabulary(&corpus.records)?;
    let is_test = |r: &ManifestRecord| {
        r.provenance.is_none() && r.speaker_type == SpeakerType::Dysarthric && r.block == ecfg.test_block
    };
    let features = |r: &ManifestRecord| -> Result<DMatrix<f64>> {
        let spec = stft(corpus.wave(&r.utt_id)?, &corpus.stft)?.magnitude();
        Ok(acoustic_features(&spec, &ctx.cfg.features)?)
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for r in &corpus.records {
        if is_test(r) {
            test.push((r, features(r)?));
        } else {
            train.push(TrainExample {
                features: features(r)?,
                labels: vocab.labels(&r.transcript)?,
                severity: r.severity,
            });
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(CliError::Data(format!("{} training and {} test utterances", train.len(), test.len())));
    }
    let ctc_cfg = CtcTrainConfig { seed: ctx.cfg.seed, ..ctx.cfg.ctc.clone() };
    let (model, history) = train_ctc(vocab, &train, &ctc_cfg)?;
    let header = BTreeMap::from([("system".to_string(), ecfg.system.clone())]);
    model.save(&ctx.out.join("model.ckpt"), &header)?;

    let opts = ScoreOptions { full_sum: ecfg.full_sum, per_frame: false };
    let n = if ecfg.nbest == 0 { model.vocab().len() + 1 } else { ecfg.nbest };
    let mut results = Vec::new();
    let mut lists = Vec::new();
    for (r, f) in &test {
        results.push(UtteranceResult {
            system: ecfg.system.clone(),
            utt_id: r.utt_id.clone(),
            severity: r.severity,
            reference: r.transcript.clone(),
            hypothesis: model.transcribe(f)?,
        });
        let entries = model
            .nbest_words(f, n, opts)?
            .into_iter()
            .map(|(words, s)| NBestEntry { words, scores: BTreeMap::from([(ecfg.system.clone(), s)]) })
            .collect();
        lists.push(NBestList { utt_id: r.utt_id.clone(), entries });
    }
    finish_results(ctx, &results)?;
    write_nbest(BufWriter::new(File::create(ctx.out.join("nbest.jsonl"))?), &lists)?;
    ctx.count("train_utterances", train.len());
    ctx.count("test_utterances", test.len());
    if let Some(last) = history.last() {
        ctx.meta.metrics.insert("final_ctc_loss".into(), last.ctc);
    }
    Ok(())
}

/// Writes results and their WER table and records the pooled WER.
fn finish_results(ctx: &mut Ctx, results: &[UtteranceResult]) -> Result<()> {
    write_results(BufWriter::new(File::create(ctx.out.join("results.jsonl"))?), results)?;
    let report = WerReport::from_results(results)?;
    std::fs::write(ctx.out.join("report.csv"), report.to_csv())?;
    for row in &report.rows {
        if let Some(all) = row.all {
            ctx.meta.metrics.insert(format!("wer_{}", row.system), all);
        }
    }
    Ok(())
}

/// Merges N-best lists of the same utterances from several files: entries
/// with equal words pool their scores.
fn merge_nbest(files: &[PathBuf]) -> Result<Vec<NBestList>> {
    let mut order: Vec<String> = Vec::new();
    let mut merged: HashMap<String, NBestList> = HashMap::new();
    for f in files {
        for list in read_nbest(BufReader::new(File::open(f)?))? {
            let slot = merged.entry(list.utt_id.clone()).or_insert_with(|| {
                order.push(list.utt_id.clone());
                NBestList { utt_id: list.utt_id.clone(), entries: Vec::new() }
            });
            for e in list.entries {
                match slot.entries.iter_mut().find(|x| x.words == e.words) {
                    Some(x) => x.scores.extend(e.scores),
                    None => slot.entries.push(e),
                }
            }
        }
    }
    Ok(order.into_iter().map(|u| merged.remove(&u).expect("listed")).collect())
}

fn combine(ctx: &mut Ctx) -> Result<()> {
    let c = &ctx.cfg.combine;
    if ctx.cfg.paths.nbest.is_empty() {
        return Err(CliError::Config("paths.nbest lists no N-best files".into()));
    }
    let files =
        ctx.cfg.paths.nbest.iter().map(|p| ctx.loaded.input("nbest", &Some(p.clone()))).collect::<Result<Vec<_>>>()?;
    let lists = merge_nbest(&files)?;
    let path = ctx.loaded.input("manifest", &ctx.cfg.paths.manifest)?;
    let records = read_manifest(BufReader::new(File::open(&path)?))?;
    let by_id: HashMap<&str, &ManifestRecord> = records.iter().map(|r| (r.utt_id.as_str(), r)).collect();

    let (name, chosen, out_lists) = match c.mode {
        CombineMode::Interpolate => {
            if c.weights.is_empty() {
                return Err(CliError::Config("combine.weights is empty".into()));
            }
            let name = c.name.clone().unwrap_or_else(|| c.weights.keys().cloned().collect::<Vec<_>>().join("+"));
            let chosen = lists
                .iter()
                .map(|l| nbest_interpolate(l, &c.weights).map(|ch| ch.words))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            (name, chosen, lists.clone())
        }
        CombineMode::Rescore => {
            let need = |v: &Option<String>, key: &str| {
                v.clone().ok_or_else(|| CliError::Config(format!("combine.{key} is required for rescoring")))
            };
            let (x, y) = (need(&c.system_x, "system_x")?, need(&c.system_y, "system_y")?);
            let index: HashMap<(&str, &[String]), f64> = lists
                .iter()
                .flat_map(|l| {
                    l.entries.iter().filter_map(|e| Some(((l.utt_id.as_str(), e.words.as_slice()), *e.scores.get(&y)?)))
                })
                .collect();
            let scorer = |utt: &str, words: &[String]| {
                index.get(&(utt, words)).copied().ok_or_else(|| EvalError::Unscorable(format!("no {y} score")))
            };
            let mut rescored = Vec::with_capacity(lists.len());
            for l in &lists {
                let only_x = NBestList {
                    utt_id: l.utt_id.clone(),
                    entries: l.entries.iter().filter(|e| e.scores.contains_key(&x)).cloned().collect(),
                };
                rescored.push(two_pass_rescore(&only_x, &x, &scorer, &y, c.w)?);
            }
            let chosen = rescored.iter().map(|l| l.entries[0].words.clone()).collect();
            (c.name.clone().unwrap_or_else(|| crate::eval::rescore_key(&x, &y)), chosen, rescored)
        }
    };
    let mut results = Vec::with_capacity(lists.len());
    for (l, hyp) in lists.iter().zip(chosen) {
        let r = by_id
            .get(l.utt_id.as_str())
            .ok_or_else(|| CliError::Data(format!("N-best utterance {} is not in the manifest", l.utt_id)))?;
        results.push(UtteranceResult {
            system: name.clone(),
            utt_id: l.utt_id.clone(),
            severity: r.severity,
            reference: r.transcript.clone(),
            hypothesis: hyp,
        });
    }
    finish_results(ctx, &results)?;
    write_nbest(BufWriter::new(File::create(ctx.out.join("nbest.jsonl"))?), &out_lists)?;
    ctx.count("utterances", results.len());
    ctx.count("input_files", files.len());
    Ok(())
}

#[derive(Serialize)]
struct OpRecord<'a> {
    name: &'a str,
    max_rel_error: f64,
    probes: usize,
    passed: bool,
}

fn gradcheck(ctx: &mut Ctx) -> Result<()> {
    let checks = gradcheck_suite(ctx.cfg.seed)?;
    let records: Vec<OpRecord> = checks
        .iter()
        .map(|c| OpRecord { name: &c.name, max_rel_error: c.max_rel_error, probes: c.probes, passed: c.passed })
        .collect();
    write_json(&ctx.out.join("gradcheck.json"), &records)?;
    for c in &checks {
        println!(
            "{:<20} {:>10.3e} {:>4} probes  {}",
            c.name,
            c.max_rel_error,
            c.probes,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    ctx.count("ops", checks.len());
    ctx.count("failed", failed.len());
    ctx.meta.metrics.insert("max_rel_error".into(), checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max));
    if !failed.is_empty() {
        let text = serde_json::to_string_pretty(&ctx.meta).expect("run record serializes");
        std::fs::write(ctx.out.join(META_FILE), text + "\n")?;
        return Err(CliError::Numerical(format!("gradient check failed for {}", failed.join(", "))));
    }
    Ok(())
}

fn report(ctx: &mut Ctx) -> Result<()> {
    if ctx.cfg.paths.results.is_empty() {
        return Err(CliError::Config("paths.results lists no result files".into()));
    }
    let mut results = Vec::new();
    for p in &ctx.cfg.paths.results {
        let path = ctx.loaded.input("results", &Some(p.clone()))?;
        results.extend(read_results(BufReader::new(File::open(path)?))?);
    }
    let report = WerReport::from_results(&results)?;
    std::fs::write(ctx.out.join("report.csv"), report.to_csv())?;
    std::fs::write(ctx.out.join("report.txt"), report.to_text())?;
    print!("{}", report.to_text());
    ctx.count("utterances", results.len());
    ctx.count("systems", report.rows.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_empty_out_needs_force() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x"), "1").unwrap();
        assert!(matches!(prepare_out(dir.path(), false), Err(CliError::Config(_))));
        prepare_out(dir.path(), true).unwrap();
        assert!(dir.path().join("x").exists(), "foreign files are kept");
        std::fs::write(dir.path().join(META_FILE), "{}").unwrap();
        prepare_out(dir.path(), true).unwrap();
        assert!(!dir.path().join("x").exists(), "an earlier run is cleared");
    }
}
