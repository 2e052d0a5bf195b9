use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CliError, Result};
use crate::align::{Block, ManifestRecord, Method, Provenance, Severity, SpeakerType};

/// Factors cycled by speaker-independent replicas. The original (1.0) is not
/// re-emitted.
pub const SI_FACTORS: [f64; 2] = [0.9, 1.1];

/// Relative factors for speaker-dependent replicas, centre first, so a 1x
/// plan reproduces the plain speaker-dependent factor and a 5x plan covers
/// `{0.9, 0.95, 1.0, 1.05, 1.1}` times it.
pub const SD_JITTER: [f64; 5] = [1.0, 0.95, 1.05, 0.90, 1.10];

/// Source utterances of a directive. Augmented records are never sources.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetSelector {
    pub speaker_type: SpeakerType,
    pub blocks: BTreeSet<Block>,
}

impl SubsetSelector {
    pub fn matches(&self, r: &ManifestRecord) -> bool {
        r.provenance.is_none() && r.speaker_type == self.speaker_type && self.blocks.contains(&r.block)
    }

    fn label(&self) -> String {
        let blocks: Vec<String> = self.blocks.iter().map(|b| format!("{b:?}")).collect();
        format!("{:?}/{}", self.speaker_type, blocks.join("+"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Directive {
    pub subset: SubsetSelector,
    pub method: Method,
    pub multiplier: usize,
    /// Dysarthric speaker the data is mapped towards; required by every
    /// method except speaker-independent speed perturbation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AugPlan {
    #[serde(default)]
    pub directives: Vec<Directive>,
}

impl AugPlan {
    /// Checks multipliers, targets and duplicate directives.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, d) in self.directives.iter().enumerate() {
            let at = |msg: String| CliError::Config(format!("plan.directives[{i}]: {msg}"));
            if d.multiplier == 0 {
                return Err(at("multiplier must be a positive integer".into()));
            }
            if d.subset.blocks.is_empty() {
                return Err(at("subset.blocks is empty".into()));
            }
            match (d.method.needs_target(), &d.target) {
                (true, None) => return Err(at(format!("method {} needs a target speaker", d.method))),
                (false, Some(_)) => return Err(at(format!("method {} takes no target speaker", d.method))),
                _ => {}
            }
            if !seen.insert((d.subset.clone(), d.method, d.target.clone())) {
                return Err(at(format!("duplicate directive for {} {}", d.subset.label(), d.method)));
            }
        }
        Ok(())
    }
}

/// One augmented utterance to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub source_utt: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub replica: usize,
    pub factor: f64,
    pub seed: u64,
}

impl Job {
    pub fn audio_path(&self) -> String {
        format!("aug/{}.wav", self.job_id)
    }
}

/// Derives a job's seed from the root seed and its id, so the order in which
/// jobs run cannot change their outputs.
pub fn job_seed(root: u64, job_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(job_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Replica factor of a method.
pub fn replica_factor(method: Method, sd_factor: Option<f64>, replica: usize) -> f64 {
    match (method, sd_factor) {
        (Method::SpeedSi, _) => SI_FACTORS[replica % SI_FACTORS.len()],
        (_, Some(f)) => f * SD_JITTER[replica % SD_JITTER.len()],
        (_, None) => unreachable!("targeted methods carry a factor"),
    }
}

/// Expands a plan into one job per (source utterance, replica). `factors`
/// holds the speaker-dependent speed factor of every target speaker.
pub fn plan_expansion(
    manifest: &[ManifestRecord],
    plan: &AugPlan,
    factors: &BTreeMap<String, f64>,
    root_seed: u64,
) -> Result<Vec<Job>> {
    plan.validate()?;
    let mut jobs = Vec::new();
    for (i, d) in plan.directives.iter().enumerate() {
        let sd = match &d.target {
            Some(t) => Some(*factors.get(t).ok_or_else(|| {
                CliError::Data(format!("plan.directives[{i}]: no speed factor for target speaker {t}"))
            })?),
            None => None,
        };
        let sources: Vec<&ManifestRecord> = manifest.iter().filter(|r| d.subset.matches(r)).collect();
        if sources.is_empty() {
            return Err(CliError::Data(format!(
                "plan.directives[{i}]: subset {} selects no utterances",
                d.subset.label()
            )));
        }
        let tag = match &d.target {
            Some(t) => format!("{}_{t}", d.method),
            None => d.method.to_string(),
        };
        for r in sources {
            for replica in 0..d.multiplier {
                let job_id = format!("{}__{tag}_r{replica}", r.utt_id);
                jobs.push(Job {
                    seed: job_seed(root_seed, &job_id),
                    job_id,
                    source_utt: r.utt_id.clone(),
                    method: d.method,
                    target: d.target.clone(),
                    replica,
                    factor: replica_factor(d.method, sd, replica),
                });
            }
        }
    }
    Ok(jobs)
}

/// Manifest record of a generated job. Data mapped towards a dysarthric
/// speaker is filed under that speaker and severity; speaker-independent
/// copies keep the source speaker.
pub fn augmented_record(
    job: &Job,
    source: &ManifestRecord,
    target_severity: &HashMap<String, Severity>,
    model_id: Option<String>,
) -> Result<ManifestRecord> {
    let (speaker_id, speaker_type, severity) = match &job.target {
        Some(t) => {
            let sev = *target_severity
                .get(t)
                .ok_or_else(|| CliError::Data(format!("target speaker {t} is not a dysarthric speaker")))?;
            (t.clone(), SpeakerType::Dysarthric, sev)
        }
        None => (source.speaker_id.clone(), source.speaker_type, source.severity),
    };
    Ok(ManifestRecord {
        utt_id: job.job_id.clone(),
        speaker_id,
        speaker_type,
        block: source.block,
        word_id: source.word_id.clone(),
        transcript: source.transcript.clone(),
        severity,
        audio_path: job.audio_path(),
        provenance: Some(Provenance {
            source_utt: job.source_utt.clone(),
            method: job.method,
            factor: job.factor,
            model_id,
            replica: job.replica,
        }),
    })
}

/// Appends augmented records to the original manifest.
pub fn manifest_merge(original: &[ManifestRecord], augmented: &[ManifestRecord]) -> Result<Vec<ManifestRecord>> {
    let mut ids = HashSet::new();
    for r in original.iter().chain(augmented) {
        if !ids.insert(r.utt_id.as_str()) {
            return Err(CliError::Data(format!("duplicate utt_id {}", r.utt_id)));
        }
    }
    Ok(original.iter().chain(augmented).cloned().collect())
}
