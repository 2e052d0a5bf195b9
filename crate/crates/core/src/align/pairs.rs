use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{pair_scale_factor, AlignError, Block, ManifestRecord, Result, SpeakerType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtterancePair {
    pub control_utt: String,
    pub dysarthric_utt: String,
    pub word_id: String,
    /// Control duration over dysarthric duration.
    pub scale_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingOptions {
    /// Blocks eligible for training pairs.
    pub blocks: BTreeSet<Block>,
}

impl Default for PairingOptions {
    fn default() -> Self {
        Self { blocks: [Block::B1, Block::B3].into_iter().collect() }
    }
}

/// Forms every (control, dysarthric) utterance pair of `target_speaker` that
/// shares a word id within the training blocks. Pairs are ordered by the
/// dysarthric utterance, then the control utterance, in manifest order.
/// `durations` supplies the silence-stripped length of each utterance.
pub fn build_parallel_pairs(
    manifest: &[ManifestRecord],
    target_speaker: &str,
    opts: &PairingOptions,
    durations: &HashMap<String, f64>,
) -> Result<Vec<UtterancePair>> {
    let eligible = |r: &&ManifestRecord| opts.blocks.contains(&r.block) && r.provenance.is_none();
    let mut controls: HashMap<&str, Vec<&ManifestRecord>> = HashMap::new();
    for r in manifest.iter().filter(eligible).filter(|r| r.speaker_type == SpeakerType::Control) {
        controls.entry(r.word_id.as_str()).or_default().push(r);
    }
    let duration = |utt: &str| durations.get(utt).copied().ok_or_else(|| AlignError::MissingDuration(utt.into()));

    let mut pairs = Vec::new();
    for d in manifest
        .iter()
        .filter(eligible)
        .filter(|r| r.speaker_id == target_speaker && r.speaker_type == SpeakerType::Dysarthric)
    {
        let Some(cs) = controls.get(d.word_id.as_str()) else { continue };
        let dys_dur = duration(&d.utt_id)?;
        for c in cs {
            pairs.push(UtterancePair {
                control_utt: c.utt_id.clone(),
                dysarthric_utt: d.utt_id.clone(),
                word_id: d.word_id.clone(),
                scale_factor: pair_scale_factor(duration(&c.utt_id)?, dys_dur)?,
            });
        }
    }
    if pairs.is_empty() {
        return Err(AlignError::NoOverlap(target_speaker.to_string()));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::Severity;

    fn rec(utt: &str, spk: &str, ty: SpeakerType, block: Block, word: &str) -> ManifestRecord {
        ManifestRecord {
            utt_id: utt.into(),
            speaker_id: spk.into(),
            speaker_type: ty,
            block,
            word_id: word.into(),
            transcript: vec![word.into()],
            severity: if ty == SpeakerType::Control { Severity::None } else { Severity::M },
            audio_path: format!("{utt}.wav"),
            provenance: None,
        }
    }

    fn durs(m: &[ManifestRecord], d: f64) -> HashMap<String, f64> {
        m.iter().map(|r| (r.utt_id.clone(), d)).collect()
    }

    #[test]
    fn one_to_one() {
        let m = vec![
            rec("c1", "C1", SpeakerType::Control, Block::B1, "cat"),
            rec("d1", "D1", SpeakerType::Dysarthric, Block::B1, "cat"),
        ];
        let mut d = durs(&m, 1.0);
        d.insert("d1".into(), 2.0);
        let p = build_parallel_pairs(&m, "D1", &PairingOptions::default(), &d).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].scale_factor, 0.5);
    }

    #[test]
    fn disjoint_words_error() {
        let m = vec![
            rec("c1", "C1", SpeakerType::Control, Block::B1, "cat"),
            rec("d1", "D1", SpeakerType::Dysarthric, Block::B1, "dog"),
        ];
        assert!(matches!(
            build_parallel_pairs(&m, "D1", &PairingOptions::default(), &durs(&m, 1.0)),
            Err(AlignError::NoOverlap(_))
        ));
    }

    #[test]
    fn cross_product_and_block_filter() {
        let mut m = Vec::new();
        for i in 0..3 {
            m.push(rec(&format!("c{i}"), &format!("C{i}"), SpeakerType::Control, Block::B1, "go"));
        }
        for i in 0..2 {
            m.push(rec(&format!("d{i}"), "D1", SpeakerType::Dysarthric, Block::B3, "go"));
        }
        // Test block and other speakers never pair.
        m.push(rec("d9", "D1", SpeakerType::Dysarthric, Block::B2, "go"));
        m.push(rec("x0", "D2", SpeakerType::Dysarthric, Block::B1, "go"));
        let p = build_parallel_pairs(&m, "D1", &PairingOptions::default(), &durs(&m, 1.0)).unwrap();
        assert_eq!(p.len(), 6);
        assert!(p.iter().all(|p| p.dysarthric_utt != "d9"));
    }

    #[test]
    fn missing_duration_is_an_error() {
        let m = vec![
            rec("c1", "C1", SpeakerType::Control, Block::B1, "cat"),
            rec("d1", "D1", SpeakerType::Dysarthric, Block::B1, "cat"),
        ];
        let mut d = durs(&m, 1.0);
        d.remove("c1");
        assert!(matches!(
            build_parallel_pairs(&m, "D1", &PairingOptions::default(), &d),
            Err(AlignError::MissingDuration(_))
        ));
    }
}
