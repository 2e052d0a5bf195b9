use std::collections::{BTreeMap, HashMap, HashSet};

use super::{AlignError, AlignmentSegment, Result};

pub const DEFAULT_SILENCE_LABELS: [&str; 3] = ["SIL", "SP", "NSN"];

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerDurationStats {
    pub speaker_id: String,
    /// Seconds.
    pub mean_phone_dur: f64,
    pub phone_count: usize,
}

fn excluded<'a>(labels: &'a HashSet<String>) -> impl Fn(&AlignmentSegment) -> bool + 'a {
    move |s| !labels.contains(&s.label)
}

pub fn default_exclude() -> HashSet<String> {
    DEFAULT_SILENCE_LABELS.iter().map(|s| s.to_string()).collect()
}

/// Mean duration of the segments whose label is not in `exclude_labels`.
pub fn mean_phone_duration<'a, I>(segments: I, exclude_labels: &HashSet<String>) -> Result<f64>
where
    I: IntoIterator<Item = &'a AlignmentSegment>,
{
    let (sum, n) = segments
        .into_iter()
        .filter(|s| excluded(exclude_labels)(s))
        .fold((0.0, 0usize), |(sum, n), s| (sum + s.dur, n + 1));
    if n == 0 {
        return Err(AlignError::NoSegments);
    }
    Ok(sum / n as f64)
}

/// Per-speaker mean phone duration, ordered by speaker id. Segments whose
/// utterance has no speaker in `utt_speaker` are ignored.
pub fn speaker_duration_stats(
    segments: &[AlignmentSegment],
    utt_speaker: &HashMap<String, String>,
    exclude_labels: &HashSet<String>,
) -> Vec<SpeakerDurationStats> {
    let mut by_speaker: BTreeMap<&str, Vec<&AlignmentSegment>> = BTreeMap::new();
    for s in segments.iter().filter(|s| excluded(exclude_labels)(s)) {
        if let Some(spk) = utt_speaker.get(&s.utt_id) {
            by_speaker.entry(spk).or_default().push(s);
        }
    }
    by_speaker
        .into_iter()
        .map(|(spk, segs)| SpeakerDurationStats {
            speaker_id: spk.to_string(),
            mean_phone_dur: segs.iter().map(|s| s.dur).sum::<f64>() / segs.len() as f64,
            phone_count: segs.len(),
        })
        .collect()
}

/// Reference duration over control speakers: the unweighted mean of their
/// per-speaker means.
pub fn control_reference_duration(control_stats: &[SpeakerDurationStats]) -> Result<f64> {
    let means: Vec<f64> = control_stats.iter().filter(|s| s.phone_count > 0).map(|s| s.mean_phone_dur).collect();
    if means.is_empty() {
        return Err(AlignError::NoSegments);
    }
    Ok(means.iter().sum::<f64>() / means.len() as f64)
}

/// Speaker-dependent speed factor `l_control / l_dys`. Resampling control
/// speech by this factor stretches its phones to the dysarthric speaker's
/// mean duration.
pub fn sd_factor(l_control_mean: f64, l_dys: f64) -> Result<f64> {
    positive_ratio(l_control_mean, l_dys)
}

/// Per-pair duration ratio `control / dys`, so that resampling the control
/// utterance by it yields the dysarthric utterance's duration.
pub fn pair_scale_factor(control_dur: f64, dys_dur: f64) -> Result<f64> {
    positive_ratio(control_dur, dys_dur)
}

fn positive_ratio(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(AlignError::NonPositive(a, b));
    }
    Ok(a / b)
}

/// Total non-silence duration per utterance.
pub fn speech_durations(segments: &[AlignmentSegment], exclude_labels: &HashSet<String>) -> HashMap<String, f64> {
    let mut out: HashMap<String, f64> = HashMap::new();
    for s in segments.iter().filter(|s| excluded(exclude_labels)(s)) {
        *out.entry(s.utt_id.clone()).or_default() += s.dur;
    }
    out
}
