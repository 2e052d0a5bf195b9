//! Generates the synthetic corpus and prints utterance counts and mean
//! speech duration per speaker.

use std::collections::BTreeMap;

use dysaug::align::{default_exclude, speech_durations};
use dysaug::synth::{generate_corpus, CorpusConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(&CorpusConfig::default())?;
    let durations = speech_durations(&corpus.alignments, &default_exclude());
    let mut by_speaker: BTreeMap<&str, (usize, f64, String)> = BTreeMap::new();
    for r in &corpus.records {
        let e = by_speaker.entry(&r.speaker_id).or_insert((0, 0.0, r.severity.to_string()));
        e.0 += 1;
        e.1 += durations[&r.utt_id];
    }
    println!(
        "{} words, {} utterances, window {} samples",
        corpus.words.len(),
        corpus.records.len(),
        corpus.stft.window_len
    );
    for (spk, (n, total, severity)) in by_speaker {
        println!("{spk}  severity {severity:4}  {n:3} utterances  mean speech {:.3} s", total / n as f64);
    }
    Ok(())
}
