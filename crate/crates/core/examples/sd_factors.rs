//! Speaker-dependent speed factors of the synthetic corpus from its phone
//! alignments, and the tempo each factor gives a control utterance.

use dysaug::experiment::sd_factors;
use dysaug::signal::resample_speed;
use dysaug::synth::{generate_corpus, CorpusConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(&CorpusConfig::default())?;
    let factors = sd_factors(&corpus.records, &corpus.alignments)?;
    let control = corpus.records.iter().find(|r| r.speaker_id == "C01").ok_or("no control speech")?;
    let audio = &corpus.audio[&control.utt_id];
    for (spk, f) in &factors {
        let out = resample_speed(audio, *f)?;
        println!(
            "{spk}  factor {f:.3}  {} {:.2} s -> {:.2} s",
            control.utt_id,
            audio.duration_secs(),
            out.duration_secs()
        );
    }
    Ok(())
}
