//! Expands an augmentation plan over the synthetic corpus into jobs and
//! prints the job count per directive with a few sample jobs.

use std::collections::BTreeMap;

use dysaug::cli::{parse_config, plan_expansion};
use dysaug::experiment::sd_factors;
use dysaug::synth::{generate_corpus, CorpusConfig};

const PLAN: &str = r#"
[[plan.directives]]
subset = { speaker_type = "control", blocks = ["B1", "B3"] }
method = "SG"
multiplier = 2
target = "D02"

[[plan.directives]]
subset = { speaker_type = "control", blocks = ["B1"] }
method = "S_sd"
multiplier = 3
target = "D04"

[[plan.directives]]
subset = { speaker_type = "dysarthric", blocks = ["B1", "B3"] }
method = "S_si"
multiplier = 2
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(&CorpusConfig::default())?;
    let factors = sd_factors(&corpus.records, &corpus.alignments)?;
    let plan = parse_config(PLAN)?.plan;
    let jobs = plan_expansion(&corpus.records, &plan, &factors, 42)?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for j in &jobs {
        *counts.entry(format!("{} {}", j.method, j.target.as_deref().unwrap_or("-"))).or_default() += 1;
    }
    println!("{} jobs from {} utterances", jobs.len(), corpus.records.len());
    for (k, n) in counts {
        println!("  {k:8} {n}");
    }
    for j in jobs.iter().step_by(jobs.len() / 5) {
        println!("  {} factor {:.3} seed {:016x} -> {}", j.job_id, j.factor, j.seed, j.audio_path());
    }
    Ok(())
}
