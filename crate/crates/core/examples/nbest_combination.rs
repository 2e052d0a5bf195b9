//! Combines two systems' scores over one N-best list, by interpolation and
//! by second-pass rescoring, across a sweep of weights.

use std::collections::BTreeMap;

use dysaug::eval::{nbest_interpolate, rescore_key, two_pass_rescore, EvalError, NBestEntry, NBestList};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let entry = |w: &str, a: f64, b: f64| NBestEntry {
        words: vec![w.to_string()],
        scores: [("a".to_string(), a), ("b".to_string(), b)].into(),
    };
    let list = NBestList {
        utt_id: "utt1".into(),
        entries: vec![entry("paper", -1.0, -5.0), entry("pepper", -1.4, -1.2), entry("piper", -3.0, -0.8)],
    };
    for wa in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let weights: BTreeMap<String, f64> = [("a".to_string(), wa), ("b".to_string(), 1.0 - wa)].into();
        let c = nbest_interpolate(&list, &weights)?;
        println!("interpolate w_a {wa:.2}  -> {:7} score {:.3}", c.words[0], c.score);
    }
    let b_scores: BTreeMap<String, f64> = list.entries.iter().map(|e| (e.words[0].clone(), e.scores["b"])).collect();
    let scorer = |_: &str, words: &[String]| -> Result<f64, EvalError> {
        b_scores.get(&words[0]).copied().ok_or_else(|| EvalError::Unscorable(words[0].clone()))
    };
    for w in [0.0, 0.5, 1.0] {
        let out = two_pass_rescore(&list, "a", &scorer, "b", w)?;
        let ranked: Vec<String> =
            out.entries.iter().map(|e| format!("{}({:.2})", e.words[0], e.scores[&rescore_key("a", "b")])).collect();
        println!("rescore w {w:.1}  {}", ranked.join(" "));
    }
    Ok(())
}
