use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

pub const MAX_NBEST: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBestEntry {
    pub words: Vec<String>,
    /// Score of this hypothesis under each system id.
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBestList {
    pub utt_id: String,
    pub entries: Vec<NBestEntry>,
}

impl NBestList {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(EvalError::EmptyNBest(self.utt_id.clone()));
        }
        if self.entries.len() > MAX_NBEST {
            return Err(EvalError::NBest(format!(
                "{}: {} entries exceed {MAX_NBEST}",
                self.utt_id,
                self.entries.len()
            )));
        }
        for e in &self.entries {
            if let Some((sys, v)) = e.scores.iter().find(|(_, v)| !v.is_finite()) {
                return Err(EvalError::NBest(format!("{}: score {v} from {sys} is not finite", self.utt_id)));
            }
        }
        Ok(())
    }

    fn score(&self, i: usize, system: &str) -> Result<f64> {
        self.entries[i].scores.get(system).copied().ok_or_else(|| EvalError::MissingScore {
            utt: self.utt_id.clone(),
            entry: i,
            system: system.to_string(),
        })
    }
}

/// Winner of a score combination.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub index: usize,
    pub words: Vec<String>,
    pub score: f64,
}

/// Picks the entry maximising `sum_i w_i * score_i`. The weights must sum to
/// one; ties go to the earlier entry.
pub fn nbest_interpolate(list: &NBestList, weights: &BTreeMap<String, f64>) -> Result<Choice> {
    list.validate()?;
    let total: f64 = weights.values().sum();
    if (total - 1.0).abs() > 1e-9 || weights.values().any(|w| !w.is_finite()) {
        return Err(EvalError::WeightSum(total));
    }
    let mut best: Option<(usize, f64)> = None;
    for i in 0..list.entries.len() {
        let mut s = 0.0;
        for (sys, w) in weights {
            s += w * list.score(i, sys)?;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    let (index, score) = best.expect("validated non-empty");
    Ok(Choice { index, words: list.entries[index].words.clone(), score })
}

/// Something that can score a hypothesis of an utterance, e.g. a second
/// acoustic model.
pub trait HypothesisScorer {
    fn score(&self, utt_id: &str, words: &[String]) -> Result<f64>;
}

impl<F: Fn(&str, &[String]) -> Result<f64>> HypothesisScorer for F {
    fn score(&self, utt_id: &str, words: &[String]) -> Result<f64> {
        self(utt_id, words)
    }
}

/// Name under which [`two_pass_rescore`] stores the combined score.
pub fn rescore_key(system_x: &str, system_y: &str) -> String {
    format!("{system_x}->{system_y}")
}

/// Rescores system X's N-best with scorer Y: each entry gains Y's score and
/// the combined `w * x + (1 - w) * y` under [`rescore_key`], and the list is
/// sorted by the combined score, descending and stable.
pub fn two_pass_rescore<S: HypothesisScorer + ?Sized>(
    list: &NBestList,
    system_x: &str,
    scorer: &S,
    system_y: &str,
    w: f64,
) -> Result<NBestList> {
    list.validate()?;
    if !(0.0..=1.0).contains(&w) {
        return Err(EvalError::WeightSum(w));
    }
    let key = rescore_key(system_x, system_y);
    let mut out = list.clone();
    for (i, e) in out.entries.iter_mut().enumerate() {
        let x = list.score(i, system_x)?;
        let y = scorer
            .score(&list.utt_id, &e.words)
            .map_err(|err| EvalError::Unscorable(format!("{} entry {i}: {err}", list.utt_id)))?;
        if !y.is_finite() {
            return Err(EvalError::Unscorable(format!("{} entry {i}: score {y}", list.utt_id)));
        }
        e.scores.insert(system_y.to_string(), y);
        e.scores.insert(key.clone(), w * x + (1.0 - w) * y);
    }
    out.entries.sort_by(|a, b| b.scores[&key].total_cmp(&a.scores[&key]));
    Ok(out)
}

pub fn read_nbest<R: BufRead>(input: R) -> Result<Vec<NBestList>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let list: NBestList =
            serde_json::from_str(&line).map_err(|e| EvalError::NBest(format!("line {}: {e}", i + 1)))?;
        list.validate()?;
        out.push(list);
    }
    Ok(out)
}

pub fn write_nbest<W: Write>(mut out: W, lists: &[NBestList]) -> Result<()> {
    for l in lists {
        serde_json::to_writer(&mut out, l).map_err(|e| EvalError::NBest(e.to_string()))?;
        writeln!(out)?;
    }
    Ok(())
}
