use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::wer::edit_counts;
use super::{EvalError, Result};
use crate::align::Severity;

/// One decoded test utterance of one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceResult {
    pub system: String,
    pub utt_id: String,
    pub severity: Severity,
    pub reference: Vec<String>,
    pub hypothesis: Vec<String>,
}

/// WER per severity subgroup (VL, L, M, H) and pooled over all of them.
/// A subgroup without test words is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub system: String,
    pub groups: [Option<f64>; 4],
    pub all: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WerReport {
    pub rows: Vec<ReportRow>,
}

impl WerReport {
    /// Pools errors and reference words per system and subgroup. Systems
    /// appear in order of first occurrence.
    pub fn from_results(results: &[UtteranceResult]) -> Result<Self> {
        let mut order: Vec<&str> = Vec::new();
        // (errors, words) per system per group; index 4 is the pooled total.
        let mut acc: BTreeMap<&str, [(usize, usize); 5]> = BTreeMap::new();
        for r in results {
            if r.reference.is_empty() {
                return Err(EvalError::EmptyReference);
            }
            let g = r.severity.class_index().ok_or(EvalError::InvalidSeverity(r.severity))?;
            if !acc.contains_key(r.system.as_str()) {
                order.push(&r.system);
            }
            let cell = acc.entry(&r.system).or_default();
            let e = edit_counts(&r.reference, &r.hypothesis).errors();
            for i in [g, 4] {
                cell[i].0 += e;
                cell[i].1 += r.reference.len();
            }
        }
        let rate = |(e, n): (usize, usize)| (n > 0).then(|| 100.0 * e as f64 / n as f64);
        let rows = order
            .into_iter()
            .map(|sys| {
                let c = acc[sys];
                ReportRow {
                    system: sys.to_string(),
                    groups: [rate(c[0]), rate(c[1]), rate(c[2]), rate(c[3])],
                    all: rate(c[4]),
                }
            })
            .collect();
        Ok(Self { rows })
    }

    pub fn row(&self, system: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.system == system)
    }

    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.2}"));
        let mut s = String::from("system,VL,L,M,H,All\n");
        for r in &self.rows {
            let cells: Vec<String> = r.groups.iter().map(|&g| fmt(g)).chain([fmt(r.all)]).collect();
            s.push_str(&format!("{},{}\n", r.system, cells.join(",")));
        }
        s
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.system.len()).max().unwrap_or(0).max(6);
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
        let mut s = format!("{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}\n", "system", "VL", "L", "M", "H", "All");
        for r in &self.rows {
            s.push_str(&format!(
                "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}\n",
                r.system,
                fmt(r.groups[0]),
                fmt(r.groups[1]),
                fmt(r.groups[2]),
                fmt(r.groups[3]),
                fmt(r.all)
            ));
        }
        s
    }
}

pub fn read_results<R: BufRead>(input: R) -> Result<Vec<UtteranceResult>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Results(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

pub fn write_results<W: Write>(mut out: W, results: &[UtteranceResult]) -> Result<()> {
    for r in results {
        serde_json::to_writer(&mut out, r).map_err(|e| EvalError::Results(e.to_string()))?;
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res(sys: &str, sev: Severity, r: &str, h: &str) -> UtteranceResult {
        UtteranceResult {
            system: sys.into(),
            utt_id: format!("{sys}-{r}"),
            severity: sev,
            reference: vec![r.into()],
            hypothesis: if h.is_empty() { vec![] } else { vec![h.into()] },
        }
    }

    #[test]
    fn table_columns_and_values() {
        let rs = vec![
            res("base", Severity::VL, "a", "b"),
            res("base", Severity::VL, "c", "c"),
            res("base", Severity::H, "d", "d"),
            res("aug", Severity::VL, "a", "a"),
        ];
        let rep = WerReport::from_results(&rs).unwrap();
        let csv = rep.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("system,VL,L,M,H,All"));
        assert_eq!(lines.next(), Some("base,50.00,,,0.00,33.33"));
        assert_eq!(lines.next(), Some("aug,0.00,,,,0.00"));
        assert!(rep.to_text().starts_with("system"));
        assert_eq!(rep.row("aug").unwrap().all, Some(0.0));
    }

    #[test]
    fn control_results_are_rejected() {
        assert!(WerReport::from_results(&[res("x", Severity::None, "a", "a")]).is_err());
    }

    #[test]
    fn results_round_trip() {
        let rs = vec![res("base", Severity::M, "a", "")];
        let mut buf = Vec::new();
        write_results(&mut buf, &rs).unwrap();
        assert_eq!(read_results(buf.as_slice()).unwrap(), rs);
    }
}
