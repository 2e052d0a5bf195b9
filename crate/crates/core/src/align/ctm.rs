use std::collections::HashMap;

use super::{AlignError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentSegment {
    pub utt_id: String,
    pub label: String,
    /// Seconds from utterance start.
    pub start: f64,
    pub dur: f64,
}

/// Parses CTM lines `utt_id channel start dur label`. Blank lines and lines
/// starting with `#` are skipped. Segments come back grouped by utterance in
/// order of first appearance, file order within each utterance.
pub fn parse_ctm(text: &str) -> Result<Vec<AlignmentSegment>> {
    let mut segments = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| AlignError::Ctm { line: i + 1, msg };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        }
        let start: f64 = fields[2].parse().map_err(|_| err(format!("non-numeric start {:?}", fields[2])))?;
        let dur: f64 = fields[3].parse().map_err(|_| err(format!("non-numeric duration {:?}", fields[3])))?;
        if !start.is_finite() || start < 0.0 {
            return Err(err(format!("start must be >= 0, got {start}")));
        }
        if !dur.is_finite() || dur <= 0.0 {
            return Err(err(format!("duration must be > 0, got {dur}")));
        }
        segments.push(AlignmentSegment { utt_id: fields[0].to_string(), label: fields[4].to_string(), start, dur });
    }
    Ok(group_by_utterance(segments).into_iter().flat_map(|(_, s)| s).collect())
}

/// Stable grouping by utterance id, in order of first appearance.
pub fn group_by_utterance(segments: Vec<AlignmentSegment>) -> Vec<(String, Vec<AlignmentSegment>)> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<(String, Vec<AlignmentSegment>)> = Vec::new();
    for s in segments {
        let slot = *index.entry(s.utt_id.clone()).or_insert_with(|| {
            groups.push((s.utt_id.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(s);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line() {
        let segs = parse_ctm("u1 1 0.00 0.10 AH").unwrap();
        assert_eq!(segs, vec![AlignmentSegment { utt_id: "u1".into(), label: "AH".into(), start: 0.0, dur: 0.1 }]);
    }

    #[test]
    fn empty_and_comments() {
        assert!(parse_ctm("").unwrap().is_empty());
        let text = "# aligned by hand\nu1 1 0.00 0.10 AH\n\nu1 1 0.10 0.20 B\n";
        assert_eq!(parse_ctm(text).unwrap().len(), 2);
    }

    #[test]
    fn groups_interleaved_utterances() {
        let text = "a 1 0 0.1 X\nb 1 0 0.1 Y\na 1 0.1 0.1 Z\n";
        let ids: Vec<_> = parse_ctm(text).unwrap().into_iter().map(|s| (s.utt_id, s.label)).collect();
        assert_eq!(ids, vec![("a".into(), "X".into()), ("a".into(), "Z".into()), ("b".into(), "Y".into())]);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        match parse_ctm("u1 1 0.0 0.1 AH\nu1 1 0.1\n") {
            Err(AlignError::Ctm { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_ctm("# c\nu1 1 zero 0.1 AH\n") {
            Err(AlignError::Ctm { line: 2, msg }) => assert!(msg.contains("start")),
            other => panic!("{other:?}"),
        }
        assert!(parse_ctm("u1 1 0.0 -0.1 AH").is_err());
    }
}
