use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AlignError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerType {
    Control,
    Dysarthric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Block {
    B1,
    B2,
    B3,
}

/// Intelligibility subgroup. Control speakers carry `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    VL,
    L,
    M,
    H,
    #[serde(rename = "none")]
    None,
}

impl Severity {
    pub const GRADED: [Severity; 4] = [Severity::VL, Severity::L, Severity::M, Severity::H];

    /// Class index for the severity head, `None` for controls.
    pub fn class_index(self) -> Option<usize> {
        Self::GRADED.iter().position(|&s| s == self)
    }

    pub fn from_class_index(i: usize) -> Option<Self> {
        Self::GRADED.get(i).copied()
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::VL => "VL",
            Severity::L => "L",
            Severity::M => "M",
            Severity::H => "H",
            Severity::None => "none",
        })
    }
}

impl FromStr for Severity {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "VL" => Ok(Severity::VL),
            "L" => Ok(Severity::L),
            "M" => Ok(Severity::M),
            "H" => Ok(Severity::H),
            "none" => Ok(Severity::None),
            _ => Err(format!("unknown severity {s:?}")),
        }
    }
}

/// Augmentation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Speaker-independent speed perturbation with factors {0.9, 1.1}.
    #[serde(rename = "S_si")]
    SpeedSi,
    /// Speaker-dependent speed perturbation towards a dysarthric speaker.
    #[serde(rename = "S_sd")]
    SpeedSd,
    /// SD speed perturbation followed by the speaker's DCGAN.
    #[serde(rename = "SG")]
    SpeedGan,
    /// SD speed perturbation followed by the speaker's spectral basis GAN.
    #[serde(rename = "SBG")]
    SpectralBasisGan,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::SpeedSi => "S_si",
            Method::SpeedSd => "S_sd",
            Method::SpeedGan => "SG",
            Method::SpectralBasisGan => "SBG",
        }
    }

    /// Whether the method maps speech towards a named dysarthric speaker.
    pub fn needs_target(self) -> bool {
        !matches!(self, Method::SpeedSi)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_utt: String,
    pub method: Method,
    pub factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    pub replica: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub utt_id: String,
    pub speaker_id: String,
    pub speaker_type: SpeakerType,
    pub block: Block,
    pub word_id: String,
    pub transcript: Vec<String>,
    pub severity: Severity,
    pub audio_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl ManifestRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(AlignError::InvalidRecord { utt: self.utt_id.clone(), msg: msg.into() });
        if self.utt_id.is_empty() {
            return bad("empty utt_id");
        }
        if self.word_id.is_empty() {
            return bad("empty word_id");
        }
        if self.speaker_type == SpeakerType::Control && self.severity != Severity::None {
            return bad("control speakers must have severity none");
        }
        Ok(())
    }
}

/// Reads JSON-lines, one record per non-blank line.
pub fn read_manifest<R: BufRead>(reader: R) -> Result<Vec<ManifestRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord =
            serde_json::from_str(&line).map_err(|e| AlignError::Manifest { line: i + 1, msg: e.to_string() })?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest<W: Write>(mut writer: W, records: &[ManifestRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).expect("manifest records serialize");
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> ManifestRecord {
        ManifestRecord {
            utt_id: "F02_B1_W3".into(),
            speaker_id: "F02".into(),
            speaker_type: SpeakerType::Dysarthric,
            block: Block::B1,
            word_id: "W3".into(),
            transcript: vec!["cat".into()],
            severity: Severity::VL,
            audio_path: "audio/F02_B1_W3.wav".into(),
            provenance: None,
        }
    }

    #[test]
    fn json_line_shape() {
        let mut buf = Vec::new();
        write_manifest(&mut buf, &[record()]).unwrap();
        let line = String::from_utf8(buf).unwrap();
        assert!(line.contains(r#""speaker_type":"dysarthric""#));
        assert!(line.contains(r#""severity":"VL""#));
        assert!(!line.contains("provenance"));
        assert_eq!(read_manifest(line.as_bytes()).unwrap(), vec![record()]);
    }

    #[test]
    fn provenance_round_trips() {
        let mut r = record();
        r.provenance = Some(Provenance {
            source_utt: "C01_B1_W3".into(),
            method: Method::SpeedGan,
            factor: 0.625,
            model_id: Some("dcgan-F02".into()),
            replica: 1,
        });
        let mut buf = Vec::new();
        write_manifest(&mut buf, std::slice::from_ref(&r)).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains(r#""method":"SG""#));
        assert_eq!(read_manifest(buf.as_slice()).unwrap(), vec![r]);
    }

    #[test]
    fn control_with_severity_is_invalid() {
        let mut r = record();
        r.speaker_type = SpeakerType::Control;
        assert!(r.validate().is_err());
        r.severity = Severity::None;
        r.validate().unwrap();
        r.word_id.clear();
        assert!(r.validate().is_err());
    }

    #[test]
    fn bad_json_reports_line() {
        let text = format!("{}\n{{not json\n", serde_json::to_string(&record()).unwrap());
        assert!(matches!(read_manifest(text.as_bytes()), Err(AlignError::Manifest { line: 2, .. })));
    }

    #[test]
    fn severity_classes() {
        assert_eq!(Severity::L.class_index(), Some(1));
        assert_eq!(Severity::None.class_index(), None);
        assert_eq!(Severity::from_class_index(3), Some(Severity::H));
        assert_eq!("VL".parse::<Severity>().unwrap(), Severity::VL);
    }
}
