use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::plan::AugPlan;
use super::{CliError, Result};
use crate::align::Block;
use crate::eval::{CtcTrainConfig, FeatureConfig};
use crate::gan::GanTrainConfig;
use crate::signal::{FeatureScale, StftParams};
use crate::synth::CorpusConfig;

/// Input and output locations. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub ctm: Option<PathBuf>,
    /// Base for relative audio paths; defaults to the manifest's directory.
    pub audio_root: Option<PathBuf>,
    /// Directory holding `train-dcgan` checkpoints.
    pub dcgan_models: Option<PathBuf>,
    /// Directory holding `train-sbgan` checkpoints.
    pub sbgan_models: Option<PathBuf>,
    /// N-best files read by `combine`.
    pub nbest: Vec<PathBuf>,
    /// Result files read by `report`.
    pub results: Vec<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Name the decoded results and N-best scores are filed under.
    pub system: String,
    /// Held-out block of the dysarthric speakers.
    pub test_block: Block,
    /// Hypotheses kept per utterance; 0 keeps them all.
    pub nbest: usize,
    /// Score hypotheses by summing over alignments instead of the best path.
    pub full_sum: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { system: "baseline".into(), test_block: Block::B2, nbest: 0, full_sum: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CombineMode {
    /// Weighted sum of system scores over a shared N-best list.
    #[default]
    Interpolate,
    /// Rescore system X's list with system Y's scores.
    Rescore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CombineSection {
    pub mode: CombineMode,
    /// Output system name; defaults to a name built from the inputs.
    pub name: Option<String>,
    pub weights: BTreeMap<String, f64>,
    pub system_x: Option<String>,
    pub system_y: Option<String>,
    /// Weight of system X in rescoring.
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    /// Analysis framing; defaults to 64 ms Hann windows with half overlap at
    /// the audio's sample rate.
    pub stft: Option<StftParams>,
    /// Amplitude scale the GANs work in.
    pub scale: FeatureScale,
    /// Resynthesise with Griffin-Lim instead of the source phase.
    pub griffin_lim_iters: Option<usize>,
    /// Blocks that supply GAN training data.
    pub train_blocks: BTreeSet<Block>,
    /// Dysarthric speakers to train GANs for; empty means all of them.
    pub targets: Vec<String>,
    pub dcgan: GanTrainConfig,
    pub sbgan: GanTrainConfig,
    pub features: FeatureConfig,
    pub ctc: CtcTrainConfig,
    pub plan: AugPlan,
    pub eval: EvalSection,
    pub combine: CombineSection,
    pub corpus: CorpusConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: Paths::default(),
            stft: None,
            scale: FeatureScale::Log1p,
            griffin_lim_iters: None,
            train_blocks: [Block::B1, Block::B3].into_iter().collect(),
            targets: Vec::new(),
            dcgan: GanTrainConfig::default(),
            sbgan: GanTrainConfig::default(),
            features: FeatureConfig::default(),
            ctc: CtcTrainConfig::default(),
            plan: AugPlan::default(),
            eval: EvalSection::default(),
            combine: CombineSection::default(),
            corpus: CorpusConfig::default(),
        }
    }
}

/// A parsed config with its source hash and base directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// SHA-256 of the config text, hex encoded.
    pub hash: String,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// A required path from the `[paths]` table, resolved and checked to exist.
    pub fn input(&self, name: &str, p: &Option<PathBuf>) -> Result<PathBuf> {
        let p = p.as_ref().ok_or_else(|| CliError::Config(format!("paths.{name} is required")))?;
        let full = self.resolve(p);
        if !full.exists() {
            return Err(CliError::Config(format!("paths.{name}: {} does not exist", full.display())));
        }
        Ok(full)
    }
}

/// Parses TOML config text. Errors name the offending key path.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.message().to_string();
        match inner.span() {
            Some(span) => {
                let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                CliError::Config(format!("{path}: {msg} (line {line})"))
            }
            None => CliError::Config(format!("{path}: {msg}")),
        }
    })
}

pub fn load_config(path: Option<&Path>) -> Result<LoadedConfig> {
    let (text, base_dir) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (text, base)
        }
        None => (String::new(), PathBuf::from(".")),
    };
    let config = parse_config(&text)?;
    let hash = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    Ok(LoadedConfig { config, hash, base_dir })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
    }

    #[test]
    fn errors_name_the_key_path() {
        let e = parse_config("[dcgan]\nepochs = \"many\"\n").unwrap_err().to_string();
        assert!(e.contains("dcgan.epochs"), "{e}");
        let e = parse_config("[eval]\nbogus = 1\n").unwrap_err().to_string();
        assert!(e.contains("eval") && e.contains("bogus"), "{e}");
    }

    #[test]
    fn plan_directives_parse() {
        let text = r#"
            seed = 4
            [[plan.directives]]
            subset = { speaker_type = "control", blocks = ["B1", "B3"] }
            method = "SG"
            multiplier = 2
            target = "D01"
        "#;
        let c = parse_config(text).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.plan.directives.len(), 1);
        assert_eq!(c.plan.directives[0].multiplier, 2);
    }
}
