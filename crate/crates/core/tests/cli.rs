use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dysaug::align::{read_manifest, write_manifest, Block, ManifestRecord, Method, Severity, SpeakerType};
use dysaug::cli::RunMeta;
use dysaug::eval::{write_results, UtteranceResult};
use dysaug::signal::{wav_write, Waveform};

fn dysaug(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dysaug")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Ten dysarthric B1 utterances of short chirps, with a manifest.
fn ten_utterance_fixture(dir: &Path) -> Vec<ManifestRecord> {
    std::fs::create_dir_all(dir.join("wav")).unwrap();
    let records: Vec<ManifestRecord> = (0..10)
        .map(|i| {
            let utt = format!("D01_B1_w{i}");
            let f0 = 200.0 + 30.0 * i as f64;
            let s = (0..2400).map(|n| 0.3 * (2.0 * std::f64::consts::PI * f0 * n as f64 / 8000.0).sin()).collect();
            wav_write(&Waveform::new(s, 8000).unwrap(), dir.join(format!("wav/{utt}.wav"))).unwrap();
            ManifestRecord {
                audio_path: format!("wav/{utt}.wav"),
                utt_id: utt,
                speaker_id: "D01".into(),
                speaker_type: SpeakerType::Dysarthric,
                block: Block::B1,
                word_id: format!("w{i}"),
                transcript: vec![format!("w{i}")],
                severity: Severity::L,
                provenance: None,
            }
        })
        .collect();
    write_manifest(File::create(dir.join("manifest.jsonl")).unwrap(), &records).unwrap();
    records
}

const SI_PLAN: &str = r#"
seed = 3
[paths]
manifest = "data/manifest.jsonl"

[[plan.directives]]
subset = { speaker_type = "dysarthric", blocks = ["B1", "B3"] }
method = "S_si"
multiplier = 2
"#;

fn files_under(dir: &Path) -> BTreeSet<PathBuf> {
    let mut out = BTreeSet::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.insert(p);
        }
    }
    out
}

#[test]
fn augment_doubles_ten_utterances_with_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let originals = ten_utterance_fixture(&tmp.path().join("data"));
    std::fs::write(tmp.path().join("run.toml"), SI_PLAN).unwrap();

    let o = dysaug(&["augment", "--config", "run.toml", "--out", "a"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let wavs: Vec<_> = std::fs::read_dir(tmp.path().join("a/aug")).unwrap().collect();
    assert_eq!(wavs.len(), 20);

    let merged = read_manifest(BufReader::new(File::open(tmp.path().join("a/manifest.jsonl")).unwrap())).unwrap();
    assert_eq!(merged.len(), 30);
    let augmented: Vec<_> = merged.iter().filter(|r| r.provenance.is_some()).collect();
    assert_eq!(augmented.len(), 20);
    for r in &augmented {
        let p = r.provenance.as_ref().unwrap();
        assert_eq!(p.method, Method::SpeedSi);
        assert_eq!(p.factor, [0.9, 1.1][p.replica]);
        assert!(originals.iter().any(|o| o.utt_id == p.source_utt));
    }

    // Every emitted file is listed and every listed file exists.
    let listed: BTreeSet<PathBuf> = augmented.iter().map(|r| tmp.path().join("a").join(&r.audio_path)).collect();
    let on_disk: BTreeSet<PathBuf> = files_under(&tmp.path().join("a/aug"));
    assert_eq!(listed, on_disk);
    for r in merged.iter().filter(|r| r.provenance.is_none()) {
        assert!(Path::new(&r.audio_path).is_file(), "{}", r.audio_path);
    }

    let meta: RunMeta = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("a/run.json")).unwrap()).unwrap();
    assert_eq!(meta.seed, 3);
    assert_eq!(meta.counts["jobs"], 20);
    assert_eq!(meta.config_sha256.len(), 64);

    let o = dysaug(&["augment", "--config", "run.toml", "--out", "b"], tmp.path());
    assert_eq!(code(&o), 0);
    for f in files_under(&tmp.path().join("a")) {
        let rel = f.strip_prefix(tmp.path().join("a")).unwrap();
        assert_eq!(std::fs::read(&f).unwrap(), std::fs::read(tmp.path().join("b").join(rel)).unwrap(), "{rel:?}");
    }
}

#[test]
fn output_collisions_need_force() {
    let tmp = tempfile::tempdir().unwrap();
    ten_utterance_fixture(&tmp.path().join("data"));
    std::fs::write(tmp.path().join("run.toml"), SI_PLAN).unwrap();
    assert_eq!(code(&dysaug(&["augment", "--config", "run.toml", "--out", "a"], tmp.path())), 0);
    let o = dysaug(&["augment", "--config", "run.toml", "--out", "a"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    assert_eq!(code(&dysaug(&["augment", "--config", "run.toml", "--out", "a", "--force"], tmp.path())), 0);
}

#[test]
fn exit_codes_follow_error_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    ten_utterance_fixture(&tmp.path().join("data"));
    let run = |name: &str, text: &str, cmd: &str| {
        std::fs::write(tmp.path().join(name), text).unwrap();
        let out = format!("out_{name}");
        code(&dysaug(&[cmd, "--config", name, "--out", &out], tmp.path()))
    };
    assert_eq!(run("type.toml", "[sbgan]\nk = \"four\"\n", "augment"), 2);
    assert_eq!(run("unknown.toml", "[paths]\nmanifesto = \"x\"\n", "augment"), 2);
    assert_eq!(run("missing.toml", "[paths]\nmanifest = \"nope.jsonl\"\n", "augment"), 2);
    let zero = SI_PLAN.replace("multiplier = 2", "multiplier = 0");
    assert_eq!(run("zero.toml", &zero, "augment"), 2);

    let empty_subset = SI_PLAN.replace("\"dysarthric\"", "\"control\"");
    assert_eq!(run("empty.toml", &empty_subset, "augment"), 3);
    std::fs::write(tmp.path().join("data/wav/D01_B1_w3.wav"), b"not a wav").unwrap();
    assert_eq!(run("corrupt.toml", SI_PLAN, "augment"), 3);

    assert_eq!(run("gc.toml", "", "gradcheck"), 0);
    assert_eq!(code(&dysaug(&["nonsense"], tmp.path())), 2);
    assert_eq!(code(&dysaug(&["report"], tmp.path())), 2, "no output directory");
}

#[test]
fn report_writes_severity_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let w = |s: &str| vec![s.to_string()];
    let results = vec![
        UtteranceResult {
            system: "x".into(),
            utt_id: "a".into(),
            severity: Severity::VL,
            reference: w("on"),
            hypothesis: w("off"),
        },
        UtteranceResult {
            system: "x".into(),
            utt_id: "b".into(),
            severity: Severity::H,
            reference: w("on"),
            hypothesis: w("on"),
        },
    ];
    write_results(File::create(tmp.path().join("r.jsonl")).unwrap(), &results).unwrap();
    std::fs::write(tmp.path().join("rep.toml"), "[paths]\nresults = [\"r.jsonl\"]\n").unwrap();
    let o = dysaug(&["report", "--config", "rep.toml", "--out", "rep"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("rep/report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("system,VL,L,M,H,All"));
    assert_eq!(lines.next(), Some("x,100.00,,,0.00,50.00"));
}

#[test]
fn one_pass_speed_gan_emits_one_file_per_source() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        let o = dysaug(args, tmp.path());
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    run(&["synth", "--out", "corpus"]);
    let config = r#"
seed = 2
targets = ["D01"]
[paths]
manifest = "corpus/manifest.jsonl"
ctm = "corpus/alignments.ctm"
dcgan_models = "dcgan"
[dcgan]
epochs = 1
chunk_frames = 32
[[plan.directives]]
subset = { speaker_type = "control", blocks = ["B1"] }
method = "SG"
multiplier = 1
target = "D01"
"#;
    std::fs::write(tmp.path().join("run.toml"), config).unwrap();
    run(&["train-dcgan", "--config", "run.toml", "--out", "dcgan"]);
    run(&["augment", "--config", "run.toml", "--out", "aug"]);

    let corpus = read_manifest(BufReader::new(File::open(tmp.path().join("corpus/manifest.jsonl")).unwrap())).unwrap();
    let sources: BTreeSet<&str> = corpus
        .iter()
        .filter(|r| r.speaker_type == SpeakerType::Control && r.block == Block::B1)
        .map(|r| r.utt_id.as_str())
        .collect();
    let merged = read_manifest(BufReader::new(File::open(tmp.path().join("aug/manifest.jsonl")).unwrap())).unwrap();
    let augmented: Vec<_> = merged.iter().filter(|r| r.provenance.is_some()).collect();
    assert_eq!(augmented.len(), sources.len());
    assert_eq!(files_under(&tmp.path().join("aug/aug")).len(), sources.len());
    let used: BTreeSet<&str> = augmented.iter().map(|r| r.provenance.as_ref().unwrap().source_utt.as_str()).collect();
    assert_eq!(used, sources);
    for r in &augmented {
        assert_eq!(r.speaker_id, "D01");
        assert_eq!(r.provenance.as_ref().unwrap().method, Method::SpeedGan);
    }
}
