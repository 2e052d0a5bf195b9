//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 2 3`.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::time::{Duration, Instant};

use dysaug::align::{Block, ManifestRecord, Method, Severity, SpeakerType};
use dysaug::autograd::gradcheck_suite;
use dysaug::cli::{plan_expansion, AugPlan, Directive, SubsetSelector};
use dysaug::eval::{ctc_loss, nbest_interpolate, two_pass_rescore, EvalError, NBestEntry, NBestList};
use dysaug::experiment::{run_utility, System, UtilityConfig};
use dysaug::gan::{
    dcgan_train, minimax_value, sbgan_augment, sbgan_train, svd_bases, DcganDiscriminator, DcganGenerator,
    GanTrainConfig, SbganGenerator, SbganMode,
};
use dysaug::signal::{interior_range, istft, resample_speed, stft, Spectrogram, StftParams, Waveform, WindowKind};
use dysaug::synth::{mean_l1, negated_column_blocks, shifted_pairs};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gradients() -> Result<String, String> {
    let checks = gradcheck_suite(0).map_err(err)?;
    for c in &checks {
        ensure(c.max_rel_error <= 1e-4 && c.passed, || format!("{} rel error {:.3e}", c.name, c.max_rel_error))?;
        ensure(c.probes >= 20, || format!("{} used {} probes", c.name, c.probes))?;
    }
    let worst = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    let probes = checks.iter().map(|c| c.probes).min().unwrap_or(0);
    Ok(format!("{} ops, max rel error {worst:.2e}, >= {probes} probes each", checks.len()))
}

/// Probability of every collapsed label sequence, by summing over all
/// `classes^frames` frame paths.
fn enumerate_paths(probs: &[f64], frames: usize, classes: usize) -> HashMap<Vec<usize>, f64> {
    let mut out: HashMap<Vec<usize>, f64> = HashMap::new();
    let total = classes.pow(frames as u32);
    for code in 0..total {
        let mut c = code;
        let mut path = Vec::with_capacity(frames);
        for _ in 0..frames {
            path.push(c % classes);
            c /= classes;
        }
        let p: f64 = path.iter().enumerate().map(|(t, &k)| probs[t * classes + k]).product();
        let mut collapsed = Vec::new();
        let mut prev = None;
        for &k in &path {
            if Some(k) != prev && k != 0 {
                collapsed.push(k);
            }
            prev = Some(k);
        }
        *out.entry(collapsed).or_default() += p;
    }
    out
}

fn label_sequences(vocab: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut all = Vec::new();
    let mut layer: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|s| (1..=vocab).map(move |l| s.iter().copied().chain([l]).collect::<Vec<_>>()))
            .collect();
        all.extend(layer.iter().cloned());
    }
    all
}

fn ctc_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cases = 0;
    let mut infeasible = 0;
    let mut worst: f64 = 0.0;
    for vocab in 1..=3 {
        let classes = vocab + 1;
        for frames in 1..=6 {
            let mut probs = Vec::with_capacity(frames * classes);
            for _ in 0..frames {
                let row: Vec<f64> = (0..classes).map(|_| rng.random_range(0.05..1.0)).collect();
                let z: f64 = row.iter().sum();
                probs.extend(row.iter().map(|p| p / z));
            }
            let log_probs: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
            let oracle = enumerate_paths(&probs, frames, classes);
            for labels in label_sequences(vocab, 3) {
                cases += 1;
                match (oracle.get(&labels), ctc_loss(&log_probs, frames, classes, &labels)) {
                    (Some(&p), Ok(loss)) => {
                        let d = (loss + p.ln()).abs();
                        worst = worst.max(d);
                        ensure(d <= 1e-10, || format!("V={vocab} T={frames} {labels:?}: {loss} vs {}", -p.ln()))?;
                    }
                    (None, Err(EvalError::Infeasible { .. })) => infeasible += 1,
                    (o, l) => return Err(format!("V={vocab} T={frames} {labels:?}: oracle {o:?}, ctc {l:?}")),
                }
            }
        }
    }
    Ok(format!("{cases} cases ({infeasible} infeasible), max |diff| {worst:.1e}"))
}

fn noise(len: usize, sample_rate: u32, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new((0..len).map(|_| rng.random_range(-0.5..0.5)).collect(), sample_rate).unwrap()
}

fn peak_bin(x: &[f64]) -> usize {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    (0..buf.len() / 2).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap()
}

fn signal_chain() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    let configs = [
        (16_000, StftParams::default()),
        (4_000, StftParams::new(256, 128, 256, WindowKind::Hann).unwrap()),
        (16_000, StftParams::new(400, 100, 512, WindowKind::Hamming).unwrap()),
    ];
    for (i, (sr, p)) in configs.iter().enumerate() {
        let x = noise(12_345, *sr, i as u64);
        let c = stft(&x, p).map_err(err)?;
        let y = istft(&c).map_err(err)?;
        let r = interior_range(p, c.n_frames());
        let num: f64 = r.clone().map(|n| (x.samples[n] - y.samples[n]).powi(2)).sum();
        let den: f64 = r.map(|n| x.samples[n].powi(2)).sum();
        let rel = (num / den).sqrt();
        worst = worst.max(rel);
        ensure(rel <= 1e-6, || format!("iSTFT(STFT) rel L2 {rel:.3e} for {p:?}"))?;
    }

    let sr = 16_000;
    let tone: Vec<f64> = (0..sr).map(|n| (2.0 * std::f64::consts::PI * 440.0 * n as f64 / sr as f64).sin()).collect();
    let tone = Waveform::new(tone, sr as u32).unwrap();
    let slow = resample_speed(&tone, 0.5).map_err(err)?;
    // Bin spacing is sr / N, so 220 Hz sits at bin 220 * N / sr.
    let expected = 220.0 * slow.len() as f64 / sr as f64;
    let got = peak_bin(&slow.samples) as f64;
    ensure((got - expected).abs() <= 1.0, || format!("peak at bin {got}, expected {expected}"))?;

    let mut lengths = 0;
    for len in [17, 160, 441, 1001, 4096, 12_345] {
        let x = noise(len, 8_000, len as u64);
        for alpha in [0.25, 0.3, 0.5, 0.55, 0.9, 0.97, 1.0, 1.1, 1.5, 2.0, 3.3, 4.0] {
            let y = resample_speed(&x, alpha).map_err(err)?;
            let want = (len as f64 / alpha).round() as usize;
            ensure(y.len() == want, || format!("len {len} alpha {alpha}: {} samples, expected {want}", y.len()))?;
            lengths += 1;
        }
    }
    Ok(format!(
        "round-trip rel L2 <= {worst:.1e}; 440 Hz at 0.5 peaks at {:.1} Hz; {lengths} length checks exact",
        got * sr as f64 / slow.len() as f64
    ))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

fn svd() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_sv: f64 = 0.0;
    for trial in 0..20 {
        let a = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let full = svd_bases(&a, 8).map_err(err)?;
        let oracle = jacobi_eigenvalues(a.transpose() * &a);
        for (s, l) in full.s.iter().zip(&oracle) {
            let d = (s - l.max(0.0).sqrt()).abs();
            worst_sv = worst_sv.max(d);
            ensure(d <= 1e-8, || format!("trial {trial}: singular value {s} vs oracle {}", l.sqrt()))?;
        }
    }
    let mut worst_full: f64 = 0.0;
    for (f, t) in [(8, 12), (33, 20), (65, 40)] {
        let m = DMatrix::from_fn(f, t, |_, _| rng.random_range(0.0..1.0));
        let mut prev = f64::INFINITY;
        for k in 1..=f.min(t) {
            let e = (svd_bases(&m, k).map_err(err)?.reconstruct() - &m).norm();
            ensure(e <= prev + 1e-12, || format!("{f}x{t}: error rises from {prev} to {e} at k={k}"))?;
            prev = e;
        }
        let rel = prev / m.norm();
        worst_full = worst_full.max(rel);
        ensure(rel <= 1e-6, || format!("{f}x{t}: full-rank rel error {rel:.3e}"))?;
    }
    Ok(format!("singular values within {worst_sv:.1e} of Jacobi oracle; full-rank rel error {worst_full:.1e}"))
}

fn minimax_fixed_point() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (bins, chunk) = (33, 16);
    let d = DcganDiscriminator::constant(bins, chunk, 0.5).map_err(err)?;
    let chunks = |rng: &mut ChaCha8Rng, n: usize| -> Vec<DMatrix<f64>> {
        (0..n).map(|_| DMatrix::from_fn(bins, chunk, |_, _| rng.random_range(0.0..3.0))).collect()
    };
    let target = 2.0 * 0.5f64.ln();
    let mut worst: f64 = 0.0;
    let generators = [DcganGenerator::new(chunk, 1), DcganGenerator::new(chunk, 2), DcganGenerator::identity(chunk)];
    for (i, g) in generators.iter().enumerate() {
        let (c, y) = (chunks(&mut rng, 3 + i), chunks(&mut rng, 2 + i));
        let v = minimax_value(g, &d, &c, &y).map_err(err)?;
        worst = worst.max((v - target).abs());
        ensure((v - target).abs() <= 1e-12, || format!("generator {i}: V = {v}, expected {target}"))?;
    }
    Ok(format!("V(D,G) = 2 ln 0.5 within {worst:.1e} for {} generators", generators.len()))
}

fn dcgan_toy() -> Result<String, String> {
    let train = shifted_pairs(32, 16, 16, 0.5, 1);
    let held_out = shifted_pairs(16, 16, 16, 0.5, 2);
    let cfg = GanTrainConfig { epochs: 200, batch_size: 8, chunk_frames: 16, seed: 0, ..Default::default() };
    let a = dcgan_train(&train, &cfg).map_err(err)?;
    let controls: Vec<_> = held_out.iter().map(|p| p.0.clone()).collect();
    let outputs = a.generator.apply(&controls).map_err(err)?;
    let g_l1 = mean_l1(outputs.into_iter().zip(held_out.iter().map(|p| p.1.clone())));
    let id_l1 = mean_l1(held_out.iter().cloned());
    ensure(g_l1 < id_l1, || format!("generator L1 {g_l1:.4} does not beat identity {id_l1:.4}"))?;

    let b = dcgan_train(&train, &cfg).map_err(err)?;
    let bits = |g: &DcganGenerator| -> Vec<u64> {
        g.params().tensors().iter().flat_map(|t| t.data.iter().map(|v| v.to_bits())).collect()
    };
    ensure(bits(&a.generator) == bits(&b.generator), || "repeat run differs".into())?;
    ensure(a.history == b.history, || "repeat run history differs".into())?;
    Ok(format!("held-out L1 {g_l1:.4} vs identity {id_l1:.4}; repeat run bit-identical"))
}

fn sbgan_toy() -> Result<String, String> {
    let (control, dys) = negated_column_blocks(64, 16, 4, 3);
    let (train_c, test_c) = control.split_at(48);
    let (train_d, test_d) = dys.split_at(48);
    let cfg = GanTrainConfig { epochs: 50, k: 4, ..Default::default() };
    let model = sbgan_train(train_c, train_d, &cfg).map_err(err)?;
    let fakes = test_c
        .iter()
        .map(|u| Ok(u + model.generator.perturbation(u, None)?))
        .collect::<Result<Vec<_>, dysaug::gan::GanError>>()
        .map_err(err)?;
    let p_real = model.discriminator.probabilities(test_d).map_err(err)?;
    let p_fake = model.discriminator.probabilities(&fakes).map_err(err)?;
    let correct = p_real.iter().filter(|&&p| p > 0.5).count() + p_fake.iter().filter(|&&p| p < 0.5).count();
    let acc = correct as f64 / (p_real.len() + p_fake.len()) as f64;
    ensure(acc > 0.8, || format!("held-out accuracy {acc:.3}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for (f, t) in [(16, 12), (33, 33), (20, 45)] {
        let m = DMatrix::from_fn(f, t, |_, _| rng.random_range(0.0..1.0));
        let k = f.min(t);
        let s = Spectrogram::new(m.clone(), StftParams::default(), 16_000).map_err(err)?;
        let out = sbgan_augment(&SbganGenerator::zero(f, k, SbganMode::Block), &s, k, None).map_err(err)?;
        let rel = (out.mag - &m).norm() / m.norm();
        worst = worst.max(rel);
        ensure(rel <= 1e-12, || format!("{f}x{t}: zero perturbation changes the input by {rel:.3e}"))?;
    }
    Ok(format!("held-out discriminator accuracy {acc:.3}; zero-perturbation full-rank error {worst:.1e}"))
}

fn utility() -> Result<String, String> {
    let report = run_utility(&UtilityConfig::default(), |_| {}).map_err(err)?;
    let base = report.mean(System::Baseline);
    let sg = report.mean(System::SpeedGan);
    let sbg = report.mean(System::SpectralBasisGan);
    let line = format!("mean WER over {} seeds: baseline {base:.2}%, SG {sg:.2}%, SBG {sbg:.2}%", report.seeds.len());
    ensure(report.seeds.len() == 3, || format!("{} seeds", report.seeds.len()))?;
    ensure(sg < base && sbg < base, || line.clone())?;
    Ok(line)
}

fn nbest_fixture(rng: &mut ChaCha8Rng, n: usize, systems: &[&str]) -> NBestList {
    let entries = (0..n)
        .map(|i| NBestEntry {
            words: vec![format!("w{i}")],
            // Coarse values make ties likely, which exercises tie-breaking.
            scores: systems.iter().map(|s| (s.to_string(), -(rng.random_range(0..8) as f64) * 0.5)).collect(),
        })
        .collect();
    NBestList { utt_id: "u".into(), entries }
}

fn combination() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let systems = ["A", "B", "C"];
    let grid = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0];
    let mut checked = 0;
    for trial in 0..40 {
        let list = nbest_fixture(&mut rng, 1 + trial % 9, &systems);
        for &wa in &grid {
            for &wb in grid.iter().filter(|&&wb| wa + wb <= 1.0) {
                let weights =
                    BTreeMap::from([("A".to_string(), wa), ("B".to_string(), wb), ("C".to_string(), 1.0 - wa - wb)]);
                let choice = nbest_interpolate(&list, &weights).map_err(err)?;
                let combined: Vec<f64> =
                    list.entries.iter().map(|e| weights.iter().map(|(s, w)| w * e.scores[s]).sum()).collect();
                let best = combined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let first = combined.iter().position(|&v| v == best).unwrap();
                ensure(choice.index == first, || {
                    format!("trial {trial} {weights:?}: picked {} not {first}", choice.index)
                })?;
                checked += 1;
            }
        }
        let single = BTreeMap::from([("B".to_string(), 1.0)]);
        let by_b = nbest_interpolate(&list, &single).map_err(err)?;
        let best_b = list.entries.iter().map(|e| e.scores["B"]).fold(f64::NEG_INFINITY, f64::max);
        ensure(by_b.score == best_b, || "w=1 interpolation is not the single system's best".into())?;

        let y_scores: HashMap<Vec<String>, f64> =
            list.entries.iter().map(|e| (e.words.clone(), e.scores["C"])).collect();
        let scorer = |_: &str, words: &[String]| Ok(y_scores[words]);
        for &w in &grid {
            let out = two_pass_rescore(&list, "A", &scorer, "Y", w).map_err(err)?;
            let key = "A->Y";
            let mut expected: Vec<(Vec<String>, f64)> =
                list.entries.iter().map(|e| (e.words.clone(), w * e.scores["A"] + (1.0 - w) * e.scores["C"])).collect();
            // Stable sort keeps equal scores in input order.
            expected.sort_by(|a, b| b.1.total_cmp(&a.1));
            let got: Vec<(Vec<String>, f64)> = out.entries.iter().map(|e| (e.words.clone(), e.scores[key])).collect();
            ensure(got == expected, || format!("trial {trial} w={w}: rescored list differs"))?;
            if w == 1.0 {
                ensure(out.entries.iter().all(|e| e.scores[key] == e.scores["A"]), || "w=1 is not system X".into())?;
            }
            if w == 0.0 {
                ensure(out.entries.iter().all(|e| e.scores[key] == e.scores["Y"]), || "w=0 is not system Y".into())?;
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} combinations match the exhaustive oracle; w=1 and w=0 exact"))
}

fn record(id: String, speaker: &str, ty: SpeakerType, block: Block, severity: Severity) -> ManifestRecord {
    ManifestRecord {
        audio_path: format!("{id}.wav"),
        utt_id: id,
        speaker_id: speaker.into(),
        speaker_type: ty,
        block,
        word_id: "w".into(),
        transcript: vec!["w".into()],
        severity,
        provenance: None,
    }
}

fn expansion() -> Result<String, String> {
    // Control and dysarthric speakers over three blocks, with uneven sizes so
    // every subset count is distinct.
    let mut manifest = Vec::new();
    let speakers = [
        ("C01", SpeakerType::Control, Severity::None),
        ("C02", SpeakerType::Control, Severity::None),
        ("D01", SpeakerType::Dysarthric, Severity::VL),
        ("D02", SpeakerType::Dysarthric, Severity::M),
    ];
    for (s, (spk, ty, sev)) in speakers.iter().enumerate() {
        for (b, block) in [Block::B1, Block::B2, Block::B3].into_iter().enumerate() {
            for i in 0..(3 + 2 * s + b) {
                manifest.push(record(format!("{spk}_{block:?}_{i}"), spk, *ty, block, *sev));
            }
        }
    }
    let sel = |ty, blocks: &[Block]| SubsetSelector { speaker_type: ty, blocks: blocks.iter().copied().collect() };
    let d = |subset, method, multiplier, target: Option<&str>| Directive {
        subset,
        method,
        multiplier,
        target: target.map(Into::into),
    };
    let b13 = [Block::B1, Block::B3];
    // Control B1&3 and B2 at 2x and 5x with each generator, plus speed-only
    // copies of the dysarthric training data.
    let plan = AugPlan {
        directives: vec![
            d(sel(SpeakerType::Control, &b13), Method::SpeedGan, 2, Some("D01")),
            d(sel(SpeakerType::Control, &[Block::B2]), Method::SpeedGan, 5, Some("D01")),
            d(sel(SpeakerType::Control, &b13), Method::SpectralBasisGan, 5, Some("D02")),
            d(sel(SpeakerType::Control, &[Block::B2]), Method::SpectralBasisGan, 2, Some("D02")),
            d(sel(SpeakerType::Control, &b13), Method::SpeedSd, 2, Some("D02")),
            d(sel(SpeakerType::Dysarthric, &b13), Method::SpeedSi, 2, None),
            d(sel(SpeakerType::Dysarthric, &[Block::B2]), Method::SpeedSi, 1, None),
        ],
    };
    let factors = BTreeMap::from([("D01".to_string(), 0.6), ("D02".to_string(), 0.8)]);
    let jobs = plan_expansion(&manifest, &plan, &factors, 7).map_err(err)?;

    // Independent recount: subset sizes straight from the manifest.
    let mut expected = 0;
    for dir in &plan.directives {
        let n = manifest
            .iter()
            .filter(|r| r.speaker_type == dir.subset.speaker_type && dir.subset.blocks.contains(&r.block))
            .count();
        let emitted = jobs.iter().filter(|j| {
            j.method == dir.method && j.target == dir.target && {
                let r = manifest.iter().find(|r| r.utt_id == j.source_utt).unwrap();
                dir.subset.speaker_type == r.speaker_type && dir.subset.blocks.contains(&r.block)
            }
        });
        let emitted = emitted.count();
        ensure(emitted == n * dir.multiplier, || {
            format!("{:?}: {emitted} jobs, expected {}", dir.method, n * dir.multiplier)
        })?;
        expected += n * dir.multiplier;
    }
    ensure(jobs.len() == expected, || format!("{} jobs, formula gives {expected}", jobs.len()))?;
    let mut ids: Vec<&str> = jobs.iter().map(|j| j.job_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    ensure(ids.len() == jobs.len(), || "job ids are not unique".into())?;

    // The two small examples: 10 utterances at 2x and 7 at 1x.
    let ten: Vec<_> =
        (0..10).map(|i| record(format!("d{i}"), "D01", SpeakerType::Dysarthric, Block::B1, Severity::L)).collect();
    let si = AugPlan { directives: vec![d(sel(SpeakerType::Dysarthric, &b13), Method::SpeedSi, 2, None)] };
    let n10 = plan_expansion(&ten, &si, &factors, 0).map_err(err)?.len();
    ensure(n10 == 20, || format!("10 utterances at 2x gave {n10} jobs"))?;
    let one = AugPlan { directives: vec![d(sel(SpeakerType::Dysarthric, &b13), Method::SpeedSi, 1, None)] };
    let n7 = plan_expansion(&ten[..7], &one, &factors, 0).map_err(err)?.len();
    ensure(n7 == 7, || format!("7 utterances at 1x gave {n7} jobs"))?;
    Ok(format!("{} jobs over {} directives match the subset-size formula", jobs.len(), plan.directives.len()))
}

fn main() {
    let criteria: [(u32, &str, Check, Option<Duration>); 10] = [
        (1, "gradient correctness", gradients, Some(Duration::from_secs(30))),
        (2, "CTC oracle equivalence", ctc_oracle, Some(Duration::from_secs(10))),
        (3, "signal chain", signal_chain, Some(Duration::from_secs(10))),
        (4, "SVD", svd, None),
        (5, "minimax fixed point", minimax_fixed_point, None),
        (6, "DCGAN toy convergence", dcgan_toy, Some(Duration::from_secs(300))),
        (7, "SBGAN toy convergence", sbgan_toy, Some(Duration::from_secs(300))),
        (8, "utility experiment", utility, Some(Duration::from_secs(1800))),
        (9, "N-best combination", combination, None),
        (10, "expansion bookkeeping", expansion, None),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut out = std::io::stdout();
    for (n, name, check, limit) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let t0 = Instant::now();
        let result = check();
        let elapsed = t0.elapsed();
        let result = match (result, limit) {
            (Ok(msg), Some(l)) if elapsed > l => Err(format!("{msg}; took {elapsed:.1?}, limit {l:?}")),
            (r, _) => r,
        };
        let (status, msg) = match result {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        writeln!(out, "criterion {n:2} {status}  {name}: {msg} ({elapsed:.1?})").unwrap();
        out.flush().unwrap();
    }
    if failed > 0 {
        writeln!(out, "{failed} criteria failed").unwrap();
        std::process::exit(1);
    }
}
