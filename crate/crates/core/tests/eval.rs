use std::collections::BTreeMap;

use dysaug::align::Severity;
use dysaug::autograd::{Tape, Tensor};
use dysaug::eval::{
    ctc_loss, edit_counts, mtl_loss_on_tape, severity_loss, two_pass_rescore, wer, EvalError, NBestEntry, NBestList,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const T: usize = 6;
const C: usize = 4;

fn log_softmax_rows(x: &[f64]) -> Vec<f64> {
    x.chunks(C)
        .flat_map(|row| {
            let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
            row.iter().map(move |v| v - lse).collect::<Vec<_>>()
        })
        .collect()
}

fn column_means(x: &[f64]) -> Vec<f64> {
    (0..C).map(|c| (0..T).map(|t| x[t * C + c]).sum::<f64>() / T as f64).collect()
}

#[test]
fn multitask_gradient_is_weighted_sum_of_task_gradients() {
    // One set of logits feeds both heads: CTC over frames and severity over
    // the time-averaged logits.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..T * C).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels = [1, 2, 2];
    let sev = Severity::M;
    let (beta1, beta2) = (0.7, 1.9);

    let mut tape = Tape::new();
    let xv = tape.leaf(&Tensor::new(vec![T, C], x.clone()).unwrap().with_grad());
    let lp = tape.log_softmax(xv).unwrap();
    let l_ctc = dysaug::eval::ctc_loss_on_tape(&mut tape, lp, &labels).unwrap();
    let pooled = tape.mean_axis(xv, 0).unwrap();
    let pooled = tape.reshape(pooled, &[1, C]).unwrap();
    let l_seve = tape.cross_entropy(pooled, &[sev.class_index().unwrap()]).unwrap();
    let loss = mtl_loss_on_tape(&mut tape, l_ctc, l_seve, beta1, beta2).unwrap();
    let grads = tape.backward(loss).unwrap();
    let g = grads.get(xv).unwrap();

    let f_ctc = |x: &[f64]| ctc_loss(&log_softmax_rows(x), T, C, &labels).unwrap();
    let f_seve = |x: &[f64]| severity_loss(&column_means(x), sev).unwrap();
    let h = 1e-6;
    for i in 0..x.len() {
        let (mut up, mut dn) = (x.clone(), x.clone());
        up[i] += h;
        dn[i] -= h;
        let d_ctc = (f_ctc(&up) - f_ctc(&dn)) / (2.0 * h);
        let d_seve = (f_seve(&up) - f_seve(&dn)) / (2.0 * h);
        let expected = beta1 * d_ctc + beta2 * d_seve;
        assert!((g[i] - expected).abs() < 1e-7, "entry {i}: {} vs {expected}", g[i]);
    }
}

/// Edit distance by memoised recursion over suffixes.
fn levenshtein(a: &[u8], b: &[u8]) -> usize {
    fn go(a: &[u8], b: &[u8], memo: &mut BTreeMap<(usize, usize), usize>) -> usize {
        if a.is_empty() || b.is_empty() {
            return a.len() + b.len();
        }
        if let Some(&v) = memo.get(&(a.len(), b.len())) {
            return v;
        }
        let sub = go(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]);
        let v = sub.min(go(&a[1..], b, memo) + 1).min(go(a, &b[1..], memo) + 1);
        memo.insert((a.len(), b.len()), v);
        v
    }
    go(a, b, &mut BTreeMap::new())
}

#[test]
fn wer_matches_recursive_edit_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let r: Vec<u8> = (0..rng.random_range(1..10)).map(|_| rng.random_range(0..4)).collect();
        let h: Vec<u8> = (0..rng.random_range(0..10)).map(|_| rng.random_range(0..4)).collect();
        let dist = levenshtein(&r, &h);
        let counts = edit_counts(&r, &h);
        assert_eq!(counts.errors(), dist, "{r:?} {h:?}");
        assert!((wer(&r, &h).unwrap() - 100.0 * dist as f64 / r.len() as f64).abs() < 1e-12);
    }
}

#[test]
fn half_weight_rescoring_of_four_entries() {
    let entry = |w: &str, x: f64| NBestEntry { words: vec![w.into()], scores: [("x".to_string(), x)].into() };
    let list = NBestList {
        utt_id: "u".into(),
        entries: vec![entry("a", -1.0), entry("b", -2.0), entry("c", -3.0), entry("d", -4.0)],
    };
    let y: BTreeMap<&str, f64> = [("a", -6.0), ("b", -1.0), ("c", -1.5), ("d", -0.5)].into();
    let scorer = |_: &str, w: &[String]| -> Result<f64, EvalError> { Ok(y[w[0].as_str()]) };
    let out = two_pass_rescore(&list, "x", &scorer, "y", 0.5).unwrap();
    // Combined: a -3.5, b -1.5, c -2.25, d -2.25; c keeps its place before d.
    let order: Vec<&str> = out.entries.iter().map(|e| e.words[0].as_str()).collect();
    assert_eq!(order, ["b", "c", "d", "a"]);
    let combined: Vec<f64> = out.entries.iter().map(|e| e.scores["x->y"]).collect();
    assert_eq!(combined, [-1.5, -2.25, -2.25, -3.5]);
}

#[test]
fn severity_loss_is_negative_log_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let z: Vec<f64> = (0..4).map(|_| rng.random_range(-20.0..20.0)).collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for (k, &s) in Severity::GRADED.iter().enumerate() {
            let expected = lse - z[k];
            assert!((severity_loss(&z, s).unwrap() - expected).abs() < 1e-12);
        }
    }
    assert!(severity_loss(&[0.0; 4], Severity::None).is_err());
}
