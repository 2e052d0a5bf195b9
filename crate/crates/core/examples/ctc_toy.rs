//! CTC on a hand-made posterior table: full-sum and best-path scores of a
//! few label sequences, the loss gradient, and greedy decoding.

use dysaug::eval::{best_path_log_prob, ctc_loss_and_grad, full_sum_log_prob, greedy_decode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Five frames over blank and two labels.
    let probs = [[0.6, 0.3, 0.1], [0.2, 0.7, 0.1], [0.5, 0.4, 0.1], [0.1, 0.2, 0.7], [0.7, 0.1, 0.2]];
    let (frames, classes) = (probs.len(), 3);
    let lp: Vec<f64> = probs.iter().flatten().map(|p: &f64| p.ln()).collect();
    for labels in [vec![1], vec![1, 2], vec![2, 1], vec![1, 1]] {
        let full = full_sum_log_prob(&lp, frames, classes, &labels)?;
        let best = best_path_log_prob(&lp, frames, classes, &labels)?;
        println!("labels {labels:?}  full-sum {full:8.4}  best path {best:8.4}");
    }
    let (loss, grad) = ctc_loss_and_grad(&lp, frames, classes, &[1, 2])?;
    println!("loss for [1, 2]: {loss:.4}");
    for (t, row) in grad.chunks(classes).enumerate() {
        println!("  frame {t} d/dlogp {:?}", row.iter().map(|g| format!("{g:+.3}")).collect::<Vec<_>>());
    }
    println!("greedy decode: {:?}", greedy_decode(&lp, classes));
    Ok(())
}
