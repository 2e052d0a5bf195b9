//! Trains the spectral-basis GAN where dysarthric blocks are control blocks
//! with the first basis negated, then scores the discriminator on held-out
//! real dysarthric blocks.

use dysaug::gan::{sbgan_augment, sbgan_train, GanTrainConfig, SbganGenerator, SbganMode};
use dysaug::signal::{Spectrogram, StftParams};
use dysaug::synth::negated_column_blocks;
use nalgebra::DMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(50);
    let (control, dys) = negated_column_blocks(64, 16, 4, 3);
    let (train_c, test_c) = control.split_at(48);
    let (train_d, test_d) = dys.split_at(48);
    let cfg = GanTrainConfig { epochs, k: 4, ..Default::default() };
    let t0 = std::time::Instant::now();
    let model = sbgan_train(train_c, train_d, &cfg)?;
    for e in model.history.epochs.iter().filter(|e| e.epoch % 10 == 0) {
        println!("epoch {:3}  d_loss {:.4}  g_loss {:.4}  d_acc {:.3}", e.epoch, e.d_loss, e.g_loss, e.d_acc);
    }
    let p_real = model.discriminator.probabilities(test_d)?;
    let acc = p_real.iter().filter(|&&p| p > 0.5).count() as f64 / p_real.len() as f64;
    let p_ctrl = model.discriminator.probabilities(test_c)?;
    let ctrl_acc = p_ctrl.iter().filter(|&&p| p < 0.5).count() as f64 / p_ctrl.len() as f64;
    println!("held-out accuracy: dysarthric {acc:.3}, control {ctrl_acc:.3} ({:.1?})", t0.elapsed());

    let m = DMatrix::from_fn(16, 12, |i, j| ((i * 7 + j * 3) % 11) as f64 / 10.0);
    let s = Spectrogram::new(m.clone(), StftParams::default(), 16_000)?;
    let out = sbgan_augment(&SbganGenerator::zero(16, 12, SbganMode::Block), &s, 12, None)?;
    println!("zero-perturbation full-rank error {:.2e}", (out.mag - &m).norm() / m.norm());
    Ok(())
}
