//! Trains the convolutional GAN on pairs whose dysarthric side is the
//! control side shifted by +0.5 and compares held-out L1 against identity.

use dysaug::gan::{dcgan_train, GanTrainConfig};
use dysaug::synth::{mean_l1, shifted_pairs};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let l1_weight: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0.0);
    let train = shifted_pairs(32, 16, 16, 0.5, 1);
    let held_out = shifted_pairs(16, 16, 16, 0.5, 2);
    let cfg = GanTrainConfig { epochs: 200, batch_size: 8, chunk_frames: 16, l1_weight, ..Default::default() };
    let t0 = std::time::Instant::now();
    let model = dcgan_train(&train, &cfg)?;
    for e in model.history.epochs.iter().filter(|e| e.epoch % 20 == 0) {
        println!("epoch {:3}  d_loss {:.4}  g_loss {:.4}  d_acc {:.3}", e.epoch, e.d_loss, e.g_loss, e.d_acc);
    }
    let controls: Vec<_> = held_out.iter().map(|p| p.0.clone()).collect();
    let outputs = model.generator.apply(&controls)?;
    let g_l1 = mean_l1(outputs.into_iter().zip(held_out.iter().map(|p| p.1.clone())));
    let id_l1 = mean_l1(held_out.iter().cloned());
    println!("held-out L1: generator {g_l1:.4}, identity {id_l1:.4} ({:.1?})", t0.elapsed());
    Ok(())
}
