use std::io::Write;
use std::path::Path;

use super::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub d_acc: f64,
}

/// Per-epoch means of the discriminator loss, generator loss and
/// discriminator accuracy.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,d_loss,g_loss,d_acc\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{},{}\n", e.epoch, e.d_loss, e.g_loss, e.d_acc));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Running sums over the batches of one epoch.
#[derive(Debug, Default)]
pub(crate) struct EpochAccumulator {
    d_loss: f64,
    g_loss: f64,
    correct: usize,
    judged: usize,
    batches: usize,
}

impl EpochAccumulator {
    pub fn add(&mut self, d_loss: f64, g_loss: f64, correct: usize, judged: usize) {
        self.d_loss += d_loss;
        self.g_loss += g_loss;
        self.correct += correct;
        self.judged += judged;
        self.batches += 1;
    }

    pub fn finish(self, epoch: usize) -> EpochStats {
        let b = self.batches.max(1) as f64;
        EpochStats {
            epoch,
            d_loss: self.d_loss / b,
            g_loss: self.g_loss / b,
            d_acc: self.correct as f64 / self.judged.max(1) as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut acc = EpochAccumulator::default();
        acc.add(1.0, 2.0, 3, 4);
        acc.add(3.0, 4.0, 1, 4);
        let h = TrainHistory { epochs: vec![acc.finish(1)] };
        assert_eq!(h.to_csv(), "epoch,d_loss,g_loss,d_acc\n1,2,3,0.5\n");
    }
}
