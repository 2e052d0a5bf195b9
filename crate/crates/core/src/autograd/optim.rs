use super::{AutogradError, Result, Tensor};

fn check_lr(lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(AutogradError::InvalidHyper(format!("learning rate must be positive, got {lr}")));
    }
    Ok(())
}

/// `p -= lr * grad` for every tensor holding a gradient.
pub fn sgd_step(params: &mut [Tensor], lr: f64) -> Result<()> {
    check_lr(lr)?;
    for p in params.iter_mut() {
        let Some(g) = &p.grad else { continue };
        if g.len() != p.data.len() {
            return Err(AutogradError::Shape(format!("gradient of length {} for shape {:?}", g.len(), p.shape)));
        }
        p.data.iter_mut().zip(g).for_each(|(v, g)| *v -= lr * g);
    }
    Ok(())
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Result<Self> {
        check_lr(lr)?;
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2)) {
            return Err(AutogradError::InvalidHyper(format!("moment decays must lie in [0, 1), got {beta1}, {beta2}")));
        }
        Ok(Self { lr, beta1, beta2, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() })
    }

    /// lr 2e-4, decays (0.5, 0.999).
    pub fn gan_default() -> Self {
        Self::new(2e-4, 0.5, 0.999).expect("valid defaults")
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Updates every tensor from its accumulated gradient; tensors without a
    /// gradient are treated as having a zero gradient.
    pub fn step(&mut self, params: &mut [Tensor]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(AutogradError::Shape(format!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if m.len() != p.numel() || p.grad.as_ref().is_some_and(|g| g.len() != p.numel()) {
                return Err(AutogradError::Shape(format!("optimizer state does not match tensor {:?}", p.shape)));
            }
            for i in 0..p.numel() {
                let g = p.grad.as_ref().map_or(0.0, |g| g[i]);
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p.data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
