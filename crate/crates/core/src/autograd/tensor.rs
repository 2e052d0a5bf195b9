use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{AutogradError, Result};

/// Dense row-major `f64` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(AutogradError::Shape(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Self { shape, data, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; n], requires_grad: false, grad: None }
    }

    pub fn scalar(v: f64) -> Self {
        Self { shape: vec![1], data: vec![v], requires_grad: false, grad: None }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(AutogradError::Shape(format!(
                "gradient of length {} for tensor of shape {:?}",
                g.len(),
                self.shape
            )));
        }
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }
}

/// Named trainable tensors of one model, in a fixed order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a trainable tensor and returns its index.
    pub fn push(&mut self, name: impl Into<String>, mut t: Tensor) -> usize {
        t.requires_grad = true;
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    /// Kaiming-uniform weights, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn push_uniform<R: Rng>(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut R) -> usize {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        self.push(name, Tensor { shape: shape.to_vec(), data, requires_grad: true, grad: None })
    }

    /// `N(0, std^2)` weights, the usual DCGAN initialisation.
    pub fn push_normal<R: Rng>(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut R) -> usize {
        let dist = Normal::new(0.0, std).expect("valid std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| dist.sample(rng)).collect();
        self.push(name, Tensor { shape: shape.to_vec(), data, requires_grad: true, grad: None })
    }

    pub fn push_zeros(&mut self, name: &str, shape: &[usize]) -> usize {
        self.push(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Replaces tensor values from `(name, tensor)` records, checking that
    /// names and shapes line up with this set.
    pub fn load(&mut self, records: &[(String, Tensor)]) -> Result<()> {
        if records.len() != self.len() {
            return Err(AutogradError::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.len(),
                records.len()
            )));
        }
        for ((name, t), (rname, rt)) in self.names.iter().zip(self.tensors.iter_mut()).zip(records) {
            if name != rname || t.shape != rt.shape {
                return Err(AutogradError::Checkpoint(format!(
                    "parameter {rname} {:?} does not match {name} {:?}",
                    rt.shape, t.shape
                )));
            }
            t.data.clone_from(&rt.data);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn grads_accumulate() {
        let mut t = Tensor::zeros(&[2]);
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        t.accumulate_grad(&[0.5, 0.5]).unwrap();
        assert_eq!(t.grad.as_deref(), Some(&[1.5, 2.5][..]));
        assert!(t.accumulate_grad(&[1.0]).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let mk = || {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
            let mut ps = ParamSet::new();
            ps.push_uniform("w", &[4, 4], 4, &mut rng);
            ps
        };
        assert_eq!(mk(), mk());
        assert!(mk().get(0).data.iter().all(|v| v.abs() <= 0.5));
    }
}
