use rand::Rng;

use super::{Conv2dOptions, ParamSet, Result, Tape, Var};

/// Records every tensor of `params` on `tape`, as differentiable leaves when
/// `trainable`, otherwise as constants. The returned vars are indexed like
/// the set.
pub fn bind(tape: &mut Tape, params: &ParamSet, trainable: bool) -> Vec<Var> {
    params.tensors().iter().map(|t| if trainable { tape.leaf(t) } else { tape.frozen(t) }).collect()
}

/// Fully connected layer, `y = x W^T + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let weight = ps.push_uniform(&format!("{name}.weight"), &[out_dim, in_dim], in_dim, rng);
        let bias = ps.push_uniform(&format!("{name}.bias"), &[out_dim], in_dim, rng);
        Self { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        tape.linear(x, vars[self.weight], Some(vars[self.bias]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub kernel: usize,
    pub bias: usize,
    pub opts: Conv2dOptions,
}

impl Conv2d {
    pub fn new<R: Rng>(
        ps: &mut ParamSet,
        name: &str,
        in_c: usize,
        out_c: usize,
        size: (usize, usize),
        opts: Conv2dOptions,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_c * size.0 * size.1;
        let kernel = ps.push_uniform(&format!("{name}.kernel"), &[out_c, in_c, size.0, size.1], fan_in, rng);
        let bias = ps.push_uniform(&format!("{name}.bias"), &[out_c], fan_in, rng);
        Self { kernel, bias, opts }
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        tape.conv2d(x, vars[self.kernel], Some(vars[self.bias]), self.opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::{PaddingMode, Tensor};
    use rand::SeedableRng;

    #[test]
    fn frozen_binding_blocks_gradients() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamSet::new();
        let lin = Linear::new(&mut ps, "fc", 3, 2, &mut rng);
        for trainable in [true, false] {
            let mut tape = Tape::new();
            let vars = bind(&mut tape, &ps, trainable);
            let x = tape.leaf(&Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap().with_grad());
            let y = lin.forward(&mut tape, &vars, x).unwrap();
            let s = tape.sum(y).unwrap();
            let g = tape.backward(s).unwrap();
            assert_eq!(g.get(vars[lin.weight]).is_some(), trainable);
            assert!(g.get(x).is_some());
        }
    }

    #[test]
    fn conv_layer_shapes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamSet::new();
        let c = Conv2d::new(&mut ps, "c", 1, 8, (3, 3), Conv2dOptions::same((3, 3), PaddingMode::Replicate), &mut rng);
        assert_eq!(ps.get(c.kernel).shape, vec![8, 1, 3, 3]);
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &ps, true);
        let x = tape.constant(&[2, 1, 7, 5], vec![0.5; 70]).unwrap();
        let y = c.forward(&mut tape, &vars, x).unwrap();
        assert_eq!(tape.shape(y), &[2, 8, 7, 5]);
    }
}
