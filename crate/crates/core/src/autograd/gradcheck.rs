use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AutogradError, Conv2dOptions, PaddingMode, Result, Tape, Tensor, Var};

pub const FD_EPS: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-4;

/// Which coordinates a gradient check perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probes {
    All,
    /// `count` distinct coordinates chosen by a seeded generator, or all of
    /// them when there are fewer.
    Random {
        count: usize,
        seed: u64,
    },
}

impl Probes {
    fn select(self, n: usize) -> Vec<usize> {
        match self {
            Probes::Random { count, seed } if count < n => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut idx = rand::seq::index::sample(&mut rng, n, count).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..n).collect(),
        }
    }
}

/// Compares `analytic` against central differences of `f` around `point` and
/// returns the largest `|a - fd| / max(|a|, |fd|, 1e-12)` over the probes.
pub fn check_gradient<F>(mut f: F, point: &[f64], analytic: &[f64], eps: f64, probes: Probes) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(AutogradError::InvalidHyper(format!("finite-difference step must be positive, got {eps}")));
    }
    if point.len() != analytic.len() {
        return Err(AutogradError::Shape(format!("{} coordinates, {} gradient entries", point.len(), analytic.len())));
    }
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for i in probes.select(point.len()) {
        x[i] = point[i] + eps;
        let up = f(&x)?;
        x[i] = point[i] - eps;
        let down = f(&x)?;
        x[i] = point[i];
        let fd = (up - down) / (2.0 * eps);
        let a = analytic[i];
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-12));
    }
    Ok(worst)
}

fn record(tape: &mut Tape, params: &[Tensor]) -> Vec<Var> {
    params.iter().map(|p| tape.leaf(&p.clone().with_grad())).collect()
}

/// Checks the tape gradient of the scalar `f(params)` against central
/// differences; returns the maximum relative error over the probes.
pub fn finite_diff_check<F>(f: F, params: &[Tensor], eps: f64, probes: Probes) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = record(&mut tape, params);
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let mut point = Vec::new();
    let mut analytic = Vec::new();
    for (p, v) in params.iter().zip(&vars) {
        point.extend_from_slice(&p.data);
        match grads.get(*v) {
            Some(g) => analytic.extend_from_slice(g),
            None => analytic.extend(std::iter::repeat_n(0.0, p.numel())),
        }
    }
    let value = |flat: &[f64]| -> Result<f64> {
        let mut offset = 0;
        let moved: Vec<Tensor> = params
            .iter()
            .map(|p| {
                let t = Tensor::new(p.shape.clone(), flat[offset..offset + p.numel()].to_vec());
                offset += p.numel();
                t
            })
            .collect::<Result<_>>()?;
        let mut tape = Tape::new();
        let vars = record(&mut tape, &moved);
        let out = f(&mut tape, &vars)?;
        if tape.value(out).len() != 1 {
            return Err(AutogradError::NonScalar(tape.shape(out).to_vec()));
        }
        Ok(tape.scalar(out))
    };
    check_gradient(value, &point, &analytic, eps, probes)
}

/// Outcome of one entry of [`gradcheck_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct OpCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub probes: usize,
    pub passed: bool,
}

type CaseFn = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

/// Reduces `y` to a scalar with fixed, uneven weights so that every output
/// element contributes a distinct gradient.
fn weigh(tape: &mut Tape, y: Var) -> Result<Var> {
    let n = tape.value(y).len();
    let w = (0..n).map(|i| (0.7548 * i as f64 + 0.3).sin() + 0.2).collect();
    let c = tape.constant(tape.shape(y).to_vec().as_slice(), w)?;
    let p = tape.mul(y, c)?;
    tape.sum(p)
}

/// Values with magnitude in [0.2, 1], away from activation kinks.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f64 = rng.random_range(0.2..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("consistent shape")
}

fn unary(name: &str, op: fn(&mut Tape, Var) -> Result<Var>) -> (String, Vec<Vec<usize>>, CaseFn) {
    (
        name.into(),
        vec![vec![4, 6]],
        Box::new(move |t, v| {
            let y = op(t, v[0])?;
            weigh(t, y)
        }),
    )
}

fn binary(name: &str, op: fn(&mut Tape, Var, Var) -> Result<Var>) -> (String, Vec<Vec<usize>>, CaseFn) {
    (
        name.into(),
        vec![vec![3, 4], vec![3, 4]],
        Box::new(move |t, v| {
            let y = op(t, v[0], v[1])?;
            weigh(t, y)
        }),
    )
}

fn cases() -> Vec<(String, Vec<Vec<usize>>, CaseFn)> {
    let same = |mode| Conv2dOptions::same((3, 3), mode);
    vec![
        (
            "linear".into(),
            vec![vec![3, 4], vec![5, 4], vec![5]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.linear(v[0], v[1], Some(v[2]))?;
                weigh(t, y)
            }) as CaseFn,
        ),
        (
            "conv2d_zero".into(),
            vec![vec![2, 2, 5, 4], vec![3, 2, 3, 3], vec![3]],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let y = t.conv2d(v[0], v[1], Some(v[2]), same(PaddingMode::Zero))?;
                weigh(t, y)
            }),
        ),
        (
            "conv2d_replicate".into(),
            vec![vec![1, 2, 5, 5], vec![2, 2, 3, 3], vec![2]],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let y = t.conv2d(v[0], v[1], Some(v[2]), same(PaddingMode::Replicate))?;
                weigh(t, y)
            }),
        ),
        (
            "conv2d_stride2x2".into(),
            vec![vec![2, 2, 6, 4], vec![3, 2, 2, 2], vec![3]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.conv2d(v[0], v[1], Some(v[2]), Conv2dOptions::patches((2, 2)))?;
                weigh(t, y)
            }),
        ),
        (
            "conv2d_stride1x2".into(),
            vec![vec![1, 2, 5, 6], vec![2, 2, 3, 3], vec![2]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let opts = Conv2dOptions { stride: (1, 2), padding: (1, 1), mode: PaddingMode::Zero };
                let y = t.conv2d(v[0], v[1], Some(v[2]), opts)?;
                weigh(t, y)
            }),
        ),
        unary("relu", Tape::relu),
        (
            "leaky_relu".into(),
            vec![vec![4, 6]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.leaky_relu(v[0], 0.2)?;
                weigh(t, y)
            }),
        ),
        unary("tanh", Tape::tanh),
        unary("sigmoid", Tape::sigmoid),
        unary("abs", Tape::abs),
        unary("flatten", |t, x| {
            let r = t.reshape(x, &[2, 3, 2, 2])?;
            t.flatten(r)
        }),
        unary("transpose", Tape::transpose),
        unary("scale", |t, x| t.scale(x, -1.7)),
        unary("add_scalar", |t, x| t.add_scalar(x, 0.4)),
        unary("log_softmax", Tape::log_softmax),
        unary("mean_axis", |t, x| {
            let r = t.reshape(x, &[2, 3, 4])?;
            t.mean_axis(r, 1)
        }),
        unary("pad_zero2d", |t, x| {
            let r = t.reshape(x, &[1, 2, 3, 4])?;
            t.pad_zero2d(r, 1, 1)
        }),
        ("sum".into(), vec![vec![24]], Box::new(|t: &mut Tape, v: &[Var]| t.sum(v[0]))),
        ("mean".into(), vec![vec![24]], Box::new(|t: &mut Tape, v: &[Var]| t.mean(v[0]))),
        binary("add", Tape::add),
        binary("sub", Tape::sub),
        binary("mul", Tape::mul),
        (
            "matmul".into(),
            vec![vec![3, 4], vec![4, 5]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.matmul(v[0], v[1])?;
                weigh(t, y)
            }),
        ),
        (
            "bce_with_logits".into(),
            vec![vec![24]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let target: Vec<f64> = (0..24).map(|i| [0.0, 1.0, 0.3][i % 3]).collect();
                t.bce_with_logits(v[0], &target)
            }),
        ),
        (
            "cross_entropy".into(),
            vec![vec![6, 4]],
            Box::new(|t: &mut Tape, v: &[Var]| t.cross_entropy(v[0], &[0, 3, 1, 1, 2, 0])),
        ),
        (
            "ctc_loss".into(),
            vec![vec![6, 4]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let lp = t.log_softmax(v[0])?;
                crate::eval::ctc_loss_on_tape(t, lp, &[1, 2, 2]).map_err(|e| AutogradError::Shape(e.to_string()))
            }),
        ),
        (
            "conv_net4".into(),
            vec![
                vec![1, 1, 6, 5],
                vec![3, 1, 3, 3],
                vec![3],
                vec![3, 3, 3, 3],
                vec![3],
                vec![3, 3, 3, 3],
                vec![3],
                vec![1, 3, 3, 3],
                vec![1],
            ],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let mut h = v[0];
                for layer in 0..4 {
                    h = t.conv2d(h, v[1 + 2 * layer], Some(v[2 + 2 * layer]), same(PaddingMode::Replicate))?;
                    if layer < 3 {
                        h = t.tanh(h)?;
                    }
                }
                weigh(t, h)
            }),
        ),
    ]
}

/// Minimum number of coordinates probed per op by [`gradcheck_suite`].
pub const SUITE_PROBES: usize = 24;

/// Finite-difference check of every differentiable op on seeded random
/// inputs, each with at least [`SUITE_PROBES`] probes.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<OpCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (i, (name, shapes, f)) in cases().into_iter().enumerate() {
        let params: Vec<Tensor> = shapes.iter().map(|s| away_from_zero(&mut rng, s)).collect();
        let total: usize = params.iter().map(Tensor::numel).sum();
        let probes = Probes::Random { count: SUITE_PROBES, seed: seed ^ (i as u64 + 1) };
        let err = finite_diff_check(f, &params, FD_EPS, probes)?;
        out.push(OpCheck { name, max_rel_error: err, probes: total.min(SUITE_PROBES), passed: err <= GRAD_TOLERANCE });
    }
    Ok(out)
}
