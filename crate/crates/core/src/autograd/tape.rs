//! Reverse-mode tape. Every forward op appends a node holding its output
//! value and whatever it needs for the backward pass; `backward` then walks
//! the nodes once in reverse insertion order, which is a topological order.

use super::conv::{self, ConvGeometry};
use super::{AutogradError, Conv2dOptions, Result, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv2d {
        x: Var,
        k: Var,
        b: Option<Var>,
        geo: ConvGeometry,
    },
    Relu(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Abs(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Matmul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Reshape(Var),
    Transpose {
        x: Var,
        rows: usize,
        cols: usize,
    },
    Sum(Var),
    Mean(Var),
    MeanAxis {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    PadZero2d {
        x: Var,
        bottom: usize,
        right: usize,
    },
    BceWithLogits {
        z: Var,
        target: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        classes: Vec<usize>,
        softmax: Vec<f64>,
    },
    LogSoftmax(Var),
    /// Scalar function of one input whose gradient was computed with the value.
    Custom {
        x: Var,
        grad: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of every `vars[i]` into `params[i].grad`.
    pub fn accumulate_into(&self, vars: &[Var], params: &mut [Tensor]) -> Result<()> {
        if vars.len() != params.len() {
            return Err(AutogradError::Shape(format!("{} vars for {} parameters", vars.len(), params.len())));
        }
        for (v, p) in vars.iter().zip(params.iter_mut()) {
            if let Some(g) = self.get(*v) {
                p.accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor { shape: n.shape.clone(), data: n.value.clone(), requires_grad: false, grad: None }
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Result<Var> {
        debug_assert_eq!(numel(&shape), value.len());
        #[cfg(debug_assertions)]
        if value.iter().any(|v| !v.is_finite()) {
            return Err(AutogradError::NonFinite(
                format!("{op:?}").split([' ', '(', '{']).next().unwrap_or("op").to_string(),
            ));
        }
        self.nodes.push(Node { shape, value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records `t`; it takes part in differentiation iff `t.requires_grad`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.nodes.push(Node {
            shape: t.shape.clone(),
            value: t.data.clone(),
            op: Op::Leaf,
            requires_grad: t.requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape.to_vec(), data)?;
        Ok(self.leaf(&t))
    }

    /// Records `t` as a constant regardless of its `requires_grad` flag.
    pub fn frozen(&mut self, t: &Tensor) -> Var {
        self.nodes.push(Node { shape: t.shape.clone(), value: t.data.clone(), op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let value = self.nodes[x.0].value.iter().map(|&v| f(v)).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.rg(x);
        self.push(shape, value, op, rg)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(AutogradError::Shape(format!("{what}: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let value = self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(a) || self.rg(b);
        self.push(shape, value, op, rg)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.unary(x, Op::LeakyRelu(x, slope), |v| if v > 0.0 { v } else { slope * v })
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Abs(x), f64::abs)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary(x, Op::AddScalar(x), |v| v + c)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(AutogradError::Shape(format!("matmul {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av, k as isize, 1, bv, n as isize, 1, 0.0, &mut out);
        let rg = self.rg(a) || self.rg(b);
        self.push(vec![m, n], out, Op::Matmul { a, b, m, k, n }, rg)
    }

    /// `x [N, in]`, `w [out, in]`, `b [out]` -> `x w^T + b`, shape `[N, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[1] {
            return Err(AutogradError::Shape(format!("linear x {sx:?} with weight {sw:?}")));
        }
        let (n, din, dout) = (sx[0], sx[1], sw[0]);
        if let Some(b) = b {
            if self.shape(b) != [dout] {
                return Err(AutogradError::Shape(format!("linear bias {:?}, expected [{dout}]", self.shape(b))));
            }
        }
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        let mut out = vec![0.0; n * dout];
        gemm(n, din, dout, xv, din as isize, 1, wv, 1, din as isize, 0.0, &mut out);
        if let Some(b) = b {
            let bv = &self.nodes[b.0].value;
            out.chunks_mut(dout).for_each(|row| row.iter_mut().zip(bv).for_each(|(o, c)| *o += c));
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        self.push(vec![n, dout], out, Op::Linear { x, w, b }, rg)
    }

    /// `x [N, C, H, W]`, kernel `[O, C, kh, kw]`, bias `[O]`.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Option<Var>, opts: Conv2dOptions) -> Result<Var> {
        let geo = ConvGeometry::new(self.shape(x), self.shape(k), opts)?;
        if let Some(b) = b {
            if self.shape(b) != [geo.out_c] {
                return Err(AutogradError::Shape(format!("conv bias {:?}, expected [{}]", self.shape(b), geo.out_c)));
            }
        }
        let out = conv::forward(
            &geo,
            &self.nodes[x.0].value,
            &self.nodes[k.0].value,
            b.map(|b| self.nodes[b.0].value.as_slice()),
        );
        let rg = self.rg(x) || self.rg(k) || b.is_some_and(|b| self.rg(b));
        self.push(geo.out_shape(), out, Op::Conv2d { x, k, b, geo }, rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != numel(self.shape(x)) {
            return Err(AutogradError::Shape(format!("cannot reshape {:?} to {shape:?}", self.shape(x))));
        }
        let value = self.nodes[x.0].value.clone();
        let rg = self.rg(x);
        self.push(shape.to_vec(), value, Op::Reshape(x), rg)
    }

    /// `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let n = *s.first().ok_or_else(|| AutogradError::Shape("flatten of a 0-d value".into()))?;
        let rest = numel(&s[1..]);
        self.reshape(x, &[n, rest])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(AutogradError::Shape(format!("transpose needs a matrix, got {s:?}")));
        }
        let (rows, cols) = (s[0], s[1]);
        let xv = &self.nodes[x.0].value;
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = xv[r * cols + c];
            }
        }
        let rg = self.rg(x);
        self.push(vec![cols, rows], out, Op::Transpose { x, rows, cols }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.nodes[x.0].value.iter().sum();
        let rg = self.rg(x);
        self.push(vec![1], vec![s], Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = &self.nodes[x.0].value;
        if v.is_empty() {
            return Err(AutogradError::Shape("mean of an empty tensor".into()));
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(x);
        self.push(vec![1], vec![m], Op::Mean(x), rg)
    }

    /// Mean over one axis, which is removed from the shape.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || s[axis] == 0 {
            return Err(AutogradError::Shape(format!("mean over axis {axis} of {s:?}")));
        }
        let outer = numel(&s[..axis]);
        let len = s[axis];
        let inner = numel(&s[axis + 1..]);
        let xv = &self.nodes[x.0].value;
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for l in 0..len {
                let src = &xv[(o * len + l) * inner..(o * len + l + 1) * inner];
                dst.iter_mut().zip(src).for_each(|(d, v)| *d += v);
            }
            dst.iter_mut().for_each(|d| *d /= len as f64);
        }
        let mut shape = s;
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        let rg = self.rg(x);
        self.push(shape, out, Op::MeanAxis { x, outer, len, inner }, rg)
    }

    /// Zero-pads the last two axes of a 4-d value at the bottom and right.
    pub fn pad_zero2d(&mut self, x: Var, bottom: usize, right: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(AutogradError::Shape(format!("pad_zero2d needs [N, C, H, W], got {s:?}")));
        }
        let (h, w) = (s[2], s[3]);
        let (ho, wo) = (h + bottom, w + right);
        let planes = s[0] * s[1];
        let xv = &self.nodes[x.0].value;
        let mut out = vec![0.0; planes * ho * wo];
        for p in 0..planes {
            for r in 0..h {
                out[(p * ho + r) * wo..(p * ho + r) * wo + w]
                    .copy_from_slice(&xv[(p * h + r) * w..(p * h + r + 1) * w]);
            }
        }
        let rg = self.rg(x);
        self.push(vec![s[0], s[1], ho, wo], out, Op::PadZero2d { x, bottom, right }, rg)
    }

    /// Mean binary cross-entropy of `sigmoid(z)` against `target`, computed
    /// from the logits for stability.
    pub fn bce_with_logits(&mut self, z: Var, target: &[f64]) -> Result<Var> {
        let zv = &self.nodes[z.0].value;
        if zv.len() != target.len() || zv.is_empty() {
            return Err(AutogradError::Shape(format!("bce: {} logits vs {} targets", zv.len(), target.len())));
        }
        let loss = zv.iter().zip(target).map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()).sum::<f64>()
            / zv.len() as f64;
        let rg = self.rg(z);
        self.push(vec![1], vec![loss], Op::BceWithLogits { z, target: target.to_vec() }, rg)
    }

    /// Row-wise log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let c = *s.last().ok_or_else(|| AutogradError::Shape("log_softmax of 0-d value".into()))?;
        if c == 0 {
            return Err(AutogradError::Shape("log_softmax over an empty axis".into()));
        }
        let mut out = self.nodes[x.0].value.clone();
        out.chunks_mut(c).for_each(log_softmax_in_place);
        let rg = self.rg(x);
        self.push(s, out, Op::LogSoftmax(x), rg)
    }

    /// Mean cross-entropy of `logits [N, C]` against class indices.
    pub fn cross_entropy(&mut self, logits: Var, classes: &[usize]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != classes.len() || s[0] == 0 {
            return Err(AutogradError::Shape(format!("cross_entropy logits {s:?} with {} labels", classes.len())));
        }
        let c = s[1];
        if let Some(bad) = classes.iter().find(|&&k| k >= c) {
            return Err(AutogradError::Shape(format!("class {bad} out of range for {c} logits")));
        }
        let mut lsm = self.nodes[logits.0].value.clone();
        lsm.chunks_mut(c).for_each(log_softmax_in_place);
        let loss = -classes.iter().enumerate().map(|(i, &k)| lsm[i * c + k]).sum::<f64>() / classes.len() as f64;
        let softmax = lsm.iter().map(|v| v.exp()).collect();
        let rg = self.rg(logits);
        self.push(vec![1], vec![loss], Op::CrossEntropy { logits, classes: classes.to_vec(), softmax }, rg)
    }

    /// Records a scalar `value = f(x)` whose gradient `df/dx` the caller has
    /// already computed.
    pub fn custom_scalar(&mut self, x: Var, value: f64, grad: Vec<f64>) -> Result<Var> {
        if grad.len() != self.nodes[x.0].value.len() {
            return Err(AutogradError::Shape(format!(
                "custom op gradient of length {} for input of {} values",
                grad.len(),
                self.nodes[x.0].value.len()
            )));
        }
        let rg = self.rg(x);
        self.push(vec![1], vec![value], Op::Custom { x, grad }, rg)
    }

    /// Reverse pass from a one-element `loss`. A tape supports one backward
    /// pass; build a new tape for the next forward.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(AutogradError::BackwardTwice);
        }
        if self.nodes.is_empty() {
            return Err(AutogradError::EmptyTape);
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(AutogradError::NonScalar(self.nodes[loss.0].shape.clone()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let val = |v: Var| self.nodes[v.0].value.as_slice();
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let mut send = |v: Var, f: &dyn Fn(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let n = self.nodes[v.0].value.len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Relu(x) => send(*x, &|d| {
                for ((d, &xv), gv) in d.iter_mut().zip(val(*x)).zip(g) {
                    if xv > 0.0 {
                        *d += gv;
                    }
                }
            }),
            Op::LeakyRelu(x, slope) => send(*x, &|d| {
                for ((d, &xv), gv) in d.iter_mut().zip(val(*x)).zip(g) {
                    *d += if xv > 0.0 { *gv } else { slope * gv };
                }
            }),
            Op::Tanh(x) => send(*x, &|d| {
                for ((d, y), gv) in d.iter_mut().zip(&node.value).zip(g) {
                    *d += gv * (1.0 - y * y);
                }
            }),
            Op::Sigmoid(x) => send(*x, &|d| {
                for ((d, y), gv) in d.iter_mut().zip(&node.value).zip(g) {
                    *d += gv * y * (1.0 - y);
                }
            }),
            Op::Abs(x) => send(*x, &|d| {
                for ((d, &xv), gv) in d.iter_mut().zip(val(*x)).zip(g) {
                    *d += gv * xv.signum() * f64::from(xv != 0.0);
                }
            }),
            Op::Scale(x, c) => send(*x, &|d| d.iter_mut().zip(g).for_each(|(d, gv)| *d += c * gv)),
            Op::AddScalar(x) | Op::Reshape(x) => send(*x, &|d| d.iter_mut().zip(g).for_each(|(d, gv)| *d += gv)),
            Op::Add(a, b) => {
                send(*a, &|d| d.iter_mut().zip(g).for_each(|(d, gv)| *d += gv));
                send(*b, &|d| d.iter_mut().zip(g).for_each(|(d, gv)| *d += gv));
            }
            Op::Sub(a, b) => {
                send(*a, &|d| d.iter_mut().zip(g).for_each(|(d, gv)| *d += gv));
                send(*b, &|d| d.iter_mut().zip(g).for_each(|(d, gv)| *d -= gv));
            }
            Op::Mul(a, b) => {
                send(*a, &|d| d.iter_mut().zip(g).zip(val(*b)).for_each(|((d, gv), y)| *d += gv * y));
                send(*b, &|d| d.iter_mut().zip(g).zip(val(*a)).for_each(|((d, gv), x)| *d += gv * x));
            }
            Op::Matmul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                // dA = G B^T
                send(*a, &|d| gemm(m, n, k, g, n as isize, 1, val(*b), 1, n as isize, 1.0, d));
                // dB = A^T G
                send(*b, &|d| gemm(k, m, n, val(*a), 1, k as isize, g, n as isize, 1, 1.0, d));
            }
            Op::Linear { x, w, b } => {
                let (sx, sw) = (&self.nodes[x.0].shape, &self.nodes[w.0].shape);
                let (n, din, dout) = (sx[0], sx[1], sw[0]);
                // dx [n, din] += g [n, dout] * w [dout, din]
                send(*x, &|d| gemm(n, dout, din, g, dout as isize, 1, val(*w), din as isize, 1, 1.0, d));
                // dw [dout, din] += g^T * x
                send(*w, &|d| gemm(dout, n, din, g, 1, dout as isize, val(*x), din as isize, 1, 1.0, d));
                if let Some(b) = b {
                    send(*b, &|d| g.chunks(dout).for_each(|row| d.iter_mut().zip(row).for_each(|(d, gv)| *d += gv)));
                }
            }
            Op::Conv2d { x, k, b, geo } => {
                let need_x = wants(*x);
                let need_k = wants(*k);
                let mut dx = need_x.then(|| vec![0.0; val(*x).len()]);
                let mut dk = need_k.then(|| vec![0.0; val(*k).len()]);
                conv::backward(geo, val(*x), val(*k), g, dx.as_deref_mut(), dk.as_deref_mut());
                if let Some(dx) = dx {
                    send(*x, &|d| d.iter_mut().zip(&dx).for_each(|(d, v)| *d += v));
                }
                if let Some(dk) = dk {
                    send(*k, &|d| d.iter_mut().zip(&dk).for_each(|(d, v)| *d += v));
                }
                if let Some(b) = b {
                    send(*b, &|d| conv::bias_backward(geo, g, d));
                }
            }
            Op::Transpose { x, rows, cols } => send(*x, &|d| {
                for r in 0..*rows {
                    for c in 0..*cols {
                        d[r * cols + c] += g[c * rows + r];
                    }
                }
            }),
            Op::Sum(x) => send(*x, &|d| d.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(x) => {
                let n = val(*x).len() as f64;
                send(*x, &|d| d.iter_mut().for_each(|d| *d += g[0] / n));
            }
            Op::MeanAxis { x, outer, len, inner } => send(*x, &|d| {
                let s = 1.0 / *len as f64;
                for o in 0..*outer {
                    let src = &g[o * inner..(o + 1) * inner];
                    for l in 0..*len {
                        let base = (o * len + l) * inner;
                        d[base..base + inner].iter_mut().zip(src).for_each(|(d, gv)| *d += gv * s);
                    }
                }
            }),
            Op::PadZero2d { x, bottom, right } => send(*x, &|d| {
                let s = &self.nodes[x.0].shape;
                let (h, w) = (s[2], s[3]);
                let (ho, wo) = (h + bottom, w + right);
                for p in 0..s[0] * s[1] {
                    for r in 0..h {
                        d[(p * h + r) * w..(p * h + r + 1) * w]
                            .iter_mut()
                            .zip(&g[(p * ho + r) * wo..(p * ho + r) * wo + w])
                            .for_each(|(d, gv)| *d += gv);
                    }
                }
            }),
            Op::BceWithLogits { z, target } => {
                let n = target.len() as f64;
                send(*z, &|d| {
                    for ((d, &zv), t) in d.iter_mut().zip(val(*z)).zip(target) {
                        *d += g[0] * (sigmoid(zv) - t) / n;
                    }
                });
            }
            Op::LogSoftmax(x) => {
                let c = *node.shape.last().unwrap_or(&1);
                send(*x, &|d| {
                    for ((drow, grow), yrow) in d.chunks_mut(c).zip(g.chunks(c)).zip(node.value.chunks(c)) {
                        let gs: f64 = grow.iter().sum();
                        for ((d, gv), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += gv - y.exp() * gs;
                        }
                    }
                });
            }
            Op::CrossEntropy { logits, classes, softmax } => {
                let c = self.nodes[logits.0].shape[1];
                let n = classes.len() as f64;
                send(*logits, &|d| {
                    for (r, &k) in classes.iter().enumerate() {
                        for j in 0..c {
                            let onehot = f64::from(j == k);
                            d[r * c + j] += g[0] * (softmax[r * c + j] - onehot) / n;
                        }
                    }
                });
            }
            Op::Custom { x, grad } => send(*x, &|d| d.iter_mut().zip(grad).for_each(|(d, gv)| *d += g[0] * gv)),
        }
    }
}

pub fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter_mut().for_each(|v| *v -= lse);
}

#[inline]
/// `c (m x n) = beta * c + a (m x k) * b (k x n)`, all row-major unless
/// the strides say otherwise.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_rs: isize,
    a_cs: isize,
    b: &[f64],
    b_rs: isize,
    b_cs: isize,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: every operand slice covers the extents implied by its
    // dimensions and strides, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_rs,
            a_cs,
            b.as_ptr(),
            b_rs,
            b_cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap().with_grad());
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn sigmoid_slope_at_zero() {
        let mut tape = Tape::new();
        let w = tape.leaf(&Tensor::new(vec![1, 1], vec![0.0]).unwrap().with_grad());
        let x = tape.constant(&[1, 1], vec![1.0]).unwrap();
        let wx = tape.mul(w, x).unwrap();
        let y = tape.sigmoid(wx).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(w).unwrap(), &[0.25]);
    }

    #[test]
    fn leaky_relu_value() {
        let mut tape = Tape::new();
        let x = tape.constant(&[2], vec![-1.0, 2.0]).unwrap();
        let y = tape.leaky_relu(x, 0.2).unwrap();
        assert_eq!(tape.value(y), &[-0.2, 2.0]);
    }

    #[test]
    fn backward_errors() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap().with_grad());
        assert!(matches!(tape.backward(x), Err(AutogradError::NonScalar(_))));
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert!(matches!(tape.backward(s), Err(AutogradError::BackwardTwice)));
        assert!(matches!(Tape::new().backward(Var(0)), Err(AutogradError::EmptyTape)));
    }

    #[test]
    fn shape_errors() {
        let mut tape = Tape::new();
        let a = tape.constant(&[2, 3], vec![0.0; 6]).unwrap();
        let b = tape.constant(&[2, 2], vec![0.0; 4]).unwrap();
        assert!(tape.add(a, b).is_err());
        assert!(tape.matmul(a, b).is_err());
        assert!(tape.matmul(b, a).is_ok());
        assert!(tape.reshape(a, &[5]).is_err());
        assert!(tape.cross_entropy(a, &[0, 3]).is_err());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(&Tensor::new(vec![2], vec![1.0, 2.0]).unwrap().with_grad());
        let c = tape.constant(&[2], vec![3.0, 4.0]).unwrap();
        let p = tape.mul(w, c).unwrap();
        let s = tape.sum(p).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(w).unwrap(), &[3.0, 4.0]);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn mean_axis_shapes() {
        let mut tape = Tape::new();
        let x = tape.constant(&[2, 3, 4], (0..24).map(f64::from).collect()).unwrap();
        let m = tape.mean_axis(x, 1).unwrap();
        assert_eq!(tape.shape(m), &[2, 4]);
        assert_eq!(tape.value(m)[0], 4.0);
        let m2 = tape.mean_axis(x, 2).unwrap();
        assert_eq!(tape.shape(m2), &[2, 3]);
        assert_eq!(tape.value(m2)[0], 1.5);
    }

    #[test]
    fn gemm_matches_naive_with_strides_and_accumulation() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        // b is stored transposed: element (p, j) lives at j * k + p.
        let bt: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut c = vec![1.0; m * n];
        gemm(m, k, n, &a, k as isize, 1, &bt, 1, k as isize, 1.0, &mut c);
        for i in 0..m {
            for j in 0..n {
                let naive: f64 = (0..k).map(|p| a[i * k + p] * bt[j * k + p]).sum::<f64>() + 1.0;
                assert!((c[i * n + j] - naive).abs() < 1e-12);
            }
        }
    }
}
