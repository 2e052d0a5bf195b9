use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tape::gemm;
use super::{AutogradError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaddingMode {
    #[default]
    Zero,
    /// Out-of-range reads take the nearest edge value.
    Replicate,
}

impl FromStr for PaddingMode {
    type Err = AutogradError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            "replicate" => Ok(Self::Replicate),
            other => Err(AutogradError::UnknownPadding(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dOptions {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub mode: PaddingMode,
}

impl Conv2dOptions {
    /// Stride 1 with `(k - 1) / 2` padding, which keeps odd-sized inputs'
    /// spatial dimensions.
    pub fn same(kernel: (usize, usize), mode: PaddingMode) -> Self {
        Self { stride: (1, 1), padding: ((kernel.0 - 1) / 2, (kernel.1 - 1) / 2), mode }
    }

    /// No padding; kernel and stride equal.
    pub fn patches(kernel: (usize, usize)) -> Self {
        Self { stride: kernel, padding: (0, 0), mode: PaddingMode::Zero }
    }
}

const OUTSIDE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub n: usize,
    pub in_c: usize,
    pub h: usize,
    pub w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub opts: Conv2dOptions,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    pub fn new(x: &[usize], k: &[usize], opts: Conv2dOptions) -> Result<Self> {
        if x.len() != 4 || k.len() != 4 || x[1] != k[1] {
            return Err(AutogradError::Shape(format!("conv2d input {x:?} with kernel {k:?}")));
        }
        let (sh, sw) = opts.stride;
        let (ph, pw) = opts.padding;
        if sh == 0 || sw == 0 {
            return Err(AutogradError::Shape("conv2d stride must be positive".into()));
        }
        let (h, w, kh, kw) = (x[2], x[3], k[2], k[3]);
        if h + 2 * ph < kh || w + 2 * pw < kw || kh == 0 || kw == 0 {
            return Err(AutogradError::Shape(format!("conv2d kernel {kh}x{kw} larger than padded input {h}x{w}")));
        }
        Ok(Self {
            n: x[0],
            in_c: x[1],
            h,
            w,
            out_c: k[0],
            kh,
            kw,
            opts,
            oh: (h + 2 * ph - kh) / sh + 1,
            ow: (w + 2 * pw - kw) / sw + 1,
        })
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.n, self.out_c, self.oh, self.ow]
    }

    fn rows(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// For each im2col entry, the offset into one input sample or `OUTSIDE`.
    fn gather_index(&self) -> Vec<usize> {
        let (sh, sw) = self.opts.stride;
        let (ph, pw) = self.opts.padding;
        let replicate = self.opts.mode == PaddingMode::Replicate;
        let resolve = |pos: usize, pad: usize, len: usize| -> Option<usize> {
            let i = pos as isize - pad as isize;
            if (0..len as isize).contains(&i) {
                Some(i as usize)
            } else if replicate {
                Some(i.clamp(0, len as isize - 1) as usize)
            } else {
                None
            }
        };
        let mut idx = Vec::with_capacity(self.rows() * self.cols());
        for c in 0..self.in_c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    for oy in 0..self.oh {
                        let iy = resolve(oy * sh + ky, ph, self.h);
                        for ox in 0..self.ow {
                            let ix = resolve(ox * sw + kx, pw, self.w);
                            idx.push(match (iy, ix) {
                                (Some(iy), Some(ix)) => (c * self.h + iy) * self.w + ix,
                                _ => OUTSIDE,
                            });
                        }
                    }
                }
            }
        }
        idx
    }
}

fn im2col(index: &[usize], sample: &[f64], cols: &mut [f64]) {
    for (c, &i) in cols.iter_mut().zip(index) {
        *c = if i == OUTSIDE { 0.0 } else { sample[i] };
    }
}

pub(crate) fn forward(geo: &ConvGeometry, x: &[f64], k: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let (rows, cols_n) = (geo.rows(), geo.cols());
    let in_len = geo.in_c * geo.h * geo.w;
    let out_len = geo.out_c * cols_n;
    let index = geo.gather_index();
    let mut cols = vec![0.0; rows * cols_n];
    let mut out = vec![0.0; geo.n * out_len];
    for s in 0..geo.n {
        im2col(&index, &x[s * in_len..(s + 1) * in_len], &mut cols);
        let o_s = &mut out[s * out_len..(s + 1) * out_len];
        if let Some(b) = bias {
            for (o, dst) in o_s.chunks_mut(cols_n).enumerate() {
                dst.fill(b[o]);
            }
        }
        gemm(geo.out_c, rows, cols_n, k, rows as isize, 1, &cols, cols_n as isize, 1, 1.0, o_s);
    }
    out
}

/// Accumulates input and kernel gradients for upstream gradient `g`.
pub(crate) fn backward(
    geo: &ConvGeometry,
    x: &[f64],
    k: &[f64],
    g: &[f64],
    mut dx: Option<&mut [f64]>,
    mut dk: Option<&mut [f64]>,
) {
    let (rows, cols_n) = (geo.rows(), geo.cols());
    let in_len = geo.in_c * geo.h * geo.w;
    let out_len = geo.out_c * cols_n;
    let index = geo.gather_index();
    let mut cols = vec![0.0; rows * cols_n];
    let mut dcols = vec![0.0; rows * cols_n];
    for s in 0..geo.n {
        let g_s = &g[s * out_len..(s + 1) * out_len];
        if let Some(dk) = dk.as_deref_mut() {
            im2col(&index, &x[s * in_len..(s + 1) * in_len], &mut cols);
            // dk [out_c, rows] += g_s [out_c, cols_n] * cols^T
            gemm(geo.out_c, cols_n, rows, g_s, cols_n as isize, 1, &cols, 1, cols_n as isize, 1.0, dk);
        }
        if let Some(dx) = dx.as_deref_mut() {
            // dcols [rows, cols_n] = k^T * g_s
            gemm(rows, geo.out_c, cols_n, k, 1, rows as isize, g_s, cols_n as isize, 1, 0.0, &mut dcols);
            let dx_s = &mut dx[s * in_len..(s + 1) * in_len];
            for (&i, &d) in index.iter().zip(&dcols) {
                if i != OUTSIDE {
                    dx_s[i] += d;
                }
            }
        }
    }
}

pub(crate) fn bias_backward(geo: &ConvGeometry, g: &[f64], db: &mut [f64]) {
    let cols_n = geo.cols();
    for (i, chunk) in g.chunks(cols_n).enumerate() {
        db[i % geo.out_c] += chunk.iter().sum::<f64>();
    }
}
