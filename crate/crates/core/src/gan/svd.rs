use nalgebra::{DMatrix, DVector};

use super::{GanError, Result};

/// Truncated SVD `U diag(S) V^T` of an `F x T` magnitude matrix. Columns of
/// `u` are spectral bases, columns of `v` temporal bases.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SpectralBasis {
    pub fn k(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.recompose(&self.u)
    }

    /// `u diag(S) V^T` for replacement spectral bases `u`.
    pub fn recompose(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        let mut us = u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= self.s[j];
        }
        us * self.v.transpose()
    }

    /// Reconstruction from `U + delta_u`.
    pub fn recompose_perturbed(&self, delta_u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if delta_u.shape() != self.u.shape() {
            return Err(GanError::Shape(format!("perturbation {:?} for bases {:?}", delta_u.shape(), self.u.shape())));
        }
        Ok(self.recompose(&(&self.u + delta_u)))
    }

    /// Mean Euclidean norm of the spectral basis vectors.
    pub fn mean_column_norm(&self) -> f64 {
        self.u.column_iter().map(|c| c.norm()).sum::<f64>() / self.k() as f64
    }
}

/// Best rank-`k` approximation of `mag` in Frobenius norm. Singular values
/// are sorted descending and each spectral basis is signed so that its
/// entries sum to a non-negative value.
pub fn svd_bases(mag: &DMatrix<f64>, k: usize) -> Result<SpectralBasis> {
    let (f, t) = mag.shape();
    let max = f.min(t);
    if k == 0 || k > max {
        return Err(GanError::KOutOfRange { k, max });
    }
    let svd = mag.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("requested U"), svd.v_t.expect("requested V^T"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut bu = DMatrix::zeros(f, k);
    let mut bv = DMatrix::zeros(t, k);
    let mut bs = DVector::zeros(k);
    for (j, &src) in order.iter().take(k).enumerate() {
        let sign = if u.column(src).sum() < 0.0 { -1.0 } else { 1.0 };
        bu.set_column(j, &(u.column(src) * sign));
        bv.set_column(j, &(vt.row(src).transpose() * sign));
        bs[j] = svd.singular_values[src];
    }
    Ok(SpectralBasis { u: bu, s: bs, v: bv })
}
