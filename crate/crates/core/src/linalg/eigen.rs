//! Real block-diagonal eigendecomposition `M = Q Λ Q⁻¹` for matrices with
//! distinct eigenvalues.
//!
//! Real eigenvalues come first, ascending; each complex-conjugate pair
//! `a ± bi` (b > 0) contributes one 2×2 block `[[a, -b], [b, a]]` whose two
//! columns in `Q` are the real and imaginary parts of the eigenvector for
//! `a - bi`. Eigenvalues are taken from the real Schur form; eigenvectors are
//! the right singular vectors of `M - λI` for the smallest singular value.

use std::ops::Range;

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use super::{ensure_square, Mat};
use crate::error::{Error, Result};

/// Relative eigenvalue-gap tolerance (times the spectral radius).
pub const DEFAULT_GAP_TOL: f64 = 1e-8;

type CMat = DMatrix<Complex<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EigenBlock {
    Real { lambda: f64 },
    ComplexPair { re: f64, im: f64 },
}

impl EigenBlock {
    pub fn size(&self) -> usize {
        match self {
            EigenBlock::Real { .. } => 1,
            EigenBlock::ComplexPair { .. } => 2,
        }
    }

    fn matrix(&self) -> Mat {
        match *self {
            EigenBlock::Real { lambda } => Mat::from_element(1, 1, lambda),
            EigenBlock::ComplexPair { re, im } => Mat::from_row_slice(2, 2, &[re, -im, im, re]),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RealBlockEigen {
    #[serde(serialize_with = "super::serialize_mat")]
    pub q: Mat,
    #[serde(skip)]
    pub q_inv: Mat,
    pub blocks: Vec<EigenBlock>,
    /// Number of real (1×1) blocks; they precede all complex blocks.
    pub n_real: usize,
}

impl RealBlockEigen {
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Column range of `Q` (and row range of `Q⁻¹`) belonging to block `k`.
    pub fn block_range(&self, k: usize) -> Range<usize> {
        let start: usize = self.blocks[..k].iter().map(EigenBlock::size).sum();
        start..start + self.blocks[k].size()
    }

    /// The block-diagonal `Λ`.
    pub fn lambda(&self) -> Mat {
        let d = self.q.nrows();
        let mut l = Mat::zeros(d, d);
        for (k, b) in self.blocks.iter().enumerate() {
            let r = self.block_range(k);
            l.view_mut((r.start, r.start), (r.len(), r.len()))
                .copy_from(&b.matrix());
        }
        l
    }

    pub fn reassemble(&self) -> Mat {
        &self.q * self.lambda() * &self.q_inv
    }
}

/// Decomposes `m`; fails when two eigenvalues are closer than
/// `gap_tol * spectral_radius`.
pub fn real_block_eigen(m: &Mat, gap_tol: f64) -> Result<RealBlockEigen> {
    let d = ensure_square(m)?;
    if d == 0 {
        return Err(Error::Empty);
    }
    super::ensure_finite(m, "eigen-decomposition input")?;
    let eigs: Vec<Complex<f64>> = m.clone().complex_eigenvalues().iter().copied().collect();
    if eigs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidArgument("non-finite eigenvalues".into()));
    }
    let radius = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tol = gap_tol * radius;
    let mut min_gap = f64::INFINITY;
    for i in 0..d {
        for j in i + 1..d {
            min_gap = min_gap.min((eigs[i] - eigs[j]).norm());
        }
    }
    if d > 1 && min_gap <= tol {
        return Err(Error::RepeatedEigenvalues { gap: min_gap, tol });
    }

    let imag_cut = 1e-12 * radius.max(f64::MIN_POSITIVE);
    let mut reals: Vec<f64> = eigs
        .iter()
        .filter(|z| z.im.abs() <= imag_cut)
        .map(|z| z.re)
        .collect();
    let mut pairs: Vec<(f64, f64)> = eigs
        .iter()
        .filter(|z| z.im > imag_cut)
        .map(|z| (z.re, z.im))
        .collect();
    reals.sort_by(f64::total_cmp);
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if reals.len() + 2 * pairs.len() != d {
        return Err(Error::InvalidArgument(
            "eigenvalues do not split into real values and conjugate pairs".into(),
        ));
    }

    let mut q = Mat::zeros(d, d);
    let mut blocks = Vec::with_capacity(reals.len() + pairs.len());
    let mut col = 0;
    for &lambda in &reals {
        let v = real_null_vector(m, lambda);
        q.set_column(col, &v);
        col += 1;
        blocks.push(EigenBlock::Real { lambda });
    }
    for &(re, im) in &pairs {
        let v = complex_null_vector(m, Complex::new(re, -im));
        q.set_column(col, &v.map(|z| z.re));
        q.set_column(col + 1, &v.map(|z| z.im));
        col += 2;
        blocks.push(EigenBlock::ComplexPair { re, im });
    }

    let sv = q.clone().singular_values();
    let (smin, smax) = (sv.min(), sv.max());
    if !(smin > 1e-13 * smax) {
        return Err(Error::SingularEigenbasis);
    }
    let q_inv = q.clone().try_inverse().ok_or(Error::SingularEigenbasis)?;
    Ok(RealBlockEigen {
        q,
        q_inv,
        n_real: reals.len(),
        blocks,
    })
}

fn first_significant(values: impl Iterator<Item = f64> + Clone) -> Option<usize> {
    let max = values.clone().fold(0.0, f64::max);
    values.into_iter().position(|v| v > 1e-10 * max)
}

fn real_null_vector(m: &Mat, lambda: f64) -> super::Vector {
    let d = m.nrows();
    let shifted = m - Mat::identity(d, d) * lambda;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let idx = svd.singular_values.imin();
    let mut v: super::Vector = v_t.row(idx).transpose();
    v /= v.norm();
    if let Some(j) = first_significant(v.iter().map(|x| x.abs())) {
        if v[j] < 0.0 {
            v = -v;
        }
    }
    v
}

fn complex_null_vector(m: &Mat, lambda: Complex<f64>) -> nalgebra::DVector<Complex<f64>> {
    let d = m.nrows();
    let shifted: CMat =
        m.map(|x| Complex::new(x, 0.0)) - CMat::identity(d, d) * lambda;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^H");
    let idx = svd.singular_values.imin();
    // rows of V^H are conjugated right singular vectors
    let mut v: nalgebra::DVector<Complex<f64>> = v_t.row(idx).transpose().map(|z| z.conj());
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v /= Complex::new(norm, 0.0);
    if let Some(j) = first_significant(v.iter().map(|z| z.norm())) {
        let phase = v[j] / Complex::new(v[j].norm(), 0.0);
        v /= phase;
    }
    v
}
